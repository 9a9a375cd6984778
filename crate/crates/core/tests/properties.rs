use holonomy::arithmetic::RotationNumber;
use holonomy::classify::{case2_type_index, classify_pair, HolonomyPair, VerdictPolicy};
use holonomy::germ::Germ;
use holonomy::invariant_set::{BoundaryContact, InvariantSetGrid};
use holonomy::map::{CompiledMap, MapExpr};
use holonomy::orbits;
use holonomy::scalar::{Field, GaussianRational, Scalar};
use num_complex::Complex64;
use proptest::prelude::*;
use rug::{Complex, Integer};

fn exact(re: i64, im: i64) -> Scalar {
    Scalar::Exact(GaussianRational::from_ints(re, im))
}

fn unit() -> impl Strategy<Value = (i64, i64)> {
    prop::sample::select(vec![(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (2, 0)])
}

/// Exact germ with small Gaussian-integer coefficients and an invertible multiplier.
fn exact_germ(t: usize) -> impl Strategy<Value = Germ> {
    (unit(), prop::collection::vec((-3i64..=3, -3i64..=3), t - 1)).prop_map(|(a1, rest)| {
        let mut c = vec![exact(a1.0, a1.1)];
        c.extend(rest.into_iter().map(|(re, im)| exact(re, im)));
        Germ::new(c).unwrap()
    })
}

fn tangent_to_identity(t: usize) -> impl Strategy<Value = (Germ, usize)> {
    (2..t, prop::collection::vec((-3i64..=3, -3i64..=3), t)).prop_filter_map("nonzero leading term", move |(k, c)| {
        if c[k - 1] == (0, 0) {
            return None;
        }
        let mut coeffs = vec![exact(1, 0)];
        for n in 2..=t {
            coeffs.push(if n < k { exact(0, 0) } else { exact(c[n - 1].0, c[n - 1].1) });
        }
        Some((Germ::new(coeffs).unwrap(), k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_two_sided(f in exact_germ(12)) {
        let id = Germ::identity(12, Field::ExactGaussianRational).unwrap();
        let fi = f.invert().unwrap();
        prop_assert_eq!(fi.compose(&f).unwrap(), id.clone());
        prop_assert_eq!(f.compose(&fi).unwrap(), id);
    }

    #[test]
    fn composition_is_associative(f in exact_germ(10), g in exact_germ(10), h in exact_germ(10)) {
        let left = f.compose(&g).unwrap().compose(&h).unwrap();
        let right = f.compose(&g.compose(&h).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn iterates_add(f in exact_germ(8), a in -3i64..=3, b in -3i64..=3) {
        let lhs = f.iterate(a).unwrap().compose(&f.iterate(b).unwrap()).unwrap();
        prop_assert_eq!(lhs, f.iterate(a + b).unwrap());
    }

    #[test]
    fn conjugation_keeps_the_multiplier(f in exact_germ(10), h in exact_germ(10)) {
        let c = f.conjugate(&h).unwrap();
        prop_assert_eq!(c.multiplier(), f.multiplier());
    }

    #[test]
    fn type_index_is_a_conjugacy_invariant((g, k) in tangent_to_identity(10), h in exact_germ(10)) {
        let c = g.conjugate(&h).unwrap();
        prop_assert_eq!(case2_type_index(&g).unwrap(), (k - 1) as u64);
        prop_assert_eq!(case2_type_index(&c).unwrap(), (k - 1) as u64);
    }

    #[test]
    fn hyperbolic_germs_linearize(re in -3.0f64..3.0, im in -3.0f64..3.0, a2 in -1.0f64..1.0) {
        let m = (re * re + im * im).sqrt();
        prop_assume!(m > 0.2 && (m - 1.0).abs() > 0.2);
        let field = Field::float(256).unwrap();
        let s = |x: f64, y: f64| Scalar::from_complex(field, &Complex::with_val(256, (x, y))).unwrap();
        let f = Germ::polynomial(&[s(re, im), s(a2, 0.5)], 24).unwrap();
        let lin = f.formal_linearize().unwrap();
        prop_assert!(f.linearization_defect(&lin.h).unwrap() < 1e-40);
    }

    #[test]
    fn rational_continued_fraction_ends_at_the_number(p in 0u32..500, q in 1u32..500) {
        prop_assume!(p < q);
        let theta = RotationNumber::rational(p, q).unwrap();
        let cf = theta.continued_fraction(64).unwrap();
        prop_assert!(cf.terminated);
        let (pn, qn) = cf.convergents.last().unwrap();
        let g = Integer::from(p).gcd(&Integer::from(q));
        prop_assert_eq!(pn.exact().unwrap(), &(Integer::from(p) / &g));
        prop_assert_eq!(qn.exact().unwrap(), &(Integer::from(q) / &g));
    }

    #[test]
    fn swapping_generators_keeps_the_type(i in 0usize..5, j in 0usize..5) {
        const LINEAR: [&str; 5] = ["id", "rot(golden)", "rot(silver)", "rot(1/3)", "poly(2)"];
        let field = Field::float(256).unwrap();
        let f = MapExpr::parse(LINEAR[i], 256).unwrap();
        let g = MapExpr::parse(LINEAR[j], 256).unwrap();
        let policy = VerdictPolicy::default();
        let a = classify_pair(&HolonomyPair::from_exprs(&f, &g, 32, field).unwrap(), &policy).unwrap();
        let b = classify_pair(&HolonomyPair::from_exprs(&g, &f, 32, field).unwrap(), &policy).unwrap();
        prop_assert_eq!(a.case, b.case);
        prop_assert_eq!(a.ueda_type, b.ueda_type);
    }

    #[test]
    fn filled_disk_grids(rho in 0.05f64..1.5, n in 8usize..64) {
        let mut g = InvariantSetGrid::from_membership(1.0, n, 1, |z| z.norm() <= rho);
        g.fill_complement();
        let filled = g.clone();
        g.fill_complement();
        prop_assert_eq!(&g, &filled);
        for iy in 0..n {
            for ix in 0..n {
                prop_assert!(!g.in_s(ix, iy) || g.in_k(ix, iy));
            }
        }
        let pgm = g.to_pgm();
        prop_assert_eq!(pgm.len(), format!("P5\n{n} {n}\n255\n").len() + n * n);
        if rho >= 1.0 {
            prop_assert_eq!(g.boundary_contact(), BoundaryContact::Contact);
        }
    }

    #[test]
    fn rotation_orbits_keep_their_modulus(r in 0.01f64..0.99, arg in 0.0f64..std::f64::consts::TAU) {
        let f: CompiledMap<Complex> = MapExpr::parse("rot(golden)", 128).unwrap().compile(128).unwrap();
        let z0 = Complex64::from_polar(r, arg);
        let trace = orbits::orbit_probe(&f, &Complex::with_val(128, (z0.re, z0.im)), 200, None).unwrap();
        prop_assert!((trace.min_modulus - r).abs() < 1e-12);
        prop_assert!(!trace.truncated);
    }
}
