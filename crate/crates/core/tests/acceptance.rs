//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Set `UPDATE_GOLDEN=1` to rewrite the
//! golden files instead of comparing against them.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use holonomy::classify::VerdictPolicy;
use holonomy::cli::{self, RunConfig, Subcommand};
use holonomy::germ::Germ;
use holonomy::invariant_set::{self, AdmissibleDisk, InvariantSetGrid, Nesting, ZeroPosition, BoundaryContact};
use holonomy::map::{Coeff, CompiledMap, MapExpr};
use holonomy::orbits::{self, CycleSearch, Polynomial};
use holonomy::scalar::{Field, GaussianRational, Scalar};
use holonomy::suspension::{catalog, classify_model, ModelReport};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Complex;

type Check = Result<String, String>;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn compare_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from the golden file"))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn float256() -> Field {
    Field::float(256).unwrap()
}

fn random_exact_germ(rng: &mut ChaCha8Rng, t: usize) -> Germ {
    const UNITS: [(i64, i64); 5] = [(1, 0), (-1, 0), (0, 1), (0, -1), (2, 1)];
    let mut coeffs = Vec::with_capacity(t);
    let (re, im) = UNITS[rng.gen_range(0..UNITS.len())];
    coeffs.push(Scalar::Exact(GaussianRational::from_ints(re, im)));
    for _ in 1..t {
        coeffs.push(Scalar::Exact(GaussianRational::from_ints(
            rng.gen_range(-3..=3),
            rng.gen_range(-3..=3),
        )));
    }
    Germ::new(coeffs).unwrap()
}

fn random_float_germ(rng: &mut ChaCha8Rng, t: usize, field: Field) -> Germ {
    let mut coeffs = Vec::with_capacity(t);
    for k in 0..t {
        let (mut re, im) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if k == 0 {
            re += 2.0;
        }
        coeffs.push(Scalar::from_complex(field, &Complex::with_val(field.bits(), (re, im))).unwrap());
    }
    Germ::new(coeffs).unwrap()
}

fn germ_algebra() -> Check {
    let t = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let exact_id = Germ::identity(t, Field::ExactGaussianRational).map_err(e)?;
    for i in 0..200 {
        let f = random_exact_germ(&mut rng, t);
        let g = random_exact_germ(&mut rng, t);
        let h = random_exact_germ(&mut rng, t);
        let round = f.invert().and_then(|fi| fi.compose(&f)).map_err(e)?;
        ensure(round == exact_id, format!("exact invert/compose is not the identity for germ {i}"))?;
        let left = f.compose(&g).and_then(|fg| fg.compose(&h)).map_err(e)?;
        let right = g.compose(&h).and_then(|gh| f.compose(&gh)).map_err(e)?;
        ensure(left == right, format!("exact composition is not associative for triple {i}"))?;
    }
    let field = float256();
    let float_id = Germ::identity(t, field).map_err(e)?;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let f = random_float_germ(&mut rng, t, field);
        let g = random_float_germ(&mut rng, t, field);
        let h = random_float_germ(&mut rng, t, field);
        let round = f.invert().and_then(|fi| fi.compose(&f)).map_err(e)?;
        worst = worst.max(round.distance(&float_id).map_err(e)?);
        let left = f.compose(&g).and_then(|fg| fg.compose(&h)).map_err(e)?;
        let right = g.compose(&h).and_then(|gh| f.compose(&gh)).map_err(e)?;
        worst = worst.max(left.distance(&right).map_err(e)?);
    }
    ensure(worst <= 1e-9, format!("float defect {worst:.3e}"))?;
    Ok(format!("200 exact germs with zero defect, float defect {worst:.1e}"))
}

/// `λ^{-n} f^n(z)` for attracting `λ`, or `λ^n f^{-n}(z)` along the branch fixing 0.
fn orbit_koenigs(lambda: Complex64, z: Complex64, n: usize) -> Complex64 {
    let f = |w: Complex64| lambda * w + w * w;
    let finv = |w: Complex64| {
        let s = (lambda * lambda + 4.0 * w).sqrt();
        let s = if (s - lambda).norm() < (s + lambda).norm() { s } else { -s };
        2.0 * w / (lambda + s)
    };
    let mut w = z;
    let mut scale = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        if lambda.norm() < 1.0 {
            w = f(w);
            scale /= lambda;
        } else {
            w = finv(w);
            scale *= lambda;
        }
    }
    scale * w
}

fn koenigs() -> Check {
    let mut notes = Vec::new();
    for (text, lambda) in [
        ("poly(1/2,1)", Complex64::new(0.5, 0.0)),
        ("poly(2,1)", Complex64::new(2.0, 0.0)),
        ("poly(3i,1)", Complex64::new(0.0, 3.0)),
    ] {
        let f = MapExpr::parse(text, 256).map_err(e)?.to_germ(32, float256()).map_err(e)?;
        let lin = f.formal_linearize().map_err(e)?;
        let defect = f.linearization_defect(&lin.h).map_err(e)?;
        ensure(defect <= 1e-8, format!("{text}: defect {defect:.3e}"))?;
        let mut worst: f64 = 0.0;
        for k in 0..10 {
            let z = Complex64::from_polar(0.02, std::f64::consts::TAU * k as f64 / 10.0 + 0.1);
            let steps = (60.0 / lambda.norm().ln().abs()) as usize;
            worst = worst.max((lin.h.eval_c64(z) - orbit_koenigs(lambda, z, steps)).norm());
        }
        ensure(worst <= 1e-6, format!("{text}: orbit-limit mismatch {worst:.3e}"))?;
        notes.push(format!("{text} defect {defect:.0e} orbit {worst:.0e}"));
    }
    Ok(notes.join("; "))
}

fn commuting_pairs() -> Check {
    let t = 24;
    let field = float256();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mus = ["2", "1/2", "e(golden)", "-3i", "e(silver)"];
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let h = random_float_germ(&mut rng, t, field);
        let lam = Coeff::parse(&format!("{}{:+}i", rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)), 256)
            .map_err(e)?
            .to_scalar(field)
            .map_err(e)?;
        let mu = Coeff::parse(mus[i % mus.len()], 256).map_err(e)?.to_scalar(field).map_err(e)?;
        let hinv = h.invert().map_err(e)?;
        let conj = |m: &Scalar| -> Result<Germ, String> {
            let lin = Germ::linear(m.clone(), t).map_err(e)?;
            hinv.compose(&lin.compose(&h).map_err(e)?).map_err(e)
        };
        let f = conj(&lam)?;
        let g = conj(&mu)?;
        let lin = g.formal_linearize().map_err(e)?;
        let d = f.linearization_defect(&lin.h).map_err(e)?;
        worst = worst.max(d);
    }
    ensure(worst <= 1e-8, format!("worst defect {worst:.3e}"))?;
    Ok(format!("20 pairs, worst defect {worst:.1e}"))
}

fn catalog_golden() -> Check {
    let policy = VerdictPolicy::default();
    let models = catalog(64, float256()).map_err(e)?;
    let reports: Vec<ModelReport> = models
        .iter()
        .map(|m| classify_model(m, &policy))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let summary: Vec<(String, String, String)> = reports
        .iter()
        .map(|r| {
            (
                r.model.clone().unwrap_or_default(),
                r.report.case.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
                r.report.ueda_type.to_string(),
            )
        })
        .collect();
    let expected = [
        ("trivial", "I", "beta"),
        ("serre", "II", "alpha(1)"),
        ("linear-rotation", "III", "beta"),
        ("ueda-cremer", "IV", "gamma"),
        ("case5-ruled", "V", "alpha or beta"),
        ("case8-birotation", "VIII", "beta"),
    ];
    for ((name, case, ty), (en, ec, et)) in summary.iter().zip(expected) {
        ensure(
            name == en && case == ec && ty == et,
            format!("{name}: got {case}/{ty}, expected {ec}/{et}"),
        )?;
    }
    ensure(summary.len() == expected.len(), "catalog size changed")?;
    let json = serde_json::to_string_pretty(&reports).map_err(e)? + "\n";
    compare_golden("catalog_report.json", &json)?;
    Ok("six verdicts match, golden JSON identical".into())
}

/// Cells of the disk of radius `r` whose orbit under `w/(1-w)` never leaves it,
/// computed in `ξ = 1/w` where the map is `ξ ↦ ξ - 1`.
fn parabolic_oracle(r: f64, n: usize, max_iter: u64) -> InvariantSetGrid {
    let rr = 1.0 / r;
    let mut g = InvariantSetGrid::from_membership(r, n, max_iter, |w| {
        if w == Complex64::new(0.0, 0.0) {
            return true;
        }
        let xi = 1.0 / w;
        let dx = xi.re - xi.re.round();
        dx * dx + xi.im * xi.im >= rr * rr
    });
    g.fill_complement();
    g
}

fn parabolic_grid(r: f64, n: usize) -> Result<InvariantSetGrid, String> {
    let f: CompiledMap<Complex64> = MapExpr::parse("mobius(1,0,-1,1)", 64).map_err(e)?.compile(53).map_err(e)?;
    let disk = AdmissibleDisk::check(&f, r).map_err(e)?;
    invariant_set::hedgehog(&f, &disk, n, 10_000).map_err(e)
}

fn parabolic_match(grid: &InvariantSetGrid) -> Check {
    let oracle = parabolic_oracle(1.0 / 3.0, 512, 10_000);
    let d = grid.hausdorff_cells(&oracle).map_err(e)?;
    ensure(d <= 2.0, format!("Hausdorff distance {d} cells"))?;
    ensure(
        grid.zero_boundary_position() == ZeroPosition::Boundary,
        "zero is not on the boundary",
    )?;
    ensure(grid.boundary_contact() == BoundaryContact::Contact, "no boundary contact")?;
    Ok(format!("Hausdorff {d} cells, zero on boundary, contact"))
}

fn rotation_disk() -> Check {
    let f: CompiledMap<Complex64> = MapExpr::parse("rot(golden)", 64).map_err(e)?.compile(53).map_err(e)?;
    let disk = AdmissibleDisk::check(&f, 1.0).map_err(e)?;
    let g = invariant_set::hedgehog(&f, &disk, 256, 10_000).map_err(e)?;
    let (mut inside, mut in_s) = (0usize, 0usize);
    for iy in 0..256 {
        for ix in 0..256 {
            if g.in_disk(ix, iy) {
                inside += 1;
                in_s += g.in_s(ix, iy) as usize;
            }
        }
    }
    let frac = in_s as f64 / inside as f64;
    ensure(frac >= 0.999, format!("S covers {frac:.5} of the disk"))?;
    ensure(g.zero_boundary_position() == ZeroPosition::Interior, "zero is not interior")?;
    let inv = invariant_set::verify_complete_invariance(&g, &f, 0);
    ensure(inv.max_offset_cells == 0, format!("invariance offset {}", inv.max_offset_cells))?;
    Ok(format!("S covers {:.4}% of disk cells, zero interior, offset 0", 100.0 * frac))
}

fn nesting(large: &InvariantSetGrid) -> Check {
    let small = parabolic_grid(0.25, 512)?;
    let rep = invariant_set::nesting_check(&small, large, 1);
    ensure(
        rep.relation == Nesting::SmallInLarge,
        format!("relation {:?}, offset {}", rep.relation, rep.small_in_large_offset),
    )?;
    Ok(format!("r = 1/4 inside r = 1/3 with offset {}", rep.small_in_large_offset))
}

/// Returns the line and, for the q₂ part, an optional soft warning.
fn small_cycles() -> Result<(String, Option<String>), String> {
    let bits = 512;
    let theta = Coeff::parse("e(cf:[0;10,100,10000])", bits).map_err(e)?;
    let p = Polynomial::new(&[theta, Coeff::int(1)], bits).map_err(e)?;
    let q1 = orbits::find_small_cycles(&p, &[10], 0.5, &CycleSearch::default());
    let c1 = q1[0].1.first().ok_or("no certified period-10 cycle")?;
    ensure(c1.residual <= 1e-64, format!("residual {:.3e}", c1.residual))?;
    ensure(c1.radius < 0.5, format!("radius {}", c1.radius))?;
    let budget = CycleSearch {
        rings: 8,
        angles: 32,
        ..CycleSearch::default()
    };
    let q2 = orbits::find_small_cycles(&p, &[1001], c1.radius, &budget);
    let warn = match q2[0].1.first() {
        Some(c2) if c2.radius < c1.radius => None,
        _ => Some(format!(
            "no period-1001 cycle below radius {:.6} within {} starts",
            c1.radius,
            budget.rings * budget.angles
        )),
    };
    Ok((
        format!("period 10 radius {:.6} residual {:.1e}", c1.radius, c1.residual),
        warn,
    ))
}

fn orbit_recurrence() -> Check {
    let bits = 512;
    let cat = holonomy::suspension::CatalogFile::shipped();
    let spec = cat.find("ueda-cremer").ok_or("ueda-cremer missing")?;
    let expr = MapExpr::parse(&spec.g, bits).map_err(e)?;
    let f: CompiledMap<Complex> = expr.compile(bits).map_err(e)?;
    let mut lines = Vec::new();
    let mut worst = f64::INFINITY;
    for k in 0..8 {
        let z0 = Complex64::from_polar(1e-3, std::f64::consts::TAU * k as f64 / 8.0);
        let seed = Complex::with_val(bits, (z0.re, z0.im));
        let a = orbits::orbit_probe(&f, &seed, 2000, None).map_err(e)?;
        let b = orbits::orbit_probe(&f, &seed, 2000, None).map_err(e)?;
        ensure(a.checksum == b.checksum, format!("ray {k}: checksum not reproducible"))?;
        ensure(!a.truncated, format!("ray {k}: orbit left the domain"))?;
        worst = worst.min(a.min_modulus);
        lines.push(format!("{k} {:.6e} {}", a.min_modulus, a.checksum));
    }
    ensure(worst > 1e-6, format!("min modulus {worst:.3e}"))?;
    compare_golden("cremer_orbits.txt", &(lines.join("\n") + "\n"))?;
    Ok(format!("empirical: min modulus {worst:.3e} over 8 rays, checksums fixed"))
}

fn hedgehog_checksum(map: &str, radius: f64, grid: usize, workers: usize) -> Result<String, String> {
    let cfg = RunConfig {
        subcommand: Some(Subcommand::Hedgehog),
        map: Some(map.into()),
        radius: Some(radius),
        grid: Some(grid),
        max_iter: Some(10_000),
        workers: Some(workers),
        ..RunConfig::default()
    };
    let out = cli::execute(cfg).map_err(e)?;
    out.report["metadata"]["checksum"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| "no checksum in report".into())
}

fn determinism(parabolic: &InvariantSetGrid) -> Check {
    let mut notes = Vec::new();
    for (map, radius, grid, reference) in [
        ("mobius(1,0,-1,1)", 1.0 / 3.0, 512, Some(parabolic.checksum())),
        ("rot(golden)", 1.0, 256, None),
    ] {
        let a = hedgehog_checksum(map, radius, grid, 1)?;
        let b = hedgehog_checksum(map, radius, grid, 1)?;
        let c = hedgehog_checksum(map, radius, grid, 8)?;
        ensure(a == b && b == c, format!("{map}: checksums differ"))?;
        if let Some(r) = reference {
            ensure(r == a, format!("{map}: library and CLI checksums differ"))?;
        }
        notes.push(format!("{map} {}", &a[..12]));
    }
    Ok(notes.join(", "))
}

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn report(&mut self, id: usize, name: &str, start: Instant, limit: Option<Duration>, res: Check) {
        let took = start.elapsed();
        let res = match (res, limit) {
            (Ok(_), Some(l)) if took > l => Err(format!("took {:.1?}, limit {:?}", took, l)),
            (r, _) => r,
        };
        match res {
            Ok(msg) => println!("criterion {id:>2} PASS {name}: {msg} [{took:.1?}]"),
            Err(msg) => {
                self.failures += 1;
                println!("criterion {id:>2} FAIL {name}: {msg} [{took:.1?}]");
            }
        }
    }
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut out = Outcome { failures: 0 };
    let secs = |s| Some(Duration::from_secs(s));

    let t = Instant::now();
    out.report(1, "germ algebra", t, secs(10), germ_algebra());
    let t = Instant::now();
    out.report(2, "Koenigs linearization", t, secs(5), koenigs());
    let t = Instant::now();
    out.report(3, "commuting pairs share a linearizer", t, None, commuting_pairs());
    let t = Instant::now();
    out.report(4, "catalog verdicts", t, secs(5), catalog_golden());

    let t = Instant::now();
    let parabolic = parabolic_grid(1.0 / 3.0, 512);
    let res = parabolic.as_ref().map_err(Clone::clone).and_then(parabolic_match);
    out.report(5, "parabolic invariant set", t, secs(60), res);

    let t = Instant::now();
    out.report(6, "rotation invariant set", t, secs(20), rotation_disk());

    let t = Instant::now();
    let res = parabolic.as_ref().map_err(Clone::clone).and_then(nesting);
    out.report(7, "nesting", t, None, res);

    let t = Instant::now();
    let res = small_cycles().map(|(line, warn)| {
        if let Some(w) = &warn {
            println!("criterion  8 WARN small cycles: {w}");
        }
        line
    });
    out.report(8, "small cycles", t, secs(600), res);

    let t = Instant::now();
    out.report(9, "orbit recurrence", t, None, orbit_recurrence());

    let t = Instant::now();
    let res = parabolic.as_ref().map_err(Clone::clone).and_then(determinism);
    out.report(10, "determinism", t, None, res);

    if out.failures > 0 {
        println!("{} acceptance criteria failed", out.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
