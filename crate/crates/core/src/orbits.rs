//! Periodic cycles of polynomial germs, orbit probes and boundary coverage.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::{Complex, Float};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnum::CNum;
use crate::error::{HolonomyError, Result};
use crate::invariant_set::InvariantSetGrid;
use crate::map::{Coeff, CompiledMap};
use crate::scalar::float_to_string;

/// `P(z) = Σ coeffs[k] z^{k+1}` with `coeffs[0] = λ`.
#[derive(Clone, Debug)]
pub struct Polynomial {
    coeffs: Vec<Complex>,
    coeffs64: Vec<Complex64>,
    bits: u32,
}

impl Polynomial {
    pub fn new(coeffs: &[Coeff], bits: u32) -> Result<Self> {
        if coeffs.is_empty() || coeffs[0].is_zero() {
            return Err(HolonomyError::Precondition("polynomial needs a nonzero multiplier".into()));
        }
        let coeffs: Vec<Complex> = coeffs.iter().map(|c| c.to_complex(bits)).collect();
        let coeffs64 = coeffs.iter().map(|c| c.to_c64()).collect();
        Ok(Polynomial {
            coeffs,
            coeffs64,
            bits,
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    fn eval_d<T: CNum>(coeffs: &[T], z: &T) -> (T, T) {
        let mut p = z.zero_like();
        let mut dp = z.zero_like();
        for c in coeffs.iter().rev() {
            dp = dp.mul(z).add(&p);
            p = p.mul(z).add(c);
        }
        (p.mul(z), dp.mul(z).add(&p))
    }

    pub fn eval_mp(&self, z: &Complex) -> Complex {
        Self::eval_d(&self.coeffs, z).0
    }

    /// `(P^q(z) − z, (P^q)'(z) − 1)`.
    fn newton_parts<T: CNum>(coeffs: &[T], z: &T, q: u64) -> (T, T) {
        let mut w = z.clone();
        let mut d = z.one_like();
        for _ in 0..q {
            let (p, dp) = Self::eval_d(coeffs, &w);
            d = d.mul(&dp);
            w = p;
            if !w.is_finite() {
                break;
            }
        }
        (w.sub(z), d.sub(&z.one_like()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSearch {
    /// Start mesh: log-spaced rings between `inner_radius` and the search radius.
    pub rings: usize,
    pub angles: usize,
    pub inner_radius: f64,
    /// Upper bound on Newton starts per period.
    pub max_starts: usize,
    pub f64_iterations: usize,
    pub polish_iterations: usize,
    /// 0 keeps the lattice order; other values shuffle the starts before `max_starts` is applied.
    #[serde(default)]
    pub mesh_seed: u64,
}

impl Default for CycleSearch {
    fn default() -> Self {
        CycleSearch {
            rings: 32,
            angles: 96,
            inner_radius: 1e-6,
            max_starts: 100_000,
            f64_iterations: 200,
            polish_iterations: 60,
            mesh_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicCycle {
    pub period: u64,
    pub points: Vec<Complex>,
    pub radius: f64,
    pub residual: f64,
    /// `(P^q)'` along the cycle.
    pub multiplier: Complex64,
    pub precision_bits: u32,
}

#[derive(Serialize)]
pub struct CycleJson {
    pub period: u64,
    pub points: Vec<[String; 2]>,
    pub radius: f64,
    pub residual: f64,
    pub multiplier: [f64; 2],
    pub precision_bits: u32,
}

impl PeriodicCycle {
    pub fn to_json(&self) -> CycleJson {
        CycleJson {
            period: self.period,
            points: self
                .points
                .iter()
                .map(|z| [float_to_string(z.real()), float_to_string(z.imag())])
                .collect(),
            radius: self.radius,
            residual: self.residual,
            multiplier: [self.multiplier.re, self.multiplier.im],
            precision_bits: self.precision_bits,
        }
    }

    /// Recomputes the residual at `bits` (e.g. double the search precision).
    pub fn residual_at(&self, p: &Polynomial, bits: u32) -> f64 {
        let coeffs: Vec<Complex> = p.coeffs.iter().map(|c| Complex::with_val(bits, c)).collect();
        let poly = Polynomial {
            coeffs64: p.coeffs64.clone(),
            coeffs,
            bits,
        };
        cycle_residual(&poly, &Complex::with_val(bits, &self.points[0]), self.period)
    }
}

/// `10^(−bits/8)`
pub fn certification_threshold(bits: u32) -> f64 {
    10f64.powf(-(bits as f64) / 8.0)
}

/// Newton search for cycles of exact period `q` near 0, one entry per period.
///
/// Starts run in a fixed order (in parallel); deduplication and sorting are
/// sequential, so results do not depend on the worker count.
pub fn find_small_cycles(
    p: &Polynomial,
    periods: &[u64],
    search_radius: f64,
    search: &CycleSearch,
) -> Vec<(u64, Vec<PeriodicCycle>)> {
    periods
        .iter()
        .map(|&q| (q, cycles_of_period(p, q, search_radius, search)))
        .collect()
}

fn start_mesh(search_radius: f64, s: &CycleSearch) -> Vec<Complex64> {
    let rings = s.rings.max(1);
    let angles = s.angles.max(1);
    let inner = s.inner_radius.min(search_radius);
    let mut out = Vec::with_capacity(rings * angles);
    for i in 0..rings {
        let t = if rings == 1 { 1.0 } else { i as f64 / (rings - 1) as f64 };
        let r = inner * (search_radius / inner).powf(t);
        for j in 0..angles {
            // half-step offset on alternate rings avoids symmetric stalls
            let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5 * (i % 2) as f64) / angles as f64;
            out.push(Complex64::from_polar(r, a));
        }
    }
    if s.mesh_seed != 0 {
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(s.mesh_seed));
    }
    out.truncate(s.max_starts);
    out
}

fn cycles_of_period(p: &Polynomial, q: u64, search_radius: f64, s: &CycleSearch) -> Vec<PeriodicCycle> {
    if q == 0 {
        return Vec::new();
    }
    let starts = start_mesh(search_radius, s);
    let escape = 4.0 * search_radius.max(1.0);
    let roots: Vec<Option<Complex64>> = starts
        .par_iter()
        .map(|z| newton_f64(&p.coeffs64, *z, q, s.f64_iterations, escape))
        .collect();
    let threshold = certification_threshold(p.bits);
    let mut found: Vec<PeriodicCycle> = Vec::new();
    for z in roots.into_iter().flatten() {
        // Cheap rejection against points of cycles already found.
        if found
            .iter()
            .any(|c| c.points.iter().any(|w| (w.to_c64() - z).norm() < 1e-9 * z.norm().max(1e-12)))
        {
            continue;
        }
        let Some(cycle) = polish(p, z, q, s.polish_iterations) else {
            continue;
        };
        if cycle.residual > threshold || cycle.radius > search_radius {
            continue;
        }
        let dedupe = 10.0 * threshold;
        let z0 = &cycle.points[0];
        let duplicate = found.iter().any(|c| {
            c.points
                .iter()
                .any(|w| Complex::with_val(p.bits, w - z0).abs().real().to_f64() < dedupe)
        });
        if !duplicate {
            found.push(cycle);
        }
    }
    found.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    found
}

fn newton_f64(coeffs: &[Complex64], mut z: Complex64, q: u64, iters: usize, escape: f64) -> Option<Complex64> {
    let (mut f, mut df) = Polynomial::newton_parts(coeffs, &z, q);
    for _ in 0..iters {
        if !(f.is_finite() && df.is_finite()) || df.norm() == 0.0 {
            return None;
        }
        let step = f / df;
        // Backtrack until |F| decreases.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let cand = z - step * t;
            if cand.norm() > escape {
                t *= 0.5;
                continue;
            }
            let (cf, cdf) = Polynomial::newton_parts(coeffs, &cand, q);
            if cf.is_finite() && cf.norm() < f.norm() {
                accepted = Some((cand, cf, cdf));
                break;
            }
            t *= 0.5;
        }
        let (cand, cf, cdf) = accepted?;
        let moved = (cand - z).norm();
        z = cand;
        f = cf;
        df = cdf;
        if moved <= 1e-14 * z.norm().max(1e-300) || f.norm() < 1e-15 {
            return (z.norm() > 1e-12).then_some(z);
        }
    }
    None
}

/// Multiprecision Newton from an f64 root, then exact-period and zero checks.
fn polish(p: &Polynomial, z: Complex64, q: u64, iters: usize) -> Option<PeriodicCycle> {
    let bits = p.bits;
    let mut w = Complex::with_val(bits, (z.re, z.im));
    let tiny = Float::with_val(bits, Float::i_exp(1, -(bits as i32) + 8));
    // A multiple root (e.g. 0 at exact torsion) converges only linearly and is rejected.
    let mut converged = false;
    for _ in 0..iters {
        let (f, df) = Polynomial::newton_parts(&p.coeffs, &w, q);
        if !CNum::is_finite(&df) || CNum::abs(&df) == 0.0 {
            return None;
        }
        let step = Complex::with_val(bits, &f / &df);
        w -= &step;
        let sa = Float::with_val(bits, step.abs_ref());
        let wa = Float::with_val(bits, w.abs_ref());
        if sa <= Float::with_val(bits, &wa * &tiny) {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let radius0 = CNum::abs(&w);
    if !(radius0 > 1e-30) {
        return None;
    }
    // Orbit points and minimal period.
    let mut points = Vec::with_capacity(q as usize);
    let mut cur = w.clone();
    let mut mult = Complex64::new(1.0, 0.0);
    for _ in 0..q {
        points.push(cur.clone());
        let (next, d) = Polynomial::eval_d(&p.coeffs, &cur);
        mult *= d.to_c64();
        cur = next;
    }
    let residual = CNum::abs(&CNum::sub(&cur, &w));
    let sep = (10.0 * residual).max(certification_threshold(bits));
    for j in 1..q as usize {
        if q.is_multiple_of(j as u64) && CNum::abs(&CNum::sub(&points[j], &w)) < sep {
            return None;
        }
    }
    let radius = points.iter().map(CNum::abs).fold(0.0, f64::max);
    Some(PeriodicCycle {
        period: q,
        points,
        radius,
        residual: cycle_residual(p, &w, q).max(residual),
        multiplier: mult,
        precision_bits: bits,
    })
}

/// `max_i |P(z_i) − z_{i+1}|` along the recomputed orbit, closing at `z_q = z_0`.
fn cycle_residual(p: &Polynomial, z0: &Complex, q: u64) -> f64 {
    let mut cur = z0.clone();
    for _ in 0..q {
        cur = p.eval_mp(&cur);
    }
    CNum::abs(&CNum::sub(&cur, z0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub seed: [f64; 2],
    /// `f^n(z_0)` for `n = 0..=N` (rounded to f64 for export).
    pub samples: Vec<(usize, [f64; 2])>,
    pub min_modulus: f64,
    pub min_at: usize,
    pub first_return: Option<usize>,
    pub precision_bits: u32,
    pub truncated: bool,
    /// SHA-256 of the full-precision iterates.
    pub checksum: String,
}

/// Iterates `f` from `z0` for `n` steps; `min_modulus` is taken over `1..=n`.
pub fn orbit_probe(f: &CompiledMap<Complex>, z0: &Complex, n: usize, delta: Option<f64>) -> Result<OrbitTrace> {
    if CNum::abs(z0) == 0.0 {
        return Err(HolonomyError::Precondition("orbit seed must be nonzero".into()));
    }
    let bits = z0.prec().0;
    let mut hasher = Sha256::new();
    let mut z = z0.clone();
    let mut samples = Vec::with_capacity(n + 1);
    let push = |z: &Complex, k: usize, samples: &mut Vec<(usize, [f64; 2])>, hasher: &mut Sha256| {
        let c = z.to_c64();
        samples.push((k, [c.re, c.im]));
        hasher.update(float_to_string(z.real()).as_bytes());
        hasher.update(b",");
        hasher.update(float_to_string(z.imag()).as_bytes());
        hasher.update(b"\n");
    };
    push(&z, 0, &mut samples, &mut hasher);
    let mut min_modulus = f64::INFINITY;
    let mut min_at = 0;
    let mut first_return = None;
    let mut truncated = false;
    for k in 1..=n {
        match f.eval(&z) {
            Some(next) => z = next,
            None => {
                truncated = true;
                break;
            }
        }
        let m = CNum::abs(&z);
        if m < min_modulus {
            min_modulus = m;
            min_at = k;
        }
        if first_return.is_none() {
            if let Some(d) = delta {
                if CNum::abs(&CNum::sub(&z, z0)) <= d {
                    first_return = Some(k);
                }
            }
        }
        push(&z, k, &mut samples, &mut hasher);
    }
    let seed = z0.to_c64();
    Ok(OrbitTrace {
        seed: [seed.re, seed.im],
        samples,
        min_modulus,
        min_at,
        first_return,
        precision_bits: bits,
        truncated,
        checksum: hex::encode(hasher.finalize()),
    })
}

impl OrbitTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,re,im,modulus\n");
        for (n, [re, im]) in &self.samples {
            out.push_str(&format!("{n},{re:.17e},{im:.17e},{:.17e}\n", re.hypot(*im)));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub boundary_cells: usize,
    /// `(N_checkpoint, fraction of boundary cells visited)`
    pub checkpoints: Vec<(usize, f64)>,
    pub truncated: bool,
    /// The filled set has at most one boundary cell.
    pub degenerate: bool,
}

/// Fraction of boundary cells of `K̂` met (within one cell) by `f^n(z_0)`, `|n| <= N`.
pub fn boundary_coverage(grid: &InvariantSetGrid, f: &CompiledMap<Complex64>, z0: Complex64, n: usize) -> CoverageCurve {
    let boundary = grid.boundary_cells();
    let total = boundary.iter().filter(|b| **b).count();
    let size = grid.resolution();
    let mut visited = vec![false; size * size];
    let mut count = 0usize;
    let mark = |z: Complex64, visited: &mut Vec<bool>, count: &mut usize| -> bool {
        let Some((ix, iy)) = grid.cell_of(z) else {
            return false;
        };
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                if x < 0 || y < 0 || x >= size as i64 || y >= size as i64 {
                    continue;
                }
                let idx = y as usize * size + x as usize;
                if boundary[idx] && !visited[idx] {
                    visited[idx] = true;
                    *count += 1;
                }
            }
        }
        true
    };
    let inv = f.inverse();
    let mut fwd = Some(z0);
    let mut bwd = Some(z0);
    let mut truncated = !mark(z0, &mut visited, &mut count);
    let steps = 10.min(n.max(1));
    let checkpoints_at: Vec<usize> = (1..=steps).map(|k| n * k / steps).collect();
    let mut checkpoints = Vec::new();
    let mut next_cp = 0;
    for k in 1..=n {
        for (dir, map) in [(&mut fwd, f), (&mut bwd, &inv)] {
            if let Some(z) = *dir {
                *dir = map.eval(&z);
                match *dir {
                    Some(w) if mark(w, &mut visited, &mut count) => {}
                    _ => {
                        *dir = None;
                        truncated = true;
                    }
                }
            }
        }
        while next_cp < checkpoints_at.len() && checkpoints_at[next_cp] == k {
            checkpoints.push((k, frac(count, total)));
            next_cp += 1;
        }
    }
    while next_cp < checkpoints_at.len() {
        checkpoints.push((checkpoints_at[next_cp], frac(count, total)));
        next_cp += 1;
    }
    CoverageCurve {
        boundary_cells: total,
        checkpoints,
        truncated,
        degenerate: total <= 1,
    }
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::RotationNumber;
    use crate::map::MapExpr;

    #[test]
    fn nonzero_fixed_point_of_minus_z_plus_z2() {
        let p = Polynomial::new(&[Coeff::int(-1), Coeff::int(1)], 256).unwrap();
        let found = find_small_cycles(&p, &[1], 3.0, &CycleSearch::default());
        let cycles = &found[0].1;
        assert_eq!(cycles.len(), 1);
        let z = cycles[0].points[0].to_c64();
        assert!((z - Complex64::new(2.0, 0.0)).norm() < 1e-30);
        assert!(cycles[0].residual <= certification_threshold(256));
    }

    #[test]
    fn period_three_cycle_at_a_cube_root_of_unity() {
        // P(z) = ωz + z²: P³(z) − z = z⁴ (z − (1 − ω)) C(z) with C cubic, so
        // exactly one 3-cycle survives and its points are the roots of C.
        let lambda = Coeff::Unit(RotationNumber::rational(1, 3).unwrap());
        let p = Polynomial::new(&[lambda.clone(), Coeff::int(1)], 256).unwrap();
        let found = find_small_cycles(&p, &[3], 3.0, &CycleSearch::default());
        let cycles = &found[0].1;
        assert_eq!(cycles.len(), 1);

        let w = lambda.to_complex(64).to_c64();
        let mul = |a: &[Complex64], b: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        // Coefficients in increasing degree; compose P with itself three times.
        let pz = vec![Complex64::new(0.0, 0.0), w, Complex64::new(1.0, 0.0)];
        let mut it = pz.clone();
        for _ in 0..2 {
            let sq = mul(&it, &it);
            let mut next: Vec<Complex64> = it.iter().map(|c| c * w).collect();
            next.resize(sq.len(), Complex64::new(0.0, 0.0));
            for (n, s) in next.iter_mut().zip(&sq) {
                *n += s;
            }
            it = next;
        }
        it[1] -= 1.0;
        assert!(it[..4].iter().all(|c| c.norm() < 1e-12));
        // Divide z⁻⁴ (P³ − z) by (z − (1 − ω)).
        let mut rest: Vec<Complex64> = it[4..].to_vec();
        let root = Complex64::new(1.0, 0.0) - w;
        let mut quotient = vec![Complex64::new(0.0, 0.0); rest.len() - 1];
        for k in (1..rest.len()).rev() {
            quotient[k - 1] = rest[k];
            let carry = rest[k] * root;
            rest[k - 1] += carry;
        }
        assert!(rest[0].norm() < 1e-9);
        assert_eq!(quotient.len(), 4);
        for z in &cycles[0].points {
            let z = z.to_c64();
            let v = quotient.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
            assert!(v.norm() < 1e-9, "{v}");
        }
        assert!(cycles[0].residual_at(&p, 512) <= certification_threshold(256));
    }

    #[test]
    fn rotation_orbit_keeps_its_modulus() {
        let f: CompiledMap<Complex> = MapExpr::parse("rot(golden)", 64).unwrap().compile(512).unwrap();
        let z0 = Complex::with_val(512, (0.5, 0.0));
        let t = orbit_probe(&f, &z0, 1000, Some(1e-3)).unwrap();
        assert_eq!(t.min_modulus, 0.5);
        assert!(!t.truncated);
        assert_eq!(t, orbit_probe(&f, &z0, 1000, Some(1e-3)).unwrap());
    }

    #[test]
    fn parabolic_orbit_passes_through_infinity_and_returns_towards_zero() {
        let f: CompiledMap<Complex> = MapExpr::parse("mobius(1,0,-1,1)", 64).unwrap().compile(256).unwrap();
        let z0 = Complex::with_val(256, (0.1, 0.0));
        let t = orbit_probe(&f, &z0, 100, None).unwrap();
        // f^n(0.1) = 0.1/(1 − 0.1 n)
        for (n, [re, _]) in &t.samples {
            if *n != 10 {
                let expect = 0.1 / (1.0 - 0.1 * *n as f64);
                assert!((re - expect).abs() < 1e-9 * expect.abs().max(1.0), "n = {n}");
            }
        }
        assert!((t.min_modulus - 0.1 / 9.0).abs() < 1e-12);
    }
}
