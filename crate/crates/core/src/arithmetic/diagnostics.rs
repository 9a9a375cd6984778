use std::f64::consts::PI;

use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use super::cf::{CfTerm, ContinuedFraction, Magnitude, Quotient};
use super::rotation::{certified_quotients, RotationNumber};
use super::tower::{SignedTower, Tower};
use crate::error::{HolonomyError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TorsionCheck {
    /// `heuristic` is set when the answer comes from a float value.
    Torsion { q: u64, heuristic: bool },
    NonTorsionUpTo { max_q: u64, heuristic: bool },
}

impl TorsionCheck {
    pub fn order(&self) -> Option<u64> {
        match self {
            TorsionCheck::Torsion { q, .. } => Some(*q),
            TorsionCheck::NonTorsionUpTo { .. } => None,
        }
    }
}

/// Torsion test. Exact inputs are decided exactly; float inputs are scanned
/// along certified convergent denominators `q <= max_q` (these are the best
/// approximations, so no other `q` gets closer) with `‖qθ‖ < tol`.
pub fn is_torsion(theta: &RotationNumber, max_q: u64, tol: f64) -> TorsionCheck {
    match theta {
        RotationNumber::Real(x) => {
            // Convergents of the dyadic value itself; the enclosure would stop
            // at the first quotient for a rounded rational.
            let dyadic = x.to_rational().expect("finite rotation number");
            let cf = RotationNumber::rational(dyadic.numer().clone(), dyadic.denom().clone())
                .expect("positive denominator")
                .expansion()
                .expect("rational expansion");
            for term in cf.walk() {
                let Some(q) = term.q.exact().and_then(|q| q.to_u64()) else {
                    break;
                };
                if q > max_q {
                    break;
                }
                let qx = Float::with_val(x.prec(), x * q);
                let frac = Float::with_val(x.prec(), &qx - qx.clone().round());
                if frac.abs().to_f64() < tol {
                    return TorsionCheck::Torsion { q, heuristic: true };
                }
            }
            TorsionCheck::NonTorsionUpTo {
                max_q,
                heuristic: true,
            }
        }
        _ => {
            let cf = theta.expansion().expect("exact rotation number");
            if cf.is_terminating() {
                let q = cf.walk().last().and_then(|t| t.q.exact().and_then(|q| q.to_u64()));
                if let Some(q) = q {
                    return TorsionCheck::Torsion { q, heuristic: false };
                }
            }
            TorsionCheck::NonTorsionUpTo {
                max_q,
                heuristic: false,
            }
        }
    }
}

/// `Σ_{n=0}^{N} ln(q_{n+1}) / q_n`.
pub fn brjuno_partial_sum(cf: &ContinuedFraction, n: usize) -> Result<Tower> {
    if cf.terminated {
        return Err(HolonomyError::DefinedOnlyForIrrational);
    }
    let need = n + 2;
    if cf.convergents.len() < need {
        return Err(HolonomyError::InsufficientConvergents {
            have: cf.convergents.len(),
            need,
        });
    }
    let mut sum = Tower::ZERO;
    for k in 0..=n {
        let q = cf.convergents[k].1.tower();
        let ln_next = cf.convergents[k + 1].1.ln();
        sum = sum.add(ratio(ln_next, q));
    }
    Ok(sum)
}

/// `a / b` for `b >= 1`, accurate to the level of `a`.
fn ratio(a: Tower, b: Tower) -> Tower {
    match (a.level, b.level) {
        (0, 0) => Tower::from_f64(a.top / b.top),
        (1, 0) => Tower::from_ln(a.top - b.top.ln()),
        (1, 1) => Tower::from_ln(a.top - b.top),
        (0, _) => Tower::ZERO,
        _ if b.level + 1 < a.level => a,
        _ => {
            // Both far beyond f64; compare logs one level down.
            let (la, lb) = (a.ln(), b.ln());
            if la > lb {
                a
            } else {
                Tower::ZERO
            }
        }
    }
}

/// One sample `n = q_k` of the strong-Cremer quantity
/// `n ln A + ln|1 − μ^n| / (d^n − 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CremerSample {
    pub k: usize,
    /// `q_k` as a decimal or level-index string.
    pub n: String,
    pub value: SignedTower,
    /// Evaluated from the closed form the quotient was built from.
    pub symbolic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CremerEvidence {
    pub degree: u32,
    pub a: f64,
    pub samples: Vec<CremerSample>,
    pub min_value: SignedTower,
    pub at_k: usize,
    pub at_n: String,
    /// The last two samples drop by at least [`CREMER_DROP`].
    pub decreasing: bool,
    /// Sampling stopped before `N` because a value could not be evaluated.
    pub truncated: bool,
}

pub const CREMER_DROP: f64 = 10.0;

/// Strong-Cremer diagnostic at the convergent denominators `q_1..=q_N`.
///
/// Between consecutive denominators `|1 − μ^n|` is not smaller than at `q_k`
/// (best approximation) while the exponent `1/(d^n − 1)` shrinks, so the
/// minimum over `q_k <= n < q_{k+1}` is attained at `n = q_k` whenever
/// `|1 − μ^{q_k}| <= 1`; sampling the denominators is enough.
pub fn strong_cremer_check(theta: &RotationNumber, d: u32, a: f64, n: usize) -> Result<CremerEvidence> {
    if d < 2 {
        return Err(HolonomyError::Config("degree must be >= 2".into()));
    }
    if !(a > 1.0) {
        return Err(HolonomyError::Config("A must exceed 1".into()));
    }
    if n < 1 {
        return Err(HolonomyError::Config("N must be >= 1".into()));
    }
    let cf = match theta {
        RotationNumber::Real(x) => super::cf::CfExpansion {
            head: certified_quotients(x, n + 8),
            tail: super::cf::CfTail::Terminating,
        },
        _ => {
            let cf = theta.expansion().expect("exact rotation number");
            if cf.is_terminating() {
                let last = cf.walk().last().expect("nonempty expansion");
                let q = last.q.exact().and_then(|q| q.to_u64()).unwrap_or(u64::MAX);
                return Err(HolonomyError::DegenerateTorsion { n: q });
            }
            cf
        }
    };
    let terms: Vec<CfTerm> = cf.walk().take(n + 8).collect();
    let ln_a = a.ln();
    let ln_d = (d as f64).ln();
    let mut samples = Vec::new();
    let mut truncated = false;
    for k in 1..=n {
        // Needs a_{k+1}; float input may run out of certified digits.
        if k + 1 >= terms.len() {
            truncated = true;
            break;
        }
        let q = &terms[k].q;
        let next = &terms[k + 1].quotient;
        let value = match next {
            Quotient::Huge {
                cremer: Some((deg, rate)),
                ..
            } if *deg == d => Some((symbolic_value(q, ln_a, *rate), true)),
            _ => generic_value(&terms, k, ln_a, ln_d).map(|v| (v, false)),
        };
        let Some((value, symbolic)) = value else {
            truncated = true;
            break;
        };
        samples.push(CremerSample {
            k,
            n: q.to_string(),
            value,
            symbolic,
        });
    }
    if samples.is_empty() {
        return Err(HolonomyError::InsufficientConvergents {
            have: terms.len(),
            need: 3,
        });
    }
    let (at, min) = samples
        .iter()
        .enumerate()
        .fold((0, samples[0].value), |(bi, bv), (i, s)| {
            if s.value < bv {
                (i, s.value)
            } else {
                (bi, bv)
            }
        });
    let decreasing = samples.len() >= 2 && {
        let last = samples[samples.len() - 1].value;
        let prev = samples[samples.len() - 2].value;
        match (last.magnitude.is_finite_f64(), prev.magnitude.is_finite_f64()) {
            (true, true) => last.to_f64() <= prev.to_f64() - CREMER_DROP,
            _ => last < prev && last.add_f64(CREMER_DROP) < prev,
        }
    };
    Ok(CremerEvidence {
        degree: d,
        a,
        min_value: min,
        at_k: samples[at].k,
        at_n: samples[at].n.clone(),
        samples,
        decreasing,
        truncated,
    })
}

/// With `ln a_{k+1} = rate · q (d^q − 1) − ln q + ln 2π` the sample equals
/// `q (ln A − rate)` up to terms far below the rounding of `rate`.
fn symbolic_value(q: &Magnitude, ln_a: f64, rate: f64) -> SignedTower {
    let c = ln_a - rate;
    let m = q.tower().mul_f64(c.abs());
    if c < 0.0 {
        SignedTower::negative(m)
    } else {
        SignedTower::positive(m)
    }
}

/// Direct evaluation from the expansion; `None` when `q_k` itself does not fit.
fn generic_value(terms: &[CfTerm], k: usize, ln_a: f64, ln_d: f64) -> Option<SignedTower> {
    let q = terms[k].q.to_f64()?;
    let lambda = small_divisor_log(terms, k);
    let lead = q * ln_a;
    // ln(d^q − 1)
    let ln_den = if q * ln_d < 30.0 {
        ((q * ln_d).exp() - 1.0).ln()
    } else {
        q * ln_d
    };
    let value = match lambda {
        Lambda::Float(l) => {
            if l <= 0.0 {
                return Some(SignedTower::from_f64(lead - l * (-ln_den).exp()));
            }
            let ln_term = l.ln() - ln_den;
            if ln_term < 690.0 {
                SignedTower::from_f64(lead - ln_term.exp())
            } else {
                SignedTower::negative(Tower::from_ln(ln_term)).add_f64(lead)
            }
        }
        Lambda::Huge(t) => {
            // term = Λ / (d^q − 1) with Λ beyond f64.
            let ln_l = t.ln();
            if ln_l.is_finite_f64() {
                let ln_term = ln_l.top - ln_den;
                if ln_term < 690.0 {
                    SignedTower::from_f64(lead - ln_term.exp())
                } else {
                    SignedTower::negative(Tower::from_ln(ln_term))
                }
            } else {
                SignedTower::negative(t)
            }
        }
    };
    Some(value)
}

enum Lambda {
    Float(f64),
    Huge(Tower),
}

/// `Λ_k = −ln|1 − μ^{q_k}| = −ln(2 sin πδ)` with
/// `δ = ‖q_k θ‖ = 1/(q_{k+1} + q_k / x_{k+2})`.
fn small_divisor_log(terms: &[CfTerm], k: usize) -> Lambda {
    let q = terms[k].q.tower();
    let q_next = terms[k + 1].q.tower();
    if q.is_finite_f64() && q_next.is_finite_f64() {
        let x = complete_quotient(terms, k + 2);
        let inv_delta = q_next.top + q.top / x;
        if inv_delta.is_finite() {
            let delta = 1.0 / inv_delta;
            let s = if delta > 1e-6 {
                2.0 * (PI * delta).sin()
            } else {
                2.0 * PI * delta
            };
            return Lambda::Float(-s.ln());
        }
    }
    // δ ≈ 1/q_{k+1} to far better than the level-index resolution.
    let ln_inv = q_next.ln();
    if ln_inv.is_finite_f64() {
        Lambda::Float(ln_inv.top - (2.0 * PI).ln())
    } else {
        Lambda::Huge(ln_inv)
    }
}

/// `x_j = [a_j; a_{j+1}, …]` from the available quotients.
fn complete_quotient(terms: &[CfTerm], j: usize) -> f64 {
    let end = terms.len().min(j + 40);
    if j >= end {
        return f64::INFINITY;
    }
    let mut x = f64::INFINITY;
    for t in terms[j..end].iter().rev() {
        let a = match &t.quotient {
            Quotient::Exact(a) => a.to_f64(),
            Quotient::Huge { .. } => f64::INFINITY,
        };
        x = a + 1.0 / x;
    }
    x
}

/// Thresholds for [`classify_rotation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArithmeticPolicy {
    pub max_q: u64,
    pub torsion_tol: f64,
    pub cf_depth: usize,
    pub cremer_degree: u32,
    pub cremer_depth: usize,
    pub cremer_sweep: Vec<f64>,
    pub diophantine_tau: f64,
    pub diophantine_c: f64,
    /// Partial Brjuno sums above this are not reported as evidence.
    pub brjuno_cap: f64,
}

impl Default for ArithmeticPolicy {
    fn default() -> Self {
        ArithmeticPolicy {
            max_q: 1_000_000,
            torsion_tol: 1e-30,
            cf_depth: 40,
            cremer_degree: 2,
            cremer_depth: 4,
            cremer_sweep: vec![2.0, 10.0, 100.0],
            diophantine_tau: 1.0,
            diophantine_c: 10.0,
            brjuno_cap: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArithmeticKind {
    Torsion { q: u64 },
    DiophantineEvidence,
    BrjunoEvidence { partial_sum: f64 },
    CremerEvidence { min_value: String, at_n: String },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticVerdict {
    pub kind: ArithmeticKind,
    /// Continued-fraction depth the verdict rests on.
    pub depth: usize,
    pub heuristic: bool,
    pub brjuno_partial_sum: Option<f64>,
    pub cremer: Vec<CremerEvidence>,
    pub trail: Vec<String>,
}

/// Checks run in order torsion, strong Cremer, Diophantine, Brjuno; the first
/// that fires decides the kind, the others are still recorded.
pub fn classify_rotation(theta: &RotationNumber, policy: &ArithmeticPolicy) -> ArithmeticVerdict {
    let heuristic = !theta.is_exact();
    let mut trail = Vec::new();
    let torsion = is_torsion(theta, policy.max_q, policy.torsion_tol);
    if let Some(q) = torsion.order() {
        trail.push(format!("torsion of order {q}"));
        return ArithmeticVerdict {
            kind: ArithmeticKind::Torsion { q },
            depth: 0,
            heuristic,
            brjuno_partial_sum: None,
            cremer: Vec::new(),
            trail,
        };
    }
    trail.push(format!("no torsion with denominator <= {}", policy.max_q));

    let cf = certified_cf(theta, policy.cf_depth);
    let depth = cf.quotients.len().saturating_sub(1);

    let mut cremer = Vec::new();
    for &a in &policy.cremer_sweep {
        match strong_cremer_check(theta, policy.cremer_degree, a, policy.cremer_depth) {
            Ok(ev) => cremer.push(ev),
            Err(e) => trail.push(format!("strong Cremer check at A = {a}: {e}")),
        }
    }
    let cremer_fires = !cremer.is_empty()
        && cremer.len() == policy.cremer_sweep.len()
        && cremer.iter().all(|ev| ev.decreasing);

    let brjuno = if depth >= 2 {
        brjuno_partial_sum(&cf, depth - 2).ok().map(|t| t.to_f64())
    } else {
        None
    };
    if let Some(b) = brjuno {
        trail.push(format!("Brjuno partial sum through depth {depth}: {b:.6}"));
    }

    let kind = if cremer_fires {
        let ev = cremer.last().expect("nonempty");
        trail.push(format!(
            "strong Cremer values decrease for every A in the sweep; minimum {} at n = {}",
            ev.min_value, ev.at_n
        ));
        ArithmeticKind::CremerEvidence {
            min_value: ev.min_value.to_string(),
            at_n: ev.at_n.clone(),
        }
    } else if depth >= 2 && diophantine(&cf, policy) {
        trail.push(format!(
            "ln q_(k+1) <= {} ln q_k + ln {} through depth {depth}",
            1.0 + policy.diophantine_tau,
            policy.diophantine_c
        ));
        ArithmeticKind::DiophantineEvidence
    } else {
        match brjuno {
            Some(b) if b.is_finite() && b <= policy.brjuno_cap => {
                ArithmeticKind::BrjunoEvidence { partial_sum: b }
            }
            _ => ArithmeticKind::Inconclusive,
        }
    };
    ArithmeticVerdict {
        kind,
        depth,
        heuristic,
        brjuno_partial_sum: brjuno,
        cremer,
        trail,
    }
}

/// Expansion to `depth`, or as deep as float digits certify.
pub fn certified_cf(theta: &RotationNumber, depth: usize) -> ContinuedFraction {
    match theta.continued_fraction(depth) {
        Ok(cf) => cf,
        Err(HolonomyError::PrecisionExhausted { certified }) if certified >= 2 => theta
            .continued_fraction(certified - 1)
            .expect("certified prefix"),
        Err(_) => ContinuedFraction::from_terms(Vec::new(), false),
    }
}

fn diophantine(cf: &ContinuedFraction, policy: &ArithmeticPolicy) -> bool {
    let ln_c = policy.diophantine_c.ln();
    cf.convergents.windows(2).all(|w| {
        let (a, b) = (w[0].1.ln(), w[1].1.ln());
        match (a.is_finite_f64(), b.is_finite_f64()) {
            (true, true) => b.top <= (1.0 + policy.diophantine_tau) * a.top + ln_c,
            _ => false,
        }
    })
}

/// `θ = p/q` written as a rational, for reports.
pub fn as_rational(theta: &RotationNumber) -> Option<Rational> {
    match theta {
        RotationNumber::Rational { p, q } => Some(Rational::from((p.clone(), q.clone()))),
        _ => {
            let cf = theta.expansion()?;
            if !cf.is_terminating() {
                return None;
            }
            let last = cf.walk().last()?;
            let (p, q): (&Integer, &Integer) = (last.p.exact()?, last.q.exact()?);
            Some(Rational::from((p.clone(), q.clone())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torsion_examples() {
        let half = RotationNumber::rational(1, 2).unwrap();
        assert_eq!(is_torsion(&half, 10, 1e-30).order(), Some(2));
        let zero = RotationNumber::rational(0, 1).unwrap();
        assert_eq!(is_torsion(&zero, 10, 1e-30).order(), Some(1));
        assert_eq!(
            is_torsion(&RotationNumber::golden(), 1_000_000, 1e-30),
            TorsionCheck::NonTorsionUpTo {
                max_q: 1_000_000,
                heuristic: false
            }
        );
        let third = RotationNumber::Real(Float::with_val(256, 1) / 3u32);
        assert_eq!(is_torsion(&third, 100, 1e-30).order(), Some(3));
        let golden_float = RotationNumber::Real(RotationNumber::golden().to_float(256));
        assert_eq!(is_torsion(&golden_float, 1_000_000, 1e-30).order(), None);
    }

    #[test]
    fn golden_brjuno_sum_is_small() {
        let cf = RotationNumber::golden().continued_fraction(30).unwrap();
        let mut prev = 0.0;
        for n in 0..=20 {
            let s = brjuno_partial_sum(&cf, n).unwrap().to_f64();
            assert!(s >= prev && s < 4.0);
            prev = s;
        }
        let third = RotationNumber::rational(1, 3).unwrap().continued_fraction(5).unwrap();
        assert!(matches!(
            brjuno_partial_sum(&third, 0),
            Err(HolonomyError::DefinedOnlyForIrrational)
        ));
    }

    #[test]
    fn exp_denominators_blow_up_brjuno_sums() {
        // Each term ln(q_{k+1})/q_k is close to the scale.
        let theta = RotationNumber::parse("expq(10)", 128).unwrap();
        let cf = theta.continued_fraction(6).unwrap();
        let s = brjuno_partial_sum(&cf, 2).unwrap().to_f64();
        assert!(s > 29.0, "{s}");
    }

    #[test]
    fn strong_cremer_values_fall_and_golden_values_rise() {
        let theta = RotationNumber::strong_cremer(2, 5.0, 1.0);
        for a in [2.0, 10.0, 100.0] {
            let ev = strong_cremer_check(&theta, 2, a, 4).unwrap();
            assert!(ev.decreasing, "A = {a}: {:?}", ev.samples);
            assert_eq!(ev.samples.len(), 4);
            assert_eq!(ev.at_k, 4);
        }
        let ev = strong_cremer_check(&RotationNumber::golden(), 2, 2.0, 20).unwrap();
        assert!(!ev.decreasing);
        assert!(ev.min_value > SignedTower::from_f64(-2.0));
        let quarter = RotationNumber::rational(1, 4).unwrap();
        assert!(matches!(
            strong_cremer_check(&quarter, 3, 10.0, 4),
            Err(HolonomyError::DegenerateTorsion { n: 4 })
        ));
    }

    #[test]
    fn generic_and_symbolic_evaluation_agree_where_both_apply() {
        // k = 1: a_2 carries rate 6.
        let theta = RotationNumber::strong_cremer(2, 5.0, 1.0);
        let ev = strong_cremer_check(&theta, 2, 2.0, 1).unwrap();
        let s = &ev.samples[0];
        assert!(s.symbolic);
        let q: f64 = s.n.parse().unwrap();
        let expect = q * (2f64.ln() - 6.0);
        assert!((s.value.to_f64() - expect).abs() < 1e-6 * expect.abs());
        let cf = theta.expansion().unwrap();
        let terms: Vec<_> = cf.walk().take(6).collect();
        let g = generic_value(&terms, 1, 2f64.ln(), 2f64.ln()).unwrap().to_f64();
        assert!((g - expect).abs() < 1e-3 * expect.abs(), "{g} vs {expect}");
    }

    #[test]
    fn verdict_order() {
        let p = ArithmeticPolicy::default();
        assert!(matches!(
            classify_rotation(&RotationNumber::rational(3, 7).unwrap(), &p).kind,
            ArithmeticKind::Torsion { q: 7 }
        ));
        assert!(matches!(
            classify_rotation(&RotationNumber::strong_cremer(2, 5.0, 1.0), &p).kind,
            ArithmeticKind::CremerEvidence { .. }
        ));
        assert_eq!(
            classify_rotation(&RotationNumber::golden(), &p).kind,
            ArithmeticKind::DiophantineEvidence
        );
        let v = classify_rotation(&RotationNumber::parse("cf:[0;10,100,10000,2,...]", 64).unwrap(), &p);
        assert!(matches!(v.kind, ArithmeticKind::BrjunoEvidence { .. }), "{:?}", v.kind);
    }
}
