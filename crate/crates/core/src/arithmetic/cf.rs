//! Continued-fraction expansions with exact, periodic or rule-generated tails.

use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use super::tower::Tower;

/// Quotients whose natural log is below this are expanded to exact integers.
const EXACT_LN_LIMIT: f64 = 2302.6; // ln(10^1000)

/// A partial quotient.
#[derive(Clone, Debug, PartialEq)]
pub enum Quotient {
    Exact(Integer),
    /// Too large to expand; known through `ln(a)`. `cremer` records the
    /// strong-Cremer scaling `(degree, rate)` the quotient was built from.
    Huge {
        ln: Tower,
        cremer: Option<(u32, f64)>,
    },
}

impl Quotient {
    pub fn exact(&self) -> Option<&Integer> {
        match self {
            Quotient::Exact(a) => Some(a),
            Quotient::Huge { .. } => None,
        }
    }

    pub fn magnitude(&self) -> Magnitude {
        match self {
            Quotient::Exact(a) => Magnitude::Exact(a.clone()),
            Quotient::Huge { ln, .. } => Magnitude::Approx(ln.exp()),
        }
    }

    /// `ln(a)` as a level-index value.
    pub fn ln(&self) -> Tower {
        match self {
            Quotient::Exact(a) => Tower::from_f64(int_ln(a).max(0.0)),
            Quotient::Huge { ln, .. } => *ln,
        }
    }
}

/// A convergent numerator or denominator: exact while all inputs are exact.
#[derive(Clone, Debug, PartialEq)]
pub enum Magnitude {
    Exact(Integer),
    Approx(Tower),
}

impl Magnitude {
    pub fn exact(&self) -> Option<&Integer> {
        match self {
            Magnitude::Exact(q) => Some(q),
            Magnitude::Approx(_) => None,
        }
    }

    pub fn tower(&self) -> Tower {
        match self {
            Magnitude::Exact(q) => {
                let f = q.to_f64();
                if f.is_finite() {
                    Tower::from_f64(f.abs())
                } else {
                    Tower::from_ln(int_ln(q))
                }
            }
            Magnitude::Approx(t) => *t,
        }
    }

    /// Float value when it fits, else `None`.
    pub fn to_f64(&self) -> Option<f64> {
        let t = self.tower();
        t.is_finite_f64().then_some(t.top)
    }

    pub fn ln(&self) -> Tower {
        match self {
            Magnitude::Exact(q) => Tower::from_f64(int_ln(q).max(0.0)),
            Magnitude::Approx(t) => t.ln(),
        }
    }

    /// `a * self + prev`.
    fn advance(&self, a: &Quotient, prev: &Magnitude) -> Magnitude {
        match (a, self, prev) {
            (Quotient::Exact(a), Magnitude::Exact(cur), Magnitude::Exact(prev)) => {
                Magnitude::Exact(Integer::from(a * cur) + prev)
            }
            _ => Magnitude::Approx(a.magnitude().tower().mul(self.tower()).add(prev.tower())),
        }
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Magnitude::Exact(q) => write!(f, "{q}"),
            Magnitude::Approx(t) => write!(f, "~{t}"),
        }
    }
}

/// Natural log of a (possibly very large) integer.
pub fn int_ln(a: &Integer) -> f64 {
    let bits = a.significant_bits();
    if bits <= 1000 {
        return a.to_f64().abs().ln();
    }
    let shift = bits - 64;
    let top = Integer::from(a >> shift);
    top.to_f64().abs().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Generator for partial quotients after the explicit head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DigitRule {
    /// `ln a_{k+1} = rate_k · q_k · (d^{q_k} − 1) − ln q_k + ln 2π` with
    /// `rate_k = base_rate + k · rate_step`, so that
    /// `−ln|1 − μ^{q_k}| ≈ rate_k · q_k · (d^{q_k} − 1)`.
    StrongCremer {
        degree: u32,
        base_rate: f64,
        rate_step: f64,
    },
    /// `ln a_{k+1} = scale · q_k`.
    ExpDenominator { scale: f64 },
}

impl DigitRule {
    /// Quotient `a_{k+1}` from the convergent denominator `q_k`.
    fn next(&self, k: usize, q: &Magnitude) -> Quotient {
        match self {
            DigitRule::StrongCremer {
                degree,
                base_rate,
                rate_step,
            } => {
                let rate = base_rate + k as f64 * rate_step;
                let ln_d = (*degree as f64).ln();
                let scaling = Some((*degree, rate));
                if let Some(qf) = q.to_f64() {
                    if qf * ln_d < 690.0 {
                        let ln_a = rate * qf * ((qf * ln_d).exp() - 1.0) - qf.ln()
                            + (2.0 * std::f64::consts::PI).ln();
                        return quotient_from_ln(ln_a, scaling);
                    }
                }
                // ln ln a ≈ ln rate + ln q + q ln d
                let q_ln_d = q.tower().mul_f64(ln_d);
                let ln_ln_a = q_ln_d.add(q.ln()).add(Tower::from_f64(rate.ln().max(0.0)));
                Quotient::Huge {
                    ln: ln_ln_a.exp(),
                    cremer: scaling,
                }
            }
            DigitRule::ExpDenominator { scale } => match q.to_f64() {
                Some(qf) => quotient_from_ln(scale * qf, None),
                None => Quotient::Huge {
                    ln: q.tower().mul_f64(*scale),
                    cremer: None,
                },
            },
        }
    }
}

fn quotient_from_ln(ln_a: f64, cremer: Option<(u32, f64)>) -> Quotient {
    if ln_a <= EXACT_LN_LIMIT {
        let bits = (ln_a.max(1.0) / std::f64::consts::LN_2) as u32 + 64;
        let a = Float::with_val(bits, ln_a).exp().ceil();
        let a = a.to_integer().unwrap_or_default();
        Quotient::Exact(a.max(Integer::from(1)))
    } else {
        Quotient::Huge {
            ln: Tower::from_f64(ln_a),
            cremer,
        }
    }
}

/// What follows the explicit head of a continued fraction.
#[derive(Clone, Debug, PartialEq)]
pub enum CfTail {
    Terminating,
    /// The block repeats forever.
    Periodic(Vec<Integer>),
    Rule(DigitRule),
}

/// Symbolic expansion `[a0; a1, a2, ...]` of a rotation number.
#[derive(Clone, Debug, PartialEq)]
pub struct CfExpansion {
    pub head: Vec<Integer>,
    pub tail: CfTail,
}

impl CfExpansion {
    pub fn is_terminating(&self) -> bool {
        matches!(self.tail, CfTail::Terminating)
    }

    /// Walks quotients and convergents in order.
    pub fn walk(&self) -> CfWalker<'_> {
        CfWalker {
            cf: self,
            index: 0,
            p: (Magnitude::Exact(Integer::from(1)), Magnitude::Exact(Integer::from(0))),
            q: (Magnitude::Exact(Integer::from(0)), Magnitude::Exact(Integer::from(1))),
        }
    }
}

/// One step of a continued-fraction walk.
#[derive(Clone, Debug, PartialEq)]
pub struct CfTerm {
    pub index: usize,
    pub quotient: Quotient,
    pub p: Magnitude,
    pub q: Magnitude,
}

pub struct CfWalker<'a> {
    cf: &'a CfExpansion,
    index: usize,
    // (current, previous)
    p: (Magnitude, Magnitude),
    q: (Magnitude, Magnitude),
}

impl Iterator for CfWalker<'_> {
    type Item = CfTerm;

    fn next(&mut self) -> Option<CfTerm> {
        let i = self.index;
        let quotient = if i < self.cf.head.len() {
            Quotient::Exact(self.cf.head[i].clone())
        } else {
            match &self.cf.tail {
                CfTail::Terminating => return None,
                CfTail::Periodic(block) => {
                    if block.is_empty() {
                        return None;
                    }
                    Quotient::Exact(block[(i - self.cf.head.len()) % block.len()].clone())
                }
                CfTail::Rule(rule) => {
                    if i == 0 {
                        Quotient::Exact(Integer::new())
                    } else {
                        rule.next(i - 1, &self.q.0)
                    }
                }
            }
        };
        let p_next = self.p.0.advance(&quotient, &self.p.1);
        let q_next = self.q.0.advance(&quotient, &self.q.1);
        self.p.1 = std::mem::replace(&mut self.p.0, p_next.clone());
        self.q.1 = std::mem::replace(&mut self.q.0, q_next.clone());
        self.index += 1;
        Some(CfTerm {
            index: i,
            quotient,
            p: p_next,
            q: q_next,
        })
    }
}

/// A finite prefix of an expansion with its convergents.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuedFraction {
    /// `a_0, a_1, …, a_N`
    pub quotients: Vec<Quotient>,
    /// `(p_n, q_n)` for `n = 0..=N`
    pub convergents: Vec<(Magnitude, Magnitude)>,
    /// The expansion ends at `a_N` (the number is rational).
    pub terminated: bool,
}

impl ContinuedFraction {
    pub fn from_terms(terms: Vec<CfTerm>, terminated: bool) -> Self {
        let mut quotients = Vec::with_capacity(terms.len());
        let mut convergents = Vec::with_capacity(terms.len());
        for t in terms {
            quotients.push(t.quotient);
            convergents.push((t.p, t.q));
        }
        ContinuedFraction {
            quotients,
            convergents,
            terminated,
        }
    }

    pub fn denominators(&self) -> impl Iterator<Item = &Magnitude> {
        self.convergents.iter().map(|(_, q)| q)
    }

    /// Exact quotients as `u64` where they fit (convenience for tests and reports).
    pub fn small_quotients(&self) -> Vec<Option<u64>> {
        self.quotients
            .iter()
            .map(|a| a.exact().and_then(|a| a.to_u64()))
            .collect()
    }
}
