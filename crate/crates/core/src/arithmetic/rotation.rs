use std::fmt;

use rug::float::Constant;
use rug::{Complex, Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use super::cf::{CfExpansion, CfTail, ContinuedFraction, DigitRule};
use crate::error::{HolonomyError, Result};
use crate::scalar::parse_float;

/// A rotation number `θ ∈ [0, 1)`; the multiplier is `e^{2πiθ}`.
#[derive(Clone, Debug, PartialEq)]
pub enum RotationNumber {
    /// `p/q` reduced with `0 <= p < q`.
    Rational { p: Integer, q: Integer },
    Cf(CfExpansion),
    /// A binary float; irrationality-sensitive answers about it are heuristic.
    Real(Float),
}

impl RotationNumber {
    pub fn rational(p: impl Into<Integer>, q: impl Into<Integer>) -> Result<Self> {
        let (p, q): (Integer, Integer) = (p.into(), q.into());
        if q.cmp0().is_le() {
            return Err(HolonomyError::Parse("rotation number denominator must be positive".into()));
        }
        let r = Rational::from((p, q));
        let (num, den) = r.into_numer_denom();
        let num = num.modulo(&den);
        Ok(RotationNumber::Rational { p: num, q: den })
    }

    /// `(√5 − 1)/2 = [0; 1, 1, 1, …]`
    pub fn golden() -> Self {
        RotationNumber::Cf(CfExpansion {
            head: vec![Integer::new()],
            tail: CfTail::Periodic(vec![Integer::from(1)]),
        })
    }

    /// `√2 − 1 = [0; 2, 2, 2, …]`
    pub fn silver() -> Self {
        RotationNumber::Cf(CfExpansion {
            head: vec![Integer::new()],
            tail: CfTail::Periodic(vec![Integer::from(2)]),
        })
    }

    pub fn from_rule(rule: DigitRule) -> Self {
        RotationNumber::Cf(CfExpansion {
            head: vec![Integer::new()],
            tail: CfTail::Rule(rule),
        })
    }

    /// Strong-Cremer construction for a degree-`degree` polynomial; see [`DigitRule::StrongCremer`].
    pub fn strong_cremer(degree: u32, base_rate: f64, rate_step: f64) -> Self {
        RotationNumber::from_rule(DigitRule::StrongCremer {
            degree,
            base_rate,
            rate_step,
        })
    }

    /// Angle of a nonzero complex multiplier, reduced to `[0, 1)`.
    pub fn from_multiplier(lambda: &Complex) -> Self {
        let bits = lambda.prec().0;
        let arg = Float::with_val(bits, lambda.arg_ref());
        let two_pi = Float::with_val(bits, Constant::Pi) * 2u32;
        let mut t = arg / two_pi;
        if t.cmp0().is_some_and(|o| o.is_lt()) {
            t += 1u32;
        }
        if t >= 1u32 {
            t -= 1u32;
        }
        RotationNumber::Real(t)
    }

    /// Exact continued-fraction view where one exists (rationals and symbolic expansions).
    pub fn expansion(&self) -> Option<CfExpansion> {
        match self {
            RotationNumber::Rational { p, q } => Some(CfExpansion {
                head: euclid_quotients(p.clone(), q.clone()),
                tail: CfTail::Terminating,
            }),
            RotationNumber::Cf(cf) => Some(cf.clone()),
            RotationNumber::Real(_) => None,
        }
    }

    /// True when the value is known exactly (not a float).
    pub fn is_exact(&self) -> bool {
        !matches!(self, RotationNumber::Real(_))
    }

    /// `θ` rounded to `bits`.
    pub fn to_float(&self, bits: u32) -> Float {
        match self {
            RotationNumber::Rational { p, q } => {
                Float::with_val(bits, Rational::from((p.clone(), q.clone())))
            }
            RotationNumber::Real(x) => Float::with_val(bits, x),
            RotationNumber::Cf(cf) => {
                // Stop once 1/(q_k q_{k+1}) is below the working precision.
                let target = bits as f64 * std::f64::consts::LN_2 + 4.0;
                let mut last: Option<(Integer, Integer)> = None;
                let mut prev_ln_q = 0.0;
                for term in cf.walk() {
                    match (term.p.exact(), term.q.exact()) {
                        (Some(p), Some(q)) => {
                            let ln_q = super::cf::int_ln(q);
                            last = Some((p.clone(), q.clone()));
                            if prev_ln_q + ln_q > target {
                                break;
                            }
                            prev_ln_q = ln_q;
                        }
                        _ => break,
                    }
                    if term.index > 100_000 {
                        break;
                    }
                }
                let (p, q) = last.unwrap_or((Integer::new(), Integer::from(1)));
                let mut t = Float::with_val(bits, Rational::from((p, q)));
                t -= Float::with_val(bits, t.floor_ref());
                t
            }
        }
    }

    /// `e^{2πiθ}` at `bits` of precision.
    pub fn multiplier(&self, bits: u32) -> Complex {
        // Exact values of the four Gaussian units avoid a rounded imaginary part.
        if let RotationNumber::Rational { p, q } = self {
            if let (Some(p), Some(q)) = (p.to_u32(), q.to_u32()) {
                let quarter = match (p, q) {
                    (0, 1) => Some((1, 0)),
                    (1, 4) => Some((0, 1)),
                    (1, 2) => Some((-1, 0)),
                    (3, 4) => Some((0, -1)),
                    _ => None,
                };
                if let Some(v) = quarter {
                    return Complex::with_val(bits, v);
                }
            }
        }
        let work = bits + 32;
        let theta = self.to_float(work);
        let angle = theta * Float::with_val(work, Constant::Pi) * 2u32;
        let (s, c) = angle.sin_cos(Float::new(work));
        Complex::with_val(bits, (c, s))
    }

    /// Partial quotients `a_0..=a_depth` with convergents.
    ///
    /// Float inputs are expanded from a rigorous enclosure of the value; a
    /// quotient is emitted only when both ends of the enclosure agree on it.
    pub fn continued_fraction(&self, depth: usize) -> Result<ContinuedFraction> {
        if depth < 1 {
            return Err(HolonomyError::Config("continued fraction depth must be >= 1".into()));
        }
        match self {
            RotationNumber::Real(x) => real_continued_fraction(x, depth),
            _ => {
                let cf = self.expansion().expect("exact rotation numbers have expansions");
                let terms: Vec<_> = cf.walk().take(depth + 1).collect();
                let terminated = terms.len() <= depth || {
                    // terminated exactly at a_depth
                    cf.is_terminating() && terms.len() == cf.head.len()
                };
                Ok(ContinuedFraction::from_terms(terms, terminated))
            }
        }
    }

    /// Parses `p/q`, `golden`, `silver`, `cf:[a0;a1,...]` (a trailing `...`
    /// repeats the final quotient), `cremer(d,base,step)`, `expq(scale)` or a
    /// decimal read at `bits` of precision.
    pub fn parse(s: &str, bits: u32) -> Result<Self> {
        let s = s.trim();
        match s {
            "golden" => return Ok(RotationNumber::golden()),
            "silver" => return Ok(RotationNumber::silver()),
            _ => {}
        }
        if let Some(body) = s.strip_prefix("cf:") {
            return parse_cf(body);
        }
        if let Some(args) = call_args(s, "cremer") {
            let nums = parse_f64_list(&args, 3, s)?;
            if nums[0] < 2.0 || nums[0].fract() != 0.0 {
                return Err(HolonomyError::Parse(format!("cremer degree must be an integer >= 2 in `{s}`")));
            }
            return Ok(RotationNumber::strong_cremer(nums[0] as u32, nums[1], nums[2]));
        }
        if let Some(args) = call_args(s, "expq") {
            let nums = parse_f64_list(&args, 1, s)?;
            return Ok(RotationNumber::from_rule(DigitRule::ExpDenominator { scale: nums[0] }));
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: Integer = p
                .trim()
                .parse()
                .map_err(|_| HolonomyError::Parse(format!("bad rational `{s}`")))?;
            let q: Integer = q
                .trim()
                .parse()
                .map_err(|_| HolonomyError::Parse(format!("bad rational `{s}`")))?;
            return RotationNumber::rational(p, q);
        }
        let mut x = parse_float(s, bits)?;
        x -= Float::with_val(bits, x.floor_ref());
        Ok(RotationNumber::Real(x))
    }
}

fn call_args(s: &str, name: &str) -> Option<String> {
    let rest = s.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.to_string())
}

fn parse_f64_list(args: &str, n: usize, ctx: &str) -> Result<Vec<f64>> {
    let nums: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| HolonomyError::Parse(format!("bad arguments in `{ctx}`")))?;
    if nums.len() != n {
        return Err(HolonomyError::Parse(format!("expected {n} arguments in `{ctx}`")));
    }
    Ok(nums)
}

fn parse_cf(body: &str) -> Result<RotationNumber> {
    let bad = || HolonomyError::Parse(format!("bad continued fraction `cf:{body}`"));
    let inner = body.trim().strip_prefix('[').and_then(|b| b.strip_suffix(']')).ok_or_else(bad)?;
    let (a0, rest) = match inner.split_once(';') {
        Some((a0, rest)) => (a0, rest),
        None => (inner, ""),
    };
    let mut head: Vec<Integer> = vec![a0.trim().parse().map_err(|_| bad())?];
    let mut periodic = false;
    for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok == "..." {
            periodic = true;
            continue;
        }
        if periodic {
            return Err(bad());
        }
        let a = parse_quotient_token(tok).ok_or_else(bad)?;
        if a.cmp0().is_le() {
            return Err(HolonomyError::Parse("partial quotients after a0 must be positive".into()));
        }
        head.push(a);
    }
    // The integer part does not affect the multiplier.
    head[0] = Integer::new();
    let tail = if periodic {
        if head.len() < 2 {
            return Err(bad());
        }
        let last = head.pop().expect("nonempty");
        CfTail::Periodic(vec![last])
    } else {
        CfTail::Terminating
    };
    Ok(RotationNumber::Cf(CfExpansion { head, tail }))
}

/// Integers, optionally written as `10^4` or `1e4`.
fn parse_quotient_token(tok: &str) -> Option<Integer> {
    if let Ok(a) = tok.parse::<Integer>() {
        return Some(a);
    }
    let (base, exp) = tok.split_once('^').or_else(|| tok.split_once(['e', 'E']))?;
    let exp: u32 = exp.trim().parse().ok()?;
    let base: Integer = base.trim().parse().ok()?;
    if tok.contains('^') {
        Some(rug::ops::Pow::pow(base, exp))
    } else {
        Some(base * Integer::from(Integer::u_pow_u(10, exp)))
    }
}

fn euclid_quotients(mut p: Integer, mut q: Integer) -> Vec<Integer> {
    let mut out = Vec::new();
    while q.cmp0().is_gt() {
        let (a, r) = p.div_rem_floor(q.clone());
        out.push(a);
        p = q;
        q = r;
    }
    if out.is_empty() {
        out.push(Integer::new());
    }
    out
}

fn real_continued_fraction(x: &Float, depth: usize) -> Result<ContinuedFraction> {
    let quotients = certified_quotients(x, depth + 1);
    if quotients.len() <= depth {
        return Err(HolonomyError::PrecisionExhausted {
            certified: quotients.len(),
        });
    }
    let cf = CfExpansion {
        head: quotients,
        tail: CfTail::Terminating,
    };
    let terms: Vec<_> = cf.walk().take(depth + 1).collect();
    Ok(ContinuedFraction::from_terms(terms, false))
}

/// Leading partial quotients of `x ∈ [0, 1)` that every point of the
/// enclosure `[x − ulp, x + ulp]` shares.
pub fn certified_quotients(x: &Float, max_terms: usize) -> Vec<Integer> {
    let prec = x.prec() as i32;
    let ulp = match x.get_exp() {
        Some(e) => Float::with_val(x.prec(), Float::i_exp(1, e - prec)),
        None => Float::with_val(x.prec(), Float::i_exp(1, -prec)),
    };
    let center = x.to_rational().expect("finite rotation number");
    let ulp = ulp.to_rational().expect("finite ulp");
    let mut lo = Rational::from(&center - &ulp);
    let mut hi = Rational::from(&center + &ulp);
    let mut quotients = vec![Integer::new()];
    while quotients.len() < max_terms {
        if lo.cmp0().is_le() || hi >= 1 {
            break;
        }
        // x_{k+1} = 1/(x_k - a_k) reverses the enclosure.
        let next_lo = Rational::from(hi.recip_ref());
        let next_hi = Rational::from(lo.recip_ref());
        let a = Integer::from(next_lo.floor_ref());
        if Integer::from(next_hi.floor_ref()) != a {
            break;
        }
        lo = next_lo - &a;
        hi = next_hi - &a;
        quotients.push(a);
    }
    quotients
}

impl fmt::Display for RotationNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationNumber::Rational { p, q } => write!(f, "{p}/{q}"),
            RotationNumber::Real(x) => write!(f, "{}", crate::scalar::float_to_string(x)),
            RotationNumber::Cf(cf) => {
                if let CfTail::Rule(rule) = &cf.tail {
                    return match rule {
                        DigitRule::StrongCremer { degree, base_rate, rate_step } => {
                            write!(f, "cremer({degree},{base_rate},{rate_step})")
                        }
                        DigitRule::ExpDenominator { scale } => write!(f, "expq({scale})"),
                    };
                }
                write!(f, "cf:[{}", cf.head[0])?;
                for (i, a) in cf.head.iter().enumerate().skip(1) {
                    write!(f, "{}{a}", if i == 1 { ";" } else { "," })?;
                }
                if let CfTail::Periodic(block) = &cf.tail {
                    for (i, a) in block.iter().enumerate() {
                        let sep = if cf.head.len() == 1 && i == 0 { ";" } else { "," };
                        write!(f, "{sep}{a}")?;
                    }
                    f.write_str(",...")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// JSON form of a rotation number.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RotationJson {
    Rational {
        p: String,
        q: String,
    },
    Cf {
        digits: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        periodic: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rule: Option<DigitRule>,
    },
    Real {
        value: String,
        precision: u32,
    },
}

impl Serialize for RotationNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let j = match self {
            RotationNumber::Rational { p, q } => RotationJson::Rational {
                p: p.to_string(),
                q: q.to_string(),
            },
            RotationNumber::Real(x) => RotationJson::Real {
                value: crate::scalar::float_to_string(x),
                precision: x.prec(),
            },
            RotationNumber::Cf(cf) => {
                let (periodic, rule) = match &cf.tail {
                    CfTail::Terminating => (vec![], None),
                    CfTail::Periodic(b) => (b.iter().map(|a| a.to_string()).collect(), None),
                    CfTail::Rule(r) => (vec![], Some(r.clone())),
                };
                RotationJson::Cf {
                    digits: cf.head.iter().map(|a| a.to_string()).collect(),
                    periodic,
                    rule,
                }
            }
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RotationNumber {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let parse_int = |s: &str| s.parse::<Integer>().map_err(D::Error::custom);
        match RotationJson::deserialize(d)? {
            RotationJson::Rational { p, q } => {
                RotationNumber::rational(parse_int(&p)?, parse_int(&q)?).map_err(D::Error::custom)
            }
            RotationJson::Real { value, precision } => {
                let bits = precision.max(crate::scalar::MIN_FLOAT_BITS);
                let mut x = parse_float(&value, bits).map_err(D::Error::custom)?;
                x -= Float::with_val(bits, x.floor_ref());
                Ok(RotationNumber::Real(x))
            }
            RotationJson::Cf { digits, periodic, rule } => {
                let mut head = digits.iter().map(|s| parse_int(s)).collect::<std::result::Result<Vec<_>, _>>()?;
                if head.is_empty() {
                    head.push(Integer::new());
                }
                head[0] = Integer::new();
                if head[1..].iter().chain([].iter()).any(|a| a.cmp0().is_le()) {
                    return Err(D::Error::custom("partial quotients after a0 must be positive"));
                }
                let tail = match (periodic.is_empty(), rule) {
                    (true, None) => CfTail::Terminating,
                    (false, None) => CfTail::Periodic(
                        periodic.iter().map(|s| parse_int(s)).collect::<std::result::Result<_, _>>()?,
                    ),
                    (true, Some(r)) => CfTail::Rule(r),
                    (false, Some(_)) => {
                        return Err(D::Error::custom("a continued fraction has either a periodic block or a rule"))
                    }
                };
                Ok(RotationNumber::Cf(CfExpansion { head, tail }))
            }
        }
    }
}

/// Convergent denominators that are exact and at most `max_q`.
pub fn small_denominators(theta: &RotationNumber, max_q: u64, max_terms: usize) -> Vec<u64> {
    let Some(cf) = theta.expansion() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for term in cf.walk().take(max_terms) {
        match term.q.exact().and_then(|q| q.to_u64()) {
            Some(q) if q <= max_q => {
                if out.last() != Some(&q) {
                    out.push(q);
                }
            }
            _ => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_literals() {
        let third = RotationNumber::parse("1/3", 128).unwrap();
        assert_eq!(third, RotationNumber::rational(1, 3).unwrap());
        assert_eq!(RotationNumber::parse("4/3", 128).unwrap(), third);
        let g = RotationNumber::parse("cf:[0;1,1,1,...]", 128).unwrap();
        assert_eq!(g.to_float(200).to_f64(), (5f64.sqrt() - 1.0) / 2.0);
        let c = RotationNumber::parse("cf:[0;10,100,10^4]", 128).unwrap();
        assert_eq!(c.to_string(), "cf:[0;10,100,10000]");
        assert!(RotationNumber::parse("cf:[0;1,-2]", 128).is_err());
        assert!(RotationNumber::parse("cremer(1,5,1)", 128).is_err());
    }

    #[test]
    fn real_expansion_certifies_leading_quotients() {
        let bits = 256;
        let golden = RotationNumber::golden().to_float(bits);
        let cf = RotationNumber::Real(golden).continued_fraction(100).unwrap();
        assert!(cf.small_quotients()[1..].iter().all(|a| *a == Some(1)));
        let err = RotationNumber::Real(RotationNumber::golden().to_float(64))
            .continued_fraction(200)
            .unwrap_err();
        assert!(matches!(err, HolonomyError::PrecisionExhausted { .. }));
    }

    #[test]
    fn json_round_trip() {
        for theta in [
            RotationNumber::rational(3, 7).unwrap(),
            RotationNumber::golden(),
            RotationNumber::strong_cremer(2, 5.0, 1.0),
            RotationNumber::parse("0.125", 64).unwrap(),
        ] {
            let s = serde_json::to_string(&theta).unwrap();
            let back: RotationNumber = serde_json::from_str(&s).unwrap();
            assert_eq!(back, theta, "{s}");
        }
    }

    #[test]
    fn quarter_turn_multiplier_is_exact() {
        let i = RotationNumber::rational(1, 4).unwrap().multiplier(256);
        assert!(i.real().is_zero());
        assert_eq!(i.imag().to_f64(), 1.0);
    }
}
