//! Closed-form maps fixing 0: the expression language and its evaluators.
//!
//! ```text
//! id | rot(θ) | mobius(a,b,c,d) | poly(λ,c2,…,cd)
//!    | conj(f,h) | compose(f,g,…) | invert(f) | iterate(f,n)
//! ```
//! Coefficients are Gaussian rationals written like `1`, `-1/2`, `0.25`,
//! `3i`, `1-2i`, or a unit `e(θ) = exp(2πiθ)` with a rotation-number literal.

use std::fmt;

use num_complex::Complex64;
use rug::{Complex, Rational};

use crate::arithmetic::RotationNumber;
use crate::cnum::CNum;
use crate::error::{HolonomyError, Result};
use crate::germ::Germ;
use crate::scalar::{parse_rational, Field, GaussianRational, Scalar};

/// Longest primitive chain a compiled map may contain.
pub const MAX_COMPILED_STEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Coeff {
    Exact(GaussianRational),
    /// `e^{2πiθ}`
    Unit(RotationNumber),
}

impl Coeff {
    pub fn int(v: i64) -> Coeff {
        Coeff::Exact(GaussianRational::from_ints(v, 0))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coeff::Exact(g) if g.is_zero())
    }

    pub fn to_scalar(&self, field: Field) -> Result<Scalar> {
        match (self, field) {
            (Coeff::Exact(g), _) => Ok(Scalar::from_gaussian(field, g)),
            (Coeff::Unit(theta), Field::BinaryFloat { bits }) => Ok(Scalar::Float(theta.multiplier(bits))),
            (Coeff::Unit(theta), Field::ExactGaussianRational) => {
                let mu = theta.multiplier(64);
                let (re, im) = (mu.real().to_f64(), mu.imag().to_f64());
                let exact_unit = match theta {
                    RotationNumber::Rational { q, .. } => matches!(q.to_u32(), Some(1 | 2 | 4)),
                    _ => false,
                };
                if !exact_unit {
                    return Err(HolonomyError::Config(format!(
                        "e({theta}) is not a Gaussian rational; use a float field"
                    )));
                }
                Ok(Scalar::Exact(GaussianRational::from_ints(re.round() as i64, im.round() as i64)))
            }
        }
    }

    pub fn to_complex(&self, bits: u32) -> Complex {
        match self {
            Coeff::Exact(g) => Scalar::Exact(g.clone()).to_complex(bits),
            Coeff::Unit(theta) => theta.multiplier(bits),
        }
    }

    /// Parses a coefficient literal.
    pub fn parse(s: &str, bits: u32) -> Result<Coeff> {
        let s = s.trim();
        if let Some((name, args)) = split_call(s)? {
            if name == "e" && args.len() == 1 {
                return Ok(Coeff::Unit(RotationNumber::parse(&args[0], bits)?));
            }
            return Err(HolonomyError::Parse(format!("unknown coefficient form `{s}`")));
        }
        let bad = || HolonomyError::Parse(format!("bad complex literal `{s}`"));
        if s.is_empty() {
            return Err(bad());
        }
        // Split into signed terms; a sign right after an exponent marker stays.
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut terms = Vec::new();
        let mut start = 0;
        for i in 1..chars.len() {
            if (chars[i] == '+' || chars[i] == '-') && !matches!(chars[i - 1], 'e' | 'E') {
                terms.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        terms.push(chars[start..].iter().collect::<String>());
        let mut re = Rational::new();
        let mut im = Rational::new();
        for term in terms {
            let (sign, body) = match term.strip_prefix('-') {
                Some(b) => (-1, b.to_string()),
                None => (1, term.trim_start_matches('+').to_string()),
            };
            let (imag, body) = match body.strip_suffix('i') {
                Some(b) => (true, b.trim_end_matches('*').to_string()),
                None => (false, body),
            };
            let v = if imag && body.is_empty() {
                Rational::from(1)
            } else {
                parse_rational(&body).map_err(|_| bad())?
            };
            let v = v * sign;
            if imag {
                im += v;
            } else {
                re += v;
            }
        }
        Ok(Coeff::Exact(GaussianRational::new(re, im)))
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Unit(theta) => write!(f, "e({theta})"),
            Coeff::Exact(g) => match (g.re.cmp0().is_eq(), g.im.cmp0().is_eq()) {
                (_, true) => write!(f, "{}", g.re),
                (true, false) => write!(f, "{}i", g.im),
                (false, false) => {
                    let sign = if g.im.cmp0().is_lt() { "" } else { "+" };
                    write!(f, "{}{sign}{}i", g.re, g.im)
                }
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapExpr {
    Identity,
    Rotation(RotationNumber),
    Mobius([Coeff; 4]),
    /// `λ w + c_2 w^2 + …`, coefficients from `λ` up.
    Polynomial(Vec<Coeff>),
    /// `h ∘ f ∘ h⁻¹`
    Conj(Box<MapExpr>, Box<MapExpr>),
    /// `f_1 ∘ f_2 ∘ …`
    Compose(Vec<MapExpr>),
    Invert(Box<MapExpr>),
    Iterate(Box<MapExpr>, i64),
}

/// Splits `name(arg, arg, …)` at top-level commas. `None` when `s` is not a call.
fn split_call(s: &str) -> Result<Option<(String, Vec<String>)>> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok(None);
    };
    if !s.ends_with(')') {
        return Ok(None);
    }
    let name = s[..open].trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Ok(None);
    }
    let inner = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in inner.chars() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return Err(HolonomyError::Parse(format!("unbalanced brackets in `{s}`")));
        }
        if c == ',' && depth == 0 {
            args.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    if depth != 0 {
        return Err(HolonomyError::Parse(format!("unbalanced brackets in `{s}`")));
    }
    if !cur.trim().is_empty() || !args.is_empty() {
        args.push(cur.trim().to_string());
    }
    Ok(Some((name, args)))
}

impl MapExpr {
    pub fn parse(s: &str, bits: u32) -> Result<MapExpr> {
        let s = s.trim();
        if s == "id" {
            return Ok(MapExpr::Identity);
        }
        let Some((name, args)) = split_call(s)? else {
            return Err(HolonomyError::Parse(format!("unrecognised map `{s}`")));
        };
        let arity = |n: usize| -> Result<()> {
            if args.len() != n {
                return Err(HolonomyError::Parse(format!("{name} takes {n} arguments in `{s}`")));
            }
            Ok(())
        };
        match name.as_str() {
            "rot" => {
                arity(1)?;
                Ok(MapExpr::Rotation(RotationNumber::parse(&args[0], bits)?))
            }
            "mobius" => {
                arity(4)?;
                let c: Vec<Coeff> = args.iter().map(|a| Coeff::parse(a, bits)).collect::<Result<_>>()?;
                if !c[1].is_zero() {
                    return Err(HolonomyError::Parse(format!("`{s}` does not fix 0 (b must be 0)")));
                }
                if c[0].is_zero() || c[3].is_zero() {
                    return Err(HolonomyError::Parse(format!("`{s}` is degenerate at 0")));
                }
                Ok(MapExpr::Mobius([c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone()]))
            }
            "poly" => {
                if args.is_empty() {
                    return Err(HolonomyError::Parse("poly needs a multiplier".into()));
                }
                let mut c: Vec<Coeff> = args.iter().map(|a| Coeff::parse(a, bits)).collect::<Result<_>>()?;
                if c[0].is_zero() {
                    return Err(HolonomyError::Parse(format!("`{s}` has zero multiplier")));
                }
                while c.len() > 1 && c.last().is_some_and(Coeff::is_zero) {
                    c.pop();
                }
                Ok(MapExpr::Polynomial(c))
            }
            "conj" => {
                arity(2)?;
                Ok(MapExpr::Conj(
                    Box::new(MapExpr::parse(&args[0], bits)?),
                    Box::new(MapExpr::parse(&args[1], bits)?),
                ))
            }
            "compose" => {
                if args.len() < 2 {
                    return Err(HolonomyError::Parse("compose needs at least two maps".into()));
                }
                Ok(MapExpr::Compose(
                    args.iter().map(|a| MapExpr::parse(a, bits)).collect::<Result<_>>()?,
                ))
            }
            "invert" => {
                arity(1)?;
                Ok(MapExpr::Invert(Box::new(MapExpr::parse(&args[0], bits)?)))
            }
            "iterate" => {
                arity(2)?;
                let n: i64 = args[1]
                    .parse()
                    .map_err(|_| HolonomyError::Parse(format!("bad iterate count in `{s}`")))?;
                Ok(MapExpr::Iterate(Box::new(MapExpr::parse(&args[0], bits)?), n))
            }
            _ => Err(HolonomyError::Parse(format!("unknown map `{name}`"))),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            MapExpr::Identity => true,
            MapExpr::Rotation(RotationNumber::Rational { p, .. }) => p.cmp0().is_eq(),
            MapExpr::Rotation(_) => false,
            MapExpr::Polynomial(c) => c.len() == 1 && c[0] == Coeff::int(1),
            MapExpr::Conj(f, _) | MapExpr::Invert(f) => f.is_identity(),
            MapExpr::Iterate(f, n) => *n == 0 || f.is_identity(),
            MapExpr::Compose(fs) => fs.iter().all(MapExpr::is_identity),
            MapExpr::Mobius(_) => false,
        }
    }

    /// Literally linear.
    pub fn is_linear(&self) -> bool {
        match self {
            MapExpr::Identity | MapExpr::Rotation(_) => true,
            MapExpr::Polynomial(c) => c.len() == 1,
            MapExpr::Mobius(c) => c[2].is_zero(),
            MapExpr::Invert(f) | MapExpr::Iterate(f, _) => f.is_linear(),
            MapExpr::Compose(fs) => fs.iter().all(MapExpr::is_linear),
            MapExpr::Conj(f, h) => f.is_identity() || (f.is_linear() && h.is_linear()),
        }
    }

    /// Linear, or conjugate to a linear map, by the form of the expression.
    pub fn linear_by_construction(&self) -> bool {
        match self {
            MapExpr::Conj(f, _) | MapExpr::Invert(f) | MapExpr::Iterate(f, _) => f.linear_by_construction(),
            _ => self.is_linear(),
        }
    }

    /// Exact rotation number of the multiplier when the expression determines one.
    pub fn multiplier_tag(&self) -> Option<RotationNumber> {
        let zero = || RotationNumber::rational(0, 1).expect("valid");
        match self {
            MapExpr::Identity => Some(zero()),
            MapExpr::Rotation(t) => Some(t.clone()),
            MapExpr::Polynomial(c) => match &c[0] {
                Coeff::Unit(t) => Some(t.clone()),
                Coeff::Exact(g) => unit_angle(g),
            },
            MapExpr::Mobius(c) => match (&c[0], &c[3]) {
                (Coeff::Exact(a), Coeff::Exact(d)) => a.div(d).and_then(|r| unit_angle(&r)),
                _ => None,
            },
            MapExpr::Conj(f, _) => f.multiplier_tag(),
            MapExpr::Invert(f) => f.multiplier_tag().and_then(|t| scale_tag(&t, -1)),
            MapExpr::Iterate(f, n) => f.multiplier_tag().and_then(|t| scale_tag(&t, *n)),
            MapExpr::Compose(fs) => {
                let tags: Vec<_> = fs.iter().map(MapExpr::multiplier_tag).collect::<Option<_>>()?;
                let mut non_zero = tags.iter().filter(|t| !is_zero_tag(t));
                let first = non_zero.next();
                match (first, non_zero.next()) {
                    (None, _) => Some(zero()),
                    (Some(t), None) => Some(t.clone()),
                    _ => {
                        let mut acc = Rational::new();
                        for t in &tags {
                            match t {
                                RotationNumber::Rational { p, q } => acc += Rational::from((p.clone(), q.clone())),
                                _ => return None,
                            }
                        }
                        let (p, q) = acc.into_numer_denom();
                        RotationNumber::rational(p, q).ok()
                    }
                }
            }
        }
    }

    /// Coefficients `λ, c_2, …` when the expression is literally a polynomial.
    pub fn polynomial_coeffs(&self) -> Option<&[Coeff]> {
        match self {
            MapExpr::Polynomial(c) => Some(c),
            _ => None,
        }
    }

    pub fn to_germ(&self, truncation: usize, field: Field) -> Result<Germ> {
        let mut g = match self {
            MapExpr::Identity => Germ::identity(truncation, field)?,
            MapExpr::Rotation(t) => Germ::linear(Coeff::Unit(t.clone()).to_scalar(field)?, truncation)?,
            MapExpr::Mobius(c) => {
                let s: Vec<Scalar> = c.iter().map(|x| x.to_scalar(field)).collect::<Result<_>>()?;
                Germ::mobius(&s[0], &s[1], &s[2], &s[3], truncation)?
            }
            MapExpr::Polynomial(c) => {
                let s: Vec<Scalar> = c.iter().map(|x| x.to_scalar(field)).collect::<Result<_>>()?;
                Germ::polynomial(&s, truncation)?
            }
            MapExpr::Conj(f, h) => f.to_germ(truncation, field)?.conjugate(&h.to_germ(truncation, field)?)?,
            MapExpr::Compose(fs) => {
                let mut acc = fs[fs.len() - 1].to_germ(truncation, field)?;
                for f in fs[..fs.len() - 1].iter().rev() {
                    acc = f.to_germ(truncation, field)?.compose(&acc)?;
                }
                acc
            }
            MapExpr::Invert(f) => f.to_germ(truncation, field)?.invert()?,
            MapExpr::Iterate(f, n) => f.to_germ(truncation, field)?.iterate(*n)?,
        };
        if let Some(tag) = self.multiplier_tag() {
            if g.multiplier_tag().is_none() {
                g = g.with_tag(tag)?;
            }
        }
        Ok(g)
    }

    /// Point evaluator at the given working precision (ignored for `f64`).
    pub fn compile<T: CNum>(&self, bits: u32) -> Result<CompiledMap<T>> {
        let steps = fold_mobius(self.steps(bits)?);
        Ok(CompiledMap { steps })
    }

    /// Primitive maps in application order.
    fn steps<T: CNum>(&self, bits: u32) -> Result<Vec<Prim<T>>> {
        let c = |x: &Coeff| T::from_complex(&x.to_complex(bits), bits);
        let out = match self {
            MapExpr::Identity => Vec::new(),
            MapExpr::Rotation(t) => vec![Prim::Linear(c(&Coeff::Unit(t.clone())))],
            MapExpr::Mobius(m) => vec![Prim::Mobius([c(&m[0]), c(&m[1]), c(&m[2]), c(&m[3])])],
            MapExpr::Polynomial(p) if p.len() == 1 => vec![Prim::Linear(c(&p[0]))],
            MapExpr::Polynomial(p) => {
                let coeffs: Vec<T> = p.iter().map(c).collect();
                let crit = critical_radius(&p.iter().map(|x| x.to_complex(64)).collect::<Vec<_>>());
                vec![Prim::Poly { coeffs, crit }]
            }
            MapExpr::Conj(f, h) => {
                let h_steps = h.steps::<T>(bits)?;
                let mut v = invert_steps(&h_steps);
                v.extend(f.steps(bits)?);
                v.extend(h_steps);
                v
            }
            MapExpr::Compose(fs) => {
                let mut v = Vec::new();
                for f in fs.iter().rev() {
                    v.extend(f.steps(bits)?);
                }
                v
            }
            MapExpr::Invert(f) => invert_steps(&f.steps(bits)?),
            MapExpr::Iterate(f, n) => {
                let base = f.steps::<T>(bits)?;
                let base = if *n < 0 { invert_steps(&base) } else { base };
                let count = n.unsigned_abs() as usize;
                if base.len().saturating_mul(count) > MAX_COMPILED_STEPS {
                    return Err(HolonomyError::Config(format!(
                        "iterate({n}) expands beyond {MAX_COMPILED_STEPS} evaluation steps"
                    )));
                }
                let mut v = Vec::with_capacity(base.len() * count);
                for _ in 0..count {
                    v.extend(base.iter().cloned());
                }
                v
            }
        };
        if out.len() > MAX_COMPILED_STEPS {
            return Err(HolonomyError::Config("map expands beyond the evaluation step limit".into()));
        }
        Ok(out)
    }
}

fn is_zero_tag(t: &RotationNumber) -> bool {
    matches!(t, RotationNumber::Rational { p, .. } if p.cmp0().is_eq())
}

fn scale_tag(t: &RotationNumber, n: i64) -> Option<RotationNumber> {
    match t {
        RotationNumber::Rational { p, q } => RotationNumber::rational(p.clone() * n, q.clone()).ok(),
        _ if n == 1 => Some(t.clone()),
        _ if is_zero_tag(t) => Some(t.clone()),
        _ => None,
    }
}

/// Angle of an exact Gaussian unit (`±1`, `±i`).
fn unit_angle(g: &GaussianRational) -> Option<RotationNumber> {
    let pairs = [((1, 0), (0, 1)), ((0, 1), (1, 4)), ((-1, 0), (1, 2)), ((0, -1), (3, 4))];
    pairs.iter().find_map(|&((re, im), (p, q))| {
        (*g == GaussianRational::from_ints(re, im)).then(|| RotationNumber::rational(p, q).expect("valid"))
    })
}

impl fmt::Display for MapExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, items: &[String]| write!(f, "{name}({})", items.join(","));
        match self {
            MapExpr::Identity => f.write_str("id"),
            MapExpr::Rotation(t) => write!(f, "rot({t})"),
            MapExpr::Mobius(c) => list(f, "mobius", &c.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
            MapExpr::Polynomial(c) => list(f, "poly", &c.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
            MapExpr::Conj(a, b) => write!(f, "conj({a},{b})"),
            MapExpr::Compose(fs) => list(f, "compose", &fs.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
            MapExpr::Invert(a) => write!(f, "invert({a})"),
            MapExpr::Iterate(a, n) => write!(f, "iterate({a},{n})"),
        }
    }
}

#[derive(Clone, Debug)]
enum Prim<T> {
    Linear(T),
    Mobius([T; 4]),
    /// `Σ coeffs[k] z^{k+1}`; `crit` is the distance from 0 to the nearest critical point.
    Poly { coeffs: Vec<T>, crit: f64 },
    /// Branch of the inverse fixing 0, defined where the preimage stays inside `crit`.
    PolyInverse { coeffs: Vec<T>, crit: f64 },
}

/// Merges runs of linear and Möbius steps into a single Möbius step.
fn fold_mobius<T: CNum>(steps: Vec<Prim<T>>) -> Vec<Prim<T>> {
    let mut out: Vec<Prim<T>> = Vec::with_capacity(steps.len());
    for p in steps {
        let m = match &p {
            Prim::Linear(l) => Some([l.clone(), l.zero_like(), l.zero_like(), l.one_like()]),
            Prim::Mobius(m) => Some(m.clone()),
            _ => None,
        };
        let prev = match out.last() {
            Some(Prim::Linear(l)) => Some([l.clone(), l.zero_like(), l.zero_like(), l.one_like()]),
            Some(Prim::Mobius(m)) => Some(m.clone()),
            _ => None,
        };
        match (m, prev) {
            (Some([a, b, c, d]), Some([e, f, g, h])) => {
                // apply [e f; g h] first, then [a b; c d]
                let mut prod = [
                    a.mul(&e).add(&b.mul(&g)),
                    a.mul(&f).add(&b.mul(&h)),
                    c.mul(&e).add(&d.mul(&g)),
                    c.mul(&f).add(&d.mul(&h)),
                ];
                let scale = prod.iter().map(|x| x.abs()).fold(0.0, f64::max);
                if scale > 0.0 && scale.is_finite() {
                    let s = a.one_like().div(&T::from_f64(scale, 0.0, a.precision()));
                    for x in prod.iter_mut() {
                        *x = x.mul(&s);
                    }
                }
                *out.last_mut().expect("nonempty") = if prod[1].is_zero() && prod[2].is_zero() {
                    Prim::Linear(prod[0].div(&prod[3]))
                } else {
                    Prim::Mobius(prod)
                };
            }
            _ => out.push(p),
        }
    }
    out
}

fn invert_steps<T: CNum>(steps: &[Prim<T>]) -> Vec<Prim<T>> {
    steps
        .iter()
        .rev()
        .map(|p| match p {
            Prim::Linear(l) => Prim::Linear(l.one_like().div(l)),
            Prim::Mobius([a, b, c, d]) => {
                let zero = a.zero_like();
                Prim::Mobius([d.clone(), zero.sub(b), zero.sub(c), a.clone()])
            }
            Prim::Poly { coeffs, crit } => Prim::PolyInverse {
                coeffs: coeffs.clone(),
                crit: *crit,
            },
            Prim::PolyInverse { coeffs, crit } => Prim::Poly {
                coeffs: coeffs.clone(),
                crit: *crit,
            },
        })
        .collect()
}

/// `(P(z), P'(z))` for `P = Σ coeffs[k] z^{k+1}`.
fn poly_eval<T: CNum>(coeffs: &[T], z: &T) -> (T, T) {
    let mut p = z.zero_like();
    let mut dp = z.zero_like();
    for c in coeffs.iter().rev() {
        dp = dp.mul(z).add(&p);
        p = p.mul(z).add(c);
    }
    (p.mul(z), dp.mul(z).add(&p))
}

/// `min |c|` over critical points `P'(c) = 0` (Durand–Kerner on `P'`).
fn critical_radius(coeffs: &[Complex]) -> f64 {
    // P'(z) = Σ (k+1) a_k z^k
    let d: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| Complex64::new(a.real().to_f64(), a.imag().to_f64()) * (k + 1) as f64)
        .collect();
    let deg = d.len() - 1;
    if deg == 0 {
        return f64::INFINITY;
    }
    let lead = d[deg];
    let monic: Vec<Complex64> = d.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..deg {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots.iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min)
}

/// A compiled map: forward and inverse point evaluation with derivatives.
#[derive(Clone, Debug)]
pub struct CompiledMap<T> {
    steps: Vec<Prim<T>>,
}

impl<T: CNum> CompiledMap<T> {
    pub fn inverse(&self) -> CompiledMap<T> {
        CompiledMap {
            steps: invert_steps(&self.steps),
        }
    }

    /// `None` at a pole, or where an inverse polynomial branch is undefined.
    pub fn eval(&self, z: &T) -> Option<T> {
        let mut w = z.clone();
        for p in &self.steps {
            w = apply(p, &w)?;
        }
        w.is_finite().then_some(w)
    }

    /// Value and derivative by the chain rule.
    pub fn eval_with_derivative(&self, z: &T) -> Option<(T, T)> {
        let mut w = z.clone();
        let mut d = z.one_like();
        for p in &self.steps {
            let (nw, dp) = apply_d(p, &w)?;
            d = d.mul(&dp);
            w = nw;
        }
        (w.is_finite() && d.is_finite()).then_some((w, d))
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// Matrix `[a, b, c, d]` when the map is a single Möbius (or linear) step.
    pub fn as_mobius(&self) -> Option<[T; 4]> {
        match self.steps.as_slice() {
            [Prim::Linear(l)] => Some([l.clone(), l.zero_like(), l.zero_like(), l.one_like()]),
            [Prim::Mobius(m)] => Some(m.clone()),
            _ => None,
        }
    }
}

fn apply<T: CNum>(p: &Prim<T>, z: &T) -> Option<T> {
    match p {
        Prim::Linear(l) => Some(l.mul(z)),
        Prim::Mobius([a, b, c, d]) => {
            let den = c.mul(z).add(d);
            if den.is_zero() {
                return None;
            }
            Some(a.mul(z).add(b).div(&den))
        }
        Prim::Poly { coeffs, .. } => Some(poly_eval(coeffs, z).0),
        Prim::PolyInverse { coeffs, crit } => poly_inverse(coeffs, *crit, z).map(|(w, _)| w),
    }
}

fn apply_d<T: CNum>(p: &Prim<T>, z: &T) -> Option<(T, T)> {
    match p {
        Prim::Linear(l) => Some((l.mul(z), l.clone())),
        Prim::Mobius([a, b, c, d]) => {
            let den = c.mul(z).add(d);
            if den.is_zero() {
                return None;
            }
            let det = a.mul(d).sub(&b.mul(c));
            Some((a.mul(z).add(b).div(&den), det.div(&den.mul(&den))))
        }
        Prim::Poly { coeffs, .. } => Some(poly_eval(coeffs, z)),
        Prim::PolyInverse { coeffs, crit } => {
            let (w, dp) = poly_inverse(coeffs, *crit, z)?;
            Some((w, dp.one_like().div(&dp)))
        }
    }
}

/// Solves `P(w) = z` by Newton from `z/λ`; returns `(w, P'(w))`.
fn poly_inverse<T: CNum>(coeffs: &[T], crit: f64, z: &T) -> Option<(T, T)> {
    let mut w = z.div(&coeffs[0]);
    let eps = 2f64.powi(4 - z.precision() as i32);
    for _ in 0..200 {
        let (p, dp) = poly_eval(coeffs, &w);
        if dp.abs() == 0.0 {
            return None;
        }
        let step = p.sub(z).div(&dp);
        w = w.sub(&step);
        if !w.is_finite() || w.abs() >= crit {
            return None;
        }
        if step.abs() <= eps * w.abs().max(f64::MIN_POSITIVE) {
            let (_, dp) = poly_eval(coeffs, &w);
            return Some((w, dp));
        }
    }
    None
}
