//! Coefficient fields for truncated power series.
//!
//! Two backends share one runtime type: exact Gaussian rationals, used as a
//! test oracle, and binary floating-point complex numbers at a configurable
//! precision.

use std::fmt;

use num_complex::Complex64;
use rug::ops::Pow;
use rug::{Assign, Complex, Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{HolonomyError, Result};

/// Smallest precision accepted for the floating backend.
pub const MIN_FLOAT_BITS: u32 = 53;
/// Default precision for germ arithmetic.
pub const DEFAULT_FLOAT_BITS: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    ExactGaussianRational,
    BinaryFloat { bits: u32 },
}

impl Field {
    pub fn float(bits: u32) -> Result<Self> {
        if bits < MIN_FLOAT_BITS {
            return Err(HolonomyError::Config(format!(
                "float precision must be at least {MIN_FLOAT_BITS} bits, got {bits}"
            )));
        }
        Ok(Field::BinaryFloat { bits })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Field::ExactGaussianRational)
    }

    /// Working precision used when a float view of this field is needed.
    pub fn bits(&self) -> u32 {
        match self {
            Field::ExactGaussianRational => DEFAULT_FLOAT_BITS,
            Field::BinaryFloat { bits } => *bits,
        }
    }

    /// Serialized name: `exact` or `float<bits>`.
    pub fn name(&self) -> String {
        match self {
            Field::ExactGaussianRational => "exact".to_string(),
            Field::BinaryFloat { bits } => format!("float{bits}"),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "exact" {
            return Ok(Field::ExactGaussianRational);
        }
        if let Some(bits) = name.strip_prefix("float") {
            let bits: u32 = bits
                .parse()
                .map_err(|_| HolonomyError::Parse(format!("bad field name `{name}`")))?;
            return Field::float(bits);
        }
        Err(HolonomyError::Parse(format!("unknown coefficient field `{name}`")))
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Field::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `re + i·im` with rational parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussianRational {
    pub re: Rational,
    pub im: Rational,
}

impl GaussianRational {
    pub fn new(re: Rational, im: Rational) -> Self {
        GaussianRational { re, im }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        GaussianRational::new(Rational::from(re), Rational::from(im))
    }

    pub fn is_zero(&self) -> bool {
        self.re.cmp0().is_eq() && self.im.cmp0().is_eq()
    }

    pub fn norm_sqr(&self) -> Rational {
        Rational::from(self.re.square_ref()) + Rational::from(self.im.square_ref())
    }

    pub fn add(&self, o: &Self) -> Self {
        GaussianRational::new(
            Rational::from(&self.re + &o.re),
            Rational::from(&self.im + &o.im),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        GaussianRational::new(
            Rational::from(&self.re - &o.re),
            Rational::from(&self.im - &o.im),
        )
    }

    pub fn mul(&self, o: &Self) -> Self {
        let re = Rational::from(&self.re * &o.re) - Rational::from(&self.im * &o.im);
        let im = Rational::from(&self.re * &o.im) + Rational::from(&self.im * &o.re);
        GaussianRational::new(re, im)
    }

    /// `self += a * b` in place, skipping zero parts.
    pub fn add_mul_assign(&mut self, a: &Self, b: &Self) {
        let mut t = Rational::new();
        for (x, y, re_part, negate) in [
            (&a.re, &b.re, true, false),
            (&a.im, &b.im, true, true),
            (&a.re, &b.im, false, false),
            (&a.im, &b.re, false, false),
        ] {
            if x.cmp0().is_eq() || y.cmp0().is_eq() {
                continue;
            }
            t.assign(x * y);
            let acc = if re_part { &mut self.re } else { &mut self.im };
            if negate {
                *acc -= &t;
            } else {
                *acc += &t;
            }
        }
    }

    pub fn div(&self, o: &Self) -> Option<Self> {
        if o.is_zero() {
            return None;
        }
        let den = o.norm_sqr();
        let re = Rational::from(&self.re * &o.re) + Rational::from(&self.im * &o.im);
        let im = Rational::from(&self.im * &o.re) - Rational::from(&self.re * &o.im);
        Some(GaussianRational::new(re / &den, im / den))
    }

    pub fn neg(&self) -> Self {
        GaussianRational::new(Rational::from(-&self.re), Rational::from(-&self.im))
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// One power-series coefficient in either backend.
///
/// Arithmetic between different backends is a programming error; germ
/// operations check fields before touching coefficients.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Exact(GaussianRational),
    Float(Complex),
}

impl Scalar {
    pub fn zero(field: Field) -> Self {
        Scalar::from_i64(field, 0)
    }

    pub fn one(field: Field) -> Self {
        Scalar::from_i64(field, 1)
    }

    pub fn from_i64(field: Field, v: i64) -> Self {
        match field {
            Field::ExactGaussianRational => Scalar::Exact(GaussianRational::from_ints(v, 0)),
            Field::BinaryFloat { bits } => Scalar::Float(Complex::with_val(bits, (v, 0))),
        }
    }

    /// Rounds a Gaussian rational into the field.
    pub fn from_gaussian(field: Field, g: &GaussianRational) -> Self {
        match field {
            Field::ExactGaussianRational => Scalar::Exact(g.clone()),
            Field::BinaryFloat { bits } => Scalar::Float(Complex::with_val(
                bits,
                (Float::with_val(bits, &g.re), Float::with_val(bits, &g.im)),
            )),
        }
    }

    /// Float value; fails in exact mode.
    pub fn from_complex(field: Field, z: &Complex) -> Result<Self> {
        match field {
            Field::ExactGaussianRational => {
                let re = z.real().to_rational();
                let im = z.imag().to_rational();
                match (re, im) {
                    (Some(re), Some(im)) => Ok(Scalar::Exact(GaussianRational::new(re, im))),
                    _ => Err(HolonomyError::Config(
                        "non-finite value cannot enter an exact field".into(),
                    )),
                }
            }
            Field::BinaryFloat { bits } => Ok(Scalar::Float(Complex::with_val(bits, z))),
        }
    }

    pub fn field(&self) -> Field {
        match self {
            Scalar::Exact(_) => Field::ExactGaussianRational,
            Scalar::Float(c) => Field::BinaryFloat { bits: c.prec().0 },
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.add(b)),
            (Scalar::Float(a), Scalar::Float(b)) => {
                Scalar::Float(Complex::with_val(a.prec(), a + b))
            }
            _ => panic!("mixed coefficient fields"),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.sub(b)),
            (Scalar::Float(a), Scalar::Float(b)) => {
                Scalar::Float(Complex::with_val(a.prec(), a - b))
            }
            _ => panic!("mixed coefficient fields"),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.mul(b)),
            (Scalar::Float(a), Scalar::Float(b)) => {
                Scalar::Float(Complex::with_val(a.prec(), a * b))
            }
            _ => panic!("mixed coefficient fields"),
        }
    }

    /// `self += a * b`
    pub fn add_mul_assign(&mut self, a: &Self, b: &Self) {
        match (self, a, b) {
            (Scalar::Float(acc), Scalar::Float(x), Scalar::Float(y)) => {
                *acc += x * y;
            }
            (Scalar::Exact(acc), Scalar::Exact(x), Scalar::Exact(y)) => acc.add_mul_assign(x, y),
            (acc, a, b) => {
                let sum = acc.add(&a.mul(b));
                *acc = sum;
            }
        }
    }

    pub fn div(&self, o: &Self) -> Option<Self> {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a.div(b).map(Scalar::Exact),
            (Scalar::Float(a), Scalar::Float(b)) => {
                if b.is_zero() {
                    None
                } else {
                    Some(Scalar::Float(Complex::with_val(a.prec(), a / b)))
                }
            }
            _ => panic!("mixed coefficient fields"),
        }
    }

    pub fn neg(&self) -> Self {
        match self {
            Scalar::Exact(a) => Scalar::Exact(a.neg()),
            Scalar::Float(a) => Scalar::Float(Complex::with_val(a.prec(), -a)),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        match self {
            Scalar::Exact(_) => {
                let mut acc = Scalar::one(self.field());
                let mut base = self.clone();
                let mut e = n;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = acc.mul(&base);
                    }
                    base = base.mul(&base);
                    e >>= 1;
                }
                acc
            }
            Scalar::Float(a) => Scalar::Float(a.clone().pow(n)),
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        match self {
            Scalar::Exact(a) => a.is_zero(),
            Scalar::Float(a) => a.is_zero(),
        }
    }

    /// Exact zero test in exact mode; `|z| <= tol` in float mode.
    pub fn is_negligible(&self, tol: f64) -> bool {
        match self {
            Scalar::Exact(a) => a.is_zero(),
            Scalar::Float(_) => self.abs_f64() <= tol,
        }
    }

    pub fn abs_f64(&self) -> f64 {
        match self {
            Scalar::Exact(a) => a.to_c64().norm(),
            Scalar::Float(a) => Float::with_val(a.prec().0, a.abs_ref()).to_f64(),
        }
    }

    pub fn to_c64(&self) -> Complex64 {
        match self {
            Scalar::Exact(a) => a.to_c64(),
            Scalar::Float(a) => Complex64::new(a.real().to_f64(), a.imag().to_f64()),
        }
    }

    /// Value at the requested working precision.
    pub fn to_complex(&self, bits: u32) -> Complex {
        match self {
            Scalar::Exact(a) => Complex::with_val(
                bits,
                (Float::with_val(bits, &a.re), Float::with_val(bits, &a.im)),
            ),
            Scalar::Float(a) => Complex::with_val(bits, a),
        }
    }

    /// `[re, im]` as decimal strings. Exact values print as `p/q`.
    pub fn to_strings(&self) -> [String; 2] {
        match self {
            Scalar::Exact(a) => [a.re.to_string(), a.im.to_string()],
            Scalar::Float(a) => [float_to_string(a.real()), float_to_string(a.imag())],
        }
    }

    /// Parses `[re, im]` parts in either `p/q` or decimal notation.
    pub fn parse_parts(field: Field, re: &str, im: &str) -> Result<Self> {
        match field {
            Field::ExactGaussianRational => Ok(Scalar::Exact(GaussianRational::new(
                parse_rational(re)?,
                parse_rational(im)?,
            ))),
            Field::BinaryFloat { bits } => {
                let re = parse_float(re, bits)?;
                let im = parse_float(im, bits)?;
                Ok(Scalar::Float(Complex::with_val(bits, (re, im))))
            }
        }
    }
}

/// Decimal rendering with enough digits to round-trip the precision.
pub fn float_to_string(f: &Float) -> String {
    if f.is_zero() {
        return "0".to_string();
    }
    let digits = (f.prec() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1;
    f.to_string_radix(10, Some(digits))
}

/// Accepts `p/q`, integers and finite decimals (`-0.25`, `1e-3`) exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Ok(r) = s.parse::<Rational>() {
        return Ok(r);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (
            &s[..pos],
            s[pos + 1..]
                .parse::<i32>()
                .map_err(|_| HolonomyError::Parse(format!("bad exponent in `{s}`")))?,
        ),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(HolonomyError::Parse(format!("not a number: `{s}`")));
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: rug::Integer = digits
        .parse()
        .map_err(|_| HolonomyError::Parse(format!("not a number: `{s}`")))?;
    let scale = exponent - frac_part.len() as i32;
    let ten = rug::Integer::from(10);
    let mut r = Rational::from(numer);
    if scale >= 0 {
        r *= ten.pow(scale as u32);
    } else {
        r /= ten.pow((-scale) as u32);
    }
    if neg {
        r = -r;
    }
    Ok(r)
}

pub fn parse_float(s: &str, bits: u32) -> Result<Float> {
    let s = s.trim();
    if s.contains('/') {
        return Ok(Float::with_val(bits, &parse_rational(s)?));
    }
    Float::parse(s)
        .map(|p| Float::with_val(bits, p))
        .map_err(|_| HolonomyError::Parse(format!("not a number: `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_division_inverts_multiplication() {
        let f = Field::ExactGaussianRational;
        let a = Scalar::parse_parts(f, "3/2", "-1").unwrap();
        let b = Scalar::parse_parts(f, "2", "5/3").unwrap();
        let back = a.mul(&b).div(&b).unwrap();
        assert_eq!(back, a);
        assert!(a.div(&Scalar::zero(f)).is_none());
    }

    #[test]
    fn decimal_literals_parse_exactly() {
        assert_eq!(parse_rational("0.3333").unwrap(), Rational::from((3333, 10000)));
        assert_eq!(parse_rational("-1e-3").unwrap(), Rational::from((-1, 1000)));
        assert_eq!(parse_rational("7/21").unwrap(), Rational::from((1, 3)));
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn field_names_round_trip() {
        for f in [Field::ExactGaussianRational, Field::BinaryFloat { bits: 256 }] {
            assert_eq!(Field::parse(&f.name()).unwrap(), f);
        }
        assert!(Field::parse("float12").is_err());
    }

    #[test]
    fn float_pow_matches_repeated_product() {
        let f = Field::BinaryFloat { bits: 128 };
        let z = Scalar::parse_parts(f, "0.6", "0.8").unwrap();
        let cube = z.mul(&z).mul(&z);
        assert!(cube.sub(&z.pow(3)).abs_f64() < 1e-35);
    }
}
