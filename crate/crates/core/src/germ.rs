//! Truncated power series `f(w) = a_1 w + a_2 w^2 + … + a_T w^T` for germs
//! of holomorphic diffeomorphisms fixing the origin.

use log::debug;
use rug::Complex;
use serde::{Deserialize, Serialize};

use crate::arithmetic::RotationNumber;
use crate::error::{HolonomyError, Result};
use crate::scalar::{Field, Scalar};

pub const DEFAULT_TRUNCATION: usize = 64;
pub const MIN_TRUNCATION: usize = 8;
pub const MAX_TRUNCATION: usize = 512;
/// Largest `|n|` accepted by [`Germ::iterate`].
pub const MAX_ITERATE: i64 = 1 << 40;

/// Coefficient-zero threshold: exact zero in exact mode, `10^(-30 · bits/256)` for floats.
pub fn zero_tolerance(field: Field) -> f64 {
    match field {
        Field::ExactGaussianRational => 0.0,
        Field::BinaryFloat { bits } => 10f64.powf(-30.0 * bits as f64 / 256.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Germ {
    /// `coeffs[k]` is the coefficient of `w^(k+1)`.
    coeffs: Vec<Scalar>,
    field: Field,
    multiplier_tag: Option<RotationNumber>,
}

/// Series with a constant term, index = power, used internally.
type Series = Vec<Scalar>;

/// `a · b` keeping powers `0..=max_deg`.
fn mul_trunc(a: &[Scalar], b: &[Scalar], max_deg: usize, field: Field) -> Series {
    let mut out = vec![Scalar::zero(field); max_deg + 1];
    for (i, x) in a.iter().enumerate().take(max_deg + 1) {
        if x.is_exact_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(max_deg + 1 - i) {
            if y.is_exact_zero() {
                continue;
            }
            out[i + j].add_mul_assign(x, y);
        }
    }
    out
}

impl Germ {
    /// Builds a germ from `a_1..a_T`.
    pub fn new(coeffs: Vec<Scalar>) -> Result<Self> {
        let field = coeffs
            .first()
            .map(Scalar::field)
            .ok_or_else(|| HolonomyError::Config("a germ needs at least one coefficient".into()))?;
        check_truncation(coeffs.len())?;
        if coeffs.iter().any(|c| c.field() != field) {
            return Err(HolonomyError::Config("coefficients from different fields".into()));
        }
        if coeffs[0].is_exact_zero() {
            return Err(HolonomyError::NotDiffeomorphism);
        }
        Ok(Germ {
            coeffs,
            field,
            multiplier_tag: None,
        })
    }

    pub fn identity(truncation: usize, field: Field) -> Result<Self> {
        Germ::linear(Scalar::one(field), truncation)
    }

    pub fn linear(lambda: Scalar, truncation: usize) -> Result<Self> {
        let field = lambda.field();
        let mut coeffs = vec![Scalar::zero(field); truncation];
        if let Some(c) = coeffs.first_mut() {
            *c = lambda;
        }
        Germ::new(coeffs)
    }

    /// `λ w + c_2 w^2 + … + c_d w^d`.
    pub fn polynomial(coeffs: &[Scalar], truncation: usize) -> Result<Self> {
        let field = coeffs
            .first()
            .map(Scalar::field)
            .ok_or_else(|| HolonomyError::Config("empty polynomial".into()))?;
        if coeffs.len() > truncation {
            return Err(HolonomyError::Config(format!(
                "polynomial degree {} exceeds truncation order {truncation}",
                coeffs.len()
            )));
        }
        let mut all = coeffs.to_vec();
        all.resize(truncation, Scalar::zero(field));
        Germ::new(all)
    }

    /// Expansion of `(a w + b)/(c w + d)` at 0; requires `b = 0`.
    pub fn mobius(a: &Scalar, b: &Scalar, c: &Scalar, d: &Scalar, truncation: usize) -> Result<Self> {
        if !b.is_exact_zero() {
            return Err(HolonomyError::Config("Möbius map must fix 0 (b = 0)".into()));
        }
        let lead = a.div(d).ok_or(HolonomyError::NotDiffeomorphism)?;
        let ratio = c.div(d).expect("d checked nonzero").neg();
        let mut coeffs = Vec::with_capacity(truncation);
        let mut term = lead;
        for _ in 0..truncation {
            let next = term.mul(&ratio);
            coeffs.push(term);
            term = next;
        }
        Germ::new(coeffs)
    }

    /// Attaches an exact rotation number for the multiplier after checking it.
    pub fn with_tag(mut self, theta: RotationNumber) -> Result<Self> {
        let ok = match &self.coeffs[0] {
            Scalar::Exact(_) => {
                let bits = 128;
                let mu = theta.multiplier(bits);
                let diff = Complex::with_val(bits, &mu - self.coeffs[0].to_complex(bits));
                diff.abs().real().is_zero()
            }
            Scalar::Float(a1) => {
                let bits = a1.prec().0;
                let mu = theta.multiplier(bits);
                let diff = Complex::with_val(bits, &mu - a1).abs().real().to_f64();
                diff <= 2f64.powi(8 - bits as i32)
            }
        };
        if !ok {
            return Err(HolonomyError::Config(format!(
                "multiplier does not match the rotation number {theta}"
            )));
        }
        self.multiplier_tag = Some(theta);
        Ok(self)
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    /// Coefficient of `w^n`, `1 <= n <= T`.
    pub fn coeff(&self, n: usize) -> &Scalar {
        &self.coeffs[n - 1]
    }

    pub fn multiplier(&self) -> &Scalar {
        &self.coeffs[0]
    }

    pub fn multiplier_tag(&self) -> Option<&RotationNumber> {
        self.multiplier_tag.as_ref()
    }

    /// Same coefficients in another field (rounding when targeting floats).
    pub fn to_field(&self, field: Field) -> Result<Self> {
        if field == self.field {
            return Ok(self.clone());
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| match c {
                Scalar::Exact(g) => Ok(Scalar::from_gaussian(field, g)),
                Scalar::Float(z) => Scalar::from_complex(field, z),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Germ::new(coeffs)?;
        g.multiplier_tag = self.multiplier_tag.clone();
        Ok(g)
    }

    /// Shorter or zero-padded truncation.
    pub fn retruncate(&self, truncation: usize) -> Result<Self> {
        check_truncation(truncation)?;
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(truncation, Scalar::zero(self.field));
        let mut g = Germ::new(coeffs)?;
        g.multiplier_tag = self.multiplier_tag.clone();
        Ok(g)
    }

    fn check_compatible(&self, other: &Germ) -> Result<()> {
        if self.truncation() != other.truncation() {
            return Err(HolonomyError::Config(format!(
                "truncation orders differ: {} vs {}",
                self.truncation(),
                other.truncation()
            )));
        }
        if self.field != other.field {
            return Err(HolonomyError::Config(format!(
                "coefficient fields differ: {} vs {}",
                self.field, other.field
            )));
        }
        Ok(())
    }

    fn as_series(&self) -> Series {
        let mut s = Vec::with_capacity(self.truncation() + 1);
        s.push(Scalar::zero(self.field));
        s.extend(self.coeffs.iter().cloned());
        s
    }

    fn from_series(series: Series) -> Result<Self> {
        Germ::new(series.into_iter().skip(1).collect())
    }

    /// `self ∘ inner`, Horner substitution.
    pub fn compose(&self, inner: &Germ) -> Result<Germ> {
        self.check_compatible(inner)?;
        let t = self.truncation();
        let field = self.field;
        let g = inner.as_series();
        // r_k = a_k + g · r_{k+1}; only powers up to T − k matter for r_k.
        let mut r: Series = vec![self.coeffs[t - 1].clone()];
        for k in (1..t).rev() {
            let mut next = mul_trunc(&g, &r, t - k, field);
            next[0] = next[0].add(&self.coeffs[k - 1]);
            r = next;
        }
        let out = mul_trunc(&g, &r, t, field);
        Germ::from_series(out)
    }

    /// Powers `self^k` for `k = 0..=T`, each to order `T`.
    fn power_table(&self) -> Vec<Series> {
        let t = self.truncation();
        let f = self.as_series();
        let mut table = Vec::with_capacity(t + 1);
        let mut one = vec![Scalar::zero(self.field); t + 1];
        one[0] = Scalar::one(self.field);
        table.push(one);
        for k in 1..=t {
            let next = mul_trunc(&table[k - 1], &f, t, self.field);
            table.push(next);
        }
        table
    }

    /// Compositional inverse by back-substitution in `Σ b_k f^k = w`.
    pub fn invert(&self) -> Result<Germ> {
        let t = self.truncation();
        let powers = self.power_table();
        let mut b: Vec<Scalar> = Vec::with_capacity(t);
        for n in 1..=t {
            let mut s = if n == 1 {
                Scalar::one(self.field)
            } else {
                Scalar::zero(self.field)
            };
            for (k, bk) in b.iter().enumerate() {
                let p = &powers[k + 1][n];
                if !p.is_exact_zero() {
                    s = s.sub(&bk.mul(p));
                }
            }
            let bn = s.div(&powers[n][n]).ok_or(HolonomyError::NotDiffeomorphism)?;
            b.push(bn);
        }
        Germ::new(b)
    }

    /// `self^n`; `n < 0` iterates the inverse.
    pub fn iterate(&self, n: i64) -> Result<Germ> {
        if n.abs() > MAX_ITERATE {
            return Err(HolonomyError::Config(format!("iterate count {n} exceeds {MAX_ITERATE}")));
        }
        let base = if n < 0 { self.invert()? } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = Germ::identity(self.truncation(), self.field)?;
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&sq)?;
            }
            e >>= 1;
            if e > 0 {
                sq = sq.compose(&sq)?;
            }
        }
        Ok(acc)
    }

    /// `h ∘ self ∘ h⁻¹`; keeps the multiplier tag.
    pub fn conjugate(&self, h: &Germ) -> Result<Germ> {
        let mut out = h.compose(&self.compose(&h.invert()?)?)?;
        out.multiplier_tag = self.multiplier_tag.clone();
        Ok(out)
    }

    /// Largest coefficient modulus of `self − other`.
    pub fn distance(&self, other: &Germ) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.sub(b).abs_f64())
            .fold(0.0, f64::max))
    }

    /// `max_n |[w^n](f∘g − g∘f)|`.
    pub fn commutator_defect(&self, other: &Germ) -> Result<f64> {
        self.compose(other)?.distance(&other.compose(self)?)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.coeffs[0].sub(&Scalar::one(self.field)).is_negligible(tol)
            && self.coeffs[1..].iter().all(|c| c.is_negligible(tol))
    }

    /// Smallest `ν >= 2` with a coefficient above `tol`.
    pub fn first_nonlinear_order(&self, tol: f64) -> Option<usize> {
        self.coeffs[1..]
            .iter()
            .position(|c| !c.is_negligible(tol))
            .map(|i| i + 2)
    }

    pub fn is_finite_order(&self, max_k: u64, tol: f64) -> Result<FiniteOrder> {
        if max_k < 1 {
            return Err(HolonomyError::Config("max_k must be >= 1".into()));
        }
        let mut power = self.clone();
        for k in 1..=max_k {
            if power.is_identity(tol) {
                return Ok(FiniteOrder::FiniteOrder { k });
            }
            if k < max_k {
                power = power.compose(self)?;
            }
        }
        Ok(FiniteOrder::NotFiniteOrderUpTo { max_k })
    }

    /// Tangent-to-identity `h` with `h ∘ f = λ h` through order `T`.
    pub fn formal_linearize(&self) -> Result<Linearization> {
        let t = self.truncation();
        let field = self.field;
        let tol = zero_tolerance(field);
        let lambda = self.coeffs[0].clone();
        let powers = self.power_table();
        let mut h: Vec<Scalar> = vec![Scalar::one(field)];
        let mut min_divisor = f64::INFINITY;
        let mut min_divisor_order = 0;
        let mut free_orders = Vec::new();
        for n in 2..=t {
            let mut s = Scalar::zero(field);
            for (k, hk) in h.iter().enumerate() {
                let p = &powers[k + 1][n];
                if !p.is_exact_zero() {
                    s.add_mul_assign(hk, p);
                }
            }
            let divisor = lambda.sub(&powers[n][n]);
            let dabs = divisor.abs_f64();
            if dabs < min_divisor {
                min_divisor = dabs;
                min_divisor_order = n;
            }
            if divisor.is_negligible(tol) {
                if s.is_negligible(tol) {
                    debug!("resonant order {n} with vanishing obstruction; h_{n} set to 0");
                    free_orders.push(n);
                    h.push(Scalar::zero(field));
                    continue;
                }
                return Err(HolonomyError::ResonanceObstruction { order: n });
            }
            h.push(s.div(&divisor).expect("divisor checked nonzero"));
        }
        let max_coeff = h.iter().map(Scalar::abs_f64).fold(0.0, f64::max);
        let h = Germ::new(h)?;
        Ok(Linearization {
            h,
            min_divisor,
            min_divisor_order,
            max_coeff,
            free_orders,
        })
    }

    /// `max |[w^n](h ∘ f − λ h)|`, how far `h` is from linearizing `self`.
    pub fn linearization_defect(&self, h: &Germ) -> Result<f64> {
        let lhs = h.compose(self)?;
        let lambda = &self.coeffs[0];
        Ok(lhs
            .coeffs
            .iter()
            .zip(&h.coeffs)
            .map(|(a, b)| a.sub(&lambda.mul(b)).abs_f64())
            .fold(0.0, f64::max))
    }

    /// Evaluates the truncated series at `z` with `bits` of working precision.
    pub fn eval(&self, z: &Complex, bits: u32) -> Complex {
        let mut acc = Complex::new(bits);
        for c in self.coeffs.iter().rev() {
            acc *= z;
            acc += c.to_complex(bits);
        }
        acc * z
    }

    pub fn eval_c64(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c.to_c64();
        }
        acc * z
    }

    pub fn to_json(&self) -> GermJson {
        GermJson {
            truncation: self.truncation(),
            coeffs: self.coeffs.iter().map(Scalar::to_strings).collect(),
            field: self.field,
            multiplier_tag: self.multiplier_tag.clone(),
        }
    }

    pub fn from_json(j: &GermJson) -> Result<Self> {
        if j.coeffs.len() != j.truncation {
            return Err(HolonomyError::Parse(format!(
                "expected {} coefficients, found {}",
                j.truncation,
                j.coeffs.len()
            )));
        }
        let coeffs = j
            .coeffs
            .iter()
            .map(|[re, im]| Scalar::parse_parts(j.field, re, im))
            .collect::<Result<Vec<_>>>()?;
        let g = Germ::new(coeffs)?;
        match &j.multiplier_tag {
            Some(t) => g.with_tag(t.clone()),
            None => Ok(g),
        }
    }
}

fn check_truncation(t: usize) -> Result<()> {
    if !(1..=MAX_TRUNCATION).contains(&t) {
        return Err(HolonomyError::Config(format!(
            "truncation order {t} outside 1..={MAX_TRUNCATION}"
        )));
    }
    Ok(())
}

/// Checks a user-facing truncation setting.
pub fn validate_truncation(t: usize) -> Result<usize> {
    if !(MIN_TRUNCATION..=MAX_TRUNCATION).contains(&t) {
        return Err(HolonomyError::Config(format!(
            "truncation order {t} outside {MIN_TRUNCATION}..={MAX_TRUNCATION}"
        )));
    }
    Ok(t)
}

impl Serialize for Germ {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Germ {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = GermJson::deserialize(d)?;
        Germ::from_json(&j).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GermJson {
    pub truncation: usize,
    pub coeffs: Vec<[String; 2]>,
    pub field: Field,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier_tag: Option<RotationNumber>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiniteOrder {
    FiniteOrder { k: u64 },
    NotFiniteOrderUpTo { max_k: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub h: Germ,
    /// Smallest `|λ − λ^n|` met, and where.
    pub min_divisor: f64,
    pub min_divisor_order: usize,
    pub max_coeff: f64,
    /// Resonant orders whose coefficient was set to 0.
    pub free_orders: Vec<usize>,
}

impl Linearization {
    /// `max |h_n|^{1/n}` over the upper half of the computed orders.
    pub fn growth_rate(&self) -> f64 {
        let t = self.h.truncation();
        (t / 2 + 1..=t)
            .map(|n| self.h.coeff(n).abs_f64().powf(1.0 / n as f64))
            .fold(0.0, f64::max)
    }
}
