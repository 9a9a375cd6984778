//! Complex arithmetic shared by the double-precision grid code and the
//! multiprecision orbit code.

use num_complex::Complex64;
use rug::{Complex, Float};

pub trait CNum: Clone + Send + Sync {
    fn from_complex(z: &Complex, bits: u32) -> Self;
    fn from_f64(re: f64, im: f64, bits: u32) -> Self;
    fn precision(&self) -> u32;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn abs(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn to_c64(&self) -> Complex64;
    fn is_zero(&self) -> bool;

    fn zero_like(&self) -> Self {
        Self::from_f64(0.0, 0.0, self.precision())
    }

    fn one_like(&self) -> Self {
        Self::from_f64(1.0, 0.0, self.precision())
    }
}

impl CNum for Complex64 {
    fn from_complex(z: &Complex, _bits: u32) -> Self {
        Complex64::new(z.real().to_f64(), z.imag().to_f64())
    }

    fn from_f64(re: f64, im: f64, _bits: u32) -> Self {
        Complex64::new(re, im)
    }

    fn precision(&self) -> u32 {
        53
    }

    fn add(&self, o: &Self) -> Self {
        self + o
    }

    fn sub(&self, o: &Self) -> Self {
        self - o
    }

    fn mul(&self, o: &Self) -> Self {
        self * o
    }

    fn div(&self, o: &Self) -> Self {
        self / o
    }

    fn abs(&self) -> f64 {
        self.norm()
    }

    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    fn to_c64(&self) -> Complex64 {
        *self
    }

    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl CNum for Complex {
    fn from_complex(z: &Complex, bits: u32) -> Self {
        Complex::with_val(bits, z)
    }

    fn from_f64(re: f64, im: f64, bits: u32) -> Self {
        Complex::with_val(bits, (re, im))
    }

    fn precision(&self) -> u32 {
        self.prec().0
    }

    fn add(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self + o)
    }

    fn sub(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self - o)
    }

    fn mul(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self * o)
    }

    fn div(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self / o)
    }

    fn abs(&self) -> f64 {
        Float::with_val(self.prec().0, self.abs_ref()).to_f64()
    }

    fn is_finite(&self) -> bool {
        self.real().is_finite() && self.imag().is_finite()
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(self.real().to_f64(), self.imag().to_f64())
    }

    fn is_zero(&self) -> bool {
        self.real().is_zero() && self.imag().is_zero()
    }
}
