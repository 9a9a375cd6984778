//! Level-index magnitudes.
//!
//! Continued fractions with doubly exponential partial quotients produce
//! denominators that overflow any float format after two or three steps.
//! A [`Tower`] stores a positive real as `exp^level(top)`, which keeps such
//! values totally ordered and lets sums and products be formed with the
//! relative accuracy that matters at each level (small summands are absorbed).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Values above this stay at level 0 only up to here.
const LEVEL0_MAX: f64 = 1e300;
/// `ln(LEVEL0_MAX)`; every canonical level >= 1 tower has `top > LN_LEVEL0_MAX`.
const LN_LEVEL0_MAX: f64 = 690.775_527_898_213_7;

/// Positive real `exp^level(top)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub level: u32,
    pub top: f64,
}

impl Tower {
    pub const ZERO: Tower = Tower { level: 0, top: 0.0 };
    pub const ONE: Tower = Tower { level: 0, top: 1.0 };

    pub fn from_f64(x: f64) -> Tower {
        assert!(x >= 0.0, "tower magnitudes are nonnegative");
        if x.is_infinite() {
            return Tower {
                level: u32::MAX,
                top: f64::INFINITY,
            };
        }
        if x <= LEVEL0_MAX {
            Tower { level: 0, top: x }
        } else {
            Tower {
                level: 1,
                top: x.ln(),
            }
        }
    }

    /// `exp(self)`.
    pub fn exp(self) -> Tower {
        match self.level {
            0 if self.top <= LN_LEVEL0_MAX => Tower {
                level: 0,
                top: self.top.exp(),
            },
            0 => Tower {
                level: 1,
                top: self.top,
            },
            l => Tower {
                level: l.saturating_add(1),
                top: self.top,
            },
        }
    }

    /// `e^x` for a float exponent.
    pub fn from_ln(ln: f64) -> Tower {
        if ln <= LN_LEVEL0_MAX {
            Tower::from_f64(ln.exp())
        } else {
            Tower { level: 1, top: ln }
        }
    }

    /// Natural logarithm; values below 1 clamp to 0.
    pub fn ln(self) -> Tower {
        match self.level {
            0 => Tower {
                level: 0,
                top: if self.top > 1.0 { self.top.ln() } else { 0.0 },
            },
            1 => Tower {
                level: 0,
                top: self.top,
            },
            l => Tower {
                level: l - 1,
                top: self.top,
            },
        }
    }

    /// `ln(self)` as a float, infinite beyond level 1.
    pub fn ln_f64(self) -> f64 {
        match self.level {
            0 => self.top.ln(),
            1 => self.top,
            _ => f64::INFINITY,
        }
    }

    /// Float value, infinite when it does not fit.
    pub fn to_f64(self) -> f64 {
        if self.level == 0 {
            self.top
        } else {
            f64::INFINITY
        }
    }

    pub fn is_finite_f64(self) -> bool {
        self.level == 0
    }

    pub fn add(self, other: Tower) -> Tower {
        let (big, small) = if self >= other {
            (self, other)
        } else {
            (other, self)
        };
        match big.level {
            0 => {
                let s = big.top + small.top;
                if s <= LEVEL0_MAX {
                    Tower { level: 0, top: s }
                } else {
                    Tower::from_ln(big.top.ln() + (small.top / big.top).ln_1p())
                }
            }
            1 => {
                let lb = big.top;
                let ls = small.ln_f64();
                Tower {
                    level: 1,
                    top: lb + (ls - lb).exp().ln_1p(),
                }
            }
            // Any summand of a lower or equal level changes `top` by less than
            // an ulp once the value exceeds exp(exp(690)).
            _ => big,
        }
    }

    pub fn mul(self, other: Tower) -> Tower {
        if self.top == 0.0 || other.top == 0.0 {
            return Tower::ZERO;
        }
        if self.level == 0 && other.level == 0 {
            let p = self.top * other.top;
            if p <= LEVEL0_MAX && p > 0.0 {
                return Tower { level: 0, top: p };
            }
        }
        // Factors below 1 have a negative log; handle them at level 0 only.
        if self.level == 0 && self.top < 1.0 || other.level == 0 && other.top < 1.0 {
            let (lo, hi) = if self.level == 0 && self.top < 1.0 {
                (self, other)
            } else {
                (other, self)
            };
            return match hi.level {
                0 => Tower::from_f64(lo.top * hi.top),
                1 => Tower::from_ln(hi.top + lo.top.ln()),
                _ => hi,
            };
        }
        self.ln().add(other.ln()).exp()
    }

    pub fn mul_f64(self, x: f64) -> Tower {
        self.mul(Tower::from_f64(x))
    }
}

impl PartialOrd for Tower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(
            self.level
                .cmp(&other.level)
                .then(self.top.total_cmp(&other.top)),
        )
    }
}

impl fmt::Display for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            0 => write!(f, "{:e}", self.top),
            l => {
                for _ in 0..l {
                    f.write_str("exp(")?;
                }
                write!(f, "{:e}", self.top)?;
                for _ in 0..l {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

/// Signed level-index value, totally ordered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedTower {
    pub negative: bool,
    pub magnitude: Tower,
}

impl SignedTower {
    pub fn from_f64(x: f64) -> Self {
        SignedTower {
            negative: x < 0.0,
            magnitude: Tower::from_f64(x.abs()),
        }
    }

    pub fn negative(magnitude: Tower) -> Self {
        SignedTower {
            negative: magnitude.top != 0.0,
            magnitude,
        }
    }

    pub fn positive(magnitude: Tower) -> Self {
        SignedTower {
            negative: false,
            magnitude,
        }
    }

    pub fn to_f64(self) -> f64 {
        let m = self.magnitude.to_f64();
        if self.negative {
            -m
        } else {
            m
        }
    }

    /// `self + x` for a float summand; absorbed once the magnitude leaves level 0.
    pub fn add_f64(self, x: f64) -> Self {
        if self.magnitude.level == 0 {
            SignedTower::from_f64(self.to_f64() + x)
        } else {
            self
        }
    }
}

impl PartialOrd for SignedTower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let ord = match (self.negative, other.negative) {
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
            (false, false) => self.magnitude.partial_cmp(&other.magnitude)?,
            (true, true) => other.magnitude.partial_cmp(&self.magnitude)?,
        };
        Some(ord)
    }
}

impl fmt::Display for SignedTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            f.write_str("-")?;
        }
        write!(f, "{}", self.magnitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_arithmetic_matches_floats() {
        let a = Tower::from_f64(3.5);
        let b = Tower::from_f64(1e10);
        assert_eq!(a.add(b).to_f64(), 1e10 + 3.5);
        assert_eq!(a.mul(b).to_f64(), 3.5e10);
        assert!((Tower::from_f64(1e5).ln().to_f64() - 1e5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn crossing_levels_preserves_logarithms() {
        let big = Tower::from_ln(5000.0);
        assert_eq!(big.level, 1);
        let sq = big.mul(big);
        assert!((sq.ln_f64() - 10000.0).abs() < 1e-9);
        let sum = big.add(big);
        assert!((sum.ln_f64() - (5000.0 + 2f64.ln())).abs() < 1e-9);
        let huge = Tower::from_ln(1e300).exp();
        assert_eq!(huge.level, 2);
        assert_eq!(huge.add(big), huge);
    }

    #[test]
    fn ordering_is_monotone_across_levels() {
        let xs = [
            Tower::from_f64(0.5),
            Tower::from_f64(7.0),
            Tower::from_f64(1e300),
            Tower::from_ln(700.0),
            Tower::from_ln(1e12),
            Tower::from_ln(1e12).exp(),
        ];
        for w in xs.windows(2) {
            assert!(w[0] < w[1], "{} < {}", w[0], w[1]);
        }
        let s = [
            SignedTower::negative(Tower::from_ln(1e12)),
            SignedTower::from_f64(-3.0),
            SignedTower::from_f64(2.0),
        ];
        assert!(s[0] < s[1] && s[1] < s[2]);
    }
}
