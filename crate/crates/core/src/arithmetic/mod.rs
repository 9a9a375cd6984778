//! Rotation numbers and small-divisor diagnostics.

pub mod cf;
mod diagnostics;
mod rotation;
pub mod tower;

pub use cf::{CfExpansion, CfTail, ContinuedFraction, DigitRule, Magnitude, Quotient};
pub use diagnostics::{
    as_rational, brjuno_partial_sum, certified_cf, classify_rotation, is_torsion, strong_cremer_check,
    ArithmeticKind, ArithmeticPolicy, ArithmeticVerdict, CremerEvidence, CremerSample, TorsionCheck,
    CREMER_DROP,
};
pub use rotation::{certified_quotients, small_denominators, RotationNumber};
pub use tower::{SignedTower, Tower};
