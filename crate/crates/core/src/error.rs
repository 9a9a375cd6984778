use thiserror::Error;

pub type Result<T> = std::result::Result<T, HolonomyError>;

#[derive(Debug, Error)]
pub enum HolonomyError {
    /// Mismatched truncation orders or coefficient fields, or an out-of-range setting.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("germ is not a local diffeomorphism (linear coefficient vanishes)")]
    NotDiffeomorphism,

    #[error("resonance obstruction at order {order}")]
    ResonanceObstruction { order: usize },

    #[error("precision exhausted: only {certified} partial quotients can be certified")]
    PrecisionExhausted { certified: usize },

    #[error("defined only for irrational rotation numbers (continued fraction terminates)")]
    DefinedOnlyForIrrational,

    #[error("continued fraction has {have} convergents, {need} required")]
    InsufficientConvergents { have: usize, need: usize },

    #[error("multiplier is torsion: 1 - mu^{n} vanishes")]
    DegenerateTorsion { n: u64 },

    #[error("germs do not commute: commutator defect {defect:e} exceeds tolerance {tolerance:e}")]
    NonCommuting { defect: f64, tolerance: f64 },

    #[error("outside the tabulated cases: {0}")]
    OutOfTableScope(String),

    #[error("case cannot be determined: {0}")]
    UnclassifiedCase(String),

    #[error("germ is the identity through the truncation order; not in the parabolic non-identity case")]
    NotCaseII,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("disk is not admissible: {0}")]
    Inadmissible(String),

    #[error("torus modulus must lie in the upper half-plane, got Im(tau) = {0}")]
    Modulus(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
