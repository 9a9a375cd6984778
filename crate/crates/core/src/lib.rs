pub mod arithmetic;
pub mod classify;
pub mod cli;
pub mod cnum;
pub mod error;
pub mod germ;
pub mod invariant_set;
pub mod map;
pub mod orbits;
pub mod scalar;
pub mod suspension;

pub use error::{HolonomyError, Result};
