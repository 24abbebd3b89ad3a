//! Weighted renewal sums `h(x, Δ) = Σ_n a_n P(S_n ∈ [x, x + Δ))` for random
//! walks with positive drift: exact lattice evaluation with certified
//! truncation, Monte Carlo for non-lattice jumps, asymptotic predictors, and
//! a harness that compares the two.

pub mod asym;
pub mod cramer;
pub mod dist;
pub mod error;
pub mod exact;
pub mod harness;
pub mod numeric;
pub mod stable;
pub mod weights;

pub use error::{Error, Result};
