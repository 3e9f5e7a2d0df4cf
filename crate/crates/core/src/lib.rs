//! Exact sum-MSE-optimal 1-bit precoding for the multiuser MIMO downlink.
//!
//! The [`bb1`] module holds the branch-and-bound solver; [`baselines`] the
//! exhaustive oracle and Wiener-filter precoders; [`sim`] the seeded
//! Monte-Carlo harness for error-rate and complexity sweeps.

pub mod baselines;
pub mod bb1;
pub mod error;
pub mod model;
pub mod numerics;
pub mod sim;

pub use bb1::{bb1_solve, TrickConfig};
pub use error::{PrecodeError, Result};
pub use model::{PrecodeResult, PrecodingProblem, SearchStats};
