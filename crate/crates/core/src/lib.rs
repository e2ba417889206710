//! Stability analysis for singularly perturbed impulsive linear switched
//! systems.
//!
//! Each mode `(l, P, Lambda, R)` evolves by `E_l^eps P X' = Lambda X` and jumps
//! by `R` when it is left. The crate builds the block-triangularizing change
//! of coordinates, the reduced, transient and enriched single-scale systems,
//! and bounds their maximal Lyapunov exponents by searching over weighted
//! matrix products.

pub mod builtin;
pub mod cli;
pub mod chang;
pub mod criteria;
pub mod error;
pub mod exponent;
pub mod linalg;
pub mod model;
pub mod reduced;
pub mod sampling;
pub mod simulate;
mod serde_ext;

pub use error::{Error, Result};
pub use linalg::Matrix;
