//! Numerical laboratory for in-context-learning generalization bounds.
//!
//! Every constructive bound implemented here is paired with a brute-force
//! audit that certifies the inequality on synthetic instances:
//!
//! - [`approx`]: 1-D Bernstein operator, its `L/(2 sqrt(n))` error law, and
//!   the Remez amplification factor with grid verification.
//! - [`path_bound`]: the path-restricted generalization bound
//!   `A^n sup + (1 + A^n) l / (2 sqrt(n))` audited along straight-line paths.
//! - [`latent_task`]: Bayesian latent-task simulator with prompt formats 1-6,
//!   exact posteriors, decay-rate constants, and instruction-sensitivity
//!   gradients.
//! - [`cot`]: multi-step error-propagation recursion and the composed bound,
//!   with rollout audits on synthetic update maps.
//! - [`padding`]: softmax-attention forward pass and padding-stability bounds.
//! - [`format6`]: tensor-product Bernstein operators, Chebyshev amplification
//!   across concentric balls, the Markov gradient bound, and the assembled
//!   non-vanishing bound for per-demonstration varying instructions.
//! - [`harness`]: config parsing, deterministic randomness, CSV/JSON report
//!   emission, and golden-file regression.

pub mod approx;
pub mod cot;
pub mod error;
pub mod format6;
pub mod harness;
pub mod latent_task;
pub mod padding;
pub mod path_bound;
pub mod rng;

pub use error::{Error, Result};
