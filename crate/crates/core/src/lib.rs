//! Simulation of two coupled second-harmonic-generation cavities across the
//! quantum-classical crossover.
//!
//! The quantum side works on truncated Fock spaces ([`fock`]) with a Lindblad
//! model ([`model`]) solved either for its steady state ([`steady_state`]) or
//! by quantum-jump trajectories ([`trajectory`]). The classical side
//! integrates the coherent-state amplitude equations ([`classical`]).
//! Closed-form weak-drive results live in [`oracles`], and [`experiments`]
//! drives parameter sweeps over all backends.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod krylov;
pub mod model;
pub mod oracles;
pub mod spectrum;
pub mod steady_state;
pub mod trajectory;

pub use error::{Error, Result};
pub use fock::{FockSpace, SparseComplexMatrix};
pub use model::{Mode, ModelParams};
