//! Fair self-supervised contrastive learning at desk scale.
//!
//! The library trains a small MLP encoder with a global contrastive loss
//! whose per-sample normalization terms are tracked by moving-average
//! estimators, while an adversarial attribute discriminator — updated by
//! stochastic gradient ascent inside the same loop — pushes the learned
//! representations toward independence from a sensitive attribute. Around
//! that core sit the pieces needed to study the accuracy/fairness trade-off
//! end to end on synthetic data: group fairness metrics, linear-probe
//! evaluation, seeded data generation, and checkpointing that resumes
//! bit-for-bit.
//!
//! Everything is f64, single-threaded, and deterministic given one 64-bit
//! seed; see [`rng`] for how randomness is split into named streams.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fairness;
pub mod gcl;
pub mod linear_eval;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensorcore;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
