//! Variational beam search for online learning under distribution shift.
//!
//! The latent parameters of a conjugate linear-Gaussian model are tracked
//! through a stream of batches. At every step each hypothesis branches on a
//! binary change variable: "no change" propagates the previous posterior,
//! "change" broadens it first. A beam of the most probable change histories
//! is retained, optionally diversified across parent families.
//!
//! Module map:
//! - [`gauss`]: natural-parameter Gaussians and broadening operators.
//! - [`models`]: batches, conjugate updates, evidence, predictives.
//! - [`search`]: branching, weighting, truncation and the beam drivers.
//! - [`baselines`]: BOCD, Bayesian forgetting, VCL, point estimate, independent.
//! - [`eval`]: one-step-ahead metrics.
//! - [`data`]: synthetic generators and CSV ingestion.
//! - [`learner`]: a uniform online interface over all methods.
//! - [`experiment`]: config-driven runs, sweeps and output files.
//! - [`selftest`]: fast built-in consistency checks.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gauss;
pub mod learner;
pub mod models;
pub mod search;
pub mod selftest;

pub use error::{Error, Result};
pub use gauss::{Broadening, GaussianNat};
pub use models::{LinearGaussian, PredictiveGaussian, PredictiveMixture, StreamBatch};
pub use search::{BeamSearch, SearchConfig};
