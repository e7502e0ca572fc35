//! Few-shot episodic meta-training toolkit.
//!
//! The pipeline samples N-way K-shot episodes, builds two augmented views of
//! each episode, computes per-view and mixup prototypes, and optimizes a joint
//! objective made of the prototype cross-entropy, an inter-class prototype
//! contrast, an intra-class query/prototype contrast and a replay-based
//! against-forgetting term. Evaluation follows the usual nearest-prototype
//! protocol with 95% confidence intervals over many test episodes.
//!
//! Module map:
//!
//! - [`episodes`]: datasets, splits, episode sampling, two-view augmentation
//! - [`encoder`]: small trainable backbones, supervised pre-training, checkpoints
//! - [`prototypes`]: class means and hybrid prototypes
//! - [`losses`]: every loss term with analytic gradients
//! - [`cache`]: FIFO episodic replay cache
//! - [`trainer`]: the meta-training loop and gradient verification
//! - [`eval`]: episode evaluation, ablation tables, embedding plots
//! - [`config`]: run configuration with flat dotted keys

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod losses;
pub mod optim;
pub mod prototypes;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
