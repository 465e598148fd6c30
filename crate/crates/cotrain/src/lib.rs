//! Co-training of neural views for semi-supervised classification.
//!
//! Several small MLP "views" of the same data are trained jointly: a
//! supervised cross entropy anchors them to the labeled rows, a
//! Jensen-Shannon agreement loss pulls their predictions together on the
//! unlabeled pool, and an adversarial view-difference loss pushes their
//! error surfaces apart so that they do not collapse into copies of one
//! model. Everything is 64-bit, seeded, and bit-reproducible.
//!
//! ## Modules
//!
//! - [`tensor`] / [`tape`] — dense f64 tensors and reverse-mode autodiff
//! - [`model`] — MLP view models and momentum SGD
//! - [`losses`] — supervised, agreement, and view-difference losses
//! - [`adversarial`] — FGSM example generation and transfer diagnostics
//! - [`data`] — datasets, stratified splits, generators, stream bundles
//! - [`trainer`] — the joint iteration, schedules, pretraining, evaluation
//! - [`metrics`] — per-epoch diagnostics and the metrics CSV
//! - [`config`] — experiment configs, checkpoints, run drivers
//!
//! ## Where to start
//!
//! The `examples/` directory has one runnable program per capability:
//!
//! ```bash
//! cargo run --release --example gradient_check
//! cargo run --release --example train_two_moons
//! cargo run --release --example collapse_diagnosis
//! cargo run --release --example multi_view_schedules
//! cargo run --release --example adversarial_transfer
//! cargo run --release --example stream_bundles
//! ```
//!
//! The `cotrain` binary drives the same machinery from JSON configs; see
//! the repository README for the config schema and CLI reference.

pub mod adversarial;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
