//! Meta label correction.
//!
//! A main classifier `f_w` is trained on labels produced by a label
//! correction network `g_α`, which sees the classifier's (detached) features
//! together with the observed noisy label and emits a soft label. The
//! correction network is itself trained so that the classifier, after a few
//! SGD steps on the corrected labels, does well on a small trusted set.
//!
//! Modules:
//!
//! - [`diffcore`]: tensors, parameter vectors, define-by-run reverse-mode graph.
//! - [`models`]: the classifier, the correction network, soft-label cross-entropy.
//! - [`noise`]: seeded UNIF / FLIP label corruption and corruption matrices.
//! - [`data`]: blob generator, CSV ingestion, clean/noisy/test bundles, batching.
//! - [`bilevel`]: k-step look-ahead meta-gradient training.
//! - [`harness`]: experiment configs, baselines, sweeps, evaluation and exports.

pub mod bilevel;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod harness;
pub mod models;
pub mod noise;

pub use error::{Error, Result};
