//! Desk-scale laboratory for studying and balancing information acquisition
//! across modalities in late-fusion multimodal classifiers.
//!
//! Small multi-encoder MLP networks are trained on synthetic multimodal
//! classification tasks while the squared-gradient trace of each modality's
//! encoder (a Fisher-information proxy) is tracked per epoch. Early epochs in
//! which a modality's trace rises steeply form its *prime learning window*.
//! When one modality's unimodal performance dominates inside that window, an
//! adaptive proximal penalty slows its drift from the epoch-start weights so
//! the weaker modalities can keep acquiring information.
//!
//! Layering, bottom up:
//!
//! * [`numerics`] — dense `f64` tensors, hand-written forward/backward ops,
//!   and a fixed, documented PRNG with per-consumer streams.
//! * [`datagen`] — synthetic multimodal dataset generation with controllable
//!   per-modality informativeness, plus CSV ingestion.
//! * [`model`] — per-modality MLP encoders, concat/sum late fusion, a single
//!   linear classifier, and per-modality evaluation by feature zeroing.
//! * [`fisher`] — per-epoch trace accumulation, the prime-window criterion,
//!   and cross-batch gradient cosine diagnostics.
//! * [`regulation`] — performance scores, gaps, adaptive regulation strength,
//!   and the proximal penalty gradient.
//! * [`trainer`] — the training loop wiring everything together, with
//!   deterministic metrics/decision logging.
//! * [`gradlog`] — binary per-batch gradient log read/written by the trainer
//!   and consumed by diagnostics.
//! * [`diagnostics`] — post-hoc numerical verification: sphere-sampling
//!   orthogonality statistics, the penalty/trace equivalence decomposition,
//!   and the regulation-gradient bound.
//! * [`config`] / [`experiment`] — TOML experiment configs, sweep expansion,
//!   run orchestration, comparison tables, and plot-ready CSV emission.

pub mod config;
pub mod datagen;
pub mod diagnostics;
mod error;
pub mod experiment;
pub mod fisher;
pub mod gradcheck;
pub mod gradlog;
pub mod model;
pub mod numerics;
pub mod regulation;
pub mod trainer;

pub use error::{Error, Result};
