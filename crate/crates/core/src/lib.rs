//! # wbslr-core
//!
//! Representation learning for longitudinal event sequences: patients are
//! sequences of dated visits carrying sets of event codes, and the goal is
//! early binary outcome prediction from a fixed observation window.
//!
//! The crate provides the full pipeline:
//!
//! - [`cohort`]: ingest dated events, group them into visits and patient
//!   records, and apply observation / hold-off / monitor window rules to
//!   produce labeled sequences.
//! - [`featurize`]: windowed event-count matrices (the sparse longitudinal
//!   representation's input space) plus the AFV / ATV / BPS baseline vectors.
//! - [`seqmine`]: frequent sequential-pattern mining (prefix growth) for
//!   the BPS baseline.
//! - [`sgl`]: sparse group lasso with logistic loss, solved by block
//!   coordinate descent; groups are time windows, so whole windows and
//!   individual (window, event) pairs can be zeroed out.
//! - [`ensemble`]: bagging of SGL models with out-of-bag-weighted
//!   aggregation (weights learned by projected truncated Newton on the OOB
//!   negative log-likelihood), plus a majority-vote baseline.
//! - [`metrics`]: sensitivity, specificity, rank-based AUC, F2, and
//!   repeated-run mean/std reports.
//! - [`synth`]: synthetic cohorts with planted, time-localized risk
//!   factors for end-to-end verification.
//!
//! Numeric code is generic over the scalar type via [`Float`]; `f64` is the
//! default precision used by the CLI and the type aliases below.

pub mod cohort;
pub mod ensemble;
pub mod error;
pub mod featurize;
pub mod metrics;
pub mod scalar;
pub mod seqmine;
pub mod sgl;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Float;

/// Double-precision aliases for the main model and report types.
pub type SglConfig64 = sgl::SglConfig<f64>;
pub type SglModel64 = sgl::SglModel<f64>;
pub type WbSlrModel64 = ensemble::WbSlrModel<f64>;
pub type WindowedCountMatrix64 = featurize::WindowedCountMatrix<f64>;
pub type EvalReport64 = metrics::EvalReport<f64>;
