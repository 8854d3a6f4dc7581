//! One-shot style transfer (OSST) scoring for authorship analysis.
//!
//! A causal language model is asked to restyle the neutral rewrite of a
//! target text, once without help (zero-shot) and once with a single
//! `(neutral, styled)` example taken from another text. The mean per-token
//! log-probability of the styled target measures how much the example's
//! style helped, which is the signal used for attribution and verification.
//!
//! Crate layout:
//!
//! - [`model`]: shared domain types.
//! - [`backend`]: language-model adapters (remote HTTP, offline n-gram, uniform mock).
//! - [`neutralizer`]: neutral-style rewrites, cached per generator fingerprint.
//! - [`prompting`]: transfer prompt layout and exact target spans.
//! - [`scoring`]: OSST, nOSST-ZS, nOSST-RS, symmetric scores, score tables.
//! - [`attribution`]: closed- and open-set attribution over score tables.
//! - [`verification`]: pairwise decisions, threshold calibration, anchor ablation.
//! - [`metrics`]: accuracy, normalized rank, F1 variants, token-position profile.
//! - [`datasets`]: corpus loaders and cleaners.
//! - [`store`]: content-addressed on-disk cache.

pub mod attribution;
pub mod backend;
pub mod calibration;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod model;
pub mod neutralizer;
pub mod prompting;
pub mod scoring;
pub mod store;
pub mod verification;

pub use error::{BackendError, Error, Result};
pub use model::{
    ByteSpan, CalibrationResult, Corpus, Document, NeutralizationRecord, NeutralizedText,
    ScoreTable, TokenLogprob, TransferScore,
};
