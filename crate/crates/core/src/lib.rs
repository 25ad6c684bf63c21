//! Toolkit for quantifying how sequence-level distillation reshapes parallel
//! data, plus a synthetic HMM laboratory with exact Bayes-optimal decoders.
//!
//! The crate is organized around the data-measurement pipeline:
//!
//! - [`corpus`]: deterministic ingest/persist of parallel corpora.
//! - [`align`]: a diagonal-prior lexical-translation aligner trained by EM.
//! - [`metrics`]: corpus complexity (conditional entropy), faithfulness
//!   (KL divergence), per-sentence entropy histograms, fuzzy reordering.
//! - [`langid`]: token-level Bayes language posteriors and simplex reports.
//! - [`hmm`]: random HMM teachers, exact decoders (Viterbi, marginal argmax,
//!   beam, exact posterior sampling), distillation dataset construction,
//!   born-again loops, and a brute-force enumeration oracle.
//! - [`student`]: a per-position independent classifier trained on real vs.
//!   distilled datasets with token/sequence accuracy and win-rate experiments.
//!
//! All stochastic operations are reproducible from a single seed and are
//! invariant to worker-thread count: parallel sections reduce partial results
//! in a fixed order and per-item RNG streams are derived from (seed, index).

pub mod align;
pub mod corpus;
mod error;
pub mod hmm;
pub mod langid;
pub mod metrics;
pub mod plot;
pub mod rng;
pub mod student;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
