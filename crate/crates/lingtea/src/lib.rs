//! Desk-scale toolkit for studying *multilingual unlearning* of causal
//! language models.
//!
//! The crate trains tiny decoder-only transformers on synthetic parallel
//! corpora, then removes a designated forget set from them while trying to
//! keep everything else intact — across every language the model speaks, not
//! just the one the forget data happens to be written in.
//!
//! The pieces, bottom to top:
//!
//! * [`tensor`] — a small reverse-mode autodiff engine over dense `f64`
//!   tensors (define-by-run tape, rebuilt every forward pass).
//! * [`model`] / [`checkpoint`] — the transformer itself: parameter
//!   initialization, forward pass, task-vector arithmetic, and a binary
//!   checkpoint format.
//! * [`corpus`] — parallel multilingual corpora: synthetic generation,
//!   on-disk manifests + JSONL ingestion, and language-bucketed batch
//!   sampling.
//! * [`losses`] — the unlearning objective: gradient-ascent forget loss,
//!   teacher KL retention, hard-label retention, and the adaptive
//!   teacher-confidence mixture between the two.
//! * [`metrics`] — memorization accuracy, perplexity, cloze probing
//!   accuracy, and grouped evaluation reports (CSV + markdown).
//! * [`optim`] / [`trainer`] — AdamW, linear warmup/decay, early stopping
//!   with a perplexity guardrail, and the alternating forget/retain
//!   unlearning loop (plus per-language oracle and sequential variants).
//! * [`baselines`] — gradient-ascent and task-vector reference methods.
//! * [`harness`] — experiment configs, seed fan-out, and the recipes behind
//!   the `unlearn` CLI.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod harness;
mod kv;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::Error;
