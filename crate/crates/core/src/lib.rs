//! Desk-scale building blocks for a quantized low-rank fine-tuning pipeline
//! over chest X-ray study records.
//!
//! The crate is organized around five independent concerns:
//!
//! - [`metrics`] — BLEU, ROUGE-L, and METEOR over a deterministic word
//!   tokenizer, at sentence and corpus level.
//! - [`quantize`] — blockwise absmax quantization: 4-bit weight matrices,
//!   8-bit optimizer state vectors, storage accounting, and the `XRQ4`
//!   binary container.
//! - [`adapter`] — low-rank adapter algebra over a frozen quantized base:
//!   forward pass, merge, initialization, parameter counting, and the
//!   adapter checkpoint format.
//! - [`trainer`] — a deterministic supervised fine-tuning harness for a toy
//!   next-token model: exact adapter gradients, AdamW with optional 8-bit
//!   state, linear warmup/decay schedule, gradient accumulation, and early
//!   stopping.
//! - [`corpus`] — study-record ingestion, seeded 70/10/20 splits, and
//!   instruction-prompt rendering/export.
//!
//! All operations are pure value transformations; nothing here spawns
//! threads or keeps global state, so everything is safe to drive from
//! concurrent callers.

pub mod adapter;
pub mod corpus;
pub mod metrics;
pub mod quantize;
pub mod trainer;

pub use adapter::{AdapterTarget, AdapterTargetSpec, LoraLayer};
pub use corpus::{Partition, PromptMode, PromptRecord, SplitAssignment, StudyRecord};
pub use metrics::{
    tokenize, BleuParams, BleuResult, MeteorParams, MetricParams, MetricReport, RougeParams,
    TokenSequence,
};
pub use quantize::{MemoryFootprint, QuantizedMatrix, QuantizedStateVector};
pub use trainer::{Example, OptimizerState, ToyModel, TrainConfig, TrainReport};
