//! Data pipeline for multi-source product attribute value extraction.
//!
//! The crate covers everything around the extraction model itself:
//!
//! - [`model`]: canonical types (profiles, spans, examples) and the JSONL wire format
//! - [`ingest`]: markup stripping, text sanitation and profile filtering
//! - [`tokenize`]: whitespace and WordPiece tokenization with character offsets
//! - [`annotate`]: rule extraction, ensemble aggregation and negative downsampling
//! - [`evalkit`]: outcome classification, P/R/F1, length buckets, splits and statistics
//! - [`synth`]: a seeded synthetic corpus generator used for desk-scale experiments
//!
//! All character offsets in this crate count Unicode scalar values, not bytes.

pub mod annotate;
pub mod evalkit;
pub mod hashing;
pub mod ingest;
pub mod jsonl;
pub mod model;
pub mod synth;
pub mod text;
pub mod tokenize;

pub use model::{AttributeExample, Dataset, ProductProfile, Source, SourceKind, Span, SpanEnd};
