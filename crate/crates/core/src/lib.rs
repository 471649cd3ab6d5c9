//! Label alignment and reassignment for cross-domain named entity recognition.
//!
//! The pipeline:
//!
//! 1. [`corpus`] ingests pre-tokenized BIO or JSONL corpora.
//! 2. A source-trained tagger ([`tagger`]) pseudo-labels the target training
//!    split with source types.
//! 3. [`alignment`] votes each target type onto exactly one source type.
//! 4. [`label_codec`] writes `Y_s : span => Y_t` training labels for the
//!    target model and parses its output.
//! 5. [`inference`] decodes predictions, optionally re-typing them through
//!    multiple-choice questions to a chat model ([`llm`]).
//! 6. [`evaluation`] scores everything with exact span matching.

pub mod alignment;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod label_codec;
pub mod llm;
pub mod retry;
pub mod tagger;

pub use error::{Error, Result};
