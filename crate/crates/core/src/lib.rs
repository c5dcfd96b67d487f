//! Zero-shot out-of-distribution detection with neutral-prompt agents.
//!
//! Image embeddings are scored against a [`ConceptBank`] of ID label
//! embeddings followed by agent embeddings. Agents never win the argmax but
//! they sit in the softmax denominator, which pulls OOD scores down more
//! than ID scores.

pub mod bank;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod io;
pub mod scoring;
pub mod stats;
pub mod tensor;

pub use bank::{AgentRatio, ConceptBank};
pub use error::{Error, Result};
pub use eval::EvalResult;
pub use scoring::{ScoreConfig, ScoreKind, ScoreRecord};
pub use tensor::{Embedding, EmbeddingMatrix};
