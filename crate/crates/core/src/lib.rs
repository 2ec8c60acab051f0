//! Commit message generation from version-control diffs.
//!
//! The crate is organised around the stages of the method:
//!
//! * [`corpus`]: loading line-aligned diff/message corpora, file-type
//!   classification, per-type splitting and vocabularies.
//! * [`tokenize`]: byte-pair-encoding subword segmentation.
//! * [`sketch`]: the rule-based Java sketch encoder that swaps identifiers for
//!   indexed placeholders and restores them after translation.
//! * [`nngen`]: the nearest-neighbour retrieval baseline.
//! * [`nmt`]: a GRU encoder-decoder with additive attention, residual
//!   stacking and a gated copy mechanism, trained with Adam.
//! * [`eval`]: BLEU-4 scoring and frequency reports.
//! * [`pipeline`]: per-file-type ensemble routing and experiment runs.

pub mod corpus;
pub mod eval;
pub mod nmt;
pub mod nngen;
pub mod pipeline;
pub mod sketch;
pub mod tokenize;

pub use corpus::{Commit, CorpusSplit, FileType, Vocabulary};
pub use eval::BleuReport;

