//! Whitespace tokenization and byte-pair-encoding subword segmentation.

mod bpe;

use std::path::PathBuf;

pub use bpe::{decode_bpe, BpeModel, Decoded, END_OF_WORD};

#[derive(Debug, thiserror::Error)]
pub enum TokenizeError {
    #[error("target vocabulary size {target} must exceed the {characters} distinct characters")]
    TargetTooSmall { target: usize, characters: usize },
    #[error("cannot learn merges from an empty corpus")]
    EmptyCorpus,
    #[error("malformed merge on line {line}: '{content}'")]
    BadMergeLine { line: usize, content: String },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

impl TokenizeError {
    pub fn category(&self) -> &'static str {
        match self {
            TokenizeError::TargetTooSmall { .. } => "TargetTooSmall",
            TokenizeError::EmptyCorpus => "EmptyCorpus",
            TokenizeError::BadMergeLine { .. } => "BadMergeLine",
            TokenizeError::Io(..) => "Io",
        }
    }
}

/// Splits a line on whitespace.
pub fn whitespace_tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(String::from).collect()
}

/// Subword settings of the three BPE runs: merge-table size, source
/// truncation length and encoder/decoder depth.
///
/// The middle run is listed with 1,000 symbols in one table and 10,000 in
/// the results; 10,000 matches the stated 5k/10k/32k sweep and is used here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BpePreset {
    pub name: &'static str,
    pub vocab_size: usize,
    pub max_src_len: usize,
    pub layers: usize,
}

pub const BPE_PRESETS: [BpePreset; 3] = [
    BpePreset {
        name: "bpe1",
        vocab_size: 5_000,
        max_src_len: 185,
        layers: 2,
    },
    BpePreset {
        name: "bpe2",
        vocab_size: 10_000,
        max_src_len: 170,
        layers: 4,
    },
    BpePreset {
        name: "bpe3",
        vocab_size: 32_000,
        max_src_len: 160,
        layers: 4,
    },
];

pub fn bpe_preset(name: &str) -> Option<BpePreset> {
    BPE_PRESETS.iter().copied().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(bpe_preset("bpe1").unwrap().max_src_len, 185);
        assert_eq!(bpe_preset("bpe2").unwrap().vocab_size, 10_000);
        assert_eq!(bpe_preset("bpe3").unwrap().vocab_size, 32_000);
        assert!(bpe_preset("bpe4").is_none());
    }
}
