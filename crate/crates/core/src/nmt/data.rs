//! Index encoding of token pairs, with source OOVs appended to the target
//! vocabulary for copying.

use super::ModelConfig;
use crate::corpus::{EOS_ID, UNK_ID};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    /// Source-vocabulary ids.
    pub src: Vec<usize>,
    /// Per source position, its id in the extended target space.
    pub src_ext: Vec<usize>,
    /// Source tokens outside the target vocabulary; token `k` has extended
    /// id `tgt_vocab.len() + k`.
    pub oov: Vec<String>,
    /// Extended target ids, ending with EOS when built from a message.
    pub tgt: Vec<usize>,
}

/// Encodes a source sequence (truncated to `max_src_len`).
pub fn encode_source<S: AsRef<str>>(config: &ModelConfig, src: &[S]) -> EncodedExample {
    let src = &src[..src.len().min(config.max_src_len)];
    let vt = config.tgt_vocab.len();
    let mut oov: Vec<String> = Vec::new();
    let mut src_ids = Vec::with_capacity(src.len());
    let mut src_ext = Vec::with_capacity(src.len());
    for tok in src {
        let tok = tok.as_ref();
        src_ids.push(config.src_vocab.id_or_unk(tok));
        let ext = match config.tgt_vocab.get(tok) {
            Some(id) => id,
            None => match oov.iter().position(|o| o == tok) {
                Some(k) => vt + k,
                None => {
                    oov.push(tok.to_string());
                    vt + oov.len() - 1
                }
            },
        };
        src_ext.push(ext);
    }
    if !config.copy_enabled {
        oov.clear();
        for e in &mut src_ext {
            if *e >= vt {
                *e = UNK_ID;
            }
        }
    }
    EncodedExample {
        src: src_ids,
        src_ext,
        oov,
        tgt: Vec::new(),
    }
}

/// Encodes a training pair. The message is cut to `max_tgt_len` tokens and
/// EOS is appended. Message tokens outside the target vocabulary become
/// copy ids when they occur in the source and copying is on, else UNK.
pub fn encode_example<S: AsRef<str>, T: AsRef<str>>(
    config: &ModelConfig,
    src: &[S],
    tgt: &[T],
) -> EncodedExample {
    let mut ex = encode_source(config, src);
    let vt = config.tgt_vocab.len();
    let tgt = &tgt[..tgt.len().min(config.max_tgt_len)];
    ex.tgt = tgt
        .iter()
        .map(|t| {
            let t = t.as_ref();
            config.tgt_vocab.get(t).unwrap_or_else(|| {
                ex.oov
                    .iter()
                    .position(|o| o == t)
                    .map_or(UNK_ID, |k| vt + k)
            })
        })
        .chain(std::iter::once(EOS_ID))
        .collect();
    ex
}

/// Surface form of an extended target id.
pub fn surface(config: &ModelConfig, ex: &EncodedExample, id: usize) -> String {
    let vt = config.tgt_vocab.len();
    if id < vt {
        config.tgt_vocab.surface(id).to_string()
    } else {
        ex.oov[id - vt].clone()
    }
}
