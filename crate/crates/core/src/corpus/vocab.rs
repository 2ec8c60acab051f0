use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, CorpusSplit, Side};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const SPECIALS: [&str; 4] = [PAD, BOS, EOS, UNK];

/// Prefix that keeps corpus tokens from colliding with the specials.
pub const ESCAPE: char = '\u{E000}';

/// Escapes a corpus token so it can never equal a special token. Tokens that
/// already start with the escape character are escaped again, which keeps the
/// mapping reversible.
pub fn escape_token(token: &str) -> String {
    if SPECIALS.contains(&token) || token.starts_with(ESCAPE) {
        let mut s = String::with_capacity(token.len() + ESCAPE.len_utf8());
        s.push(ESCAPE);
        s.push_str(token);
        s
    } else {
        token.to_string()
    }
}

pub fn unescape_token(token: &str) -> &str {
    token.strip_prefix(ESCAPE).unwrap_or(token)
}

/// Frequency-ranked token table. Indices 0-3 hold the specials; corpus
/// tokens follow in descending count order, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabularyRepr", from = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.counts)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from (escaped token, count) pairs in any order.
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut cs = vec![0; SPECIALS.len()];
        for (t, c) in entries {
            tokens.push(t);
            cs.push(c);
        }
        Self::from_parts(tokens, cs)
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            counts,
            index,
        }
    }

    /// Size including the four specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Number of corpus (non-special) tokens.
    pub fn corpus_len(&self) -> usize {
        self.tokens.len() - SPECIALS.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus_len() == 0
    }

    /// Index of a surface token, if present.
    pub fn get(&self, surface: &str) -> Option<usize> {
        if SPECIALS.contains(&surface) || surface.starts_with(ESCAPE) {
            self.index.get(&escape_token(surface)).copied()
        } else {
            self.index.get(surface).copied()
        }
    }

    pub fn id_or_unk(&self, surface: &str) -> usize {
        self.get(surface).unwrap_or(UNK_ID)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.get(surface).is_some()
    }

    /// Stored (escaped) form at `id`.
    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Surface form at `id`; corpus tokens are unescaped.
    pub fn surface(&self, id: usize) -> &str {
        if id < SPECIALS.len() {
            &self.tokens[id]
        } else {
            unescape_token(&self.tokens[id])
        }
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// Corpus tokens with their counts, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.tokens
            .iter()
            .zip(&self.counts)
            .skip(SPECIALS.len())
            .map(|(t, &c)| (t.as_str(), c))
    }

    /// Keeps the corpus tokens for which `keep(token, count)` holds.
    pub fn filter<F>(&self, mut keep: F) -> Vocabulary
    where
        F: FnMut(&str, u64) -> bool,
    {
        Vocabulary::from_counts(
            self.entries()
                .filter(|(t, c)| keep(t, *c))
                .map(|(t, c)| (t.to_string(), c)),
        )
    }

    /// SHA-256 over the token list; counts do not contribute.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Writes one token per line. The first four lines are the specials, so
    /// the zero-based line number equals the index; corpus tokens carry their
    /// count after a tab.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if i < SPECIALS.len() {
                writeln!(w, "{t}")?;
            } else {
                writeln!(w, "{t}\t{}", self.counts[i])?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let f = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| CorpusError::io(path, e))?;
        w.flush().map_err(|e| CorpusError::io(path, e))
    }

    /// Reads the format written by [`Vocabulary::save`]. The stored order is
    /// kept as is; a missing count column reads as zero.
    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::io(path, e))?;
            let mut parts = line.split('\t');
            let token = parts.next().unwrap_or_default().to_string();
            if n < SPECIALS.len() {
                if token != SPECIALS[n] {
                    return Err(CorpusError::BadVocabulary {
                        path: path.to_path_buf(),
                        reason: format!("line {} must be {}", n + 1, SPECIALS[n]),
                    });
                }
                tokens.push(token);
                counts.push(0);
                continue;
            }
            if token.is_empty() {
                return Err(CorpusError::BadVocabulary {
                    path: path.to_path_buf(),
                    reason: format!("empty token on line {}", n + 1),
                });
            }
            let count = match parts.next() {
                Some(c) => c.trim().parse().map_err(|_| CorpusError::BadVocabulary {
                    path: path.to_path_buf(),
                    reason: format!("bad count on line {}", n + 1),
                })?,
                None => 0,
            };
            tokens.push(token);
            counts.push(count);
        }
        if tokens.len() < SPECIALS.len() {
            return Err(CorpusError::BadVocabulary {
                path: path.to_path_buf(),
                reason: "missing special tokens".into(),
            });
        }
        Ok(Vocabulary::from_parts(tokens, counts))
    }
}

/// Counts escaped tokens on one side of a split.
pub fn count_tokens(split: &CorpusSplit, side: Side) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for commit in &split.commits {
        for t in commit.tokens(side) {
            *counts.entry(escape_token(t)).or_default() += 1;
        }
    }
    counts
}

/// Builds the vocabulary of one side of a split.
///
/// With a `parent`, tokens the parent does not contain are dropped before
/// the `min_count` threshold applies.
pub fn build_vocabulary(
    split: &CorpusSplit,
    side: Side,
    min_count: u64,
    parent: Option<&Vocabulary>,
) -> Result<Vocabulary, CorpusError> {
    if min_count == 0 {
        return Err(CorpusError::InvalidArgument(
            "min_count must be at least 1".into(),
        ));
    }
    let counts = count_tokens(split, side);
    let vocab = Vocabulary::from_counts(counts.into_iter().filter(|(t, c)| {
        *c >= min_count && parent.is_none_or(|p| p.index.contains_key(t))
    }));
    if vocab.is_empty() {
        return Err(CorpusError::EmptyVocabulary {
            split: split.name.clone(),
            side,
        });
    }
    Ok(vocab)
}

/// Vocabulary reduction settings used with the copy mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// Message tokens seen at least once; diff vocabulary untouched.
    Config1,
    /// Message and diff tokens seen at least ten times.
    Config2,
}

impl Reduction {
    pub fn from_index(i: u8) -> Option<Reduction> {
        match i {
            1 => Some(Reduction::Config1),
            2 => Some(Reduction::Config2),
            _ => None,
        }
    }

    /// (message threshold, diff threshold); `None` leaves a side as is.
    pub fn thresholds(self) -> (u64, Option<u64>) {
        match self {
            Reduction::Config1 => (1, None),
            Reduction::Config2 => (10, Some(10)),
        }
    }
}

/// Applies a reduction configuration, returning `(messages, diffs)`.
/// Removed tokens become `<unk>` at encoding time.
pub fn reduce_vocabulary(
    msg_vocab: &Vocabulary,
    diff_vocab: &Vocabulary,
    config: Reduction,
) -> (Vocabulary, Vocabulary) {
    let (msg_min, diff_min) = config.thresholds();
    let msg = msg_vocab.filter(|_, c| c >= msg_min);
    let diff = match diff_min {
        Some(m) => diff_vocab.filter(|_, c| c >= m),
        None => diff_vocab.clone(),
    };
    (msg, diff)
}
