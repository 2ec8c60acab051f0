use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenizeError;

/// Suffix marking the last subunit of a word.
pub const END_OF_WORD: &str = "</w>";

/// Learned merge table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "BpeRepr", from = "BpeRepr")]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    target_vocab_size: usize,
    ranks: HashMap<String, HashMap<String, usize>>,
}

#[derive(Serialize, Deserialize)]
struct BpeRepr {
    merges: Vec<(String, String)>,
    target_vocab_size: usize,
}

impl From<BpeRepr> for BpeModel {
    fn from(r: BpeRepr) -> Self {
        BpeModel::from_merges(r.merges, r.target_vocab_size)
    }
}

impl From<BpeModel> for BpeRepr {
    fn from(m: BpeModel) -> Self {
        BpeRepr {
            merges: m.merges,
            target_vocab_size: m.target_vocab_size,
        }
    }
}

type SymId = u32;

struct SymbolTable {
    names: Vec<String>,
    ids: HashMap<String, SymId>,
}

impl SymbolTable {
    fn new() -> Self {
        SymbolTable {
            names: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn intern(&mut self, s: &str) -> SymId {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as SymId;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }
}

/// Splits a word into characters, the last one carrying the end marker.
fn initial_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
    if let Some(last) = out.last_mut() {
        last.push_str(END_OF_WORD);
    }
    out
}

type PairKey = (Reverse<i64>, String, String, SymId, SymId);

struct PairStats {
    counts: HashMap<(SymId, SymId), i64>,
    ordered: BTreeSet<PairKey>,
    occurs_in: HashMap<(SymId, SymId), Vec<usize>>,
}

impl PairStats {
    fn key(names: &[String], pair: (SymId, SymId), count: i64) -> PairKey {
        (
            Reverse(count),
            names[pair.0 as usize].clone(),
            names[pair.1 as usize].clone(),
            pair.0,
            pair.1,
        )
    }

    fn add(&mut self, names: &[String], pair: (SymId, SymId), delta: i64, word: usize) {
        let old = self.counts.get(&pair).copied().unwrap_or(0);
        let new = old + delta;
        if old > 0 {
            self.ordered.remove(&Self::key(names, pair, old));
        }
        if new > 0 {
            self.ordered.insert(Self::key(names, pair, new));
            self.counts.insert(pair, new);
        } else {
            self.counts.remove(&pair);
        }
        if delta > 0 {
            self.occurs_in.entry(pair).or_default().push(word);
        }
    }
}

impl BpeModel {
    /// Learns merges greedily: the most frequent adjacent pair is merged until
    /// the symbol inventory (distinct characters plus merges) reaches
    /// `target_vocab_size` or no pair occurs at least twice. Ties go to the
    /// lexicographically smallest pair.
    pub fn learn<S: AsRef<str>>(
        corpus: &[Vec<S>],
        target_vocab_size: usize,
    ) -> Result<BpeModel, TokenizeError> {
        let mut word_freq: HashMap<&str, i64> = HashMap::new();
        for seq in corpus {
            for t in seq {
                let t = t.as_ref();
                if t.is_empty() || t.contains(END_OF_WORD) {
                    continue;
                }
                *word_freq.entry(t).or_default() += 1;
            }
        }
        if word_freq.is_empty() {
            return Err(TokenizeError::EmptyCorpus);
        }
        let mut chars: Vec<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        if target_vocab_size <= chars.len() {
            return Err(TokenizeError::TargetTooSmall {
                target: target_vocab_size,
                characters: chars.len(),
            });
        }
        let budget = target_vocab_size - chars.len();

        let mut words: Vec<(&str, i64)> = word_freq.into_iter().collect();
        words.sort_unstable();

        let mut table = SymbolTable::new();
        let mut segs: Vec<Vec<SymId>> = words
            .iter()
            .map(|(w, _)| initial_symbols(w).iter().map(|s| table.intern(s)).collect())
            .collect();

        let mut stats = PairStats {
            counts: HashMap::new(),
            ordered: BTreeSet::new(),
            occurs_in: HashMap::new(),
        };
        for (wi, seg) in segs.iter().enumerate() {
            for p in seg.windows(2) {
                stats.add(&table.names, (p[0], p[1]), words[wi].1, wi);
            }
        }

        let mut merges = Vec::with_capacity(budget);
        while merges.len() < budget {
            let Some(best) = stats.ordered.iter().next().cloned() else {
                break;
            };
            let (Reverse(count), left, right, a, b) = best;
            if count < 2 {
                break;
            }
            let merged = table.intern(&format!("{left}{right}"));
            merges.push((left, right));

            let mut affected = stats.occurs_in.remove(&(a, b)).unwrap_or_default();
            affected.sort_unstable();
            affected.dedup();
            for wi in affected {
                let freq = words[wi].1;
                let seg = &segs[wi];
                if !seg.windows(2).any(|p| p[0] == a && p[1] == b) {
                    continue;
                }
                for p in seg.windows(2) {
                    stats.add(&table.names, (p[0], p[1]), -freq, wi);
                }
                let new_seg = merge_pair(seg, a, b, merged);
                for p in new_seg.windows(2) {
                    stats.add(&table.names, (p[0], p[1]), freq, wi);
                }
                segs[wi] = new_seg;
            }
        }
        Ok(BpeModel::from_merges(merges, target_vocab_size))
    }

    pub fn from_merges(merges: Vec<(String, String)>, target_vocab_size: usize) -> BpeModel {
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, (a, b)) in merges.iter().enumerate() {
            ranks.entry(a.clone()).or_default().entry(b.clone()).or_insert(i);
        }
        BpeModel {
            merges,
            target_vocab_size,
            ranks,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn target_vocab_size(&self) -> usize {
        self.target_vocab_size
    }

    fn rank(&self, a: &str, b: &str) -> Option<usize> {
        self.ranks.get(a)?.get(b).copied()
    }

    /// Segments one word into subunits; the last carries the end marker.
    pub fn encode_word(&self, word: &str) -> Vec<String> {
        if word.contains(END_OF_WORD) {
            return vec![format!("{word}{END_OF_WORD}")];
        }
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| self.rank(&p[0], &p[1]).map(|r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    next.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    next.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = next;
        }
        symbols
    }

    /// Segments a token sequence. The output is never shorter than the input.
    pub fn apply<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .flat_map(|t| self.encode_word(t.as_ref()))
            .collect()
    }

    /// Merge-table file: one `left right` pair per line, in learning order.
    pub fn save(&self, path: &Path) -> Result<(), TokenizeError> {
        let io = |e| TokenizeError::Io(path.to_path_buf(), e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "#version: 0.2").map_err(io)?;
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<BpeModel, TokenizeError> {
        let io = |e| TokenizeError::Io(path.to_path_buf(), e);
        let f = File::open(path).map_err(io)?;
        let mut merges = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io)?;
            if n == 0 && line.starts_with("#version") {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()))
                }
                _ => {
                    return Err(TokenizeError::BadMergeLine {
                        line: n + 1,
                        content: line,
                    })
                }
            }
        }
        let size = merges.len();
        Ok(BpeModel::from_merges(merges, size))
    }
}

fn merge_pair(seg: &[SymId], a: SymId, b: SymId, merged: SymId) -> Vec<SymId> {
    let mut out = Vec::with_capacity(seg.len());
    let mut i = 0;
    while i < seg.len() {
        if i + 1 < seg.len() && seg[i] == a && seg[i + 1] == b {
            out.push(merged);
            i += 2;
        } else {
            out.push(seg[i]);
            i += 1;
        }
    }
    out
}

/// Result of [`decode_bpe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub tokens: Vec<String>,
    /// The input ended in the middle of a word; the partial word was kept.
    pub dangling: bool,
}

/// Glues subunits back into words, splitting after each end marker.
pub fn decode_bpe<S: AsRef<str>>(subunits: &[S]) -> Decoded {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for s in subunits {
        let s = s.as_ref();
        match s.strip_suffix(END_OF_WORD) {
            Some(stem) => {
                current.push_str(stem);
                tokens.push(std::mem::take(&mut current));
            }
            None => current.push_str(s),
        }
    }
    let dangling = !current.is_empty();
    if dangling {
        log::warn!("subunit sequence ends without an end-of-word marker");
        tokens.push(current);
    }
    Decoded { tokens, dangling }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn first_merge_by_hand() {
        // low x2, lower x1: (l,o)=3, (o,w</w>)=2, (o,w)=1, (w,e)=1, (e,r</w>)=1
        // distinct characters l o w e r -> 5
        let c = corpus(&["low low lower"]);
        let m = BpeModel::learn(&c, 6).unwrap();
        assert_eq!(m.merges(), &[("l".to_string(), "o".to_string())]);
        let m = BpeModel::learn(&c, 7).unwrap();
        assert_eq!(m.merges()[1], ("lo".to_string(), "w</w>".to_string()));
    }

    #[test]
    fn target_must_exceed_characters() {
        let c = corpus(&["low low lower"]);
        assert!(matches!(
            BpeModel::learn(&c, 5),
            Err(TokenizeError::TargetTooSmall {
                target: 5,
                characters: 5
            })
        ));
    }

    #[test]
    fn single_character_corpus_has_no_merges() {
        let c = corpus(&["a"]);
        let m = BpeModel::learn(&c, 10).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.apply(&["a"]), vec!["a</w>"]);
    }

    #[test]
    fn seen_word_is_one_symbol() {
        let c = corpus(&["lower lower lower"]);
        let m = BpeModel::learn(&c, 100).unwrap();
        assert_eq!(m.apply(&["lower"]), vec!["lower</w>"]);
    }

    #[test]
    fn unseen_character_survives() {
        let c = corpus(&["ab ab ab"]);
        let m = BpeModel::learn(&c, 10).unwrap();
        let out = m.apply(&["aqb"]);
        assert!(out.contains(&"q".to_string()));
        assert_eq!(decode_bpe(&out).tokens, vec!["aqb"]);
    }

    #[test]
    fn empty_sequences() {
        let m = BpeModel::learn(&corpus(&["ab ab"]), 4).unwrap();
        let empty: Vec<String> = vec![];
        assert!(m.apply(&empty).is_empty());
        let d = decode_bpe(&empty);
        assert!(d.tokens.is_empty() && !d.dangling);
    }

    #[test]
    fn marker_terminated_subunit() {
        let d = decode_bpe(&["word</w>"]);
        assert_eq!(d.tokens, vec!["word"]);
        assert!(!d.dangling);
        let d = decode_bpe(&["wo", "rd"]);
        assert_eq!(d.tokens, vec!["word"]);
        assert!(d.dangling);
    }

    #[test]
    fn tokens_containing_the_marker_round_trip() {
        let m = BpeModel::learn(&corpus(&["w w a</w>b"]), 20).unwrap();
        let toks = vec!["x</w>y".to_string(), "w".to_string()];
        assert_eq!(decode_bpe(&m.apply(&toks)).tokens, toks);
    }

    #[test]
    fn merge_file_round_trip() {
        let c = corpus(&["low low lower newest newest widest"]);
        let m = BpeModel::learn(&c, 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("merges.txt");
        m.save(&p).unwrap();
        let back = BpeModel::load(&p).unwrap();
        assert_eq!(back.merges(), m.merges());
        assert_eq!(back.apply(&["lowest"]), m.apply(&["lowest"]));
    }
}
