//! Nearest-neighbour retrieval baseline.
//!
//! Diffs become bag-of-words vectors. The `k` training diffs closest to the
//! query by cosine similarity are re-ranked by sentence BLEU-4 against the
//! query diff, and the winner's message is returned.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::corpus::CorpusSplit;
use crate::eval::sentence_bleu;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    TermFrequency,
    /// Term frequency scaled by `ln(n / df) + 1`.
    TfIdf,
}

#[derive(Debug, thiserror::Error)]
pub enum NngenError {
    #[error("cannot index an empty training split")]
    EmptyIndex,
    #[error("k must be between 1 and the index size {size}, got {k}")]
    BadK { k: usize, size: usize },
}

impl NngenError {
    pub fn category(&self) -> &'static str {
        match self {
            NngenError::EmptyIndex => "EmptyIndex",
            NngenError::BadK { .. } => "InvalidArgument",
        }
    }
}

/// Sparse vector as `(dimension, weight)` pairs sorted by dimension.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct BowIndex {
    term_index: HashMap<String, usize>,
    idf: Option<Vec<f64>>,
    vectors: Vec<SparseVec>,
    norms: Vec<f64>,
    /// term -> (example, weight) postings.
    postings: Vec<Vec<(usize, f64)>>,
    messages: Vec<Vec<String>>,
    diffs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub message: Vec<String>,
    pub train_id: usize,
    pub cosine: f64,
    pub bleu: f64,
    /// Set when the query shares no term with any training diff.
    pub degenerate: bool,
}

fn term_counts<S: AsRef<str>>(
    tokens: &[S],
    term_index: &HashMap<String, usize>,
) -> HashMap<usize, f64> {
    let mut tf = HashMap::new();
    for t in tokens {
        if let Some(&d) = term_index.get(t.as_ref()) {
            *tf.entry(d).or_insert(0.0) += 1.0;
        }
    }
    tf
}

fn to_sparse(map: HashMap<usize, f64>) -> SparseVec {
    let mut v: SparseVec = map.into_iter().collect();
    v.sort_unstable_by_key(|e| e.0);
    v
}

fn norm(v: &[(usize, f64)]) -> f64 {
    v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
}

impl BowIndex {
    pub fn build(train: &CorpusSplit) -> Result<BowIndex, NngenError> {
        BowIndex::build_with(train, Weighting::TermFrequency)
    }

    pub fn build_with(train: &CorpusSplit, weighting: Weighting) -> Result<BowIndex, NngenError> {
        if train.is_empty() {
            return Err(NngenError::EmptyIndex);
        }
        let mut term_index = HashMap::new();
        for c in &train.commits {
            for t in &c.diff_tokens {
                let next = term_index.len();
                term_index.entry(t.clone()).or_insert(next);
            }
        }
        let mut vectors: Vec<SparseVec> = train
            .commits
            .iter()
            .map(|c| to_sparse(term_counts(&c.diff_tokens, &term_index)))
            .collect();

        let idf = (weighting == Weighting::TfIdf).then(|| {
            let mut df = vec![0usize; term_index.len()];
            for v in &vectors {
                for &(d, _) in v {
                    df[d] += 1;
                }
            }
            let n = vectors.len() as f64;
            df.iter().map(|&x| (n / x as f64).ln() + 1.0).collect::<Vec<f64>>()
        });
        if let Some(idf) = &idf {
            for v in &mut vectors {
                for (d, w) in v.iter_mut() {
                    *w *= idf[*d];
                }
            }
        }

        let mut postings = vec![Vec::new(); term_index.len()];
        for (i, v) in vectors.iter().enumerate() {
            for &(d, w) in v {
                postings[d].push((i, w));
            }
        }
        Ok(BowIndex {
            norms: vectors.iter().map(|v| norm(v)).collect(),
            term_index,
            idf,
            vectors,
            postings,
            messages: train.commits.iter().map(|c| c.msg_tokens.clone()).collect(),
            diffs: train.commits.iter().map(|c| c.diff_tokens.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.term_index.len()
    }

    pub fn vector(&self, id: usize) -> &[(usize, f64)] {
        &self.vectors[id]
    }

    pub fn message(&self, id: usize) -> &[String] {
        &self.messages[id]
    }

    pub fn diff(&self, id: usize) -> &[String] {
        &self.diffs[id]
    }

    /// Query vector over the index dimensions; unseen tokens are ignored.
    pub fn query_vector<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut v = to_sparse(term_counts(tokens, &self.term_index));
        if let Some(idf) = &self.idf {
            for (d, w) in v.iter_mut() {
                *w *= idf[*d];
            }
        }
        v
    }

    /// Cosine similarity of `query` against every example with a nonzero score.
    pub fn similarities(&self, query: &[(usize, f64)]) -> HashMap<usize, f64> {
        let qn = norm(query);
        let mut dots: HashMap<usize, f64> = HashMap::new();
        if qn == 0.0 {
            return dots;
        }
        for &(d, qw) in query {
            for &(i, w) in &self.postings[d] {
                *dots.entry(i).or_insert(0.0) += qw * w;
            }
        }
        for (i, dot) in dots.iter_mut() {
            *dot /= qn * self.norms[*i];
        }
        dots
    }

    /// The `k` most similar examples, by similarity then lower id.
    pub fn top_k(&self, query: &[(usize, f64)], k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self.similarities(query).into_iter().collect();
        scored.sort_by(|a, b| by_similarity(*a, *b));
        scored.truncate(k);
        scored
    }

    pub fn generate<S: AsRef<str>>(&self, query_diff: &[S], k: usize) -> Result<Retrieval, NngenError> {
        if k == 0 || k > self.len() {
            return Err(NngenError::BadK { k, size: self.len() });
        }
        let candidates = self.top_k(&self.query_vector(query_diff), k);
        if candidates.is_empty() {
            return Ok(Retrieval {
                message: self.messages[0].clone(),
                train_id: 0,
                cosine: 0.0,
                bleu: 0.0,
                degenerate: true,
            });
        }
        let (train_id, cosine, bleu) = candidates
            .into_iter()
            .map(|(id, cos)| (id, cos, sentence_bleu(query_diff, &self.diffs[id])))
            .min_by(|a, b| rerank_order(*a, *b))
            .expect("non-empty candidate list");
        Ok(Retrieval {
            message: self.messages[train_id].clone(),
            train_id,
            cosine,
            bleu,
            degenerate: false,
        })
    }
}

/// Descending similarity, then ascending id.
pub fn by_similarity(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Descending BLEU, then descending cosine, then ascending id.
pub fn rerank_order(a: (usize, f64, f64), b: (usize, f64, f64)) -> Ordering {
    b.2.total_cmp(&a.2)
        .then(b.1.total_cmp(&a.1))
        .then(a.0.cmp(&b.0))
}

pub fn generate_nngen<S: AsRef<str>>(
    index: &BowIndex,
    query_diff: &[S],
    k: usize,
) -> Result<Retrieval, NngenError> {
    index.generate(query_diff, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Commit;

    fn split(rows: &[(&str, &str)]) -> CorpusSplit {
        CorpusSplit::new(
            "train",
            rows.iter()
                .enumerate()
                .map(|(i, (d, m))| {
                    Commit::new(
                        i,
                        d.split_whitespace().map(String::from).collect(),
                        m.split_whitespace().map(String::from).collect(),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn disjoint_vectors_are_orthogonal() {
        let idx = BowIndex::build(&split(&[("a b", "m0"), ("c d", "m1")])).unwrap();
        let q = idx.query_vector(&["a", "b"]);
        let sims = idx.similarities(&q);
        assert!(!sims.contains_key(&1));
        assert!((sims[&0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_share_vectors() {
        let idx = BowIndex::build(&split(&[("a b a", "m0"), ("a b a", "m1")])).unwrap();
        assert_eq!(idx.vector(0), idx.vector(1));
        // tie on both stages: lower id wins
        assert_eq!(idx.generate(&["a", "b", "a"], 2).unwrap().train_id, 0);
    }

    #[test]
    fn self_retrieval() {
        let rows = [
            ("fix parser null check", "m0"),
            ("update readme links", "m1"),
            ("bump gradle version", "m2"),
        ];
        let idx = BowIndex::build(&split(&rows)).unwrap();
        let r = idx.generate(&["update", "readme", "links"], 3).unwrap();
        assert_eq!(r.message, vec!["m1"]);
        let only = idx.generate(&["gradle"], 3).unwrap();
        assert_eq!(only.train_id, 2);
    }

    #[test]
    fn no_overlap_is_degenerate() {
        let idx = BowIndex::build(&split(&[("a", "m0"), ("b", "m1")])).unwrap();
        let r = idx.generate(&["zzz"], 1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.train_id, 0);
        assert!(idx.generate(&["a"], 3).is_err());
    }

    #[test]
    fn idf_variant_downweights_common_terms() {
        let rows = [("x a", "m0"), ("x b", "m1"), ("x c", "m2")];
        let tf = BowIndex::build(&split(&rows)).unwrap();
        let idf = BowIndex::build_with(&split(&rows), Weighting::TfIdf).unwrap();
        let q_tf = tf.query_vector(&["x", "b"]);
        let q_idf = idf.query_vector(&["x", "b"]);
        assert!(idf.similarities(&q_idf)[&0] < tf.similarities(&q_tf)[&0]);
    }
}
