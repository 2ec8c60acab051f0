//! BLEU-4 scoring, per-file-type reports and token frequency listings.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{count_tokens, CorpusSplit, FileType, Side};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{path}: {reason}")]
    BadReport { path: PathBuf, reason: String },
}

impl EvalError {
    pub fn category(&self) -> &'static str {
        match self {
            EvalError::EmptyCorpus => "EmptyCorpus",
            EvalError::LengthMismatch { .. } => "LengthMismatch",
            EvalError::Io(..) => "Io",
            EvalError::BadReport { .. } => "BadReport",
        }
    }
}

/// Clipped n-gram statistics for one or more hypothesis/reference pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_pair<S: AsRef<str>, T: AsRef<str>>(hypothesis: &[S], reference: &[T]) -> Self {
        let hyp: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
        let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: refr.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(&refr, n);
            let hyp_counts = ngram_counts(&hyp, n);
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        })
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// Unsmoothed BLEU-4 in [0, 100].
    pub fn bleu(&self) -> f64 {
        let p = self.precisions();
        if p.iter().any(|&x| x == 0.0) {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }

    /// BLEU-4 with add-one smoothing on orders above 1. Diagnostics only.
    pub fn smoothed_bleu(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let log_mean = (0..MAX_ORDER)
            .map(|n| {
                let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
                if n == 0 {
                    (m / t).ln()
                } else {
                    ((m + 1.0) / (t + 1.0)).ln()
                }
            })
            .sum::<f64>()
            / MAX_ORDER as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub count: usize,
    pub bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub corpus_bleu: f64,
    pub brevity_penalty: f64,
    pub ngram_precisions: [f64; MAX_ORDER],
    pub count: usize,
    pub per_type: BTreeMap<FileType, TypeScore>,
}

impl BleuReport {
    fn from_stats(stats: &BleuStats, count: usize) -> Self {
        BleuReport {
            corpus_bleu: stats.bleu(),
            brevity_penalty: stats.brevity_penalty(),
            ngram_precisions: stats.precisions(),
            count,
            per_type: BTreeMap::new(),
        }
    }

    /// Tab-separated rows `type count bleu4`, closing with an `ALL` row.
    /// A `# run_id` comment line comes first when given.
    pub fn to_tsv(&self, run_id: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(id) = run_id {
            let _ = writeln!(s, "# run_id\t{id}");
        }
        for (ft, score) in &self.per_type {
            let _ = writeln!(s, "{}\t{}\t{:.4}", ft, score.count, score.bleu);
        }
        let _ = writeln!(s, "ALL\t{}\t{:.4}", self.count, self.corpus_bleu);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>7} {:>8}", "type", "count", "BLEU-4");
        for (ft, score) in &self.per_type {
            let _ = writeln!(s, "{:<12} {:>7} {:>8.2}", ft.as_str(), score.count, score.bleu);
        }
        let _ = writeln!(s, "{:<12} {:>7} {:>8.2}", "ALL", self.count, self.corpus_bleu);
        let p = self.ngram_precisions;
        let _ = writeln!(
            s,
            "BP {:.4}  p1..p4 {:.4} {:.4} {:.4} {:.4}",
            self.brevity_penalty, p[0], p[1], p[2], p[3]
        );
        s
    }

    pub fn save_tsv(&self, path: &Path, run_id: Option<&str>) -> Result<(), EvalError> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(self.to_tsv(run_id).as_bytes()))
            .map_err(|e| EvalError::Io(path.to_path_buf(), e))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), EvalError> {
    if expected == got {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { what, expected, got })
    }
}

/// Corpus-level BLEU-4 with a single reference per hypothesis.
pub fn corpus_bleu<S, T>(hypotheses: &[Vec<S>], references: &[Vec<T>]) -> Result<BleuReport, EvalError>
where
    S: AsRef<str>,
    T: AsRef<str>,
{
    check_len("references", hypotheses.len(), references.len())?;
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(&BleuStats::from_pair(h, r));
    }
    Ok(BleuReport::from_stats(&stats, hypotheses.len()))
}

pub fn sentence_bleu<S: AsRef<str>, T: AsRef<str>>(hypothesis: &[S], reference: &[T]) -> f64 {
    BleuStats::from_pair(hypothesis, reference).bleu()
}

pub fn smoothed_sentence_bleu<S: AsRef<str>, T: AsRef<str>>(hypothesis: &[S], reference: &[T]) -> f64 {
    BleuStats::from_pair(hypothesis, reference).smoothed_bleu()
}

/// Corpus BLEU overall and within each file type. Types with no examples
/// are left out of `per_type`.
pub fn per_type_bleu<S, T>(
    hypotheses: &[Vec<S>],
    references: &[Vec<T>],
    types: &[FileType],
) -> Result<BleuReport, EvalError>
where
    S: AsRef<str>,
    T: AsRef<str>,
{
    check_len("types", hypotheses.len(), types.len())?;
    let mut report = corpus_bleu(hypotheses, references)?;
    let mut groups: BTreeMap<FileType, (BleuStats, usize)> = BTreeMap::new();
    for ((h, r), ft) in hypotheses.iter().zip(references).zip(types) {
        let g = groups.entry(*ft).or_default();
        g.0.add(&BleuStats::from_pair(h, r));
        g.1 += 1;
    }
    report.per_type = groups
        .into_iter()
        .map(|(ft, (stats, count))| (ft, TypeScore { count, bleu: stats.bleu() }))
        .collect();
    Ok(report)
}

/// Row of a parsed TSV report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub count: usize,
    pub bleu: f64,
}

pub fn parse_report_tsv(path: &Path) -> Result<Vec<ReportRow>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(path.to_path_buf(), e))?;
    let bad = |reason: String| EvalError::BadReport {
        path: path.to_path_buf(),
        reason,
    };
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields in {line:?}")));
        }
        rows.push(ReportRow {
            label: f[0].to_string(),
            count: f[1].parse().map_err(|_| bad(format!("bad count in {line:?}")))?,
            bleu: f[2].parse().map_err(|_| bad(format!("bad score in {line:?}")))?,
        });
    }
    Ok(rows)
}

/// Mean score per label across several runs, in first-seen label order.
/// Labels missing from some runs are averaged over the runs that have them.
pub fn aggregate(runs: &[Vec<ReportRow>]) -> Vec<ReportRow> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, (f64, usize, usize)> = HashMap::new();
    for row in runs.iter().flatten() {
        let e = acc.entry(row.label.clone()).or_insert_with(|| {
            order.push(row.label.clone());
            (0.0, 0, row.count)
        });
        e.0 += row.bleu;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|label| {
            let (sum, n, count) = acc[&label];
            ReportRow {
                label,
                count,
                bleu: sum / n as f64,
            }
        })
        .collect()
}

/// Top `top_n` tokens by count, ties in lexicographic order.
pub fn token_frequency_report(split: &CorpusSplit, side: Side, top_n: usize) -> Vec<(String, u64)> {
    let mut ranked: Vec<(String, u64)> = count_tokens(split, side).into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    ranked
}
