//! Parallel diff/message corpora.
//!
//! A corpus split is a pair of line-aligned files, `<split>.diff` and
//! `<split>.msg`, with one whitespace-tokenized example per line. Newlines
//! inside a diff are encoded by the `<nl>` token.

mod filetype;
mod vocab;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use filetype::{classify_file_type, header_basename, FileType, Scenario, UnknownFileType};
pub use vocab::{
    build_vocabulary, count_tokens, escape_token, reduce_vocabulary, unescape_token, Reduction,
    Vocabulary, BOS, BOS_ID, EOS, EOS_ID, ESCAPE, PAD, PAD_ID, SPECIALS, UNK, UNK_ID,
};

/// Newline sentinel used inside diffs.
pub const NEWLINE: &str = "<nl>";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line count mismatch: {diff_path} has {diff_lines} lines, {msg_path} has {msg_lines}")]
    LineCountMismatch {
        diff_path: PathBuf,
        msg_path: PathBuf,
        diff_lines: usize,
        msg_lines: usize,
    },
    #[error("empty {side} on line {line}")]
    EmptyExample { line: usize, side: Side },
    #[error("no token of the {side} side of split '{split}' survives the thresholds")]
    EmptyVocabulary { split: String, side: Side },
    #[error("{path}: malformed vocabulary: {reason}")]
    BadVocabulary { path: PathBuf, reason: String },
    #[error("{0}")]
    InvalidArgument(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            CorpusError::Io { .. } => "Io",
            CorpusError::LineCountMismatch { .. } => "LineCountMismatch",
            CorpusError::EmptyExample { .. } => "EmptyExample",
            CorpusError::EmptyVocabulary { .. } => "EmptyVocabulary",
            CorpusError::BadVocabulary { .. } => "BadVocabulary",
            CorpusError::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

/// Which side of a parallel example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Diff,
    Msg,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Diff => "diff",
            Side::Msg => "msg",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diff" => Ok(Side::Diff),
            "msg" => Ok(Side::Msg),
            _ => Err(CorpusError::InvalidArgument(format!("unknown side '{s}'"))),
        }
    }
}

/// One diff with its reference message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    /// Ordinal within the split it was loaded from.
    pub id: usize,
    pub diff_tokens: Vec<String>,
    pub msg_tokens: Vec<String>,
    pub file_type: FileType,
}

impl Commit {
    pub fn new(id: usize, diff_tokens: Vec<String>, msg_tokens: Vec<String>) -> Self {
        let file_type = classify_file_type(&diff_tokens);
        Commit {
            id,
            diff_tokens,
            msg_tokens,
            file_type,
        }
    }

    pub fn tokens(&self, side: Side) -> &[String] {
        match side {
            Side::Diff => &self.diff_tokens,
            Side::Msg => &self.msg_tokens,
        }
    }
}

/// Non-fatal observations made while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Diffs without a leading `diff` header (classified as Others).
    pub missing_headers: usize,
    /// One-based line numbers skipped under `skip_empty`.
    pub skipped_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub name: String,
    pub commits: Vec<Commit>,
    pub diagnostics: Diagnostics,
}

impl CorpusSplit {
    pub fn new(name: impl Into<String>, commits: Vec<Commit>) -> Self {
        CorpusSplit {
            name: name.into(),
            commits,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    /// Writes `<prefix>.diff` and `<prefix>.msg`.
    pub fn write(&self, prefix: &Path) -> Result<(), CorpusError> {
        let (dp, mp) = split_paths(prefix);
        write_lines(&dp, self.commits.iter().map(|c| c.diff_tokens.join(" ")))?;
        write_lines(&mp, self.commits.iter().map(|c| c.msg_tokens.join(" ")))
    }
}

/// `<prefix>.diff` and `<prefix>.msg`.
pub fn split_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let mut d = prefix.as_os_str().to_owned();
    d.push(".diff");
    let mut m = prefix.as_os_str().to_owned();
    m.push(".msg");
    (PathBuf::from(d), PathBuf::from(m))
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let f = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads a file of whitespace-tokenized lines.
pub fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>, CorpusError> {
    let f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    BufReader::new(f)
        .lines()
        .map(|l| {
            l.map(|l| l.split_whitespace().map(String::from).collect())
                .map_err(|e| CorpusError::io(path, e))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip blank examples instead of failing.
    pub skip_empty: bool,
}

/// Loads a line-aligned diff/message pair as one split.
pub fn load_parallel_corpus(
    diff_path: &Path,
    msg_path: &Path,
    split_name: &str,
    options: LoadOptions,
) -> Result<CorpusSplit, CorpusError> {
    let diffs = read_token_lines(diff_path)?;
    let msgs = read_token_lines(msg_path)?;
    if diffs.len() != msgs.len() {
        return Err(CorpusError::LineCountMismatch {
            diff_path: diff_path.to_path_buf(),
            msg_path: msg_path.to_path_buf(),
            diff_lines: diffs.len(),
            msg_lines: msgs.len(),
        });
    }
    let mut diagnostics = Diagnostics::default();
    let mut commits = Vec::with_capacity(diffs.len());
    for (n, (diff, msg)) in diffs.into_iter().zip(msgs).enumerate() {
        let empty_side = if diff.is_empty() {
            Some(Side::Diff)
        } else if msg.is_empty() {
            Some(Side::Msg)
        } else {
            None
        };
        if let Some(side) = empty_side {
            if options.skip_empty {
                log::warn!("skipping empty {side} on line {}", n + 1);
                diagnostics.skipped_lines.push(n + 1);
                continue;
            }
            return Err(CorpusError::EmptyExample { line: n + 1, side });
        }
        if header_basename(&diff).is_none() {
            diagnostics.missing_headers += 1;
        }
        commits.push(Commit::new(commits.len(), diff, msg));
    }
    Ok(CorpusSplit {
        name: split_name.to_string(),
        commits,
        diagnostics,
    })
}

/// Loads `<prefix>.diff` / `<prefix>.msg`, naming the split after the file stem.
pub fn load_prefix(prefix: &Path, options: LoadOptions) -> Result<CorpusSplit, CorpusError> {
    let (d, m) = split_paths(prefix);
    let name = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_parallel_corpus(&d, &m, &name, options)
}

/// Partitions a split by file type. Types outside the scenario go to
/// Others; empty groups are omitted. Commit ids are preserved.
pub fn split_by_file_type(split: &CorpusSplit, scenario: Scenario) -> BTreeMap<FileType, CorpusSplit> {
    let mut out: BTreeMap<FileType, CorpusSplit> = BTreeMap::new();
    for c in &split.commits {
        let label = scenario.route(c.file_type);
        out.entry(label)
            .or_insert_with(|| CorpusSplit::new(format!("{}.{}", split.name, label), Vec::new()))
            .commits
            .push(c.clone());
    }
    out
}

pub const DEFAULT_MAX_DIFF: usize = 100;
pub const DEFAULT_MAX_MSG: usize = 30;

/// Keeps the first `max_diff` diff tokens and `max_msg` message tokens.
pub fn truncate_sequences(commit: &Commit, max_diff: usize, max_msg: usize) -> Commit {
    assert!(max_diff >= 1 && max_msg >= 1, "truncation limits must be positive");
    Commit {
        id: commit.id,
        diff_tokens: commit.diff_tokens.iter().take(max_diff).cloned().collect(),
        msg_tokens: commit.msg_tokens.iter().take(max_msg).cloned().collect(),
        file_type: commit.file_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, lines: &[&str]) {
        std::fs::write(path, lines.join("\n") + "\n").unwrap();
    }

    #[test]
    fn loads_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("t.diff");
        let m = dir.path().join("t.msg");
        write(
            &d,
            &[
                "diff --git a/A.java b/A.java <nl> + int x ;",
                "diff --git a/pom.xml b/pom.xml <nl> + <a>",
                "no header here",
            ],
        );
        write(&m, &["add x", "bump pom", "misc"]);
        let s = load_parallel_corpus(&d, &m, "train", LoadOptions::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.commits.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(s.commits[0].file_type, FileType::Java);
        assert_eq!(s.commits[1].file_type, FileType::Xml);
        assert_eq!(s.commits[2].file_type, FileType::Others);
        assert_eq!(s.diagnostics.missing_headers, 1);
        assert_eq!(s.commits[0].diff_tokens[4], NEWLINE);
    }

    #[test]
    fn mismatched_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("t.diff");
        let m = dir.path().join("t.msg");
        write(&d, &["a", "b", "c", "d", "e"]);
        write(&m, &["a", "b", "c", "d"]);
        let err = load_parallel_corpus(&d, &m, "t", LoadOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::LineCountMismatch {
                diff_lines: 5,
                msg_lines: 4,
                ..
            }
        ));
        assert_eq!(err.category(), "LineCountMismatch");
    }

    #[test]
    fn empty_examples() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("t.diff");
        let m = dir.path().join("t.msg");
        write(&d, &["diff a", "diff b", "diff c"]);
        write(&m, &["x", "   ", "z"]);
        let err = load_parallel_corpus(&d, &m, "t", LoadOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::EmptyExample {
                line: 2,
                side: Side::Msg
            }
        ));
        let s = load_parallel_corpus(&d, &m, "t", LoadOptions { skip_empty: true }).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.diagnostics.skipped_lines, vec![2]);
        assert_eq!(s.commits[1].msg_tokens, vec!["z"]);
        assert_eq!(s.commits[1].id, 1);
    }

    #[test]
    fn partition_by_type() {
        let mut commits = Vec::new();
        for i in 0..10 {
            let path = if i < 4 { "A.java" } else { "a.groovy" };
            let diff = format!("diff --git a/{path} b/{path}");
            commits.push(Commit::new(
                i,
                diff.split(' ').map(String::from).collect(),
                vec!["m".into()],
            ));
        }
        let split = CorpusSplit::new("train", commits);
        let parts = split_by_file_type(&split, Scenario::Top9);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[&FileType::Java].len(), 4);
        assert_eq!(parts[&FileType::Others].len(), 6);
        assert_eq!(parts[&FileType::Others].commits[0].id, 4);
    }

    #[test]
    fn truncation() {
        let c = Commit::new(
            0,
            (0..150).map(|i| i.to_string()).collect(),
            (0..40).map(|i| i.to_string()).collect(),
        );
        let t = truncate_sequences(&c, DEFAULT_MAX_DIFF, DEFAULT_MAX_MSG);
        assert_eq!(t.diff_tokens.len(), 100);
        assert_eq!(t.msg_tokens.len(), 30);
        assert_eq!(t.diff_tokens[..], c.diff_tokens[..100]);
        let short = Commit::new(0, vec!["a".into(); 20], vec!["m".into()]);
        assert_eq!(truncate_sequences(&short, 100, 30), short);
    }
}
