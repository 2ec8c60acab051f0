//! Rule-based Java sketch encoding.
//!
//! Java diffs are reduced to a sketch before translation: lexemes that carry
//! no naming information are stripped, identifiers are classified by Java
//! naming conventions and replaced by indexed placeholders (`CLASS_0`,
//! `FUNC_1`, ...). Occurrences of the same identifiers in the message get the
//! same placeholders. After translation the per-example dictionary maps the
//! placeholders back to names.

mod strip;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Commit;

pub use strip::{is_numeric_literal, java_keywords, strip_java_lexemes, Stripped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentifierKind {
    Constant,
    Class,
    Function,
    Variable,
}

impl IdentifierKind {
    pub const ALL: [IdentifierKind; 4] = [
        IdentifierKind::Constant,
        IdentifierKind::Class,
        IdentifierKind::Function,
        IdentifierKind::Variable,
    ];

    /// Placeholder stem.
    pub fn prefix(self) -> &'static str {
        match self {
            IdentifierKind::Constant => "CONST",
            IdentifierKind::Class => "CLASS",
            IdentifierKind::Function => "FUNC",
            IdentifierKind::Variable => "VAR",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<IdentifierKind> {
        IdentifierKind::ALL.into_iter().find(|k| k.prefix() == prefix)
    }
}

impl fmt::Display for IdentifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

fn is_identifier(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

/// Classifies a token by Java naming conventions. `next` is the following
/// token in the stream; a `(` there marks a function.
///
/// Rules apply in order: all upper case, digits and underscores means
/// constant; upper-case start with a later lower-case letter means class;
/// a lower-case start means function if followed by `(`, else variable.
pub fn classify_identifier(token: &str, next: Option<&str>) -> Option<IdentifierKind> {
    if !is_identifier(token) {
        return None;
    }
    let first = token.chars().next()?;
    if token.chars().any(char::is_uppercase)
        && token
            .chars()
            .all(|c| c.is_uppercase() || c.is_ascii_digit() || c == '_')
    {
        return Some(IdentifierKind::Constant);
    }
    if first.is_uppercase() {
        return token
            .chars()
            .skip(1)
            .any(char::is_lowercase)
            .then_some(IdentifierKind::Class);
    }
    if first.is_lowercase() {
        return Some(if next == Some("(") {
            IdentifierKind::Function
        } else {
            IdentifierKind::Variable
        });
    }
    None
}

/// How placeholders are named.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceholderStyle {
    /// `KIND_i`, one per distinct identifier, indexed by first appearance.
    #[default]
    Indexed,
    /// A single `KIND` token per kind. The dictionary then keeps only the
    /// first identifier of each kind and is not injective.
    Shared,
}

/// Parses a placeholder token (`FUNC_3`, or `FUNC` in the shared style).
pub fn parse_placeholder(token: &str) -> Option<(IdentifierKind, Option<usize>)> {
    match token.split_once('_') {
        Some((stem, idx)) => {
            let kind = IdentifierKind::from_prefix(stem)?;
            if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((kind, Some(idx.parse().ok()?)))
        }
        None => IdentifierKind::from_prefix(token).map(|k| (k, None)),
    }
}

pub fn is_placeholder(token: &str) -> bool {
    parse_placeholder(token).is_some()
}

/// Mapping from placeholders to the identifiers they replaced in one example.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderDictionary {
    pub example_id: usize,
    pub entries: BTreeMap<String, String>,
}

impl PlaceholderDictionary {
    pub fn new(example_id: usize) -> Self {
        PlaceholderDictionary {
            example_id,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, placeholder: &str) -> Option<&str> {
        self.entries.get(placeholder).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Identifiers in placeholder order.
    pub fn names(&self) -> Vec<String> {
        self.entries.values().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchExample {
    pub sketched_diff: Vec<String>,
    pub sketched_msg: Vec<String>,
    pub dictionary: PlaceholderDictionary,
    /// Every classified identifier of the diff, in first-appearance order.
    pub diff_names: Vec<String>,
    pub unterminated_spans: usize,
}

/// Sketches a Java commit with indexed placeholders.
pub fn encode_sketch(commit: &Commit) -> SketchExample {
    encode_sketch_with(commit, PlaceholderStyle::Indexed)
}

pub fn encode_sketch_with(commit: &Commit, style: PlaceholderStyle) -> SketchExample {
    let stripped = strip_java_lexemes(&commit.diff_tokens);
    let tokens = stripped.tokens;

    let mut by_name: HashMap<String, String> = HashMap::new();
    let mut next_index = [0usize; 4];
    let mut dictionary = PlaceholderDictionary::new(commit.id);
    let mut diff_names = Vec::new();
    let mut sketched_diff = Vec::with_capacity(tokens.len());

    for (i, tok) in tokens.iter().enumerate() {
        if let Some(ph) = by_name.get(tok) {
            sketched_diff.push(ph.clone());
            continue;
        }
        let next = tokens.get(i + 1).map(String::as_str);
        let Some(kind) = classify_identifier(tok, next) else {
            sketched_diff.push(tok.clone());
            continue;
        };
        let slot = &mut next_index[kind as usize];
        let placeholder = match style {
            PlaceholderStyle::Indexed => format!("{}_{}", kind.prefix(), *slot),
            PlaceholderStyle::Shared => kind.prefix().to_string(),
        };
        *slot += 1;
        dictionary
            .entries
            .entry(placeholder.clone())
            .or_insert_with(|| tok.clone());
        diff_names.push(tok.clone());
        by_name.insert(tok.clone(), placeholder.clone());
        sketched_diff.push(placeholder);
    }

    let sketched_msg = commit
        .msg_tokens
        .iter()
        .map(|t| by_name.get(t).cloned().unwrap_or_else(|| t.clone()))
        .collect();

    SketchExample {
        sketched_diff,
        sketched_msg,
        dictionary,
        diff_names,
        unterminated_spans: stripped.unterminated_spans,
    }
}

/// Restores identifiers in a predicted message.
///
/// A placeholder found in the dictionary becomes its identifier; otherwise a
/// name drawn uniformly from `diff_names` (seeded by `rng_seed`); otherwise
/// it is dropped. Other tokens pass through.
pub fn decode_sketch<S: AsRef<str>>(
    predicted_msg: &[S],
    dictionary: &PlaceholderDictionary,
    diff_names: &[String],
    rng_seed: u64,
) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(predicted_msg.len());
    for tok in predicted_msg {
        let tok = tok.as_ref();
        if !is_placeholder(tok) {
            out.push(tok.to_string());
            continue;
        }
        if let Some(name) = dictionary.get(tok) {
            out.push(name.to_string());
        } else if !diff_names.is_empty() {
            out.push(diff_names[rng.gen_range(0..diff_names.len())].clone());
        }
    }
    out
}

/// Per-example generator seed derived from a run seed.
pub fn example_seed(seed: u64, example_id: usize) -> u64 {
    seed ^ (example_id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, thiserror::Error)]
pub enum SketchError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{path}:{line}: malformed dictionary line")]
    BadDictionaryLine { path: PathBuf, line: usize },
}

impl SketchError {
    pub fn category(&self) -> &'static str {
        match self {
            SketchError::Io(..) => "Io",
            SketchError::BadDictionaryLine { .. } => "BadDictionaryLine",
        }
    }
}

/// Writes the dictionary sidecar: `example_id<TAB>placeholder<TAB>identifier`
/// lines sorted by example id, then placeholder (byte order).
pub fn write_dictionaries<'a, W, I>(mut w: W, dictionaries: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a PlaceholderDictionary>,
{
    let mut dicts: Vec<&PlaceholderDictionary> = dictionaries.into_iter().collect();
    dicts.sort_by_key(|d| d.example_id);
    for d in dicts {
        for (ph, name) in &d.entries {
            writeln!(w, "{}\t{}\t{}", d.example_id, ph, name)?;
        }
    }
    Ok(())
}

pub fn save_dictionaries<'a, I>(path: &Path, dictionaries: I) -> Result<(), SketchError>
where
    I: IntoIterator<Item = &'a PlaceholderDictionary>,
{
    let io = |e| SketchError::Io(path.to_path_buf(), e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_dictionaries(&mut w, dictionaries).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads a dictionary sidecar keyed by example id.
pub fn load_dictionaries(path: &Path) -> Result<BTreeMap<usize, PlaceholderDictionary>, SketchError> {
    let io = |e| SketchError::Io(path.to_path_buf(), e);
    let f = File::open(path).map_err(io)?;
    let mut out: BTreeMap<usize, PlaceholderDictionary> = BTreeMap::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.is_empty() {
            continue;
        }
        let bad = || SketchError::BadDictionaryLine {
            path: path.to_path_buf(),
            line: n + 1,
        };
        let mut parts = line.split('\t');
        let (Some(id), Some(ph), Some(name), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let id: usize = id.parse().map_err(|_| bad())?;
        out.entry(id)
            .or_insert_with(|| PlaceholderDictionary::new(id))
            .entries
            .insert(ph.to_string(), name.to_string());
    }
    Ok(out)
}
