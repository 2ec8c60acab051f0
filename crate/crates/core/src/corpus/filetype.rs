use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// File type of the single file touched by a diff.
///
/// The nine named labels are the most frequent types of the training corpus;
/// everything else (including `.js` and `.groovy`) is [`FileType::Others`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FileType {
    Java,
    Gitrepo,
    Xml,
    Gradle,
    Md,
    Gitignore,
    Properties,
    Txt,
    Yml,
    Others,
}

impl FileType {
    pub const ALL: [FileType; 10] = [
        FileType::Java,
        FileType::Gitrepo,
        FileType::Xml,
        FileType::Gradle,
        FileType::Md,
        FileType::Gitignore,
        FileType::Properties,
        FileType::Txt,
        FileType::Yml,
        FileType::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FileType::Java => "Java",
            FileType::Gitrepo => "Gitrepo",
            FileType::Xml => "Xml",
            FileType::Gradle => "Gradle",
            FileType::Md => "Md",
            FileType::Gitignore => "Gitignore",
            FileType::Properties => "Properties",
            FileType::Txt => "Txt",
            FileType::Yml => "Yml",
            FileType::Others => "Others",
        }
    }

    /// Classifies a file by its basename.
    pub fn from_basename(basename: &str) -> FileType {
        let lower = basename.to_ascii_lowercase();
        match lower.as_str() {
            ".gitignore" => return FileType::Gitignore,
            ".gitrepo" => return FileType::Gitrepo,
            _ => {}
        }
        let ext = match lower.rfind('.') {
            Some(pos) if pos > 0 => &lower[pos + 1..],
            _ => return FileType::Others,
        };
        match ext {
            "java" => FileType::Java,
            "xml" => FileType::Xml,
            "gradle" => FileType::Gradle,
            "md" => FileType::Md,
            "properties" => FileType::Properties,
            "txt" => FileType::Txt,
            "yml" | "yaml" => FileType::Yml,
            _ => FileType::Others,
        }
    }
}

impl fmt::Display for FileType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown file type label '{0}'")]
pub struct UnknownFileType(pub String);

impl FromStr for FileType {
    type Err = UnknownFileType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FileType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownFileType(s.to_string()))
    }
}

/// Which file types get their own dataset when splitting a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Gitrepo, Gradle, Java, Md and Xml.
    Top5,
    /// All nine named types.
    Top9,
}

impl Scenario {
    pub fn keeps(self, file_type: FileType) -> bool {
        match self {
            Scenario::Top5 => matches!(
                file_type,
                FileType::Gitrepo | FileType::Gradle | FileType::Java | FileType::Md | FileType::Xml
            ),
            Scenario::Top9 => file_type != FileType::Others,
        }
    }

    /// Label a commit of `file_type` is grouped under.
    pub fn route(self, file_type: FileType) -> FileType {
        if self.keeps(file_type) {
            file_type
        } else {
            FileType::Others
        }
    }
}

impl FromStr for Scenario {
    type Err = UnknownFileType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "top5" => Ok(Scenario::Top5),
            "top9" => Ok(Scenario::Top9),
            _ => Err(UnknownFileType(s.to_string())),
        }
    }
}

const NEWLINE: &str = "<nl>";

/// Extracts the basename of the file named by the first `diff` header.
///
/// The header may have been split by the corpus tokenizer
/// (`diff --git a / src / Main . java b / src / Main . java`), so the header
/// tokens are glued back together and the text after the last `/` is taken.
/// Returns `None` when the sequence does not start with a header.
pub fn header_basename<S: AsRef<str>>(diff_tokens: &[S]) -> Option<String> {
    let mut iter = diff_tokens.iter().map(AsRef::as_ref);
    if iter.next()? != "diff" {
        return None;
    }
    let joined: String = iter
        .take_while(|t| *t != NEWLINE)
        .filter(|t| !t.starts_with("--"))
        .collect();
    if joined.is_empty() {
        return None;
    }
    let basename = match joined.rfind('/') {
        Some(pos) => &joined[pos + 1..],
        None => joined.as_str(),
    };
    if basename.is_empty() {
        None
    } else {
        Some(basename.to_string())
    }
}

/// Maps a diff to the file type of the file it changes.
///
/// Total: headerless diffs classify as [`FileType::Others`]; use
/// [`header_basename`] to detect that case.
pub fn classify_file_type<S: AsRef<str>>(diff_tokens: &[S]) -> FileType {
    header_basename(diff_tokens)
        .map(|name| FileType::from_basename(&name))
        .unwrap_or(FileType::Others)
}
