use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::NEWLINE;

const KEYWORDS_V1: &str = include_str!("../../data/java_keywords_v1.txt");

/// The pinned Java keyword list (reserved words plus `true`, `false`, `null`).
pub fn java_keywords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        KEYWORDS_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

fn numeric_literal() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?:0[xX][0-9a-fA-F_]+[lL]?|0[bB][01_]+[lL]?|(?:[0-9][0-9_]*\.?[0-9_]*|\.[0-9][0-9_]*)(?:[eE][+-]?[0-9]+)?[fFdDlL]?)$",
        )
        .unwrap()
    })
}

pub fn is_numeric_literal(token: &str) -> bool {
    token.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        && token != "."
        && numeric_literal().is_match(token)
}

/// Output of [`strip_java_lexemes`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stripped {
    pub tokens: Vec<String>,
    /// Comments or string literals still open at the end of the diff.
    pub unterminated_spans: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    BlockComment,
    Literal(char),
    Statement,
}

fn is_metadata_line(line: &[&str]) -> bool {
    let first = match line.first() {
        Some(t) => *t,
        None => return false,
    };
    let second = line.get(1).copied().unwrap_or("");
    match first {
        "diff" => second.starts_with("--") || second.is_empty(),
        "index" => second.contains(".."),
        "---" | "+++" | "mmm" | "ppp" => true,
        "new" | "deleted" => second == "file" || second == "mode",
        "old" => second == "mode",
        "similarity" | "dissimilarity" => second == "index",
        "rename" | "copy" => second == "from" || second == "to",
        "Binary" => second == "files",
        "\\" => second == "No",
        _ => false,
    }
}

/// Length of the hunk marker (`@@ ... @@`, possibly split into single `@`s)
/// at the start of a line, if the line is a hunk header.
fn hunk_marker_len(line: &[&str]) -> Option<usize> {
    if line.first() == Some(&"@@") {
        let close = line.iter().skip(1).position(|t| *t == "@@")?;
        return Some(close + 2);
    }
    if line.len() >= 2 && line[0] == "@" && line[1] == "@" {
        let close = line[2..].windows(2).position(|w| w[0] == "@" && w[1] == "@")?;
        return Some(close + 4);
    }
    None
}

/// True if `token` ends with an unescaped `quote`.
fn closes_literal(token: &str, quote: char) -> bool {
    if !token.ends_with(quote) {
        return false;
    }
    let body = &token[..token.len() - quote.len_utf8()];
    let backslashes = body.chars().rev().take_while(|c| *c == '\\').count();
    backslashes % 2 == 0
}

struct Stripper {
    state: State,
    out: Vec<String>,
}

impl Stripper {
    fn drop_literal_initializer(&mut self, line_start: usize) {
        if self.out.len() > line_start && self.out.last().map(String::as_str) == Some("=") {
            self.out.pop();
        }
    }

    /// Processes the code part of one line. Returns true when the line had
    /// content and all of it was removed.
    fn code(&mut self, content: &[&str]) -> bool {
        let line_start = self.out.len();
        if self.state == State::Statement {
            self.state = State::Code;
        }
        let mut skip_next = false;
        for (i, &tok) in content.iter().enumerate() {
            if skip_next {
                skip_next = false;
                continue;
            }
            match self.state {
                State::BlockComment => {
                    if tok.contains("*/") {
                        self.state = State::Code;
                    }
                    continue;
                }
                State::Literal(q) => {
                    if closes_literal(tok, q) {
                        self.state = State::Code;
                    }
                    continue;
                }
                State::Statement => {
                    if tok.ends_with(';') {
                        self.state = State::Code;
                    }
                    continue;
                }
                State::Code => {}
            }
            if tok.starts_with("//") {
                break;
            }
            if i == 0 && (tok == "*" || tok.starts_with("*/") || tok.starts_with("**")) {
                // javadoc continuation line
                break;
            }
            if let Some(rest) = tok.strip_prefix("/*") {
                if !rest.contains("*/") {
                    self.state = State::BlockComment;
                }
                continue;
            }
            if tok == "import" || tok == "package" {
                self.state = State::Statement;
                continue;
            }
            if java_keywords().contains(tok) {
                continue;
            }
            if tok.starts_with('@') {
                skip_next = tok == "@";
                continue;
            }
            if is_numeric_literal(tok) {
                self.drop_literal_initializer(line_start);
                continue;
            }
            if let Some(q) = ['"', '\''].into_iter().find(|q| tok.starts_with(*q)) {
                if !closes_literal(&tok[q.len_utf8()..], q) {
                    self.state = State::Literal(q);
                }
                self.drop_literal_initializer(line_start);
                continue;
            }
            self.out.push(tok.to_string());
        }
        !content.is_empty() && self.out.len() == line_start
    }
}

/// Removes Java keywords, annotations, `import`/`package` statements,
/// numeric, string and char literals, and comments from a tokenized diff.
///
/// Diff metadata (headers, hunk markers and the `+`/`-` line prefixes) is
/// kept. A code line whose content is removed entirely is dropped together
/// with its `<nl>`. An `=` directly before a removed literal goes with it.
/// A comment or literal left open runs to the end of the diff and is
/// counted in [`Stripped::unterminated_spans`].
pub fn strip_java_lexemes<S: AsRef<str>>(diff_tokens: &[S]) -> Stripped {
    let tokens: Vec<&str> = diff_tokens.iter().map(AsRef::as_ref).collect();
    let mut lines: Vec<(&[&str], bool)> = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if *t == NEWLINE {
            lines.push((&tokens[start..i], true));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        lines.push((&tokens[start..], false));
    }

    let mut s = Stripper {
        state: State::Code,
        out: Vec::with_capacity(tokens.len()),
    };
    for (line, has_nl) in lines {
        let line_start = s.out.len();
        let in_span = matches!(s.state, State::BlockComment | State::Literal(_));
        if !in_span && is_metadata_line(line) {
            s.out.extend(line.iter().map(|t| t.to_string()));
        } else {
            let mut content = line;
            if let Some(n) = hunk_marker_len(line).filter(|_| !in_span) {
                s.out.extend(line[..n].iter().map(|t| t.to_string()));
                content = &line[n..];
                s.code(content);
            } else {
                let mut marker_owned = None;
                if let Some(first) = line.first() {
                    if *first == "+" || *first == "-" {
                        s.out.push(first.to_string());
                        content = &line[1..];
                    } else if (first.starts_with('+') || first.starts_with('-'))
                        && first.len() > 1
                        && !first.starts_with("--")
                        && !first.starts_with("++")
                    {
                        s.out.push(first[..1].to_string());
                        marker_owned = Some(&first[1..]);
                        content = &line[1..];
                    }
                }
                let marker_len = s.out.len() - line_start;
                let emptied = match marker_owned {
                    Some(head) => {
                        let mut v = Vec::with_capacity(content.len() + 1);
                        v.push(head);
                        v.extend_from_slice(content);
                        s.code(&v)
                    }
                    None => s.code(content),
                };
                if emptied {
                    s.out.truncate(s.out.len() - marker_len);
                    continue;
                }
            }
        }
        if has_nl {
            s.out.push(NEWLINE.to_string());
        }
    }
    let unterminated_spans = usize::from(matches!(s.state, State::BlockComment | State::Literal(_)));
    if unterminated_spans > 0 {
        log::debug!("unterminated comment or literal in diff");
    }
    Stripped {
        tokens: s.out,
        unterminated_spans,
    }
}
