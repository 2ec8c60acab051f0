//! Synthetic data and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use commitgen::corpus::{Commit, FileType};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

const SYLLABLES: [&str; 24] = [
    "user", "name", "item", "list", "map", "node", "file", "path", "cache", "load", "save", "index", "count", "value",
    "token", "buffer", "stream", "event", "state", "client", "server", "query", "result", "config",
];

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn word<R: Rng>(rng: &mut R, pool: usize) -> &'static str {
    SYLLABLES[rng.gen_range(0..pool.min(SYLLABLES.len()))]
}

/// Identifier names of each kind, drawn from `pool` syllables; a larger pool
/// gives a larger vocabulary.
pub struct Names {
    pub class: String,
    pub func: String,
    pub var: String,
    pub constant: String,
}

pub fn names<R: Rng>(rng: &mut R, pool: usize) -> Names {
    let (a, b) = (word(rng, pool), word(rng, pool));
    let (c, d) = (word(rng, pool), word(rng, pool));
    let suffix = rng.gen_range(0..pool.max(1) * 4);
    Names {
        class: format!("{}{}{suffix}", cap(a), cap(b)),
        func: format!("{}{}", ["get", "set", "load", "find"][rng.gen_range(0..4)], cap(c)),
        var: format!("{c}{}{suffix}", cap(d)),
        constant: format!("MAX_{}_{suffix}", d.to_uppercase()),
    }
}

/// A one-file Java diff whose identifiers are known. Returns the commit and
/// the set of identifiers it contains.
pub fn java_commit<R: Rng>(rng: &mut R, id: usize, pool: usize) -> (Commit, BTreeSet<String>) {
    let n = names(rng, pool);
    let other = names(rng, pool);
    let file = format!("{}.java", n.class);
    let mut lines = vec![
        format!("diff --git a/src/{file} b/src/{file}"),
        "@@ -1,4 +1,5 @@".to_string(),
    ];
    let templates = [
        format!("+ private {} {} = new {} ( ) ;", n.class, n.var, other.class),
        format!("+ public void {} ( {} {} ) {{", n.func, other.class, other.var),
        format!("- return {} . {} ( ) ;", n.var, other.func),
        format!("+ static final int {} = {} ;", n.constant, rng.gen_range(1..500)),
        format!("+ {} . {} ( \" some text \" ) ;", other.var, n.func),
        "+ }".to_string(),
    ];
    let k = rng.gen_range(2..=templates.len());
    lines.extend(templates.choose_multiple(rng, k).cloned());
    let diff = toks(&lines.join(" <nl> "));
    let ids: BTreeSet<String> = [&n.class, &n.func, &n.var, &n.constant, &other.class, &other.var, &other.func]
        .into_iter()
        .filter(|x| diff.contains(x))
        .cloned()
        .collect();
    let pick: Vec<&String> = ids.iter().collect();
    let msg = format!(
        "{} {} in {}",
        ["Add", "Fix", "Remove", "Refactor"][rng.gen_range(0..4)],
        pick.choose(rng).unwrap(),
        pick.choose(rng).unwrap()
    );
    (Commit::new(id, diff, toks(&msg)), ids)
}

pub fn file_for(ft: FileType) -> &'static str {
    match ft {
        FileType::Java => "src/Main.java",
        FileType::Gitrepo => ".gitrepo",
        FileType::Xml => "pom.xml",
        FileType::Gradle => "build.gradle",
        FileType::Md => "README.md",
        FileType::Gitignore => ".gitignore",
        FileType::Properties => "app.properties",
        FileType::Txt => "notes.txt",
        FileType::Yml => "ci.yml",
        FileType::Others => "lib/util.groovy",
    }
}

/// A commit of the given type with a short random body.
pub fn typed_commit<R: Rng>(rng: &mut R, id: usize, ft: FileType) -> Commit {
    if ft == FileType::Java {
        return java_commit(rng, id, 8).0;
    }
    let f = file_for(ft);
    let body: Vec<&str> = (0..rng.gen_range(2..8)).map(|_| word(rng, 12)).collect();
    let diff = format!("diff --git a/{f} b/{f} <nl> + {}", body.join(" "));
    let msg = format!("update {}", body[0]);
    Commit::new(id, toks(&diff), toks(&msg))
}

pub fn mixed_commit<R: Rng>(rng: &mut R, id: usize) -> Commit {
    let ft = FileType::ALL[rng.gen_range(0..FileType::ALL.len())];
    typed_commit(rng, id, ft)
}

/// Reference BLEU-4: clipped n-gram counts summed over the corpus,
/// geometric mean of the four precisions and the brevity penalty.
pub fn oracle_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matched = [0u64; 4];
    let mut total = [0u64; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let mut ref_grams: BTreeMap<&[String], u64> = BTreeMap::new();
            for g in rf.windows(n) {
                *ref_grams.entry(g).or_default() += 1;
            }
            let mut hyp_grams: BTreeMap<&[String], u64> = BTreeMap::new();
            for g in h.windows(n) {
                *hyp_grams.entry(g).or_default() += 1;
            }
            for (g, k) in hyp_grams {
                matched[n - 1] += k.min(*ref_grams.get(g).unwrap_or(&0));
                total[n - 1] += k;
            }
        }
    }
    if c == 0 || (0..4).any(|i| matched[i] == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| (matched[i] as f64 / total[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * log_p.exp()
}

pub fn random_sentence<R: Rng>(rng: &mut R, vocab: usize, len: std::ops::Range<usize>) -> Vec<String> {
    (0..rng.gen_range(len)).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
}
