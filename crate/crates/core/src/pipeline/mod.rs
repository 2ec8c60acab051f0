//! Ensemble routing by file type, end-to-end prediction and experiment runs.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusError, CorpusSplit, FileType, Vocabulary};
use crate::eval::{per_type_bleu, BleuReport, EvalError};
use crate::nmt::{Checkpoint, Model, NmtError};
use crate::nngen::NngenError;
use crate::sketch::{self, SketchError};
use crate::tokenize::{decode_bpe, BpeModel, TokenizeError};

pub use config::{prepare_pairs, train_from_config, DataSection, TrainConfig, TrainSection};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Nmt(#[from] NmtError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nngen(#[from] NngenError),
    #[error("{path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),
    #[error("route {route}: {side} vocabulary of {checkpoint} does not match {vocab}")]
    CheckpointMismatch {
        route: String,
        side: &'static str,
        checkpoint: PathBuf,
        vocab: PathBuf,
    },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

impl PipelineError {
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Corpus(e) => e.category(),
            PipelineError::Tokenize(e) => e.category(),
            PipelineError::Sketch(e) => e.category(),
            PipelineError::Nmt(e) => e.category(),
            PipelineError::Eval(e) => e.category(),
            PipelineError::Nngen(e) => e.category(),
            PipelineError::Config { .. } => "Config",
            PipelineError::InvalidSpec(_) => "InvalidSpec",
            PipelineError::CheckpointMismatch { .. } => "CheckpointMismatch",
            PipelineError::Io(..) => "Io",
        }
    }
}

fn default_beam() -> usize {
    10
}

fn default_len_penalty() -> f64 {
    1.0
}

/// One model of an ensemble and how to decode with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub uses_sketch: bool,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default = "default_len_penalty")]
    pub len_penalty: f64,
    /// BPE merges applied to the source and undone on the output.
    #[serde(default)]
    pub bpe: Option<PathBuf>,
    /// Vocabularies of the route's corpus, checked against the checkpoint.
    #[serde(default)]
    pub src_vocab: Option<PathBuf>,
    #[serde(default)]
    pub tgt_vocab: Option<PathBuf>,
}

impl ModelDescriptor {
    pub fn new(checkpoint: impl Into<PathBuf>) -> Self {
        ModelDescriptor {
            checkpoint: checkpoint.into(),
            uses_sketch: false,
            beam: default_beam(),
            len_penalty: default_len_penalty(),
            bpe: None,
            src_vocab: None,
            tgt_vocab: None,
        }
    }

    fn key(&self) -> (PathBuf, Option<PathBuf>) {
        (self.checkpoint.clone(), self.bpe.clone())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.checkpoint);
        for p in [&mut self.bpe, &mut self.src_vocab, &mut self.tgt_vocab].into_iter().flatten() {
            fix(p);
        }
    }
}

/// Routes file types to models; unrouted types use the fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub routes: BTreeMap<FileType, ModelDescriptor>,
    pub fallback: ModelDescriptor,
}

/// Name of the route a commit takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteKey {
    Type(FileType),
    Fallback,
}

impl std::fmt::Display for RouteKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RouteKey::Type(t) => write!(f, "{t}"),
            RouteKey::Fallback => f.write_str("fallback"),
        }
    }
}

impl EnsembleSpec {
    /// Every type goes to one model.
    pub fn single(descriptor: ModelDescriptor) -> Self {
        EnsembleSpec {
            routes: BTreeMap::new(),
            fallback: descriptor,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (ft, d) in &self.routes {
            if d.uses_sketch && *ft != FileType::Java {
                return Err(PipelineError::InvalidSpec(format!(
                    "route {ft} uses the sketch encoder, which only applies to Java"
                )));
            }
        }
        if self.fallback.uses_sketch {
            return Err(PipelineError::InvalidSpec(
                "the fallback route cannot use the sketch encoder".into(),
            ));
        }
        for d in self.routes.values().chain([&self.fallback]) {
            if d.beam == 0 {
                return Err(PipelineError::InvalidSpec("beam width must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn route_key(&self, file_type: FileType) -> RouteKey {
        if self.routes.contains_key(&file_type) {
            RouteKey::Type(file_type)
        } else {
            RouteKey::Fallback
        }
    }

    pub fn descriptor(&self, key: RouteKey) -> &ModelDescriptor {
        match key {
            RouteKey::Type(t) => &self.routes[&t],
            RouteKey::Fallback => &self.fallback,
        }
    }

    pub fn descriptors(&self) -> impl Iterator<Item = (RouteKey, &ModelDescriptor)> {
        self.routes
            .iter()
            .map(|(t, d)| (RouteKey::Type(*t), d))
            .chain([(RouteKey::Fallback, &self.fallback)])
    }

    /// Reads a TOML spec; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<EnsembleSpec, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        let mut spec: EnsembleSpec = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.fallback.resolve(base);
        for d in spec.routes.values_mut() {
            d.resolve(base);
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub fn route_example<'a>(spec: &'a EnsembleSpec, commit: &corpus::Commit) -> &'a ModelDescriptor {
    spec.descriptor(spec.route_key(commit.file_type))
}

/// Anything that turns a source token sequence into a message.
pub trait Translator: Sync {
    fn translate(&self, src: &[String], beam: usize, len_penalty: f64) -> Vec<String>;
}

impl Translator for Model {
    fn translate(&self, src: &[String], beam: usize, len_penalty: f64) -> Vec<String> {
        Model::translate(self, src, beam, len_penalty)
    }
}

/// A model wrapped with its subword segmentation.
pub struct BpeTranslator {
    pub model: Model,
    pub bpe: BpeModel,
}

impl Translator for BpeTranslator {
    fn translate(&self, src: &[String], beam: usize, len_penalty: f64) -> Vec<String> {
        let sub = self.bpe.apply(src);
        let out = self.model.translate(&sub, beam, len_penalty);
        decode_bpe(&out).tokens
    }
}

/// Output of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub predictions: Vec<Vec<String>>,
    pub routes: Vec<RouteKey>,
    pub route_counts: BTreeMap<RouteKey, usize>,
}

/// Predicts every commit with the model of its route. Java routes flagged
/// `uses_sketch` translate the sketched diff and restore identifiers with a
/// per-example seed derived from `seed`.
pub fn predict_routed<T: Translator + ?Sized>(
    spec: &EnsembleSpec,
    test: &CorpusSplit,
    seed: u64,
    models: &HashMap<RouteKey, &T>,
) -> Result<EnsembleOutput, PipelineError> {
    spec.validate()?;
    for (key, _) in spec.descriptors() {
        if !models.contains_key(&key) {
            return Err(PipelineError::InvalidSpec(format!("no model loaded for route {key}")));
        }
    }
    let routes: Vec<RouteKey> = test.commits.iter().map(|c| spec.route_key(c.file_type)).collect();
    let predictions = test
        .commits
        .par_iter()
        .zip(&routes)
        .map(|(c, key)| {
            let d = spec.descriptor(*key);
            let model = models[key];
            if d.uses_sketch {
                let sk = sketch::encode_sketch(c);
                let pred = model.translate(&sk.sketched_diff, d.beam, d.len_penalty);
                sketch::decode_sketch(&pred, &sk.dictionary, &sk.diff_names, sketch::example_seed(seed, c.id))
            } else {
                model.translate(&c.diff_tokens, d.beam, d.len_penalty)
            }
        })
        .collect();
    let mut route_counts = BTreeMap::new();
    for r in &routes {
        *route_counts.entry(*r).or_insert(0) += 1;
    }
    Ok(EnsembleOutput {
        predictions,
        routes,
        route_counts,
    })
}

/// Checkpoints of an ensemble, each loaded once.
pub struct LoadedEnsemble {
    pub spec: EnsembleSpec,
    translators: HashMap<(PathBuf, Option<PathBuf>), Box<dyn Translator>>,
}

impl LoadedEnsemble {
    /// Loads every checkpoint and checks vocabulary fingerprints before any
    /// prediction runs.
    pub fn load(spec: &EnsembleSpec) -> Result<LoadedEnsemble, PipelineError> {
        spec.validate()?;
        let mut translators: HashMap<(PathBuf, Option<PathBuf>), Box<dyn Translator>> = HashMap::new();
        for (key, d) in spec.descriptors() {
            let ck = Checkpoint::load(&d.checkpoint)?;
            check_vocab(key, d, "source", d.src_vocab.as_deref(), &ck.model.config.src_vocab)?;
            check_vocab(key, d, "target", d.tgt_vocab.as_deref(), &ck.model.config.tgt_vocab)?;
            if translators.contains_key(&d.key()) {
                continue;
            }
            let t: Box<dyn Translator> = match &d.bpe {
                Some(p) => Box::new(BpeTranslator {
                    model: ck.model,
                    bpe: BpeModel::load(p)?,
                }),
                None => Box::new(ck.model),
            };
            translators.insert(d.key(), t);
        }
        Ok(LoadedEnsemble {
            spec: spec.clone(),
            translators,
        })
    }

    pub fn predict(&self, test: &CorpusSplit, seed: u64) -> Result<EnsembleOutput, PipelineError> {
        let models: HashMap<RouteKey, &dyn Translator> = self
            .spec
            .descriptors()
            .map(|(k, d)| (k, self.translators[&d.key()].as_ref()))
            .collect();
        predict_routed(&self.spec, test, seed, &models)
    }
}

fn check_vocab(
    key: RouteKey,
    d: &ModelDescriptor,
    side: &'static str,
    path: Option<&Path>,
    actual: &Vocabulary,
) -> Result<(), PipelineError> {
    let Some(path) = path else { return Ok(()) };
    let expected = Vocabulary::load(path)?;
    if expected.fingerprint() != actual.fingerprint() {
        return Err(PipelineError::CheckpointMismatch {
            route: key.to_string(),
            side,
            checkpoint: d.checkpoint.clone(),
            vocab: path.to_path_buf(),
        });
    }
    Ok(())
}

/// Loads the ensemble's checkpoints and predicts the split in input order.
pub fn predict_ensemble(spec: &EnsembleSpec, test: &CorpusSplit, seed: u64) -> Result<Vec<Vec<String>>, PipelineError> {
    Ok(LoadedEnsemble::load(spec)?.predict(test, seed)?.predictions)
}

/// Declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// `<prefix>.diff` / `<prefix>.msg` of the test split.
    pub test_prefix: PathBuf,
    /// Ensemble spec file.
    pub ensemble: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub run_id: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.test_prefix, &mut cfg.ensemble, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub examples: usize,
    pub total_ms: f64,
    pub mean_ms_per_example: f64,
    pub bleu4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub bleu: BleuReport,
    pub timing: TimingReport,
    pub predictions: Vec<Vec<String>>,
}

/// Runs an experiment config: predicts the test split with the ensemble,
/// scores it by file type and writes `predictions.msg`, `bleu.tsv`,
/// `bleu.txt` and `timing.json` into the output directory.
pub fn run_experiment(config_file: &Path) -> Result<ExperimentReport, PipelineError> {
    let cfg = ExperimentConfig::load(config_file)?;
    let test = corpus::load_prefix(&cfg.test_prefix, corpus::LoadOptions::default())?;
    let spec = EnsembleSpec::load(&cfg.ensemble)?;
    let ensemble = LoadedEnsemble::load(&spec)?;
    let start = Instant::now();
    let out = ensemble.predict(&test, cfg.seed)?;
    let total_ms = start.elapsed().as_secs_f64() * 1000.0;

    let refs: Vec<Vec<String>> = test.commits.iter().map(|c| c.msg_tokens.clone()).collect();
    let types: Vec<FileType> = test.commits.iter().map(|c| c.file_type).collect();
    let bleu = per_type_bleu(&out.predictions, &refs, &types)?;
    let timing = TimingReport {
        examples: test.len(),
        total_ms,
        mean_ms_per_example: total_ms / test.len() as f64,
        bleu4: bleu.corpus_bleu,
    };

    let dir = &cfg.output_dir;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| PipelineError::Io(p, e)
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let pred_path = dir.join("predictions.msg");
    corpus::write_lines(&pred_path, out.predictions.iter().map(|p| p.join(" ")))?;
    bleu.save_tsv(&dir.join("bleu.tsv"), cfg.run_id.as_deref())?;
    let table = dir.join("bleu.txt");
    std::fs::write(&table, bleu.to_table()).map_err(io(&table))?;
    let tpath = dir.join("timing.json");
    let json = serde_json::to_string_pretty(&timing).map_err(|e| PipelineError::Io(tpath.clone(), std::io::Error::other(e)))?;
    std::fs::write(&tpath, json + "\n").map_err(io(&tpath))?;
    Ok(ExperimentReport {
        bleu,
        timing,
        predictions: out.predictions,
    })
}
