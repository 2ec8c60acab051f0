//! Training configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{build_vocabulary, reduce_vocabulary, Commit, CorpusSplit, FileType, Reduction, Side};
use crate::nmt::{encode_example, init_model, train, EncodedExample, Hyperparameters, TrainOptions, TrainReport};
use crate::sketch::encode_sketch;
use crate::tokenize::BpeModel;

/// `[train]` table; defaults follow [`TrainOptions::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Gradient-norm clipping; 0 disables it.
    pub clip_norm: f64,
    pub eval_every: u64,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let o = TrainOptions::default();
        TrainSection {
            steps: o.steps,
            batch_size: o.batch_size,
            lr: o.lr,
            clip_norm: o.clip_norm.unwrap_or(0.0),
            eval_every: o.eval_every,
            patience: o.patience,
        }
    }
}

impl TrainSection {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            eval_every: self.eval_every,
            patience: self.patience,
        }
    }
}

/// `[data]` table: how the training pairs and vocabularies are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub diff_min_count: u64,
    pub msg_min_count: u64,
    pub reduction: Option<Reduction>,
    /// Replace Java identifiers by placeholders before training.
    pub sketch: bool,
    /// BPE merges applied to both sides.
    pub bpe: Option<PathBuf>,
    /// Train on one file type only.
    pub file_type: Option<FileType>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            diff_min_count: 1,
            msg_min_count: 1,
            reduction: None,
            sketch: false,
            bpe: None,
            file_type: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: Hyperparameters,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub data: DataSection,
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<TrainConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        let mut cfg: TrainConfig = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if let Some(b) = cfg.data.bpe.as_mut().filter(|b| b.is_relative()) {
            *b = path.parent().unwrap_or(Path::new(".")).join(&*b);
        }
        Ok(cfg)
    }
}

/// Source/target token pairs for training, after type filtering, sketching
/// of Java commits and BPE segmentation.
pub fn prepare_pairs(
    split: &CorpusSplit,
    data: &DataSection,
    bpe: Option<&BpeModel>,
) -> Vec<(Vec<String>, Vec<String>)> {
    split
        .commits
        .iter()
        .filter(|c| data.file_type.is_none_or(|t| t == c.file_type))
        .map(|c| {
            let (src, tgt) = if data.sketch && c.file_type == FileType::Java {
                let sk = encode_sketch(c);
                (sk.sketched_diff, sk.sketched_msg)
            } else {
                (c.diff_tokens.clone(), c.msg_tokens.clone())
            };
            match bpe {
                Some(b) => (b.apply(&src), b.apply(&tgt)),
                None => (src, tgt),
            }
        })
        .collect()
}

fn as_split(name: &str, pairs: &[(Vec<String>, Vec<String>)]) -> CorpusSplit {
    CorpusSplit::new(
        name,
        pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| Commit::new(i, s.clone(), t.clone()))
            .collect(),
    )
}

/// Builds vocabularies from `train_split`, initialises a model from the
/// config and trains it, validating on `valid`.
pub fn train_from_config(
    cfg: &TrainConfig,
    train_split: &CorpusSplit,
    valid: &CorpusSplit,
) -> Result<TrainReport, PipelineError> {
    let bpe = cfg.data.bpe.as_deref().map(BpeModel::load).transpose()?;
    let train_pairs = prepare_pairs(train_split, &cfg.data, bpe.as_ref());
    let valid_pairs = prepare_pairs(valid, &cfg.data, bpe.as_ref());
    let as_train = as_split(&train_split.name, &train_pairs);
    let mut src = build_vocabulary(&as_train, Side::Diff, cfg.data.diff_min_count, None)?;
    let mut tgt = build_vocabulary(&as_train, Side::Msg, cfg.data.msg_min_count, None)?;
    if let Some(r) = cfg.data.reduction {
        (tgt, src) = reduce_vocabulary(&tgt, &src, r);
    }
    log::info!("vocabularies: {} source, {} target", src.len(), tgt.len());
    let ck = init_model(cfg.model.clone().with_vocabularies(src, tgt))?;
    let encode = |pairs: &[(Vec<String>, Vec<String>)]| -> Vec<EncodedExample> {
        pairs.iter().map(|(s, t)| encode_example(&ck.model.config, s, t)).collect()
    };
    Ok(train(&ck, &encode(&train_pairs), &encode(&valid_pairs), &cfg.train.options())?)
}
