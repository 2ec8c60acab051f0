//! GRU encoder-decoder with additive attention, optional residual stacking
//! and a gated copy mechanism. Gradients are computed by hand in `f64`.
//!
//! Architecture summary:
//!
//! * Encoder: stacked GRU layers over source embeddings. With `residual`,
//!   layers from the second one up add their input to their output. The
//!   first layer may be bidirectional, summing both directions.
//! * Decoder: stacked GRU over the previous target token's embedding, layer
//!   `l` starting from the encoder's final state of layer `l` (zeros when
//!   the encoder is shallower).
//! * Attention: `e_i = v . tanh(W_q o_t + b + U_k h_i)` with the top decoder
//!   output `o_t` as query; the context is the softmax-weighted sum of
//!   encoder outputs.
//! * Output: softmax over `W_o [o_t; c_t] + b_o`. With copying, a scalar gate
//!   `g = sigmoid(w . [o_t; c_t; x_t] + b)` mixes it with the attention
//!   weights scattered onto the source tokens.

mod checkpoint;
mod data;
mod decode;
mod linalg;
mod model;
mod params;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{encode_example, encode_source, surface, EncodedExample};
pub use decode::{beam_search, final_order, greedy, BeamHypothesis, ModelScorer, ModelState, StepScorer};
pub use model::{ForwardOutput, GateMode};
pub use params::{Block, Layout, INIT_RANGE};
pub use train::{
    batch_loss, gradient_check, train, Adam, GradientCheck, TrainOptions, TrainReport, GRAD_CHECK_FLOOR,
};

#[derive(Debug, thiserror::Error)]
pub enum NmtError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite loss in batch {batch} at step {step}")]
    NonFiniteLoss { batch: usize, step: u64 },
    #[error("{what} index {index} outside vocabulary of size {size}")]
    IndexOutOfVocab {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{path}: {reason}")]
    BadCheckpoint { path: String, reason: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl NmtError {
    pub fn category(&self) -> &'static str {
        match self {
            NmtError::Config(_) => "Config",
            NmtError::NonFiniteLoss { .. } => "NonFiniteLoss",
            NmtError::IndexOutOfVocab { .. } => "IndexOutOfVocab",
            NmtError::BadCheckpoint { .. } => "BadCheckpoint",
            NmtError::Io(..) => "Io",
        }
    }
}

/// Model hyperparameters without vocabularies, as read from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub enc_layers: usize,
    pub dec_layers: usize,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub copy_enabled: bool,
    #[serde(default)]
    pub bidirectional: bool,
    #[serde(default = "default_max_src")]
    pub max_src_len: usize,
    #[serde(default = "default_max_tgt")]
    pub max_tgt_len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    64
}

fn default_max_src() -> usize {
    crate::corpus::DEFAULT_MAX_DIFF
}

fn default_max_tgt() -> usize {
    crate::corpus::DEFAULT_MAX_MSG
}

impl Hyperparameters {
    /// Named structures: `nmt2` (1+1), `nmt4` (2+2 residual), `nmt8` (4+4
    /// residual), at desk-scale dimensions.
    pub fn preset(name: &str) -> Option<Hyperparameters> {
        let (layers, residual) = match name {
            "nmt2" => (1, false),
            "nmt4" => (2, true),
            "nmt8" => (4, true),
            _ => return None,
        };
        Some(Hyperparameters {
            enc_layers: layers,
            dec_layers: layers,
            embedding_dim: default_dim(),
            hidden_dim: default_dim(),
            residual,
            copy_enabled: false,
            bidirectional: false,
            max_src_len: default_max_src(),
            max_tgt_len: default_max_tgt(),
            seed: 0,
        })
    }

    pub fn with_vocabularies(self, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> ModelConfig {
        ModelConfig {
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            residual: self.residual,
            copy_enabled: self.copy_enabled,
            bidirectional: self.bidirectional,
            src_vocab,
            tgt_vocab,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub residual: bool,
    pub copy_enabled: bool,
    #[serde(default)]
    pub bidirectional: bool,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NmtError> {
        let err = |m: &str| Err(NmtError::Config(m.to_string()));
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return err("layer counts must be positive");
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return err("dimensions must be positive");
        }
        if self.max_src_len == 0 || self.max_tgt_len == 0 {
            return err("maximum lengths must be positive");
        }
        if self.residual && (self.enc_layers < 2 || self.dec_layers < 2) {
            return err("residual connections need at least 2 encoder and 2 decoder layers");
        }
        if self.src_vocab.len() < crate::corpus::SPECIALS.len()
            || self.tgt_vocab.len() < crate::corpus::SPECIALS.len()
        {
            return err("vocabularies must contain the special tokens");
        }
        Ok(())
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            residual: self.residual,
            copy_enabled: self.copy_enabled,
            bidirectional: self.bidirectional,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            seed: self.seed,
        }
    }
}

/// Configuration plus parameters in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

impl Model {
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Named view of one parameter block.
    pub fn param(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|b| b.of(&self.params))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.layout.find(name).map(|b| b.of_mut(&mut self.params))
    }

    /// Rejects sequences with ids outside the vocabularies.
    pub fn check_example(&self, ex: &EncodedExample) -> Result<(), NmtError> {
        let vs = self.config.src_vocab.len();
        let ext = self.config.tgt_vocab.len() + ex.oov.len();
        if let Some(&i) = ex.src.iter().find(|&&i| i >= vs) {
            return Err(NmtError::IndexOutOfVocab {
                what: "source",
                index: i,
                size: vs,
            });
        }
        if let Some(&i) = ex.tgt.iter().chain(&ex.src_ext).find(|&&i| i >= ext) {
            return Err(NmtError::IndexOutOfVocab {
                what: "target",
                index: i,
                size: ext,
            });
        }
        Ok(())
    }
}

/// A model with training progress and generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

/// Builds a model with parameters drawn uniformly from
/// `[-INIT_RANGE, INIT_RANGE]` using `config.seed`.
pub fn init_model(config: ModelConfig) -> Result<Checkpoint, NmtError> {
    config.validate()?;
    let layout = Layout::new(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = params::init_uniform(layout.total, &mut rng);
    log::info!("initialised model with {} parameters", params.len());
    Ok(Checkpoint {
        model: Model {
            config,
            layout,
            params,
        },
        step: 0,
        rng,
    })
}
