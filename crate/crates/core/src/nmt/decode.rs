//! Greedy and beam-search decoding over any step-wise scorer.

use std::cmp::Ordering;

use super::data::{encode_source, surface, EncodedExample};
use super::model::{EncoderCache, GateMode};
use super::Model;
use crate::corpus::{BOS_ID, EOS_ID, PAD_ID};

/// Source of next-token log-probabilities for an autoregressive decoder.
pub trait StepScorer {
    type State: Clone;

    /// State before the first output token.
    fn start(&self) -> Self::State;

    /// Log-probabilities of the next token; `-inf` marks impossible tokens.
    fn log_probs(&self, state: &Self::State) -> Vec<f64>;

    /// State after emitting `token`.
    fn advance(&self, state: &Self::State, token: usize) -> Self::State;

    fn eos(&self) -> usize {
        EOS_ID
    }

    /// Tokens never emitted.
    fn masked(&self, token: usize) -> bool {
        token == PAD_ID || token == BOS_ID
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Length used for normalisation; the EOS of a finished hypothesis counts.
    pub fn length(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn score(&self, length_penalty: f64) -> f64 {
        if length_penalty == 0.0 {
            self.log_prob
        } else {
            self.log_prob / (self.length().max(1) as f64).powf(length_penalty)
        }
    }
}

/// Higher score first, then shorter, then lexicographically smaller.
pub fn final_order(a: &BeamHypothesis, b: &BeamHypothesis, length_penalty: f64) -> Ordering {
    b.score(length_penalty)
        .total_cmp(&a.score(length_penalty))
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Argmax decoding until EOS or `max_len` tokens. Ties go to the lower id.
pub fn greedy<S: StepScorer>(scorer: &S, max_len: usize) -> Vec<usize> {
    let mut state = scorer.start();
    let mut out = Vec::new();
    while out.len() < max_len {
        let lp = scorer.log_probs(&state);
        let best = lp
            .iter()
            .enumerate()
            .filter(|(j, _)| !scorer.masked(*j))
            .fold(None::<(usize, f64)>, |acc, (j, &v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        let Some((tok, _)) = best else { break };
        if tok == scorer.eos() {
            break;
        }
        out.push(tok);
        state = scorer.advance(&state, tok);
    }
    out
}

/// Beam search. Each step ranks every one-token extension of the live
/// hypotheses and keeps the best `width`; extensions ending in EOS leave the
/// beam as finished hypotheses. Live hypotheses at `max_len` are scored as
/// they are. The winner maximises `log_prob / length^length_penalty`.
pub fn beam_search<S: StepScorer>(
    scorer: &S,
    width: usize,
    length_penalty: f64,
    max_len: usize,
) -> BeamHypothesis {
    assert!(width >= 1, "beam width must be positive");
    let mut live: Vec<(BeamHypothesis, S::State)> = vec![(
        BeamHypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        scorer.start(),
    )];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (b, (hyp, state)) in live.iter().enumerate() {
            for (j, lp) in scorer.log_probs(state).into_iter().enumerate() {
                if !scorer.masked(j) && lp > f64::NEG_INFINITY {
                    cands.push((b, j, hyp.log_prob + lp));
                }
            }
        }
        cands.sort_by(|x, y| {
            y.2.total_cmp(&x.2).then_with(|| {
                live[x.0]
                    .0
                    .tokens
                    .iter()
                    .chain([&x.1])
                    .cmp(live[y.0].0.tokens.iter().chain([&y.1]))
            })
        });
        cands.truncate(width);
        let mut next = Vec::with_capacity(cands.len());
        for (b, j, lp) in cands {
            let (hyp, state) = &live[b];
            if j == scorer.eos() {
                finished.push(BeamHypothesis {
                    tokens: hyp.tokens.clone(),
                    log_prob: lp,
                    finished: true,
                });
            } else {
                let mut tokens = hyp.tokens.clone();
                tokens.push(j);
                next.push((
                    BeamHypothesis {
                        tokens,
                        log_prob: lp,
                        finished: false,
                    },
                    scorer.advance(state, j),
                ));
            }
        }
        live = next;
    }
    finished.extend(live.into_iter().map(|(h, _)| h));
    finished
        .into_iter()
        .min_by(|a, b| final_order(a, b, length_penalty))
        .unwrap_or(BeamHypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        })
}

/// Decoder state of a trained model.
#[derive(Debug, Clone)]
pub struct ModelState {
    states: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
}

/// Scores continuations of one source sequence with a model.
pub struct ModelScorer<'a> {
    model: &'a Model,
    example: EncodedExample,
    enc: EncoderCache,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a Model, example: EncodedExample) -> Self {
        let enc = model.encode(&example.src);
        ModelScorer { model, example, enc }
    }

    pub fn from_tokens<S: AsRef<str>>(model: &'a Model, src: &[S]) -> Self {
        Self::new(model, encode_source(&model.config, src))
    }

    fn step(&self, states: &[Vec<f64>], input: usize) -> ModelState {
        let st = self.model.decoder_step(
            &self.enc,
            states,
            input,
            &self.example.src_ext,
            self.example.oov.len(),
            GateMode::Learned,
        );
        ModelState {
            states: st.states(),
            log_probs: st.dist.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn surface(&self, tokens: &[usize]) -> Vec<String> {
        tokens
            .iter()
            .map(|&t| surface(&self.model.config, &self.example, t))
            .collect()
    }
}

impl StepScorer for ModelScorer<'_> {
    type State = ModelState;

    fn start(&self) -> ModelState {
        self.step(&self.model.initial_states(&self.enc), BOS_ID)
    }

    fn log_probs(&self, state: &ModelState) -> Vec<f64> {
        state.log_probs.clone()
    }

    fn advance(&self, state: &ModelState, token: usize) -> ModelState {
        self.step(&state.states, token)
    }
}

impl Model {
    pub fn greedy_decode<S: AsRef<str>>(&self, src: &[S]) -> Vec<String> {
        let scorer = ModelScorer::from_tokens(self, src);
        scorer.surface(&greedy(&scorer, self.config.max_tgt_len))
    }

    pub fn beam_decode<S: AsRef<str>>(&self, src: &[S], width: usize, length_penalty: f64) -> Vec<String> {
        let scorer = ModelScorer::from_tokens(self, src);
        let best = beam_search(&scorer, width, length_penalty, self.config.max_tgt_len);
        scorer.surface(&best.tokens)
    }

    /// Width 1 without a length penalty is greedy decoding.
    pub fn translate<S: AsRef<str>>(&self, src: &[S], width: usize, length_penalty: f64) -> Vec<String> {
        if width <= 1 && length_penalty == 0.0 {
            self.greedy_decode(src)
        } else {
            self.beam_decode(src, width, length_penalty)
        }
    }
}
