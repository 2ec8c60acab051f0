//! Adam training loop, loss evaluation and finite-difference gradient checks.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::data::EncodedExample;
use super::linalg::add_into;
use super::{Checkpoint, Model, NmtError};

/// Examples per gradient work unit. Fixed so that results do not depend on
/// the number of worker threads.
const CHUNK: usize = 4;

/// Denominator floor for relative gradient errors. Central differences at
/// epsilon 1e-5 carry about 1e-10 of rounding noise, so smaller gradients
/// are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: Option<f64>,
    /// Validation interval in steps.
    pub eval_every: u64,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 5000,
            batch_size: 32,
            lr: 1e-4,
            clip_norm: Some(5.0),
            eval_every: 100,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters with the lowest validation loss (the final ones when no
    /// validation data is given).
    pub checkpoint: Checkpoint,
    pub best_step: u64,
    pub steps_run: u64,
    /// `(step, validation loss)` for each evaluation, including step 0.
    pub validation: Vec<(u64, f64)>,
    /// Mean per-token training loss of every batch.
    pub train_losses: Vec<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

fn token_count(examples: &[&EncodedExample]) -> usize {
    examples.iter().map(|e| e.tgt.len()).sum()
}

/// Summed loss and gradient over `examples`, reduced in a fixed order.
fn summed_grad(model: &Model, examples: &[&EncodedExample]) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.params.len()];
            let loss = chunk.iter().map(|ex| model.loss_and_grad(ex, &mut g)).sum::<f64>();
            (loss, g)
        })
        .collect();
    let mut total = 0.0;
    let mut grads = vec![0.0; model.params.len()];
    for (l, g) in parts {
        total += l;
        add_into(&g, &mut grads);
    }
    (total, grads)
}

/// Mean per-token loss over a data set.
pub fn batch_loss(model: &Model, examples: &[EncodedExample]) -> f64 {
    let losses: Vec<f64> = examples
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().map(|ex| model.loss(ex)).sum::<f64>())
        .collect();
    let tokens: usize = examples.iter().map(|e| e.tgt.len()).sum();
    losses.iter().sum::<f64>() / tokens.max(1) as f64
}

/// Trains with Adam on sequential batches of a seeded shuffle, evaluating
/// on `valid` every `eval_every` steps and keeping the best parameters.
pub fn train(
    ckpt: &Checkpoint,
    train_set: &[EncodedExample],
    valid: &[EncodedExample],
    options: &TrainOptions,
) -> Result<TrainReport, NmtError> {
    if train_set.is_empty() {
        return Err(NmtError::Config("empty training set".into()));
    }
    if options.batch_size == 0 || options.eval_every == 0 {
        return Err(NmtError::Config("batch size and evaluation interval must be positive".into()));
    }
    for ex in train_set.iter().chain(valid) {
        ckpt.model.check_example(ex)?;
    }
    let mut ck = ckpt.clone();
    let mut adam = Adam::new(ck.model.params.len(), options.lr);
    let mut order: Vec<usize> = Vec::new();
    let mut pos = 0;
    let mut validation = Vec::new();
    let mut train_losses = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut bad_evals = 0;
    let mut stopped_early = false;

    if !valid.is_empty() {
        let vl = batch_loss(&ck.model, valid);
        log::info!("step {} valid loss {vl:.5}", ck.step);
        validation.push((ck.step, vl));
        best = Some((vl, ck.clone()));
    }

    let mut steps_run = 0;
    for batch_id in 0..options.steps as usize {
        if pos >= order.len() {
            order = (0..train_set.len()).collect();
            order.shuffle(&mut ck.rng);
            pos = 0;
        }
        let end = (pos + options.batch_size).min(order.len());
        let batch: Vec<&EncodedExample> = order[pos..end].iter().map(|&i| &train_set[i]).collect();
        pos = end;

        let tokens = token_count(&batch).max(1) as f64;
        let (loss, mut grads) = summed_grad(&ck.model, &batch);
        let loss = loss / tokens;
        if !loss.is_finite() {
            return Err(NmtError::NonFiniteLoss {
                batch: batch_id,
                step: ck.step,
            });
        }
        grads.iter_mut().for_each(|g| *g /= tokens);
        if let Some(max) = options.clip_norm {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                let s = max / norm;
                grads.iter_mut().for_each(|g| *g *= s);
            }
        }
        adam.step(&mut ck.model.params, &grads);
        ck.step += 1;
        steps_run += 1;
        train_losses.push(loss);

        if !valid.is_empty() && ck.step % options.eval_every == 0 {
            let vl = batch_loss(&ck.model, valid);
            log::info!("step {} train loss {loss:.5} valid loss {vl:.5}", ck.step);
            validation.push((ck.step, vl));
            match &best {
                Some((b, _)) if vl >= *b => {
                    bad_evals += 1;
                    if bad_evals >= options.patience {
                        stopped_early = true;
                        break;
                    }
                }
                _ => {
                    bad_evals = 0;
                    best = Some((vl, ck.clone()));
                }
            }
        }
    }

    let checkpoint = match best {
        Some((_, b)) => b,
        None => ck,
    };
    Ok(TrainReport {
        best_step: checkpoint.step,
        checkpoint,
        steps_run,
        validation,
        train_losses,
        stopped_early,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub loss: f64,
    pub checked: usize,
}

/// Compares analytic gradients with central differences for every
/// parameter. Relative error is `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn gradient_check(model: &Model, ex: &EncodedExample, epsilon: f64) -> GradientCheck {
    let mut analytic = vec![0.0; model.params.len()];
    let loss = model.loss_and_grad(ex, &mut analytic);
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..probe.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = probe.loss(ex);
        probe.params[i] = orig - epsilon;
        let down = probe.loss(ex);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    let worst_parameter = model
        .layout
        .names
        .iter()
        .zip(&model.layout.blocks)
        .find(|(_, b)| b.offset <= worst.1 && worst.1 < b.offset + b.len())
        .map(|(n, b)| format!("{n}[{}]", worst.1 - b.offset))
        .unwrap_or_default();
    GradientCheck {
        max_relative_error: worst.0,
        worst_parameter,
        loss,
        checked: model.params.len(),
    }
}
