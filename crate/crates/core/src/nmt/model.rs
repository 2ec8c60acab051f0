//! Forward pass and hand-written backpropagation.

use super::data::EncodedExample;
use super::linalg::{add_into, axpy, dot, matvec_add, matvec_t_add, outer_add, sigmoid, softmax};
use super::params::{Block, GruBlocks};
use super::Model;
use crate::corpus::UNK_ID;

/// Copy-gate behaviour during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GateMode {
    #[default]
    Learned,
    /// Fixes the gate value; gradients are not defined in this mode.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

fn gru_forward(p: &[f64], g: &GruBlocks, x: &[f64], h_prev: &[f64]) -> GruCache {
    let hd = g.hidden;
    let mut gx = g.b_x.of(p).to_vec();
    matvec_add(g.w_x.of(p), g.input, x, &mut gx);
    let mut gh = g.b_h.of(p).to_vec();
    matvec_add(g.w_h.of(p), hd, h_prev, &mut gh);
    let mut r = vec![0.0; hd];
    let mut z = vec![0.0; hd];
    let mut n = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        r[k] = sigmoid(gx[k] + gh[k]);
        z[k] = sigmoid(gx[hd + k] + gh[hd + k]);
        n[k] = (gx[2 * hd + k] + r[k] * gh[2 * hd + k]).tanh();
        h[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
    }
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        n,
        hn: gh[2 * hd..].to_vec(),
        h,
    }
}

/// Accumulates parameter gradients for one step; adds the input gradient to
/// `dx` and returns the gradient for the previous state.
fn gru_backward(
    p: &[f64],
    grads: &mut [f64],
    g: &GruBlocks,
    c: &GruCache,
    dh: &[f64],
    dx: &mut [f64],
) -> Vec<f64> {
    let hd = g.hidden;
    let mut gx = vec![0.0; 3 * hd];
    let mut gh = vec![0.0; 3 * hd];
    let mut dh_prev = vec![0.0; hd];
    for k in 0..hd {
        let dn = dh[k] * (1.0 - c.z[k]);
        let dz = dh[k] * (c.h_prev[k] - c.n[k]);
        dh_prev[k] = dh[k] * c.z[k];
        let dn_pre = dn * (1.0 - c.n[k] * c.n[k]);
        let dr = dn_pre * c.hn[k];
        let dr_pre = dr * c.r[k] * (1.0 - c.r[k]);
        let dz_pre = dz * c.z[k] * (1.0 - c.z[k]);
        gx[k] = dr_pre;
        gx[hd + k] = dz_pre;
        gx[2 * hd + k] = dn_pre;
        gh[k] = dr_pre;
        gh[hd + k] = dz_pre;
        gh[2 * hd + k] = dn_pre * c.r[k];
    }
    outer_add(g.w_x.of_mut(grads), g.input, &gx, &c.x);
    add_into(&gx, g.b_x.of_mut(grads));
    matvec_t_add(g.w_x.of(p), g.input, &gx, dx);
    outer_add(g.w_h.of_mut(grads), hd, &gh, &c.h_prev);
    add_into(&gh, g.b_h.of_mut(grads));
    matvec_t_add(g.w_h.of(p), hd, &gh, &mut dh_prev);
    dh_prev
}

fn run_layer(p: &[f64], g: &GruBlocks, inputs: &[Vec<f64>], h0: Vec<f64>) -> Vec<GruCache> {
    let mut out: Vec<GruCache> = Vec::with_capacity(inputs.len());
    for x in inputs {
        let c = gru_forward(p, g, x, out.last().map_or(&h0, |c| &c.h));
        out.push(c);
    }
    out
}

/// BPTT through one layer. `d_h` holds the gradient reaching each step's
/// state from above, `d_final` the gradient on the last state. Returns the
/// input gradients and the initial-state gradient.
fn backprop_layer(
    p: &[f64],
    grads: &mut [f64],
    g: &GruBlocks,
    caches: &[&GruCache],
    d_h: &[Vec<f64>],
    d_final: Option<&[f64]>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut carry = d_final.map_or_else(|| vec![0.0; g.hidden], <[f64]>::to_vec);
    let mut d_in = vec![vec![0.0; g.input]; caches.len()];
    for t in (0..caches.len()).rev() {
        add_into(&d_h[t], &mut carry);
        carry = gru_backward(p, grads, g, caches[t], &carry, &mut d_in[t]);
    }
    (d_in, carry)
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    layers: Vec<Vec<GruCache>>,
    /// Reverse-direction caches in processing order (last position first).
    reverse: Option<Vec<GruCache>>,
    pub(crate) outputs: Vec<Vec<f64>>,
    pub(crate) finals: Vec<Vec<f64>>,
    pub(crate) keys: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    grus: Vec<GruCache>,
    input_id: usize,
    emb: Vec<f64>,
    pub(crate) top: Vec<f64>,
    u: Vec<Vec<f64>>,
    pub(crate) alpha: Vec<f64>,
    context: Vec<f64>,
    pub(crate) p_vocab: Vec<f64>,
    pub(crate) gate: Option<f64>,
    pub(crate) dist: Vec<f64>,
}

impl StepCache {
    pub(crate) fn states(&self) -> Vec<Vec<f64>> {
        self.grus.iter().map(|c| c.h.clone()).collect()
    }
}

/// Per-step outputs of a teacher-forced pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Distributions over the target vocabulary extended by source OOVs.
    pub distributions: Vec<Vec<f64>>,
    /// Generation softmax before copy mixing.
    pub generation: Vec<Vec<f64>>,
    pub attention: Vec<Vec<f64>>,
    pub gates: Vec<Option<f64>>,
    pub loss: f64,
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

impl Model {
    fn residual_at(&self, layer: usize) -> bool {
        self.config.residual && layer >= 1
    }

    pub(crate) fn encode(&self, src: &[usize]) -> EncoderCache {
        let p = &self.params;
        let lay = &self.layout;
        let embedded: Vec<Vec<f64>> = src.iter().map(|&s| lay.src_emb.row(p, s).to_vec()).collect();
        let t_len = src.len();
        let mut layers = Vec::with_capacity(lay.enc.len());
        let mut finals = Vec::with_capacity(lay.enc.len());
        let mut reverse = None;
        let mut current = embedded;
        for (l, g) in lay.enc.iter().enumerate() {
            let caches = run_layer(p, g, &current, vec![0.0; g.hidden]);
            let mut outputs: Vec<Vec<f64>> = caches.iter().map(|c| c.h.clone()).collect();
            let mut fin = caches.last().map_or_else(|| vec![0.0; g.hidden], |c| c.h.clone());
            if l == 0 {
                if let Some(rg) = &lay.enc_rev {
                    let rev_in: Vec<Vec<f64>> = current.iter().rev().cloned().collect();
                    let rc = run_layer(p, rg, &rev_in, vec![0.0; rg.hidden]);
                    for (k, c) in rc.iter().enumerate() {
                        add_into(&c.h, &mut outputs[t_len - 1 - k]);
                    }
                    if let Some(c) = rc.last() {
                        add_into(&c.h, &mut fin);
                    }
                    reverse = Some(rc);
                }
            }
            if self.residual_at(l) {
                for (o, x) in outputs.iter_mut().zip(&current) {
                    add_into(x, o);
                }
            }
            finals.push(fin);
            layers.push(caches);
            current = outputs;
        }
        let keys = current
            .iter()
            .map(|hv| {
                let mut k = vec![0.0; lay.att_uk.rows];
                matvec_add(lay.att_uk.of(p), lay.att_uk.cols, hv, &mut k);
                k
            })
            .collect();
        EncoderCache {
            layers,
            reverse,
            outputs: current,
            finals,
            keys,
        }
    }

    /// Decoder initial states: encoder final state per layer, zeros above.
    pub(crate) fn initial_states(&self, enc: &EncoderCache) -> Vec<Vec<f64>> {
        (0..self.layout.dec.len())
            .map(|l| {
                enc.finals
                    .get(l)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; self.config.hidden_dim])
            })
            .collect()
    }

    /// Attention weights of `query` over `encoder_outputs`.
    pub fn attention_weights(&self, query: &[f64], encoder_outputs: &[Vec<f64>]) -> Vec<f64> {
        let p = &self.params;
        let lay = &self.layout;
        let keys: Vec<Vec<f64>> = encoder_outputs
            .iter()
            .map(|hv| {
                let mut k = vec![0.0; lay.att_uk.rows];
                matvec_add(lay.att_uk.of(p), lay.att_uk.cols, hv, &mut k);
                k
            })
            .collect();
        self.attend(query, &keys).1
    }

    fn attend(&self, top: &[f64], keys: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let p = &self.params;
        let lay = &self.layout;
        let mut q = lay.att_b.of(p).to_vec();
        matvec_add(lay.att_wq.of(p), lay.att_wq.cols, top, &mut q);
        let v = lay.att_v.of(p);
        let mut scores = Vec::with_capacity(keys.len());
        let u: Vec<Vec<f64>> = keys
            .iter()
            .map(|k| {
                let ui: Vec<f64> = q.iter().zip(k).map(|(a, b)| (a + b).tanh()).collect();
                scores.push(dot(v, &ui));
                ui
            })
            .collect();
        softmax(&mut scores);
        (u, scores)
    }

    pub(crate) fn decoder_step(
        &self,
        enc: &EncoderCache,
        states: &[Vec<f64>],
        input_id: usize,
        src_ext: &[usize],
        n_ext: usize,
        gate_mode: GateMode,
    ) -> StepCache {
        let p = &self.params;
        let lay = &self.layout;
        let vt = lay.tgt_emb.rows;
        let input_id = if input_id < vt { input_id } else { UNK_ID };
        let emb = lay.tgt_emb.row(p, input_id).to_vec();
        let mut grus = Vec::with_capacity(lay.dec.len());
        let mut x = emb.clone();
        for (l, g) in lay.dec.iter().enumerate() {
            let c = gru_forward(p, g, &x, &states[l]);
            let mut out = c.h.clone();
            if self.residual_at(l) {
                add_into(&x, &mut out);
            }
            grus.push(c);
            x = out;
        }
        let top = x;
        let (u, alpha) = self.attend(&top, &enc.keys);
        let mut context = vec![0.0; self.config.hidden_dim];
        for (a, hv) in alpha.iter().zip(&enc.outputs) {
            axpy(*a, hv, &mut context);
        }
        let oc = concat(&[&top, &context]);
        let mut p_vocab = lay.out_b.of(p).to_vec();
        matvec_add(lay.out_w.of(p), lay.out_w.cols, &oc, &mut p_vocab);
        softmax(&mut p_vocab);

        let gate = lay.copy.map(|cb| match gate_mode {
            GateMode::Fixed(g) => g,
            GateMode::Learned => {
                let qg = concat(&[&top, &context, &emb]);
                sigmoid(dot(cb.w.of(p), &qg) + cb.b.of(p)[0])
            }
        });
        let mut dist = vec![0.0; vt + n_ext];
        match gate {
            Some(g) => {
                for (d, pv) in dist.iter_mut().zip(&p_vocab) {
                    *d = (1.0 - g) * pv;
                }
                for (a, &j) in alpha.iter().zip(src_ext) {
                    dist[j] += g * a;
                }
            }
            None => dist[..vt].copy_from_slice(&p_vocab),
        }
        StepCache {
            grus,
            input_id,
            emb,
            top,
            u,
            alpha,
            context,
            p_vocab,
            gate,
            dist,
        }
    }

    fn run_decoder(&self, enc: &EncoderCache, ex: &EncodedExample, gate_mode: GateMode) -> Vec<StepCache> {
        let mut states = self.initial_states(enc);
        let mut steps = Vec::with_capacity(ex.tgt.len());
        let mut input = crate::corpus::BOS_ID;
        for &y in &ex.tgt {
            let step = self.decoder_step(enc, &states, input, &ex.src_ext, ex.oov.len(), gate_mode);
            states = step.states();
            steps.push(step);
            input = y;
        }
        steps
    }

    pub fn forward(&self, ex: &EncodedExample) -> ForwardOutput {
        self.forward_with(ex, GateMode::Learned)
    }

    pub fn forward_with(&self, ex: &EncodedExample, gate_mode: GateMode) -> ForwardOutput {
        let enc = self.encode(&ex.src);
        let steps = self.run_decoder(&enc, ex, gate_mode);
        let loss = steps.iter().zip(&ex.tgt).map(|(s, &y)| -s.dist[y].ln()).sum();
        ForwardOutput {
            distributions: steps.iter().map(|s| s.dist.clone()).collect(),
            generation: steps.iter().map(|s| s.p_vocab.clone()).collect(),
            attention: steps.iter().map(|s| s.alpha.clone()).collect(),
            gates: steps.iter().map(|s| s.gate).collect(),
            loss,
        }
    }

    /// Summed negative log-likelihood of `ex.tgt`.
    pub fn loss(&self, ex: &EncodedExample) -> f64 {
        self.forward(ex).loss
    }

    /// Summed negative log-likelihood; gradients are added into `grads`,
    /// which must have the length of the parameter buffer.
    pub fn loss_and_grad(&self, ex: &EncodedExample, grads: &mut [f64]) -> f64 {
        assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let lay = &self.layout;
        let hd = self.config.hidden_dim;
        let ed = self.config.embedding_dim;
        let vt = lay.tgt_emb.rows;
        let enc = self.encode(&ex.src);
        let steps = self.run_decoder(&enc, ex, GateMode::Learned);
        let s_len = ex.src.len();

        let mut loss = 0.0;
        let mut d_top: Vec<Vec<f64>> = Vec::with_capacity(steps.len());
        let mut d_enc_out = vec![vec![0.0; hd]; s_len];
        let mut d_keys = vec![vec![0.0; hd]; s_len];
        let mut d_emb_in: Vec<Vec<f64>> = Vec::with_capacity(steps.len());

        for (st, &y) in steps.iter().zip(&ex.tgt) {
            let prob = st.dist[y];
            loss -= prob.ln();
            let mut d_o = vec![0.0; hd];
            let mut d_c = vec![0.0; hd];
            let mut d_emb = vec![0.0; ed];
            let mut d_alpha = vec![0.0; s_len];

            // Output layer weight on the generation softmax.
            let pv_y = if y < vt { st.p_vocab[y] } else { 0.0 };
            let w = match st.gate {
                Some(g) => {
                    let copy_mass: f64 = st
                        .alpha
                        .iter()
                        .zip(&ex.src_ext)
                        .filter(|(_, &j)| j == y)
                        .map(|(a, _)| a)
                        .sum();
                    for (da, &j) in d_alpha.iter_mut().zip(&ex.src_ext) {
                        if j == y {
                            *da -= g / prob;
                        }
                    }
                    let d_gate = -(copy_mass - pv_y) / prob;
                    let d_pre = d_gate * g * (1.0 - g);
                    let cb = lay.copy.expect("copy blocks");
                    let qg = concat(&[&st.top, &st.context, &st.emb]);
                    axpy(d_pre, &qg, cb.w.of_mut(grads));
                    cb.b.of_mut(grads)[0] += d_pre;
                    let wg = cb.w.of(p);
                    axpy(d_pre, &wg[..hd], &mut d_o);
                    axpy(d_pre, &wg[hd..2 * hd], &mut d_c);
                    axpy(d_pre, &wg[2 * hd..], &mut d_emb);
                    -(1.0 - g) * pv_y / prob
                }
                None => -1.0,
            };
            if y < vt {
                let mut dz: Vec<f64> = st.p_vocab.iter().map(|pv| -w * pv).collect();
                dz[y] += w;
                let oc = concat(&[&st.top, &st.context]);
                outer_add(lay.out_w.of_mut(grads), 2 * hd, &dz, &oc);
                add_into(&dz, lay.out_b.of_mut(grads));
                let mut d_oc = vec![0.0; 2 * hd];
                matvec_t_add(lay.out_w.of(p), 2 * hd, &dz, &mut d_oc);
                add_into(&d_oc[..hd], &mut d_o);
                add_into(&d_oc[hd..], &mut d_c);
            }

            // Context and attention.
            for (i, hv) in enc.outputs.iter().enumerate() {
                d_alpha[i] += dot(&d_c, hv);
                axpy(st.alpha[i], &d_c, &mut d_enc_out[i]);
            }
            let mean: f64 = st.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let v = lay.att_v.of(p);
            let mut d_q = vec![0.0; hd];
            for i in 0..s_len {
                let de = st.alpha[i] * (d_alpha[i] - mean);
                if de == 0.0 {
                    continue;
                }
                axpy(de, &st.u[i], lay.att_v.of_mut(grads));
                for k in 0..hd {
                    let ds = de * v[k] * (1.0 - st.u[i][k] * st.u[i][k]);
                    d_q[k] += ds;
                    d_keys[i][k] += ds;
                }
            }
            outer_add(lay.att_wq.of_mut(grads), hd, &d_q, &st.top);
            add_into(&d_q, lay.att_b.of_mut(grads));
            matvec_t_add(lay.att_wq.of(p), hd, &d_q, &mut d_o);

            d_top.push(d_o);
            d_emb_in.push(d_emb);
        }
        for (dk, hv) in d_keys.iter().zip(&enc.outputs) {
            outer_add(lay.att_uk.of_mut(grads), hd, dk, hv);
        }
        for (dk, de) in d_keys.iter().zip(d_enc_out.iter_mut()) {
            matvec_t_add(lay.att_uk.of(p), hd, dk, de);
        }

        // Decoder stack, top layer first.
        let mut d_enc_final: Vec<Option<Vec<f64>>> = vec![None; lay.enc.len()];
        let mut d_out = d_top;
        for (l, g) in lay.dec.iter().enumerate().rev() {
            let caches: Vec<&GruCache> = steps.iter().map(|s| &s.grus[l]).collect();
            let (mut d_in, d_h0) = backprop_layer(p, grads, g, &caches, &d_out, None);
            if self.residual_at(l) {
                for (a, b) in d_in.iter_mut().zip(&d_out) {
                    add_into(b, a);
                }
            }
            if l < lay.enc.len() {
                d_enc_final[l] = Some(d_h0);
            }
            d_out = d_in;
        }
        for ((st, d_x), d_gate_emb) in steps.iter().zip(&d_out).zip(&d_emb_in) {
            let row = lay.tgt_emb.row_mut(grads, st.input_id);
            add_into(d_x, row);
            add_into(d_gate_emb, row);
        }

        // Encoder stack.
        let mut d_out = d_enc_out;
        for (l, g) in lay.enc.iter().enumerate().rev() {
            let caches: Vec<&GruCache> = enc.layers[l].iter().collect();
            let d_fin = d_enc_final[l].as_deref();
            let (mut d_in, _) = backprop_layer(p, grads, g, &caches, &d_out, d_fin);
            if l == 0 {
                if let (Some(rg), Some(rc)) = (&lay.enc_rev, &enc.reverse) {
                    let rcaches: Vec<&GruCache> = rc.iter().collect();
                    let d_rev: Vec<Vec<f64>> = d_out.iter().rev().cloned().collect();
                    let (d_rin, _) = backprop_layer(p, grads, rg, &rcaches, &d_rev, d_fin);
                    for (k, d) in d_rin.iter().enumerate() {
                        add_into(d, &mut d_in[s_len - 1 - k]);
                    }
                }
            }
            if self.residual_at(l) {
                for (a, b) in d_in.iter_mut().zip(&d_out) {
                    add_into(b, a);
                }
            }
            d_out = d_in;
        }
        for (&s, d) in ex.src.iter().zip(&d_out) {
            add_into(d, lay.src_emb.row_mut(grads, s));
        }
        loss
    }

    /// Block for a named parameter.
    pub fn block(&self, name: &str) -> Option<Block> {
        self.layout.find(name)
    }
}
