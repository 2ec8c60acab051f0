//! Named parameter blocks stored in one flat buffer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;

pub const INIT_RANGE: f64 = 0.08;

/// A block inside the flat buffer. Vectors are `rows x 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn of<'a>(&self, data: &'a [f64]) -> &'a [f64] {
        &data[self.offset..self.offset + self.len()]
    }

    #[inline]
    pub fn of_mut<'a>(&self, data: &'a mut [f64]) -> &'a mut [f64] {
        &mut data[self.offset..self.offset + self.len()]
    }

    #[inline]
    pub fn row<'a>(&self, data: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.offset + r * self.cols;
        &data[start..start + self.cols]
    }

    #[inline]
    pub fn row_mut<'a>(&self, data: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let start = self.offset + r * self.cols;
        &mut data[start..start + self.cols]
    }
}

/// One GRU cell: input weights `[3h x in]`, recurrent weights `[3h x h]` and
/// their biases, gate order reset, update, candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruBlocks {
    pub w_x: Block,
    pub w_h: Block,
    pub b_x: Block,
    pub b_h: Block,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyBlocks {
    pub w: Block,
    pub b: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    pub total: usize,
    pub src_emb: Block,
    pub tgt_emb: Block,
    pub enc: Vec<GruBlocks>,
    /// Reverse direction of the first encoder layer when bidirectional.
    pub enc_rev: Option<GruBlocks>,
    pub dec: Vec<GruBlocks>,
    pub att_wq: Block,
    pub att_b: Block,
    pub att_uk: Block,
    pub att_v: Block,
    pub out_w: Block,
    pub out_b: Block,
    pub copy: Option<CopyBlocks>,
}

struct Builder {
    names: Vec<String>,
    blocks: Vec<Block>,
    total: usize,
}

impl Builder {
    fn block(&mut self, name: String, rows: usize, cols: usize) -> Block {
        let b = Block {
            offset: self.total,
            rows,
            cols,
        };
        self.total += rows * cols;
        self.names.push(name);
        self.blocks.push(b);
        b
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> GruBlocks {
        GruBlocks {
            w_x: self.block(format!("{prefix}.w_x"), 3 * hidden, input),
            w_h: self.block(format!("{prefix}.w_h"), 3 * hidden, hidden),
            b_x: self.block(format!("{prefix}.b_x"), 3 * hidden, 1),
            b_h: self.block(format!("{prefix}.b_h"), 3 * hidden, 1),
            input,
            hidden,
        }
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Layout {
        let (e, h) = (config.embedding_dim, config.hidden_dim);
        let (vs, vt) = (config.src_vocab.len(), config.tgt_vocab.len());
        let mut b = Builder {
            names: Vec::new(),
            blocks: Vec::new(),
            total: 0,
        };
        let src_emb = b.block("src_emb".into(), vs, e);
        let tgt_emb = b.block("tgt_emb".into(), vt, e);
        let enc: Vec<GruBlocks> = (0..config.enc_layers)
            .map(|l| b.gru(&format!("enc.{l}"), if l == 0 { e } else { h }, h))
            .collect();
        let enc_rev = config.bidirectional.then(|| b.gru("enc.0.rev", e, h));
        let dec: Vec<GruBlocks> = (0..config.dec_layers)
            .map(|l| b.gru(&format!("dec.{l}"), if l == 0 { e } else { h }, h))
            .collect();
        let att_wq = b.block("att.w_q".into(), h, h);
        let att_b = b.block("att.b".into(), h, 1);
        let att_uk = b.block("att.u_k".into(), h, h);
        let att_v = b.block("att.v".into(), h, 1);
        let out_w = b.block("out.w".into(), vt, 2 * h);
        let out_b = b.block("out.b".into(), vt, 1);
        let copy = config.copy_enabled.then(|| CopyBlocks {
            w: b.block("copy.w".into(), 1, 2 * h + e),
            b: b.block("copy.b".into(), 1, 1),
        });
        Layout {
            names: b.names,
            blocks: b.blocks,
            total: b.total,
            src_emb,
            tgt_emb,
            enc,
            enc_rev,
            dec,
            att_wq,
            att_b,
            att_uk,
            att_v,
            out_w,
            out_b,
            copy,
        }
    }

    pub fn find(&self, name: &str) -> Option<Block> {
        self.names.iter().position(|n| n == name).map(|i| self.blocks[i])
    }
}

/// Uniform initialisation in `[-INIT_RANGE, INIT_RANGE]`.
pub fn init_uniform(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect()
}
