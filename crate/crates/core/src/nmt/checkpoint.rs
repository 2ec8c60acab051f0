//! Binary checkpoint format. All integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CMTGCKPT"
//! version      u32
//! config_len   u64, then config_len bytes of JSON (ModelConfig)
//! step         u64
//! rng          32-byte seed, u64 stream, u128 word position
//! block_count  u32
//! per block:   u32 name_len, name (UTF-8), u32 ndim, ndim x u64 dims,
//!              prod(dims) x f64 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::params::Layout;
use super::{Checkpoint, Model, ModelConfig, NmtError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CMTGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let config = serde_json::to_vec(&self.model.config).map_err(std::io::Error::other)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(config.len() as u64).to_le_bytes())?;
        w.write_all(&config)?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&self.rng.get_seed())?;
        w.write_all(&self.rng.get_stream().to_le_bytes())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        let layout = &self.model.layout;
        w.write_all(&(layout.blocks.len() as u32).to_le_bytes())?;
        for (name, block) in layout.names.iter().zip(&layout.blocks) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let dims: &[usize] = if block.cols == 1 {
                &[block.rows]
            } else {
                &[block.rows, block.cols]
            };
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in block.of(&self.model.params) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), NmtError> {
        let io = |e| NmtError::Io(path.display().to_string(), e);
        let f = File::create(path).map_err(io)?;
        self.write_to(BufWriter::new(f)).map_err(io)
    }

    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<Checkpoint, NmtError> {
        let bad = |reason: String| NmtError::BadCheckpoint {
            path: origin.to_string(),
            reason,
        };
        let mut rd = Reader { r: &mut r };
        let magic: [u8; 8] = rd.array().map_err(|e| bad(e.to_string()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let io = |e: std::io::Error| bad(format!("truncated: {e}"));
        let version = u32::from_le_bytes(rd.array().map_err(io)?);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(rd.array().map_err(io)?) as usize;
        let config_bytes = rd.bytes(len).map_err(io)?;
        let config: ModelConfig =
            serde_json::from_slice(&config_bytes).map_err(|e| bad(format!("config: {e}")))?;
        config.validate()?;
        let step = u64::from_le_bytes(rd.array().map_err(io)?);
        let seed: [u8; 32] = rd.array().map_err(io)?;
        let stream = u64::from_le_bytes(rd.array().map_err(io)?);
        let word_pos = u128::from_le_bytes(rd.array().map_err(io)?);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let layout = Layout::new(&config);
        let count = u32::from_le_bytes(rd.array().map_err(io)?) as usize;
        if count != layout.blocks.len() {
            return Err(bad(format!(
                "{count} parameter blocks, configuration implies {}",
                layout.blocks.len()
            )));
        }
        let mut params = vec![0.0; layout.total];
        for (name, block) in layout.names.iter().zip(&layout.blocks) {
            let n = u32::from_le_bytes(rd.array().map_err(io)?) as usize;
            let got = String::from_utf8(rd.bytes(n).map_err(io)?).map_err(|_| bad("block name is not UTF-8".into()))?;
            if &got != name {
                return Err(bad(format!("expected block {name}, found {got}")));
            }
            let ndim = u32::from_le_bytes(rd.array().map_err(io)?) as usize;
            let mut size = 1usize;
            for _ in 0..ndim {
                size *= u64::from_le_bytes(rd.array().map_err(io)?) as usize;
            }
            if size != block.len() {
                return Err(bad(format!("block {name} has {size} values, expected {}", block.len())));
            }
            for v in block.of_mut(&mut params) {
                *v = f64::from_le_bytes(rd.array().map_err(io)?);
            }
        }
        Ok(Checkpoint {
            model: Model {
                config,
                layout,
                params,
            },
            step,
            rng,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint, NmtError> {
        let f = File::open(path).map_err(|e| NmtError::Io(path.display().to_string(), e))?;
        Checkpoint::read_from(BufReader::new(f), &path.display().to_string())
    }
}

struct Reader<'a, R: Read> {
    r: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn array<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b)?;
        Ok(b)
    }

    fn bytes(&mut self, n: usize) -> std::io::Result<Vec<u8>> {
        let mut b = Vec::new();
        self.r.take(n as u64).read_to_end(&mut b)?;
        if b.len() != n {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        Ok(b)
    }
}
