//! Versioned binary checkpoint for a trained initialization.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "MPCK"
//! version      u8       1
//! byte order   u8       b'L'
//! float bits   u8       64
//! layers       u32
//!   per layer: input_dim u32, output_dim u32, activation u8 (0 tanh, 1 identity)
//! outer iters  u64      iterations completed
//! seed         u64
//! count        u64      number of weights
//! weights      count × f64
//! crc32        u32      over every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Layout, WeightVector};
use crate::reptile::MetaState;

pub const MAGIC: &[u8; 4] = b"MPCK";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: WeightVector,
    pub outer_iters: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_state(state: &MetaState, seed: u64) -> Self {
        Self {
            weights: state.theta.clone(),
            outer_iters: state.iteration as u64,
            seed,
        }
    }

    pub fn layout(&self) -> &Layout {
        self.weights.layout()
    }

    pub fn into_state(self) -> MetaState {
        MetaState {
            iteration: self.outer_iters as usize,
            theta: self.weights,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let layers = self.weights.layout().layers();
        let mut buf = Vec::with_capacity(48 + layers.len() * 9 + self.weights.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&[FORMAT_VERSION, b'L', 64]);
        buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in layers {
            buf.extend_from_slice(&(l.input_dim as u32).to_le_bytes());
            buf.extend_from_slice(&(l.output_dim as u32).to_le_bytes());
            buf.push(match l.activation {
                Activation::Tanh => 0,
                Activation::Identity => 1,
            });
        }
        buf.extend_from_slice(&self.outer_iters.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for v in self.weights.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Checkpoint(format!("corrupted checkpoint: {what}"));
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes.len() < 5 {
            return Err(corrupt("truncated header"));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: bytes[4],
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 11 {
            return Err(corrupt("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        if body[5] != b'L' || body[6] != 64 {
            return Err(Error::Checkpoint(format!(
                "unsupported encoding (byte order {:#x}, float bits {})",
                body[5], body[6]
            )));
        }

        let mut r = Reader { buf: body, pos: 7 };
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let input_dim = r.u32()? as usize;
            let output_dim = r.u32()? as usize;
            let activation = match r.u8()? {
                0 => Activation::Tanh,
                1 => Activation::Identity,
                t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
            };
            layers.push(LayerSpec::new(input_dim, output_dim, activation));
        }
        let layout = Layout::new(layers).map_err(|e| Error::Checkpoint(format!("layout mismatch: {e}")))?;
        let outer_iters = r.u64()?;
        let seed = r.u64()?;
        let count = r.u64()? as usize;
        if count != layout.param_count() {
            return Err(Error::Checkpoint(format!(
                "layout mismatch: layout needs {} weights, file declares {count}",
                layout.param_count()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let weights = WeightVector::from_values(layout, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            weights,
            outer_iters,
            seed,
        })
    }

    /// Writes through a sibling temporary file so readers never see a partial
    /// checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.encode())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("corrupted checkpoint: truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
