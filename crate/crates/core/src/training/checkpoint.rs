//! Binary checkpoints: config, parameters and optimizer state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DFTA" | u32 version | [u8; 32] sha256 of config text | u32 len | config TOML
//! u32 n_params | n x (u32 name len | name | u32 rank | u32 dims.. | f32 data..)
//! u64 adam step | n x (f32 m.. | f32 v..)
//! ```

use std::fs;
use std::path::Path;

use deftan_numerics::{ParamStore, Tensor};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::model::{DeftAn, ModelConfig};

pub const MAGIC: &[u8; 4] = b"DFTA";
pub const VERSION: u32 = 1;

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: DeftAn<f32>,
    pub adam: AdamState<f32>,
}

fn hex(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn fresh(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let model = DeftAn::new(cfg, seed)?;
        let adam = AdamState::new(&model.params);
        Ok(Self { model, adam })
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let text = self.config().to_toml();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(text.as_bytes()));
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        let params = &self.model.params;
        put_u32(&mut out, params.len());
        for p in params.iter() {
            put_u32(&mut out, p.name.len());
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.tensor.rank());
            for &d in p.tensor.shape() {
                put_u32(&mut out, d);
            }
            put_f32s(&mut out, p.tensor.data());
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for (m, v) in self.adam.m.iter().zip(&self.adam.v) {
            put_f32s(&mut out, m);
            put_f32s(&mut out, v);
        }
        out
    }

    /// Parses a checkpoint, checking that the stored digest matches the
    /// embedded config text.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.error_at(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.error_at(4, &format!("unsupported version {version}")));
        }
        let stored: [u8; 32] = r.take(32, "config digest")?.try_into().expect("32 bytes");
        let text_len = r.u32("config length")? as usize;
        let text_at = r.pos;
        let text = std::str::from_utf8(r.take(text_len, "config text")?)
            .map_err(|_| r.error_at(text_at, "config text is not UTF-8"))?;
        let actual: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        if actual != stored {
            return Err(Error::Incompatible {
                expected: hex(&actual),
                found: hex(&stored),
            });
        }
        let cfg = ModelConfig::from_toml(text)?;
        let n = r.u32("parameter count")? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name_len = r.u32("name length")? as usize;
            let name_at = r.pos;
            let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
                .map_err(|_| r.error_at(name_at, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            let data = r.f32s(numel, &name)?;
            params.add(name, Tensor::new(&shape, data)?)?;
        }
        let step = u64::from_le_bytes(r.take(8, "optimizer step")?.try_into().expect("8 bytes"));
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for p in params.iter() {
            m.push(r.f32s(p.tensor.numel(), "first moment")?);
            v.push(r.f32s(p.tensor.numel(), "second moment")?);
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after optimizer state"));
        }
        let model = DeftAn::from_params(cfg, params)?;
        Ok(Self {
            model,
            adam: AdamState { step, m, v },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and requires the stored config to equal `expected`.
    pub fn load_for(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.config().digest() != expected.digest() {
            return Err(Error::Incompatible {
                expected: expected.digest_hex(),
                found: ckpt.config().digest_hex(),
            });
        }
        Ok(ckpt)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, detail: &str) -> Error {
        Error::CheckpointParse {
            offset,
            detail: detail.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error_at(
                self.pos,
                &format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| self.error_at(self.pos, "tensor size overflows"))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
