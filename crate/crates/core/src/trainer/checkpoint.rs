//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "ESTI"  u32 version
//! u32 config length, config bytes (`key = value` lines, UTF-8)
//! u64 stage-1 iterations  u64 stage-2 iterations  u64 init seed
//! u32 tensor count
//! per tensor: u32 name length, name bytes, u32 rank, u64 extents…, f32 values…
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use crate::config::ConfigMap;
use crate::engine::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::{Estinet, ModelConfig};

pub const MAGIC: &[u8; 4] = b"ESTI";
pub const VERSION: u32 = 1;

/// Model configuration, training progress and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub stage1_iters: u64,
    pub stage2_iters: u64,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let config: String = self
            .model
            .to_pairs()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        put_bytes(&mut out, config.as_bytes());
        out.extend_from_slice(&self.stage1_iters.to_le_bytes());
        out.extend_from_slice(&self.stage2_iters.to_le_bytes());
        out.extend_from_slice(&self.params.rng_seed().to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, entry) in self.params.iter() {
            put_bytes(&mut out, name.as_bytes());
            let shape = entry.value.shape();
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in entry.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("missing ESTI magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let config = std::str::from_utf8(r.bytes_with_len()?)
            .map_err(|_| Error::Checkpoint("configuration is not UTF-8".into()))?;
        let map = ConfigMap::parse_key_values(config)?;
        let model = ModelConfig::from_pairs(map.iter())?;
        let stage1_iters = r.u64()?;
        let stage2_iters = r.u64()?;
        let mut params = ParamStore::new(r.u64()?);
        let count = r.u32()?;
        for _ in 0..count {
            let name = std::str::from_utf8(r.bytes_with_len()?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel.ok_or_else(|| Error::Checkpoint(format!("`{name}` is too large")))?;
            let raw = r.take(numel.saturating_mul(4))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            let tensor = Tensor::from_vec(shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
            params
                .insert(name, tensor)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        check_layout(&model, &params)?;
        Ok(Self {
            model,
            stage1_iters,
            stage2_iters,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.numel()
    }
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated payload".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn bytes_with_len(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

/// Rejects tensors that do not match the names and shapes of `model`.
fn check_layout(model: &ModelConfig, params: &ParamStore<f32>) -> Result<()> {
    let expected = Estinet::new(*model)
        .and_then(|m| m.init::<f32>(0))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if expected.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, architecture has {}",
            params.len(),
            expected.len()
        )));
    }
    for (name, entry) in expected.iter() {
        match params.value(name) {
            Some(v) if v.shape() == entry.value.shape() => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, architecture expects {:?}",
                    v.shape(),
                    entry.value.shape()
                )))
            }
            None => return Err(Error::Checkpoint(format!("missing tensor `{name}`"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        let mut model = ModelConfig::default();
        for (k, v) in [("base_channels", "1"), ("feature_channels", "1"), ("estm_width", "1")] {
            model.set(k, v).unwrap();
        }
        for (k, v) in [("rdb_count", "1"), ("rdb_layers", "1"), ("growth", "1")] {
            model.set(k, v).unwrap();
        }
        model
    }

    fn sample() -> Checkpoint {
        let model = tiny();
        let mut params = Estinet::new(model).unwrap().init::<f32>(42).unwrap();
        let bias = params.value_mut("sicm.enc1.conv1.bias").unwrap();
        bias.data_mut()[0] = f32::MIN_POSITIVE;
        bias.data_mut()[1] = -0.0;
        Checkpoint {
            model,
            stage1_iters: 7,
            stage2_iters: 3,
            params,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.params.rng_seed(), 42);
        assert_eq!(back.stage1_iters, 7);
    }

    #[test]
    fn every_flipped_byte_is_rejected() {
        let bytes = sample().to_bytes();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(Checkpoint::from_bytes(&bad).is_err(), "byte {i}");
        }
    }

    #[test]
    fn rejects_version_and_truncation() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        assert!(Checkpoint::from_bytes(b"NOPE").is_err());
    }

    #[test]
    fn rejects_tensors_that_do_not_fit_the_architecture() {
        let mut c = sample();
        c.params.insert("extra.weight", Tensor::zeros([2])).unwrap();
        let err = Checkpoint::from_bytes(&c.to_bytes()).unwrap_err();
        assert!(err.to_string().contains("tensors stored"), "{err}");

        let mut c = sample();
        let mut reshaped = ParamStore::new(42);
        for (name, entry) in c.params.iter() {
            let value = if name == "sicm.input.bias" {
                Tensor::zeros([2])
            } else {
                entry.value.clone()
            };
            reshaped.insert(name, value).unwrap();
        }
        c.params = reshaped;
        let err = Checkpoint::from_bytes(&c.to_bytes()).unwrap_err();
        assert!(err.to_string().contains("architecture expects"), "{err}");
    }
}
