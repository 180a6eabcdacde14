//! Binary model files.
//!
//! Layout, little-endian: magic `DSVM`, u32 version, the configuration
//! block, u32 tensor count, then per tensor a u32 name length, the UTF-8
//! name, u32 rank, u32 dims and an f32 payload.
//!
//! The configuration block holds u32 variant, k, d_in, d_ff, n_layers,
//! n_heads, vocab_size, f64 dropout, u32 feedforward multiplier, u32
//! positional-encoding, normalisation and activation codes, and f64 layer
//! norm epsilon.

use std::fs;
use std::path::Path;

use super::config::{ModelConfig, Variant, FFN_MULT, LAYER_NORM_EPS};
use super::network::DvrModel;
use super::params::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"DSVM";
pub const MODEL_VERSION: u32 = 1;
const POSITIONAL_SINUSOIDAL: u32 = 1;
const NORM_PRE: u32 = 1;
const ACTIVATION_GELU_TANH: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("model file truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Validation(format!("{v} does not fit the model format")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn model_to_bytes<T: Scalar>(model: &DvrModel<T>) -> Result<Vec<u8>> {
    let c = model.config();
    let mut out = Vec::with_capacity(model.count_parameters() * 4 + 4096);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&c.variant.code().to_le_bytes());
    for v in [c.k, c.d_in, c.d_ff, c.n_layers, c.n_heads, c.vocab_size] {
        put_u32(&mut out, v)?;
    }
    out.extend_from_slice(&c.dropout.to_le_bytes());
    put_u32(&mut out, FFN_MULT)?;
    for code in [POSITIONAL_SINUSOIDAL, NORM_PRE, ACTIVATION_GELU_TANH] {
        out.extend_from_slice(&code.to_le_bytes());
    }
    out.extend_from_slice(&LAYER_NORM_EPS.to_le_bytes());
    let tensors = model.params().tensors();
    put_u32(&mut out, tensors.len())?;
    for t in tensors {
        put_u32(&mut out, t.name.len())?;
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.shape.len())?;
        for &d in &t.shape {
            put_u32(&mut out, d)?;
        }
        for x in &t.data {
            out.extend_from_slice(&x.as_f32().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn model_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<DvrModel<T>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let variant_code = r.u32()?;
    let variant = Variant::from_code(variant_code)
        .ok_or_else(|| Error::Format(format!("unknown variant code {variant_code}")))?;
    let config = ModelConfig {
        variant,
        k: r.usize()?,
        d_in: r.usize()?,
        d_ff: r.usize()?,
        n_layers: r.usize()?,
        n_heads: r.usize()?,
        vocab_size: r.usize()?,
        dropout: r.f64()?,
    };
    let arch = [r.usize()?, r.usize()?, r.usize()?, r.usize()?];
    let eps = r.f64()?;
    if arch != [FFN_MULT, POSITIONAL_SINUSOIDAL as usize, NORM_PRE as usize, ACTIVATION_GELU_TANH as usize]
        || eps != LAYER_NORM_EPS
    {
        return Err(Error::Format(format!(
            "model architecture {arch:?} (eps {eps}) is not supported by this build"
        )));
    }
    let n = r.usize()?;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.usize()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.usize()?;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let payload = r.take(count.checked_mul(4).ok_or_else(|| Error::Corrupt("tensor too large".into()))?)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| T::of_f32(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.at != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes after the last tensor", bytes.len() - r.at)));
    }
    DvrModel::from_parts(config, ParamStore::from_tensors(tensors)?)
}

pub fn save_model<T: Scalar>(model: &DvrModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<DvrModel<T>> {
    let path = path.as_ref();
    model_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
