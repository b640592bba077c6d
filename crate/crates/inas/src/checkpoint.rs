//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"INASCKPT"  u32 version  u32 spec_len  spec_len bytes of NetworkSpec JSON
//! u64 n_params  n_params x f32
//! u64 n_buffers n_buffers x f32   (batch-norm running statistics)
//! ```

use std::fs;
use std::path::Path;

use inas_core::nn::{ModelHandle, NetworkSpec};

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"INASCKPT";
pub const VERSION: u32 = 1;

pub fn encode(model: &ModelHandle) -> Vec<u8> {
    let spec = serde_json::to_vec(model.spec()).expect("NetworkSpec serializes");
    let mut out = Vec::with_capacity(32 + spec.len() + 4 * (model.params().len() + model.buffers().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    for values in [model.params(), model.buffers()] {
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn corrupt(msg: &str) -> AppError {
    AppError::Data(format!("checkpoint: {msg}"))
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.0.len() {
            return Err(corrupt("truncated"));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let n = usize::try_from(n).map_err(|_| corrupt("length overflow"))?;
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelHandle> {
    let mut c = Cursor(bytes);
    if c.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(corrupt("bad magic bytes"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    let len = c.u32()? as usize;
    let spec: NetworkSpec =
        serde_json::from_slice(c.take(len)?).map_err(|e| corrupt(&format!("bad network spec: {e}")))?;
    let params = c.f32s()?;
    let buffers = c.f32s()?;
    if !c.0.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(ModelHandle::from_parts(spec, params, buffers, true)?)
}

pub fn save(model: &ModelHandle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(AppError::io(path))
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelHandle> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(AppError::io(path))?)
}
