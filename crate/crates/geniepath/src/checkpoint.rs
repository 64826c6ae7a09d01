//! Binary parameter checkpoints.
//!
//! Layout: magic `GNPK`, version `u32`, parameter count `u32`, then per
//! parameter a `u32` name length, the UTF-8 name, `rows: u64`, `cols: u64`
//! and `rows * cols` row-major `f64` values. Integers and floats are
//! little-endian.

use std::path::Path;

use geniepath_core::{Matrix, Model, ParamSet};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GNPK";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for x in p.value.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.bytes.len() < n {
            return Err("truncated checkpoint".into());
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into `(name, value)` pairs in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Matrix)>, String> {
    let mut r = Reader { bytes };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = r.u32()?;
    let mut params = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| "parameter name is not UTF-8".to_string())?
            .to_string();
        let rows = usize::try_from(r.u64()?).map_err(|_| "row count too large")?;
        let cols = usize::try_from(r.u64()?).map_err(|_| "column count too large")?;
        let n = rows.checked_mul(cols).filter(|n| n.checked_mul(8).is_some());
        let n = n.ok_or_else(|| format!("parameter {name} is too large"))?;
        let data = r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Matrix::from_vec(rows, cols, data).expect("sized")));
    }
    if !r.bytes.is_empty() {
        return Err("trailing bytes after the last parameter".into());
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ParamSet) -> Result<()> {
    crate::error::write(path, encode(params))
}

/// Loads a checkpoint into `model`, which must have the same parameter names
/// and shapes.
pub fn load_into(path: &Path, model: &mut Model) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let params = decode(&bytes).map_err(format)?;
    model
        .params_mut()
        .load_values(params.iter().map(|(n, m)| (n.as_str(), m)))
        .map_err(|e| format(format!("checkpoint does not fit the configured model: {e}")))
}
