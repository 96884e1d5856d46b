//! FTRX feature matrices: `FTRX`, `u32` rows, `u32` cols (little-endian),
//! then rows·cols little-endian `f32` values, row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"FTRX";
pub const HEADER_LEN: usize = 12;

pub fn encode_matrix(m: &Tensor<f32>) -> Result<Vec<u8>> {
    let [rows, cols] = *m.shape() else {
        return Err(Error::shape("write_matrix", m.shape(), &[0, 0]));
    };
    if cols == 0 {
        return Err(Error::Validation(
            "matrix must have at least one column".into(),
        ));
    }
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Validation(format!("dimension {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(rows)?.to_le_bytes());
    out.extend_from_slice(&dim(cols)?.to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8], origin: &str) -> Result<Tensor<f32>> {
    let fail = |detail: String| Error::Format {
        path: origin.to_string(),
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic, expected FTRX".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if cols == 0 {
        return Err(Error::Validation(format!(
            "{origin}: matrix has zero columns"
        )));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail("dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(vec![rows, cols], data)
}

pub fn write_matrix(path: &Path, m: &Tensor<f32>) -> Result<()> {
    std::fs::write(path, encode_matrix(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, &path.display().to_string())
}
