//! Checkpoint file: `BDHPD1` magic, little-endian `u32` metadata length, JSON
//! metadata (config, components, language registry, parameter ids and shapes),
//! then every parameter's values as little-endian `f32` in metadata order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Components, LanguageRegistry, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 6] = b"BDHPD1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub components: Components,
    pub languages: LanguageRegistry,
    pub params: ModelParams<f32>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    id: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    components: Components,
    languages: LanguageRegistry,
    params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.config.clone(), self.components, self.languages.len())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            config: self.config.clone(),
            components: self.components,
            languages: self.languages.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamEntry {
                    id: p.id.clone(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta)
            .map_err(|e| Error::Validation(format!("checkpoint metadata: {e}")))?;
        let mut out = Vec::with_capacity(10 + json.len() + 4 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.params.iter() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let fail = |detail: String| Error::Format {
            path: origin.to_string(),
            detail,
        };
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(fail("missing BDHPD1 header".into()));
        }
        let meta_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(10..10 + meta_len)
            .ok_or_else(|| fail("truncated metadata".into()))?;
        let meta: Meta =
            serde_json::from_slice(body).map_err(|e| fail(format!("bad metadata: {e}")))?;
        let mut params = ModelParams::new();
        let mut offset = 10 + meta_len;
        for entry in meta.params {
            let n: usize = entry.shape.iter().product();
            let raw = bytes
                .get(offset..offset + 4 * n)
                .ok_or_else(|| fail(format!("truncated values for `{}`", entry.id)))?;
            offset += 4 * n;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            params.insert(entry.id, Tensor::new(entry.shape, data)?)?;
        }
        if offset != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - offset)));
        }
        let ckpt = Checkpoint {
            config: meta.config,
            components: meta.components,
            languages: meta.languages,
            params,
        };
        let expected = ckpt.architecture()?.param_specs();
        let matches = expected.len() == ckpt.params.len()
            && expected
                .iter()
                .zip(ckpt.params.iter())
                .all(|((id, shape, _), p)| *id == p.id && shape.as_slice() == p.value.shape());
        if !matches {
            return Err(fail(
                "parameter set does not match the stored architecture".into(),
            ));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
