//! Line-delimited JSON manifests, one flat object per utterance.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TaskType;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Dataset (language) tag, e.g. `synth_a`.
    pub dataset: String,
    pub task: TaskType,
    /// 0 = healthy control, 1 = PD.
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    pub ssl_feature_path: String,
}

impl ManifestEntry {
    fn check(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("utterance_id", &self.utterance_id),
            ("speaker_id", &self.speaker_id),
            ("dataset", &self.dataset),
            ("ssl_feature_path", &self.ssl_feature_path),
        ] {
            if v.is_empty() {
                return Err(format!("`{name}` is empty"));
            }
        }
        if self.label > 1 {
            return Err(format!("`label` must be 0 or 1, got {}", self.label));
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |detail: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            detail,
        };
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        entry.check().map_err(parse_err)?;
        if !seen.insert(entry.utterance_id.clone()) {
            return Err(Error::Validation(format!(
                "{origin}:{}: duplicate utterance_id `{}`",
                i + 1,
                entry.utterance_id
            )));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn render_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let line = serde_json::to_string(e).expect("manifest entries serialize");
        writeln!(out, "{line}").expect("writing to a String");
    }
    out
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    std::fs::write(path, render_manifest(entries)).map_err(|e| Error::io(path, e))
}
