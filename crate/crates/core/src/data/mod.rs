//! Corpus I/O and the synthetic corpus generator.

pub mod audio;
pub mod manifest;
pub mod matrix;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{wavelet_sequence, FrameConfig, WaveletConfig};
use crate::model::TaskType;
use crate::numerics::Tensor;

pub use audio::{read_audio, write_audio};
pub use manifest::{load_manifest, write_manifest, ManifestEntry};
pub use matrix::{read_matrix, write_matrix};
pub use synth::{generate_synthetic_corpus, synthesize, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn manifest_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Validation => "validation.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown split `{s}` (train, validation, test)")))
    }
}

/// An utterance with its features loaded into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub entry: ManifestEntry,
    pub ssl: Tensor<f32>,
    pub wavelet: Option<Tensor<f32>>,
}

impl Utterance {
    pub fn task(&self) -> TaskType {
        self.entry.task
    }

    pub fn label(&self) -> u8 {
        self.entry.label
    }
}

/// How wavelet features are computed from each utterance's audio.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub frames: FrameConfig,
    pub wavelet: WaveletConfig,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every entry of a manifest. Payload paths are relative to the
/// manifest's directory. Wavelet features are computed when `features` is
/// given and the entry has audio.
pub fn load_utterances(
    manifest_path: &Path,
    features: Option<&FeatureSettings>,
) -> Result<Vec<Utterance>> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    load_manifest(manifest_path)?
        .into_iter()
        .map(|entry| {
            let ssl = read_matrix(&resolve(base, &entry.ssl_feature_path))?;
            let wavelet = match (features, &entry.audio_path) {
                (Some(f), Some(a)) => {
                    let w = read_audio(&resolve(base, a))?;
                    Some(wavelet_sequence(&w, &f.frames, &f.wavelet)?.matrix)
                }
                _ => None,
            };
            Ok(Utterance {
                entry,
                ssl,
                wavelet,
            })
        })
        .collect()
}

/// Train, validation and test utterances of one corpus tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub validation: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    pub fn load(root: &Path, features: Option<&FeatureSettings>) -> Result<Self> {
        let load = |s: Split| load_utterances(&root.join(s.manifest_name()), features);
        let corpus = Corpus {
            train: load(Split::Train)?,
            validation: load(Split::Validation)?,
            test: load(Split::Test)?,
        };
        check_speaker_disjoint(&[&corpus.train, &corpus.validation, &corpus.test])?;
        Ok(corpus)
    }

    pub fn split(&self, s: Split) -> &[Utterance] {
        match s {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Dataset tags present in any split, sorted.
    pub fn datasets(&self) -> Vec<String> {
        let set: BTreeSet<&str> = Split::ALL
            .iter()
            .flat_map(|&s| self.split(s).iter().map(|u| u.entry.dataset.as_str()))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }
}

/// Fails when a (dataset, speaker) pair appears in more than one split.
pub fn check_speaker_disjoint(splits: &[&[Utterance]]) -> Result<()> {
    let mut owner: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (i, split) in splits.iter().enumerate() {
        for u in split.iter() {
            let key = (u.entry.dataset.as_str(), u.entry.speaker_id.as_str());
            if let Some(&j) = owner.get(&key) {
                if j != i {
                    return Err(Error::Validation(format!(
                        "speaker `{}` of dataset `{}` appears in splits {j} and {i}",
                        key.1, key.0
                    )));
                }
            }
            owner.insert(key, i);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
