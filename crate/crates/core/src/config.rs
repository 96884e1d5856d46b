//! Run configuration: every tunable value under a flat dotted key, loaded
//! from a flat JSON object and overridden by `key=value` pairs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::synth::SynthConfig;
use crate::data::FeatureSettings;
use crate::error::{Error, Result};
use crate::losses::ContrastiveConfig;
use crate::model::{Components, ModelConfig};
use crate::training::{TrainConfig, TrainSetup};

/// Written next to the outputs of every run.
pub const RESOLVED_NAME: &str = "resolved_config.json";

/// Keys filled from the top-level `seed` rather than set directly.
const DERIVED: [&str; 2] = ["synth.seed", "train.seed"];

/// Short spellings accepted on input.
const ALIASES: [(&str, &str); 3] = [
    ("model.r", "model.compression"),
    ("model.k", "model.kernel"),
    ("model.h", "model.hidden"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Corpus root holding `train.jsonl`, `validation.jsonl` and `test.jsonl`.
    pub corpus: String,
    /// Checkpoint read by `eval` and `export-embeddings`.
    pub checkpoint: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            checkpoint: "run/checkpoint.bin".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Split scored by `eval` and projected by `export-embeddings`.
    pub split: String,
    /// Average probabilities per speaker and task before thresholding.
    pub by_speaker: bool,
    /// `export-embeddings` task filter: `all`, `ddk` or `continuous`.
    pub task: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: "test".into(),
            by_speaker: false,
            task: "all".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub features: FeatureSettings,
    pub model: ModelConfig,
    pub components: Components,
    pub train: TrainConfig,
    pub contrastive: ContrastiveConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let seed = synth.seed;
        RunConfig {
            seed,
            paths: Paths::default(),
            synth,
            features: FeatureSettings::default(),
            model: ModelConfig::default(),
            components: Components::default(),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            contrastive: ContrastiveConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), v.clone());
            } else {
                node = node
                    .entry(part)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("prefixes are objects");
            }
        }
    }
    Value::Object(root)
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() => "nonnegative integer",
        Value::Number(n) if n.is_i64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

fn compatible(old: &Value, new: &Value) -> bool {
    match (old, new) {
        (Value::Number(o), Value::Number(n)) => {
            if o.is_u64() {
                n.is_u64()
            } else {
                true
            }
        }
        (Value::Bool(_), Value::Bool(_))
        | (Value::String(_), Value::String(_))
        | (Value::Array(_), Value::Array(_)) => true,
        _ => false,
    }
}

impl RunConfig {
    pub fn canonical_key(key: &str) -> &str {
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map_or(key, |(_, full)| full)
    }

    /// Every settable key with its current value.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut flat = BTreeMap::new();
        flatten("", &value, &mut flat);
        for k in DERIVED {
            flat.remove(k);
        }
        flat
    }

    fn from_flat(flat: &BTreeMap<String, Value>) -> std::result::Result<Self, serde_json::Error> {
        let mut full = flat.clone();
        let seed = full.get("seed").cloned().unwrap_or(Value::from(0u64));
        for k in DERIVED {
            full.insert(k.to_string(), seed.clone());
        }
        serde_json::from_value(unflatten(&full))
    }

    /// Sets one key. The value must have the same JSON kind as the current one.
    pub fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let key = Self::canonical_key(key);
        if DERIVED.contains(&key) {
            return Err(Error::Config(format!(
                "`{key}` follows the top-level `seed`; set `seed` instead"
            )));
        }
        let mut flat = self.to_flat();
        let old = flat
            .get(key)
            .ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
        if !compatible(old, &value) {
            return Err(Error::Config(format!(
                "`{key}` expects a {}, got {value}",
                kind(old)
            )));
        }
        flat.insert(key.to_string(), value.clone());
        *self =
            Self::from_flat(&flat).map_err(|e| Error::Config(format!("`{key}` = {value}: {e}")))?;
        Ok(())
    }

    /// Applies a `key=value` override. Values are read as JSON, falling back
    /// to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| {
            Error::Usage(format!(
                "override `{assignment}` is not of the form key=value"
            ))
        })?;
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.into()));
        self.set_value(key.trim(), value)
    }

    /// Applies every key of a flat JSON object on top of the defaults.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(Error::Format {
                path: origin.into(),
                detail: "expected a flat JSON object of dotted keys".into(),
            });
        };
        let mut cfg = RunConfig::default();
        // `seed` first so the order of keys in the file does not matter
        if let Some(seed) = map.get("seed") {
            cfg.set_value("seed", seed.clone())
                .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        }
        for (k, v) in map.iter().filter(|(k, _)| k.as_str() != "seed") {
            cfg.set_value(k, v.clone())
                .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Defaults, then the file, then `--seed`, then overrides in order.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.set_value("seed", Value::from(s))?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.features.frames.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.contrastive.validate()?;
        let d_wav = self.features.wavelet.feature_dim();
        if self.components.wavelet && self.model.d_wav != d_wav {
            return Err(Error::Config(format!(
                "`model.d_wav` = {} but `features.wavelet.levels` = {} yields {d_wav} wavelet features",
                self.model.d_wav, self.features.wavelet.levels
            )));
        }
        self.eval_split()?;
        self.eval_task()?;
        Ok(())
    }

    pub fn eval_split(&self) -> Result<crate::data::Split> {
        self.eval.split.parse().map_err(|_| {
            Error::Config(format!(
                "`eval.split` = `{}` is not train, validation or test",
                self.eval.split
            ))
        })
    }

    pub fn eval_task(&self) -> Result<Option<crate::model::TaskType>> {
        match self.eval.task.as_str() {
            "all" => Ok(None),
            t => t.parse().map(Some).map_err(|_| {
                Error::Config(format!("`eval.task` = `{t}` is not all, ddk or continuous"))
            }),
        }
    }

    /// The synthetic generator settings, seeded by the run seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn setup(&self) -> TrainSetup {
        TrainSetup {
            model: self.model.clone(),
            components: self.components,
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
            contrastive: self.contrastive.clone(),
        }
    }

    /// Flat, sorted, pretty JSON; loading it reproduces this configuration.
    pub fn to_json(&self) -> String {
        let map: Map<String, Value> = self.to_flat().into_iter().collect();
        serde_json::to_string_pretty(&Value::Object(map)).expect("config serializes") + "\n"
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_NAME);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }

    /// Smaller batches and a higher peak rate than the defaults. The default
    /// rate and batch size give too few updates to fit the small synthetic
    /// corpus in twenty epochs.
    pub fn synthetic() -> Self {
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 8;
        cfg.train.max_lr = 2e-3;
        cfg
    }
}
