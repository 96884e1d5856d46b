//! Confusion-matrix metrics, split evaluation with per-cell breakdowns, and
//! embedding export.

pub mod embeddings;
pub mod metrics;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::model::{
    Architecture, HeadKind, LanguageRegistry, ModelParams, TaskType, UtteranceInput,
};

pub use embeddings::{export_embeddings, pca_2d, EmbeddingRow, EmbeddingTable};
pub use metrics::{confusion, metrics, ConfusionMatrix, MetricsReport, DEFAULT_THRESHOLD};

/// Builds the model input of an utterance, resolving its dataset to a language.
pub fn model_input<'a>(
    arch: &Architecture,
    languages: &LanguageRegistry,
    u: &'a Utterance,
) -> Result<UtteranceInput<'a, f32>> {
    let wavelet = if arch.components.wavelet {
        Some(u.wavelet.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "utterance `{}` has no wavelet features (missing audio_path?)",
                u.entry.utterance_id
            ))
        })?)
    } else {
        None
    };
    Ok(UtteranceInput {
        ssl: &u.ssl,
        wavelet,
        task: u.entry.task,
        language: languages.lookup(&u.entry.dataset)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub speaker_id: String,
    pub dataset: String,
    pub task: TaskType,
    pub label: u8,
    pub probability: f64,
    pub head: HeadKind,
}

pub fn predict(
    arch: &Architecture,
    params: &ModelParams<f32>,
    languages: &LanguageRegistry,
    utterances: &[Utterance],
) -> Result<Vec<Prediction>> {
    utterances
        .iter()
        .map(|u| {
            let out = arch.forward(params, &model_input(arch, languages, u)?)?;
            Ok(Prediction {
                utterance_id: u.entry.utterance_id.clone(),
                speaker_id: u.entry.speaker_id.clone(),
                dataset: u.entry.dataset.clone(),
                task: u.entry.task,
                label: u.entry.label,
                probability: f64::from(out.probability),
                head: out.head,
            })
        })
        .collect()
}

/// Collapses predictions to one per (dataset, speaker, task) by averaging probabilities.
pub fn speaker_vote(preds: &[Prediction]) -> Vec<Prediction> {
    let mut groups: BTreeMap<(&str, &str, TaskType), Vec<&Prediction>> = BTreeMap::new();
    for p in preds {
        groups
            .entry((p.dataset.as_str(), p.speaker_id.as_str(), p.task))
            .or_default()
            .push(p);
    }
    groups
        .into_values()
        .map(|g| {
            let mean = g.iter().map(|p| p.probability).sum::<f64>() / g.len() as f64;
            Prediction {
                utterance_id: g[0].speaker_id.clone(),
                probability: mean,
                ..g[0].clone()
            }
        })
        .collect()
}

/// Overall metrics plus breakdowns by dataset and by (dataset, task).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub overall: MetricsReport,
    pub by_dataset: BTreeMap<String, MetricsReport>,
    pub by_cell: BTreeMap<(String, TaskType), MetricsReport>,
}

pub fn summarize(preds: &[Prediction], threshold: f64) -> Result<Evaluation> {
    if preds.is_empty() {
        return Err(Error::Usage("nothing to evaluate".into()));
    }
    let mut overall = ConfusionMatrix::default();
    let mut by_dataset: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    let mut by_cell: BTreeMap<(String, TaskType), ConfusionMatrix> = BTreeMap::new();
    for p in preds {
        let hit = p.probability >= threshold;
        overall.record(hit, p.label);
        by_dataset
            .entry(p.dataset.clone())
            .or_default()
            .record(hit, p.label);
        by_cell
            .entry((p.dataset.clone(), p.task))
            .or_default()
            .record(hit, p.label);
    }
    Ok(Evaluation {
        overall: overall.metrics()?,
        by_dataset: by_dataset
            .into_iter()
            .map(|(k, cm)| Ok((k, cm.metrics()?)))
            .collect::<Result<_>>()?,
        by_cell: by_cell
            .into_iter()
            .map(|(k, cm)| Ok((k, cm.metrics()?)))
            .collect::<Result<_>>()?,
    })
}

pub fn evaluate(
    arch: &Architecture,
    params: &ModelParams<f32>,
    languages: &LanguageRegistry,
    utterances: &[Utterance],
    by_speaker: bool,
) -> Result<Evaluation> {
    let preds = predict(arch, params, languages, utterances)?;
    if by_speaker {
        summarize(&speaker_vote(&preds), DEFAULT_THRESHOLD)
    } else {
        summarize(&preds, DEFAULT_THRESHOLD)
    }
}

impl Evaluation {
    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "group", "n", "acc", "macroF1", "F1(PD)", "sens", "spec"
        );
        let mut line = |name: &str, m: &MetricsReport| {
            out.push_str(&format!(
                "{:<24} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                name,
                m.confusion.total(),
                m.accuracy,
                m.macro_f1,
                m.f1_positive,
                m.sensitivity,
                m.specificity
            ));
        };
        line("overall", &self.overall);
        for (d, m) in &self.by_dataset {
            line(d, m);
        }
        for ((d, t), m) in &self.by_cell {
            line(&format!("{d}/{t}"), m);
        }
        out
    }

    /// Machine-readable `key=value` report.
    pub fn to_key_values(&self) -> String {
        let mut out = self.overall.to_key_values("overall.");
        for (d, m) in &self.by_dataset {
            out.push_str(&m.to_key_values(&format!("{d}.")));
        }
        for ((d, t), m) in &self.by_cell {
            out.push_str(&m.to_key_values(&format!("{d}.{t}.")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_preds(n: usize, seed: u64) -> Vec<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Prediction {
                utterance_id: format!("u{i}"),
                speaker_id: format!("s{}", i / 3),
                dataset: if rng.random() { "a".into() } else { "b".into() },
                task: if rng.random() {
                    TaskType::Ddk
                } else {
                    TaskType::Continuous
                },
                label: rng.random_range(0..2),
                probability: rng.random(),
                head: HeadKind::Shared,
            })
            .collect()
    }

    #[test]
    fn breakdown_cells_reaggregate() {
        let preds = random_preds(300, 1);
        let ev = summarize(&preds, 0.5).unwrap();
        let cells = ev
            .by_cell
            .values()
            .fold(ConfusionMatrix::default(), |acc, m| acc + m.confusion);
        let datasets = ev
            .by_dataset
            .values()
            .fold(ConfusionMatrix::default(), |acc, m| acc + m.confusion);
        assert_eq!(cells, ev.overall.confusion);
        assert_eq!(datasets, ev.overall.confusion);
        assert_eq!(ev.by_cell.len(), 4);
    }

    #[test]
    fn concatenated_splits_add() {
        let (a, b) = (random_preds(50, 2), random_preds(70, 3));
        let joined: Vec<Prediction> = a.iter().chain(&b).cloned().collect();
        let sum = summarize(&a, 0.5).unwrap().overall.confusion
            + summarize(&b, 0.5).unwrap().overall.confusion;
        assert_eq!(summarize(&joined, 0.5).unwrap().overall.confusion, sum);
    }

    #[test]
    fn single_sample_gives_extremes() {
        let mut p = random_preds(1, 4);
        p[0].label = 1;
        p[0].probability = 0.9;
        let m = summarize(&p, 0.5).unwrap().overall;
        assert_eq!((m.accuracy, m.sensitivity), (100.0, 100.0));
        p[0].probability = 0.1;
        let m = summarize(&p, 0.5).unwrap().overall;
        assert_eq!((m.accuracy, m.sensitivity), (0.0, 0.0));
        assert!(summarize(&[], 0.5).is_err());
    }

    #[test]
    fn speaker_vote_averages() {
        let mut preds = random_preds(6, 5);
        for (i, p) in preds.iter_mut().enumerate() {
            p.dataset = "a".into();
            p.task = TaskType::Ddk;
            p.probability = if i % 3 == 0 { 0.9 } else { 0.2 };
        }
        let voted = speaker_vote(&preds);
        assert_eq!(voted.len(), 2);
        assert!((voted[0].probability - 1.3 / 3.0).abs() < 1e-12);
    }
}
