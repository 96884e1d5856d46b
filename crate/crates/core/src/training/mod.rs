//! Training harness: batch gradients, AdamW with warmup and linear decay,
//! class-balanced sampling, early stopping on validation macro-F1, and the
//! component ablation driver.

pub mod ablation;
pub mod optimizer;
pub mod sampler;
pub mod schedule;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, model_input, MetricsReport};
use crate::losses::{total_loss_graph, ContrastiveConfig, RoutedSample};
use crate::model::{
    Architecture, Checkpoint, Components, LanguageRegistry, ModelConfig, ModelParams,
    UtteranceInput,
};
use crate::numerics::{Graph, Real, Tensor, Var};

pub use ablation::{ablate, AblationRow, AblationTable};
pub use optimizer::{adamw_step, clip_global_norm, AdamWConfig, OptimizerState};
pub use sampler::WeightedSampler;
pub use schedule::{lr_at, ScheduleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Epochs without a validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            max_lr: 1e-4,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            clip_norm: 5.0,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "train.epochs, train.batch_size and train.patience must be positive".into(),
            ));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::Config(format!(
                "train.max_lr must be positive, got {}",
                self.max_lr
            )));
        }
        if !(self.weight_decay >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::Config(
                "train.weight_decay and train.clip_norm must be nonnegative".into(),
            ));
        }
        ScheduleConfig::new(self.warmup_ratio, 1).map(|_| ())
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub model: ModelConfig,
    pub components: Components,
    pub train: TrainConfig,
    pub contrastive: ContrastiveConfig,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.contrastive.validate()
    }

    /// The contrastive term, or `None` when the component is switched off.
    pub fn active_contrastive(&self) -> Option<&ContrastiveConfig> {
        self.components.contrastive.then_some(&self.contrastive)
    }
}

/// One labelled model input.
#[derive(Clone, Copy, Debug)]
pub struct BatchItem<'a, F> {
    pub input: UtteranceInput<'a, F>,
    pub label: u8,
}

/// Records the forward pass of every item and the batch objective on `g`.
pub fn batch_loss_graph<F: Real>(
    g: &mut Graph<F>,
    arch: &Architecture,
    params: &ModelParams<F>,
    batch: &[BatchItem<'_, F>],
    contrastive: Option<&ContrastiveConfig>,
) -> Result<Var> {
    let mut samples = Vec::with_capacity(batch.len());
    for item in batch {
        let out = arch.forward_graph(g, params, &item.input)?;
        samples.push(RoutedSample {
            probability: out.probability,
            embedding: out.embedding,
            head: out.head,
            label: item.label,
        });
    }
    total_loss_graph(g, &samples, contrastive)
}

/// Batch loss and its gradient for every parameter, in slot order.
pub fn batch_gradients<F: Real>(
    arch: &Architecture,
    params: &ModelParams<F>,
    batch: &[BatchItem<'_, F>],
    contrastive: Option<&ContrastiveConfig>,
) -> Result<(F, Vec<Tensor<F>>)> {
    let mut g = Graph::new();
    let loss = batch_loss_graph(&mut g, arch, params, batch, contrastive)?;
    let value = g.scalar(loss);
    let mut out = params.zeros_like();
    if value.is_finite() {
        let grads = g.backward(loss)?;
        g.accumulate_param_grads(&grads, &mut out);
    }
    Ok((value, out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub validation: MetricsReport,
    pub dataset_macro_f1: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct History {
    /// Datasets with a per-dataset column, sorted.
    pub datasets: Vec<String>,
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const COLUMNS: [&'static str; 7] = [
        "epoch",
        "train_loss",
        "val_accuracy",
        "val_macro_f1",
        "val_sensitivity",
        "val_specificity",
        "lr",
    ];

    /// Tab-separated, one line per epoch, fixed column order.
    pub fn to_tsv(&self) -> String {
        let mut header: Vec<String> = Self::COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.datasets.iter().map(|d| format!("val_macro_f1[{d}]")));
        let mut out = header.join("\t");
        out.push('\n');
        for r in &self.records {
            let mut row = vec![
                r.epoch.to_string(),
                format!("{:.6}", r.train_loss),
                format!("{:.2}", r.validation.accuracy),
                format!("{:.2}", r.validation.macro_f1),
                format!("{:.2}", r.validation.sensitivity),
                format!("{:.2}", r.validation.specificity),
                format!("{:.6e}", r.lr),
            ];
            row.extend(self.datasets.iter().map(|d| {
                r.dataset_macro_f1
                    .get(d)
                    .map_or("NA".into(), |v| format!("{v:.2}"))
            }));
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation macro-F1.
    pub checkpoint: Checkpoint,
    pub history: History,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub stopped_early: bool,
    pub steps: u64,
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains one model. Fully determined by `setup` and the inputs.
pub fn train(
    train_set: &[Utterance],
    validation: &[Utterance],
    languages: &LanguageRegistry,
    setup: &TrainSetup,
) -> Result<TrainOutcome> {
    setup.validate()?;
    if validation.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let arch = Architecture::new(setup.model.clone(), setup.components, languages.len())?;
    let tc = &setup.train;
    for u in train_set.iter().chain(validation) {
        model_input(&arch, languages, u)?;
    }
    let sampler = WeightedSampler::new(
        &train_set
            .iter()
            .map(|u| (u.entry.dataset.as_str(), u.entry.label))
            .collect::<Vec<_>>(),
    )?;
    let mut params: ModelParams<f32> = arch.init_params(&mut seeded(tc.seed, 0))?;
    let mut draws = seeded(tc.seed, 1);
    let steps_per_epoch = train_set.len().div_ceil(tc.batch_size) as u64;
    let schedule = ScheduleConfig::new(tc.warmup_ratio, steps_per_epoch * tc.epochs as u64)?;
    let mut opt = OptimizerState::new(
        &params,
        AdamWConfig {
            weight_decay: tc.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut datasets: Vec<String> = validation.iter().map(|u| u.entry.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();

    let mut history = History {
        datasets,
        records: Vec::new(),
    };
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut since_best = 0;
    let mut step = 0u64;
    let mut stopped_early = false;
    for epoch in 1..=tc.epochs {
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for _ in 0..steps_per_epoch {
            let idx = sampler.draw_batch(tc.batch_size, &mut draws);
            let batch = idx
                .iter()
                .map(|&i| {
                    Ok(BatchItem {
                        input: model_input(&arch, languages, &train_set[i])?,
                        label: train_set[i].entry.label,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (loss, mut grads) =
                batch_gradients(&arch, &params, &batch, setup.active_contrastive())?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {step}")));
            }
            clip_global_norm(&mut grads, tc.clip_norm);
            lr = lr_at(step + 1, &schedule, tc.max_lr)?;
            adamw_step(&mut params, &grads, &mut opt, lr)
                .map_err(|e| Error::Numeric(format!("step {step}: {e}")))?;
            loss_sum += f64::from(loss);
            step += 1;
        }
        let eval = evaluate(&arch, &params, languages, validation, false)?;
        let f1 = eval.overall.macro_f1;
        log::info!(
            "epoch {epoch}: loss {:.4} val macro-F1 {f1:.2}",
            loss_sum / steps_per_epoch as f64
        );
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            lr,
            dataset_macro_f1: eval
                .by_dataset
                .iter()
                .map(|(d, m)| (d.clone(), m.macro_f1))
                .collect(),
            validation: eval.overall,
        });
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            best = Some((f1, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.patience {
                stopped_early = epoch < tc.epochs;
                break;
            }
        }
    }
    let (best_macro_f1, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: setup.model.clone(),
            components: setup.components,
            languages: languages.clone(),
            params: best_params,
        },
        history,
        best_epoch,
        best_macro_f1,
        stopped_early,
        steps: step,
    })
}
