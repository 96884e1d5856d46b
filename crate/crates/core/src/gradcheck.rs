//! Finite-difference verification of every layer type and of the full
//! forward pass plus training objective, at 64-bit precision.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{total_loss_graph, ContrastiveConfig, RoutedSample};
use crate::model::{
    adaptive_layer_graph, attention_pool_graph, bottleneck_graph, head_graph, AdaptiveVars,
    Architecture, BottleneckVars, Components, HeadKind, HeadVars, LanguageId, ModelConfig,
    ModelParams, TaskType, UtteranceInput,
};
use crate::numerics::gradcheck::{grad_check, max_relative_error, DEFAULT_STEP};
use crate::numerics::{Graph, Tensor, Var};
use crate::training::{batch_gradients, batch_loss_graph, BatchItem};

/// Worst error of one case across all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub name: &'static str,
    pub seeds: usize,
    pub max_error: f64,
    pub worst_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_error).fold(0.0, f64::max)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<16} {:>6} {:>12} {:>6}\n",
            "case", "seeds", "max_rel_err", "seed"
        );
        for c in &self.cases {
            out.push_str(&format!(
                "{:<16} {:>6} {:>12.3e} {:>6}\n",
                c.name, c.seeds, c.max_error, c.worst_seed
            ));
        }
        out.push_str(&format!(
            "overall max_rel_err={:.3e} elapsed={:.2}s\n",
            self.max_error(),
            self.elapsed.as_secs_f64()
        ));
        out
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn project(g: &mut Graph<f64>, x: Var, p: Var) -> Result<Var> {
    let m = g.mul(x, p)?;
    Ok(g.sum(m))
}

type Builder = fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

/// Graph-level cases: a builder and random inputs, reduced to a scalar.
fn layer_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Builder, Vec<Tensor<f64>>)> {
    let t = rng.random_range(3..7);
    let (ds, dw) = (rng.random_range(2..5), rng.random_range(2..4));
    let d = ds + dw;
    vec![
        (
            "fusion",
            |g, v| {
                let s = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                let w = g.layer_norm(v[3], v[4], v[5], 1e-5)?;
                let z = g.concat_cols(s, w)?;
                project(g, z, v[6])
            },
            vec![
                random(&[t, ds], rng),
                random(&[ds], rng),
                random(&[ds], rng),
                random(&[t, dw], rng),
                random(&[dw], rng),
                random(&[dw], rng),
                random(&[t, d], rng),
            ],
        ),
        (
            "adaptive_layer",
            |g, v| {
                let vars = AdaptiveVars {
                    table: v[1],
                    gamma_w: v[2],
                    gamma_b: v[3],
                    beta_w: v[4],
                    beta_b: v[5],
                };
                let z = adaptive_layer_graph(g, v[0], LanguageId(1), vars)?;
                project(g, z, v[6])
            },
            vec![
                random(&[t, d], rng),
                random(&[2, 3], rng),
                random(&[3, d], rng),
                random(&[d], rng),
                random(&[3, d], rng),
                random(&[d], rng),
                random(&[t, d], rng),
            ],
        ),
        (
            "bottleneck",
            |g, v| {
                let vars = BottleneckVars {
                    w1: v[1],
                    b1: v[2],
                    w2: v[3],
                    b2: v[4],
                };
                let z = bottleneck_graph(g, v[0], vars)?;
                project(g, z, v[5])
            },
            vec![
                random(&[t, d], rng),
                random(&[3, d, 2], rng),
                random(&[2], rng),
                random(&[3, 2, d], rng),
                random(&[d], rng),
                random(&[t, d], rng),
            ],
        ),
        (
            "attention_pool",
            |g, v| {
                let (pooled, weights) = attention_pool_graph(g, v[0], v[1])?;
                let a = project(g, pooled, v[2])?;
                let b = project(g, weights, v[3])?;
                g.add(a, b)
            },
            vec![
                random(&[t, d], rng),
                random(&[d], rng),
                random(&[1, d], rng),
                random(&[1, t], rng),
            ],
        ),
        (
            "head",
            |g, v| {
                let vars = HeadVars {
                    query: v[0],
                    fc1_w: v[1],
                    fc1_b: v[2],
                    fc2_w: v[3],
                    fc2_b: v[4],
                };
                head_graph(g, v[0], vars)
            },
            vec![
                random(&[1, d], rng),
                random(&[d, 4], rng),
                random(&[4], rng),
                random(&[4, 1], rng),
                random(&[1], rng),
            ],
        ),
        (
            "total_loss",
            |g, v| {
                let heads = [
                    HeadKind::Ddk,
                    HeadKind::Ddk,
                    HeadKind::Ddk,
                    HeadKind::Speech,
                ];
                let samples = (0..4)
                    .map(|i| {
                        Ok(RoutedSample {
                            probability: g.sigmoid(v[i]),
                            embedding: v[4 + i],
                            head: heads[i],
                            label: [0, 0, 1, 1][i],
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cfg = ContrastiveConfig {
                    m_pos: 0.05,
                    ..ContrastiveConfig::default()
                };
                total_loss_graph(g, &samples, Some(&cfg))
            },
            (0..8)
                .map(|i| random(&[1, if i < 4 { 1 } else { d }], rng))
                .collect(),
        ),
    ]
}

/// The configuration used for the end-to-end case.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        d_ssl: 4,
        d_wav: 3,
        hidden: 5,
        compression: 2,
        kernel: 3,
        embed_dim: 2,
        ..ModelConfig::default()
    }
}

/// End-to-end check over every parameter of the full model on a mixed batch.
pub fn full_model_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture::new(tiny_model(), Components::full(), 2)?;
    let mut params: ModelParams<f64> = arch.init_params(&mut rng)?;
    // zero-initialized parameters would hide their gradients behind the floor
    for p in params.iter_mut() {
        p.value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    let specs: Vec<(TaskType, u8, usize)> = vec![
        (TaskType::Ddk, 0, 0),
        (TaskType::Ddk, 1, 1),
        (TaskType::Ddk, 1, 0),
        (TaskType::Continuous, 0, 1),
        (TaskType::Continuous, 1, 0),
        (TaskType::Continuous, 0, 0),
    ];
    let data: Vec<(Tensor<f64>, Tensor<f64>)> = specs
        .iter()
        .map(|_| {
            let t = rng.random_range(4..8);
            (random(&[t, 4], &mut rng), random(&[t + 1, 3], &mut rng))
        })
        .collect();
    let items: Vec<BatchItem<'_, f64>> = specs
        .iter()
        .zip(&data)
        .map(|(&(task, label, lang), (s, w))| BatchItem {
            input: UtteranceInput {
                ssl: s,
                wavelet: Some(w),
                task,
                language: LanguageId(lang),
            },
            label,
        })
        .collect();
    let cfg = ContrastiveConfig {
        m_pos: 0.01,
        ..ContrastiveConfig::default()
    };
    let (_, analytic) = batch_gradients(&arch, &params, &items, Some(&cfg))?;
    let values = params.values();
    let mut probe = params.clone();
    max_relative_error(&analytic, &values, DEFAULT_STEP, |xs| {
        probe.set_values(xs.to_vec())?;
        let mut g = Graph::new();
        let loss = batch_loss_graph(&mut g, &arch, &probe, &items, Some(&cfg))?;
        Ok(g.scalar(loss))
    })
}

/// Runs every case for seeds `first_seed..first_seed + n_seeds`.
pub fn run_suite(first_seed: u64, n_seeds: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut cases: Vec<CaseReport> = Vec::new();
    let mut record =
        |name: &'static str, seed: u64, err: f64| match cases.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.seeds += 1;
                if err > c.max_error {
                    c.max_error = err;
                    c.worst_seed = seed;
                }
            }
            None => cases.push(CaseReport {
                name,
                seeds: 1,
                max_error: err,
                worst_seed: seed,
            }),
        };
    for seed in first_seed..first_seed + n_seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, f, inputs) in layer_cases(&mut rng) {
            record(name, seed, grad_check(f, &inputs, DEFAULT_STEP)?);
        }
        record("full_model", seed, full_model_error(seed)?);
    }
    Ok(SuiteReport {
        cases,
        elapsed: start.elapsed(),
    })
}
