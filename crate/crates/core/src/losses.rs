//! Binary cross-entropy, margin contrastive loss over the hardest mined
//! pairs, and their combination into the training objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeadKind;
use crate::numerics::graph::BCE_CLAMP;
use crate::numerics::{ops, Graph, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub m_pos: f64,
    pub m_neg: f64,
    /// Weight of the contrastive term in the total loss.
    pub weight: f64,
    /// Clamp both terms at zero; `false` keeps the unbounded linear form.
    pub hinge: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            m_pos: 0.2,
            m_neg: 1.0,
            weight: 1.0,
            hinge: true,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.m_pos && self.m_pos < self.m_neg) {
            return Err(Error::Config(format!(
                "contrastive margins need 0 <= m_pos < m_neg, got {} and {}",
                self.m_pos, self.m_neg
            )));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::Config("contrastive.weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Hardest pairs of a batch; `None` when the batch has no pair of that kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairIndices {
    pub hardest_positive: Option<(usize, usize)>,
    pub hardest_negative: Option<(usize, usize)>,
}

pub fn bce_loss(p: f64, y: u8) -> f64 {
    let c = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if y == 1 {
        -c.ln()
    } else {
        -(1.0 - c).ln()
    }
}

/// Farthest same-label pair and closest different-label pair (Euclidean).
///
/// Pairs are `(i, j)` with `i < j`; ties go to the lexicographically smallest pair.
pub fn mine_hard_pairs<F: Real>(embeddings: &[&[F]], labels: &[u8]) -> PairIndices {
    let n = embeddings.len().min(labels.len());
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels[..n].iter().enumerate() {
        groups.entry(y).or_default().push(i);
    }
    let better =
        |cand: (F, (usize, usize)), best: Option<(F, (usize, usize))>, farther: bool| match best {
            None => true,
            Some((d, pair)) => {
                if cand.0 == d {
                    cand.1 < pair
                } else if farther {
                    cand.0 > d
                } else {
                    cand.0 < d
                }
            }
        };
    let mut pos: Option<(F, (usize, usize))> = None;
    let mut neg: Option<(F, (usize, usize))> = None;
    for (&label, members) in &groups {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let cand = (ops::euclidean(embeddings[i], embeddings[j]), (i, j));
                if better(cand, pos, true) {
                    pos = Some(cand);
                }
            }
            for (&other, others) in groups.range(label + 1..) {
                debug_assert_ne!(other, label);
                for &j in others {
                    let pair = if i < j { (i, j) } else { (j, i) };
                    let cand = (ops::euclidean(embeddings[i], embeddings[j]), pair);
                    if better(cand, neg, false) {
                        neg = Some(cand);
                    }
                }
            }
        }
    }
    PairIndices {
        hardest_positive: pos.map(|(_, p)| p),
        hardest_negative: neg.map(|(_, p)| p),
    }
}

fn contrastive_terms<F: Real>(
    g: &mut Graph<F>,
    embeddings: &[Var],
    labels: &[u8],
    cfg: &ContrastiveConfig,
) -> Result<Option<Var>> {
    let values: Vec<&[F]> = embeddings.iter().map(|&v| g.value(v).data()).collect();
    let pairs = mine_hard_pairs(&values, labels);
    let mut total: Option<Var> = None;
    let mut push = |g: &mut Graph<F>, term: Var| -> Result<()> {
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
        Ok(())
    };
    if let Some((i, j)) = pairs.hardest_positive {
        let d = g.distance(embeddings[i], embeddings[j])?;
        let mut term = g.add_scalar(d, F::of(-cfg.m_pos));
        if cfg.hinge {
            term = g.relu(term);
        }
        push(g, term)?;
    }
    if let Some((i, j)) = pairs.hardest_negative {
        let d = g.distance(embeddings[i], embeddings[j])?;
        let neg = g.scale(d, -F::one());
        let mut term = g.add_scalar(neg, F::of(cfg.m_neg));
        if cfg.hinge {
            term = g.relu(term);
        }
        push(g, term)?;
    }
    Ok(total)
}

/// Contrastive loss of one set of embeddings under the mined pairs.
pub fn contrastive_loss<F: Real>(
    embeddings: &[Tensor<F>],
    labels: &[u8],
    cfg: &ContrastiveConfig,
) -> Result<F> {
    let mut g = Graph::new();
    let vars: Vec<Var> = embeddings.iter().map(|e| g.input(e.clone())).collect();
    Ok(contrastive_terms(&mut g, &vars, labels, cfg)?.map_or(F::zero(), |v| g.scalar(v)))
}

/// Graph handles of one routed sample in a batch.
#[derive(Clone, Copy, Debug)]
pub struct RoutedSample {
    pub probability: Var,
    pub embedding: Var,
    pub head: HeadKind,
    pub label: u8,
}

/// Mean BCE over the batch plus `weight` times the contrastive loss of each
/// head's routed subset. Pass `contrastive: None` to drop the second term.
pub fn total_loss_graph<F: Real>(
    g: &mut Graph<F>,
    samples: &[RoutedSample],
    contrastive: Option<&ContrastiveConfig>,
) -> Result<Var> {
    if samples.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut bce_sum: Option<Var> = None;
    for s in samples {
        let l = g.bce(s.probability, F::of(f64::from(s.label)))?;
        bce_sum = Some(match bce_sum {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    let mut total = g.scale(
        bce_sum.expect("non-empty batch"),
        F::one() / F::of(samples.len() as f64),
    );
    let Some(cfg) = contrastive.filter(|c| c.weight > 0.0) else {
        return Ok(total);
    };
    let mut heads: BTreeMap<HeadKind, (Vec<Var>, Vec<u8>)> = BTreeMap::new();
    for s in samples {
        let entry = heads.entry(s.head).or_default();
        entry.0.push(s.embedding);
        entry.1.push(s.label);
    }
    for (embs, labels) in heads.values() {
        if let Some(term) = contrastive_terms(g, embs, labels, cfg)? {
            let weighted = g.scale(term, F::of(cfg.weight));
            total = g.add(total, weighted)?;
        }
    }
    Ok(total)
}

/// Concrete per-sample model outputs for loss evaluation outside training.
#[derive(Clone, Debug)]
pub struct SampleOutput<F> {
    pub probability: F,
    pub embedding: Tensor<F>,
    pub head: HeadKind,
    pub label: u8,
}

pub fn total_loss<F: Real>(
    outputs: &[SampleOutput<F>],
    contrastive: Option<&ContrastiveConfig>,
) -> Result<F> {
    let mut g = Graph::new();
    let samples: Vec<RoutedSample> = outputs
        .iter()
        .map(|o| RoutedSample {
            probability: g.input(Tensor::scalar(o.probability)),
            embedding: g.input(o.embedding.clone()),
            head: o.head,
            label: o.label,
        })
        .collect();
    let out = total_loss_graph(&mut g, &samples, contrastive)?;
    Ok(g.scalar(out))
}
