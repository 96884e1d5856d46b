use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// With-replacement sampler weighting each item by the inverse frequency of
/// its label within its dataset, so every dataset is label-balanced in expectation.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl WeightedSampler {
    /// `items` are `(dataset, label)` pairs in corpus order.
    pub fn new<S: AsRef<str>>(items: &[(S, u8)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config(
                "cannot sample from an empty training set".into(),
            ));
        }
        let mut counts: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
        for (d, y) in items {
            if *y > 1 {
                return Err(Error::Config(format!("label {y} is not 0 or 1")));
            }
            counts.entry(d.as_ref()).or_default()[usize::from(*y)] += 1;
        }
        for (d, c) in &counts {
            for (label, &n) in c.iter().enumerate() {
                if n == 0 {
                    return Err(Error::Config(format!(
                        "sampler cell (dataset `{d}`, label {label}) is empty"
                    )));
                }
            }
        }
        let weights: Vec<f64> = items
            .iter()
            .map(|(d, y)| {
                let c = counts[d.as_ref()];
                (c[0] + c[1]) as f64 / (2.0 * c[usize::from(*y)] as f64)
            })
            .collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::Config(format!("invalid sampling weights: {e}")))?;
        Ok(WeightedSampler { weights, index })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn draw_batch<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}
