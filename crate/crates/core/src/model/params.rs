use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// A named learnable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRef<F> {
    pub id: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Real> ParamRef<F> {
    pub fn new(id: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        ParamRef {
            id: id.into(),
            value,
            grad,
        }
    }
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    /// Standard normal times the given scale.
    Normal(f64),
}

/// Ordered collection of parameters with unique identifiers.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelParams<F> {
    params: Vec<ParamRef<F>>,
    index: BTreeMap<String, usize>,
}

impl<F: Real> ModelParams<F> {
    pub fn new() -> Self {
        ModelParams {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, value: Tensor<F>) -> Result<usize> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate parameter `{id}`")));
        }
        self.index.insert(id.clone(), self.params.len());
        self.params.push(ParamRef::new(id, value));
        Ok(self.params.len() - 1)
    }

    /// Builds parameters from `(id, shape, init)` specs, drawing in spec order.
    pub fn initialize<R: Rng>(specs: &[(String, Vec<usize>, Init)], rng: &mut R) -> Result<Self> {
        let mut out = Self::new();
        for (id, shape, init) in specs {
            let n: usize = shape.iter().product();
            let data: Vec<F> = match *init {
                Init::Zeros => vec![F::zero(); n],
                Init::Constant(c) => vec![F::of(c); n],
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    (0..n)
                        .map(|_| F::of(rng.random_range(-bound..bound)))
                        .collect()
                }
                Init::Normal(scale) => (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        F::of(z * scale)
                    })
                    .collect(),
            };
            out.insert(id.clone(), Tensor::new(shape.clone(), data)?)?;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn slot(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no parameter named `{id}`")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&ParamRef<F>> {
        Ok(&self.params[self.slot(id)?])
    }

    pub fn value(&self, id: &str) -> Result<&Tensor<F>> {
        Ok(&self.get(id)?.value)
    }

    pub fn value_mut(&mut self, id: &str) -> Result<&mut Tensor<F>> {
        let slot = self.slot(id)?;
        Ok(&mut self.params[slot].value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamRef<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamRef<F>> {
        self.params.iter_mut()
    }

    pub fn by_slot(&self, slot: usize) -> &ParamRef<F> {
        &self.params[slot]
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(F::zero());
        }
    }

    /// Fresh zero tensors shaped like every parameter, in slot order.
    pub fn zeros_like(&self) -> Vec<Tensor<F>> {
        self.params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect()
    }

    pub fn values(&self) -> Vec<Tensor<F>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_values(&mut self, values: Vec<Tensor<F>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Input(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape("set_values", p.value.shape(), v.shape()));
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            params: self
                .params
                .iter()
                .map(|p| ParamRef {
                    id: p.id.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
