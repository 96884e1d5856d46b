//! Forward graph: fused features → adaptive layers → gated bottlenecks →
//! task routing → attention pooling → task-specific head → probability.

pub mod checkpoint;
pub mod params;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FUSION_EPS;
use crate::numerics::{Graph, Real, Tensor, Var};

pub use checkpoint::Checkpoint;
pub use params::{Init, ModelParams, ParamRef};

/// Variance epsilon of the adaptive layer's per-channel standardization.
pub const ADAPTIVE_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Ddk,
    Continuous,
}

impl TaskType {
    pub const ALL: [TaskType; 2] = [TaskType::Ddk, TaskType::Continuous];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Ddk => "ddk",
            TaskType::Continuous => "continuous",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddk" => Ok(TaskType::Ddk),
            "continuous" => Ok(TaskType::Continuous),
            other => Err(Error::Input(format!("unknown task type `{other}`"))),
        }
    }
}

/// Index into the language embedding table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguageId(pub usize);

/// Maps dataset tags to embedding rows. Names are kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRegistry {
    names: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    aliases: BTreeMap<String, String>,
}

impl LanguageRegistry {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        LanguageRegistry {
            names,
            aliases: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Routes an unregistered dataset to an existing embedding.
    pub fn add_alias(&mut self, unseen: &str, existing: &str) -> Result<()> {
        if !self.names.iter().any(|n| n == existing) {
            return Err(Error::Lookup(format!(
                "cannot map `{unseen}` to unregistered language `{existing}`"
            )));
        }
        self.aliases
            .insert(unseen.to_string(), existing.to_string());
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Result<LanguageId> {
        let target = self.aliases.get(name).map_or(name, String::as_str);
        self.names
            .iter()
            .position(|n| n == target)
            .map(LanguageId)
            .ok_or_else(|| {
                Error::Lookup(format!(
                    "dataset `{name}` has no language embedding (registered: {:?}); map it explicitly",
                    self.names
                ))
            })
    }
}

/// Where an adaptive layer sits in the backbone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    AfterFusion,
    AfterBottleneck,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_fusion" => Ok(Placement::AfterFusion),
            "after_bottleneck" => Ok(Placement::AfterBottleneck),
            other => Err(Error::Config(format!("unknown placement `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_ssl: usize,
    pub d_wav: usize,
    pub hidden: usize,
    /// Bottleneck compression ratio.
    pub compression: usize,
    pub kernel: usize,
    pub embed_dim: usize,
    /// Adaptive layers are placed at the first `n_adaptive` entries of `placement`.
    pub n_adaptive: usize,
    pub n_bottleneck: usize,
    pub placement: Vec<Placement>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_ssl: 64,
            d_wav: 18,
            hidden: 128,
            compression: 4,
            kernel: 3,
            embed_dim: 16,
            n_adaptive: 2,
            n_bottleneck: 1,
            placement: vec![Placement::AfterFusion, Placement::AfterBottleneck],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_ssl", self.d_ssl),
            ("d_wav", self.d_wav),
            ("hidden", self.hidden),
            ("compression", self.compression),
            ("kernel", self.kernel),
            ("embed_dim", self.embed_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "model.kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.placement.is_empty() {
            return Err(Error::Config("model.placement must not be empty".into()));
        }
        if self.n_adaptive > self.placement.len() {
            return Err(Error::Config(format!(
                "model.n_adaptive = {} exceeds the {} configured placements",
                self.n_adaptive,
                self.placement.len()
            )));
        }
        Ok(())
    }
}

/// Which architectural components are active. All `true` is the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub dual_head: bool,
    pub adaptive_layers: bool,
    pub bottleneck: bool,
    pub wavelet: bool,
    pub contrastive: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self::full()
    }
}

impl Components {
    pub const NAMES: [&'static str; 5] = [
        "dual_head",
        "adaptive_layers",
        "bottleneck",
        "wavelet",
        "contrastive",
    ];

    pub fn full() -> Self {
        Components {
            dual_head: true,
            adaptive_layers: true,
            bottleneck: true,
            wavelet: true,
            contrastive: true,
        }
    }

    /// Single head, no adaptive layers, bottleneck, wavelet stream or contrastive term.
    pub fn baseline() -> Self {
        Components {
            dual_head: false,
            adaptive_layers: false,
            bottleneck: false,
            wavelet: false,
            contrastive: false,
        }
    }

    pub fn without(mut self, name: &str) -> Result<Self> {
        *self.flag_mut(name)? = false;
        Ok(self)
    }

    pub fn flag_mut(&mut self, name: &str) -> Result<&mut bool> {
        Ok(match name {
            "dual_head" => &mut self.dual_head,
            "adaptive_layers" => &mut self.adaptive_layers,
            "bottleneck" => &mut self.bottleneck,
            "wavelet" => &mut self.wavelet,
            "contrastive" => &mut self.contrastive,
            other => {
                return Err(Error::Usage(format!(
                    "unknown component `{other}` (expected one of {:?})",
                    Self::NAMES
                )))
            }
        })
    }
}

/// Classifier branch an utterance is routed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Ddk,
    Speech,
    Shared,
}

impl HeadKind {
    pub fn route(task: TaskType, components: &Components) -> Self {
        match (components.dual_head, task) {
            (false, _) => HeadKind::Shared,
            (true, TaskType::Ddk) => HeadKind::Ddk,
            (true, TaskType::Continuous) => HeadKind::Speech,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            HeadKind::Ddk => "head.ddk",
            HeadKind::Speech => "head.speech",
            HeadKind::Shared => "head.shared",
        }
    }

    pub fn active(components: &Components) -> Vec<HeadKind> {
        if components.dual_head {
            vec![HeadKind::Ddk, HeadKind::Speech]
        } else {
            vec![HeadKind::Shared]
        }
    }
}

/// Architecture: configuration, active components and language count.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub components: Components,
    pub n_languages: usize,
}

impl Architecture {
    pub fn new(config: ModelConfig, components: Components, n_languages: usize) -> Result<Self> {
        config.validate()?;
        Ok(Architecture {
            config,
            components,
            n_languages,
        })
    }

    /// Feature dimension entering the backbone.
    pub fn input_dim(&self) -> usize {
        self.config.d_ssl
            + if self.components.wavelet {
                self.config.d_wav
            } else {
                0
            }
    }

    /// Channel count inside the bottleneck, `ceil(D / r)`.
    pub fn compressed_dim(&self) -> usize {
        self.input_dim().div_ceil(self.config.compression)
    }

    pub fn adaptive_placements(&self) -> &[Placement] {
        if self.components.adaptive_layers {
            &self.config.placement[..self.config.n_adaptive]
        } else {
            &[]
        }
    }

    pub fn n_bottleneck(&self) -> usize {
        if self.components.bottleneck {
            self.config.n_bottleneck
        } else {
            0
        }
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let c = &self.config;
        let d = self.input_dim();
        let dc = self.compressed_dim();
        let e = c.embed_dim;
        let k = c.kernel;
        let mut specs = vec![
            (
                "fusion.ssl_norm.gain".to_string(),
                vec![c.d_ssl],
                Init::Constant(1.0),
            ),
            (
                "fusion.ssl_norm.bias".to_string(),
                vec![c.d_ssl],
                Init::Zeros,
            ),
        ];
        if self.components.wavelet {
            specs.push((
                "fusion.wav_norm.gain".into(),
                vec![c.d_wav],
                Init::Constant(1.0),
            ));
            specs.push(("fusion.wav_norm.bias".into(), vec![c.d_wav], Init::Zeros));
        }
        let n_adaptive = self.adaptive_placements().len();
        if n_adaptive > 0 {
            specs.push((
                "adaptive.lang_embedding".into(),
                vec![self.n_languages, e],
                Init::Normal(0.1),
            ));
        }
        for i in 0..n_adaptive {
            specs.push((
                format!("adaptive.{i}.gamma.weight"),
                vec![e, d],
                Init::FanIn(e),
            ));
            specs.push((
                format!("adaptive.{i}.gamma.bias"),
                vec![d],
                Init::Constant(1.0),
            ));
            specs.push((
                format!("adaptive.{i}.beta.weight"),
                vec![e, d],
                Init::FanIn(e),
            ));
            specs.push((format!("adaptive.{i}.beta.bias"), vec![d], Init::Zeros));
        }
        for i in 0..self.n_bottleneck() {
            specs.push((
                format!("bottleneck.{i}.w1"),
                vec![k, d, dc],
                Init::FanIn(k * d),
            ));
            specs.push((format!("bottleneck.{i}.b1"), vec![dc], Init::FanIn(k * d)));
            specs.push((
                format!("bottleneck.{i}.w2"),
                vec![k, dc, d],
                Init::FanIn(k * dc),
            ));
            specs.push((format!("bottleneck.{i}.b2"), vec![d], Init::FanIn(k * dc)));
        }
        for head in HeadKind::active(&self.components) {
            let p = head.prefix();
            specs.push((format!("{p}.query"), vec![d], Init::Zeros));
            specs.push((format!("{p}.fc1.weight"), vec![d, c.hidden], Init::FanIn(d)));
            specs.push((format!("{p}.fc1.bias"), vec![c.hidden], Init::FanIn(d)));
            specs.push((
                format!("{p}.fc2.weight"),
                vec![c.hidden, 1],
                Init::FanIn(c.hidden),
            ));
            specs.push((format!("{p}.fc2.bias"), vec![1], Init::FanIn(c.hidden)));
        }
        specs
    }

    pub fn init_params<F: Real, R: Rng>(&self, rng: &mut R) -> Result<ModelParams<F>> {
        ModelParams::initialize(&self.param_specs(), rng)
    }
}

/// One utterance's model inputs.
#[derive(Clone, Copy, Debug)]
pub struct UtteranceInput<'a, F> {
    pub ssl: &'a Tensor<F>,
    pub wavelet: Option<&'a Tensor<F>>,
    pub task: TaskType,
    pub language: LanguageId,
}

/// Graph handles for the model outputs of one utterance.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub probability: Var,
    pub embedding: Var,
    pub weights: Var,
    pub head: HeadKind,
}

/// Concrete outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<F> {
    pub probability: F,
    pub embedding: Tensor<F>,
    pub weights: Tensor<F>,
    pub head: HeadKind,
}

/// Graph handles of one adaptive layer.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveVars {
    pub table: Var,
    pub gamma_w: Var,
    pub gamma_b: Var,
    pub beta_w: Var,
    pub beta_b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BottleneckVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub query: Var,
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

/// Standardizes each channel over time, then applies `gamma(e) * z + beta(e)`.
pub fn adaptive_layer_graph<F: Real>(
    g: &mut Graph<F>,
    z: Var,
    language: LanguageId,
    p: AdaptiveVars,
) -> Result<Var> {
    let n_lang = g.value(p.table).shape()[0];
    if language.0 >= n_lang {
        return Err(Error::Lookup(format!(
            "language index {} outside embedding table of {n_lang} rows",
            language.0
        )));
    }
    let e = g.gather_row(p.table, language.0)?;
    let gamma = g.dense(e, p.gamma_w, p.gamma_b)?;
    let beta = g.dense(e, p.beta_w, p.beta_b)?;
    let z_norm = g.standardize_columns(z, F::of(ADAPTIVE_EPS))?;
    let scaled = g.mul_row(z_norm, gamma)?;
    g.add_row(scaled, beta)
}

/// `sigmoid(W2 * ReLU(W1 * z)) ⊙ z + z`.
pub fn bottleneck_graph<F: Real>(g: &mut Graph<F>, z: Var, p: BottleneckVars) -> Result<Var> {
    let c = g.conv1d(z, p.w1, p.b1)?;
    let c = g.relu(c);
    let e = g.conv1d(c, p.w2, p.b2)?;
    let gate = g.sigmoid(e);
    let gated = g.mul(gate, z)?;
    g.add(gated, z)
}

/// Softmax-weighted average of frames scored against a learned query.
/// Returns `(pooled [1×D], weights [1×T])`.
pub fn attention_pool_graph<F: Real>(g: &mut Graph<F>, z: Var, query: Var) -> Result<(Var, Var)> {
    let d = g.value(z).last_dim();
    let t = g.value(z).rows();
    if t == 0 {
        return Err(Error::Input("attention pooling over zero frames".into()));
    }
    let q = g.reshape(query, &[d, 1])?;
    let scores = g.matmul(z, q)?;
    let scores = g.reshape(scores, &[1, t])?;
    let weights = g.softmax(scores);
    let pooled = g.matmul(weights, z)?;
    Ok((pooled, weights))
}

/// `sigmoid(fc2(ReLU(fc1(pooled))))`, shape `[1×1]`.
pub fn head_graph<F: Real>(g: &mut Graph<F>, pooled: Var, p: HeadVars) -> Result<Var> {
    let h = g.dense(pooled, p.fc1_w, p.fc1_b)?;
    let h = g.relu(h);
    let logit = g.dense(h, p.fc2_w, p.fc2_b)?;
    Ok(g.sigmoid(logit))
}

fn bind<F: Real>(g: &mut Graph<F>, params: &ModelParams<F>, id: &str) -> Result<Var> {
    let slot = params.slot(id)?;
    Ok(g.param(slot, params.by_slot(slot).value.clone()))
}

fn bind_head<F: Real>(
    g: &mut Graph<F>,
    params: &ModelParams<F>,
    head: HeadKind,
) -> Result<HeadVars> {
    let p = head.prefix();
    Ok(HeadVars {
        query: bind(g, params, &format!("{p}.query"))?,
        fc1_w: bind(g, params, &format!("{p}.fc1.weight"))?,
        fc1_b: bind(g, params, &format!("{p}.fc1.bias"))?,
        fc2_w: bind(g, params, &format!("{p}.fc2.weight"))?,
        fc2_b: bind(g, params, &format!("{p}.fc2.bias"))?,
    })
}

impl Architecture {
    /// Records the full forward pass of one utterance on `g`.
    pub fn forward_graph<F: Real>(
        &self,
        g: &mut Graph<F>,
        params: &ModelParams<F>,
        input: &UtteranceInput<'_, F>,
    ) -> Result<ForwardVars> {
        let cfg = &self.config;
        if input.ssl.shape().len() != 2 || input.ssl.last_dim() != cfg.d_ssl {
            return Err(Error::shape(
                "forward(ssl)",
                input.ssl.shape(),
                &[0, cfg.d_ssl],
            ));
        }
        let eps = F::of(FUSION_EPS);
        let mut z = if self.components.wavelet {
            let wav = input.wavelet.ok_or_else(|| {
                Error::Input("wavelet stream enabled but utterance has no wavelet features".into())
            })?;
            if wav.shape().len() != 2 || wav.last_dim() != cfg.d_wav {
                return Err(Error::shape(
                    "forward(wavelet)",
                    wav.shape(),
                    &[0, cfg.d_wav],
                ));
            }
            let t = input.ssl.rows().min(wav.rows());
            let ssl = g.input(input.ssl.take_rows(t));
            let wav = g.input(wav.take_rows(t));
            let (sg, sb) = (
                bind(g, params, "fusion.ssl_norm.gain")?,
                bind(g, params, "fusion.ssl_norm.bias")?,
            );
            let (wg, wb) = (
                bind(g, params, "fusion.wav_norm.gain")?,
                bind(g, params, "fusion.wav_norm.bias")?,
            );
            let s = g.layer_norm(ssl, sg, sb, eps)?;
            let w = g.layer_norm(wav, wg, wb, eps)?;
            g.concat_cols(s, w)?
        } else {
            let ssl = g.input(input.ssl.clone());
            let (sg, sb) = (
                bind(g, params, "fusion.ssl_norm.gain")?,
                bind(g, params, "fusion.ssl_norm.bias")?,
            );
            g.layer_norm(ssl, sg, sb, eps)?
        };
        if g.value(z).rows() == 0 {
            return Err(Error::Input("utterance has no frames".into()));
        }

        let placements = self.adaptive_placements().to_vec();
        let table = if placements.is_empty() {
            None
        } else {
            if input.language.0 >= self.n_languages {
                return Err(Error::Lookup(format!(
                    "language index {} not registered ({} languages)",
                    input.language.0, self.n_languages
                )));
            }
            Some(bind(g, params, "adaptive.lang_embedding")?)
        };
        let adaptive_at = |g: &mut Graph<F>, z: Var, at: Placement| -> Result<Var> {
            let mut z = z;
            for (i, _) in placements.iter().enumerate().filter(|(_, p)| **p == at) {
                let vars = AdaptiveVars {
                    table: table.expect("table bound when placements exist"),
                    gamma_w: bind(g, params, &format!("adaptive.{i}.gamma.weight"))?,
                    gamma_b: bind(g, params, &format!("adaptive.{i}.gamma.bias"))?,
                    beta_w: bind(g, params, &format!("adaptive.{i}.beta.weight"))?,
                    beta_b: bind(g, params, &format!("adaptive.{i}.beta.bias"))?,
                };
                z = adaptive_layer_graph(g, z, input.language, vars)?;
            }
            Ok(z)
        };

        z = adaptive_at(g, z, Placement::AfterFusion)?;
        for i in 0..self.n_bottleneck() {
            let vars = BottleneckVars {
                w1: bind(g, params, &format!("bottleneck.{i}.w1"))?,
                b1: bind(g, params, &format!("bottleneck.{i}.b1"))?,
                w2: bind(g, params, &format!("bottleneck.{i}.w2"))?,
                b2: bind(g, params, &format!("bottleneck.{i}.b2"))?,
            };
            z = bottleneck_graph(g, z, vars)?;
        }
        z = adaptive_at(g, z, Placement::AfterBottleneck)?;

        let head = HeadKind::route(input.task, &self.components);
        let hv = bind_head(g, params, head)?;
        let (pooled, weights) = attention_pool_graph(g, z, hv.query)?;
        let probability = head_graph(g, pooled, hv)?;
        Ok(ForwardVars {
            probability,
            embedding: pooled,
            weights,
            head,
        })
    }

    /// Forward pass returning concrete values.
    pub fn forward<F: Real>(
        &self,
        params: &ModelParams<F>,
        input: &UtteranceInput<'_, F>,
    ) -> Result<ForwardOutput<F>> {
        let mut g = Graph::new();
        let vars = self.forward_graph(&mut g, params, input)?;
        Ok(ForwardOutput {
            probability: g.scalar(vars.probability),
            embedding: g.value(vars.embedding).clone(),
            weights: g.value(vars.weights).clone(),
            head: vars.head,
        })
    }
}

/// Concrete adaptive-layer parameters, for use outside a full model.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveLayerParams<F> {
    pub embedding_table: Tensor<F>,
    pub gamma_weight: Tensor<F>,
    pub gamma_bias: Tensor<F>,
    pub beta_weight: Tensor<F>,
    pub beta_bias: Tensor<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckParams<F> {
    pub w1: Tensor<F>,
    pub b1: Tensor<F>,
    pub w2: Tensor<F>,
    pub b2: Tensor<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<F> {
    pub query: Tensor<F>,
    pub fc1_weight: Tensor<F>,
    pub fc1_bias: Tensor<F>,
    pub fc2_weight: Tensor<F>,
    pub fc2_bias: Tensor<F>,
}

pub fn adaptive_layer<F: Real>(
    z: &Tensor<F>,
    language: LanguageId,
    p: &AdaptiveLayerParams<F>,
) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let zv = g.input(z.clone());
    let vars = AdaptiveVars {
        table: g.input(p.embedding_table.clone()),
        gamma_w: g.input(p.gamma_weight.clone()),
        gamma_b: g.input(p.gamma_bias.clone()),
        beta_w: g.input(p.beta_weight.clone()),
        beta_b: g.input(p.beta_bias.clone()),
    };
    let out = adaptive_layer_graph(&mut g, zv, language, vars)?;
    Ok(g.value(out).clone())
}

pub fn bottleneck<F: Real>(z: &Tensor<F>, p: &BottleneckParams<F>) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let zv = g.input(z.clone());
    let vars = BottleneckVars {
        w1: g.input(p.w1.clone()),
        b1: g.input(p.b1.clone()),
        w2: g.input(p.w2.clone()),
        b2: g.input(p.b2.clone()),
    };
    let out = bottleneck_graph(&mut g, zv, vars)?;
    Ok(g.value(out).clone())
}

/// Returns `(pooled [D], weights [T])`.
pub fn attention_pool<F: Real>(z: &Tensor<F>, query: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
    let mut g = Graph::new();
    let zv = g.input(z.clone());
    let qv = g.input(query.clone());
    let (pooled, weights) = attention_pool_graph(&mut g, zv, qv)?;
    let d = g.value(pooled).len();
    let t = g.value(weights).len();
    Ok((
        g.value(pooled).clone().reshape(&[d])?,
        g.value(weights).clone().reshape(&[t])?,
    ))
}

pub fn head_forward<F: Real>(pooled: &Tensor<F>, head: &HeadParams<F>) -> Result<F> {
    let mut g = Graph::new();
    let pv = g.input(pooled.clone().reshape(&[1, pooled.len()])?);
    let vars = HeadVars {
        query: g.input(head.query.clone()),
        fc1_w: g.input(head.fc1_weight.clone()),
        fc1_b: g.input(head.fc1_bias.clone()),
        fc2_w: g.input(head.fc2_weight.clone()),
        fc2_b: g.input(head.fc2_bias.clone()),
    };
    let out = head_graph(&mut g, pv, vars)?;
    Ok(g.scalar(out))
}
