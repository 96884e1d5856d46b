//! Deterministic synthetic bilingual corpus.
//!
//! Each language has its own speaker population (counts, HC:PD ratio) and a
//! channel shift/scale on language-specific SSL dimensions. Every speaker has
//! short burst excursions on a shared set of PD dimensions. Their polarity
//! follows the task (positive for DDK, negative for continuous speech) for PD
//! speakers and is reversed for healthy ones, so the sign is only diagnostic
//! once the task is known. A weaker task-independent PD component sits on
//! separate dimensions. DDK audio is a syllabic pulse train
//! whose timing jitter and amplitude instability rise under PD; continuous
//! audio is a voiced signal whose breathiness rises under PD.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::audio::write_audio;
use super::manifest::{write_manifest, ManifestEntry};
use super::matrix::write_matrix;
use super::{Corpus, FeatureSettings, Split, Utterance};
use crate::error::{Error, Result};
use crate::features::{wavelet_sequence, Waveform};
use crate::model::TaskType;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub name: String,
    pub healthy: usize,
    pub pd: usize,
    /// Magnitude of the per-dimension offset on this language's dimensions.
    pub shift: f64,
    /// Noise scale on this language's dimensions.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub languages: Vec<LanguageSpec>,
    pub d_ssl: usize,
    pub utterances_per_task: usize,
    pub sample_rate: u32,
    pub ddk_secs: f64,
    pub continuous_secs: f64,
    /// SSL frames per second.
    pub frame_rate: f64,
    /// Global multiplier on every PD-dependent effect; 0 makes labels uninformative.
    pub pd_effect: f64,
    /// Burst amplitude on the task-signed PD dimensions.
    pub burst_amplitude: f64,
    /// Burst amplitude on the task-independent PD dimensions.
    pub shared_amplitude: f64,
    /// Expected fraction of frames inside a burst.
    pub burst_rate: f64,
    pub burst_frames: usize,
    pub n_pd_dims: usize,
    pub n_shared_dims: usize,
    pub n_language_dims: usize,
    pub n_articulation_dims: usize,
    /// AR(1) coefficient of the frame noise.
    pub temporal_corr: f64,
    pub speaker_std: f64,
    /// Relative inter-syllable timing jitter for healthy speakers.
    pub jitter: f64,
    pub jitter_increase: f64,
    pub amplitude_instability: f64,
    pub instability_increase: f64,
    pub breathiness: f64,
    pub breathiness_increase: f64,
    pub split: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            languages: vec![
                LanguageSpec {
                    name: "synth_a".into(),
                    healthy: 64,
                    pd: 16,
                    shift: 3.0,
                    scale: 1.0,
                },
                LanguageSpec {
                    name: "synth_b".into(),
                    healthy: 24,
                    pd: 24,
                    shift: 3.0,
                    scale: 2.0,
                },
            ],
            d_ssl: 64,
            utterances_per_task: 1,
            sample_rate: 16000,
            ddk_secs: 3.0,
            continuous_secs: 5.0,
            frame_rate: 50.0,
            pd_effect: 1.0,
            burst_amplitude: 2.5,
            shared_amplitude: 0.8,
            burst_rate: 0.2,
            burst_frames: 2,
            n_pd_dims: 6,
            n_shared_dims: 2,
            n_language_dims: 8,
            n_articulation_dims: 2,
            temporal_corr: 0.7,
            speaker_std: 0.15,
            jitter: 0.03,
            jitter_increase: 0.12,
            amplitude_instability: 0.05,
            instability_increase: 0.3,
            breathiness: 0.01,
            breathiness_increase: 0.03,
            split: [0.7, 0.1, 0.2],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.languages.is_empty() {
            return bad("synth.languages must not be empty".into());
        }
        for l in &self.languages {
            if l.name.is_empty() || l.healthy == 0 || l.pd == 0 {
                return bad(format!(
                    "language `{}` needs a name and at least one speaker per class",
                    l.name
                ));
            }
            if !(l.scale > 0.0) || !l.shift.is_finite() {
                return bad(format!(
                    "language `{}` needs scale > 0 and finite shift",
                    l.name
                ));
            }
        }
        let mut names: Vec<&str> = self.languages.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("synth language names must be unique".into());
        }
        let used = self.n_pd_dims
            + self.n_shared_dims
            + self.n_articulation_dims
            + self.n_language_dims * self.languages.len();
        if used > self.d_ssl {
            return bad(format!(
                "synth needs {used} designated dimensions but d_ssl = {}",
                self.d_ssl
            ));
        }
        if self.n_pd_dims == 0 || !(self.pd_effect >= 0.0) {
            return bad("synth needs n_pd_dims > 0 and pd_effect >= 0".into());
        }
        if !(self.burst_amplitude > 0.0 && self.shared_amplitude >= 0.0) {
            return bad("synth burst amplitudes must be positive".into());
        }
        if !(0.0 < self.burst_rate && self.burst_rate < 1.0) || self.burst_frames == 0 {
            return bad("synth.burst_rate must lie in (0, 1) and burst_frames >= 1".into());
        }
        if !(0.0..1.0).contains(&self.temporal_corr) {
            return bad("synth.temporal_corr must lie in [0, 1)".into());
        }
        if self.utterances_per_task == 0 || self.sample_rate == 0 || self.frame_rate <= 0.0 {
            return bad("synth needs positive utterance count, sample rate and frame rate".into());
        }
        if self.ddk_secs < 0.1 || self.continuous_secs < 0.1 {
            return bad("synth utterances must be at least 0.1 s long".into());
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|&s| s < 0.0) || (total - 1.0).abs() > 1e-9 {
            return bad(format!(
                "synth.split must be nonnegative and sum to 1, got {:?}",
                self.split
            ));
        }
        Ok(())
    }
}

/// Which SSL dimensions carry which effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimMap {
    /// Task-signed PD dimensions, identical for every language.
    pub pd: Vec<usize>,
    /// Task-independent PD dimensions.
    pub pd_shared: Vec<usize>,
    /// Syllable envelope dimensions.
    pub articulation: Vec<usize>,
    /// Shift/scale dimensions per language, in config order.
    pub language: Vec<(String, Vec<usize>)>,
}

impl DimMap {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut dims: Vec<usize> = (0..cfg.d_ssl).collect();
        dims.shuffle(rng);
        let mut take = |n: usize| {
            let mut d: Vec<usize> = dims.drain(..n).collect();
            d.sort_unstable();
            d
        };
        let pd = take(cfg.n_pd_dims);
        let pd_shared = take(cfg.n_shared_dims);
        let articulation = take(cfg.n_articulation_dims);
        let language = cfg
            .languages
            .iter()
            .map(|l| (l.name.clone(), take(cfg.n_language_dims)))
            .collect();
        DimMap {
            pd,
            pd_shared,
            articulation,
            language,
        }
    }
}

/// One synthesized utterance before it is written to disk.
#[derive(Clone, Debug)]
pub struct SynthUtterance {
    pub entry: ManifestEntry,
    pub ssl: Tensor<f32>,
    pub audio: Waveform,
}

struct Speaker<'a> {
    lang: &'a LanguageSpec,
    lang_dims: &'a [usize],
    offset: Vec<f64>,
    lang_shift: Vec<f64>,
    label: u8,
    severity: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Syllable onsets in seconds and their amplitudes.
fn pulse_train(
    cfg: &SynthConfig,
    spk: &Speaker<'_>,
    task: TaskType,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let pd = f64::from(spk.label) * cfg.pd_effect * spk.severity;
    let (secs, rate, jitter, instability) = match task {
        TaskType::Ddk => (
            cfg.ddk_secs,
            rng.random_range(5.0..7.0),
            cfg.jitter + pd * cfg.jitter_increase,
            cfg.amplitude_instability + pd * cfg.instability_increase,
        ),
        // running speech has irregular syllable timing regardless of label
        TaskType::Continuous => (cfg.continuous_secs, rng.random_range(4.0..6.0), 0.3, 0.3),
    };
    let period = 1.0 / rate;
    let mut t = rng.random_range(0.02..0.1);
    let mut out = Vec::new();
    while t < secs - 0.1 {
        let amp = (0.5 * (1.0 + instability * normal(rng))).clamp(0.05, 0.9);
        out.push((t, amp));
        t += (period * (1.0 + jitter * normal(rng))).max(0.3 * period);
    }
    out
}

fn ddk_audio(cfg: &SynthConfig, pulses: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(cfg.sample_rate);
    let n = (cfg.ddk_secs * sr).round() as usize;
    let f0 = rng.random_range(100.0..220.0);
    let mut x: Vec<f64> = (0..n).map(|_| 0.003 * normal(rng)).collect();
    for &(onset, amp) in pulses {
        let start = (onset * sr) as usize;
        let burst = (0.015 * sr) as usize;
        let vowel = (0.08 * sr) as usize;
        for k in 0..burst.min(n.saturating_sub(start)) {
            x[start + k] += 0.3 * amp * normal(rng);
        }
        for k in 0..vowel {
            let i = start + burst + k;
            if i >= n {
                break;
            }
            let tt = k as f64 / sr;
            let env = amp * (-tt / 0.03).exp();
            x[i] += env
                * ((2.0 * PI * f0 * tt).sin()
                    + 0.5 * (4.0 * PI * f0 * tt).sin()
                    + 0.25 * (6.0 * PI * f0 * tt).sin())
                / 1.75;
        }
    }
    x.iter().map(|v| v.clamp(-0.99, 0.99)).collect()
}

fn continuous_audio(cfg: &SynthConfig, spk: &Speaker<'_>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(cfg.sample_rate);
    let n = (cfg.continuous_secs * sr).round() as usize;
    let pd = f64::from(spk.label) * cfg.pd_effect * spk.severity;
    let breath = cfg.breathiness + pd * cfg.breathiness_increase;
    let base = rng.random_range(100.0..220.0);
    let mut phase = 0.0;
    let mut f0 = base;
    let mut voiced = true;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i % 160 == 0 {
            f0 = (f0 + 2.0 * normal(rng)).clamp(0.7 * base, 1.3 * base);
            if rng.random::<f64>() < 0.01 {
                voiced = !voiced;
            }
        }
        phase += 2.0 * PI * f0 / sr;
        let v = if voiced {
            0.3 * (phase.sin() + 0.4 * (2.0 * phase).sin() + 0.2 * (3.0 * phase).sin())
        } else {
            0.0
        };
        out.push((v + breath * normal(rng)).clamp(-0.99, 0.99));
    }
    out
}

fn ssl_features(
    cfg: &SynthConfig,
    dims: &DimMap,
    spk: &Speaker<'_>,
    task: TaskType,
    pulses: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> Tensor<f32> {
    let secs = match task {
        TaskType::Ddk => cfg.ddk_secs,
        TaskType::Continuous => cfg.continuous_secs,
    };
    let t_frames = ((secs * cfg.frame_rate).round() as usize).max(1);
    let d = cfg.d_ssl;
    let rho = cfg.temporal_corr;
    let innov = (1.0 - rho * rho).sqrt();

    let mut scale = vec![1.0; d];
    for &k in spk.lang_dims {
        scale[k] = spk.lang.scale;
    }
    let mut state: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let mut m = vec![0.0; t_frames * d];
    for t in 0..t_frames {
        for k in 0..d {
            if t > 0 {
                state[k] = rho * state[k] + innov * normal(rng);
            }
            m[t * d + k] = scale[k] * state[k] + spk.offset[k] + spk.lang_shift[k];
        }
    }

    for &(onset, amp) in pulses {
        let centre = onset * cfg.frame_rate;
        let lo = (centre - 6.0).max(0.0) as usize;
        let hi = ((centre + 6.0) as usize).min(t_frames);
        for t in lo..hi {
            let bump = amp * 2.0 * (-((t as f64 - centre) / 1.5).powi(2)).exp();
            for &k in &dims.articulation {
                m[t * d + k] += bump;
            }
        }
    }

    let effect = f64::from(spk.label) * cfg.pd_effect * spk.severity;
    let task_sign = match task {
        TaskType::Ddk => 1.0,
        TaskType::Continuous => -1.0,
    };
    // -1 for healthy speakers, about +1 for PD at full effect
    let polarity = task_sign * (f64::from(spk.label) * cfg.pd_effect * (1.0 + spk.severity) - 1.0);
    let start_p = cfg.burst_rate / cfg.burst_frames as f64;
    let mut remaining = 0usize;
    for t in 0..t_frames {
        if remaining == 0 && rng.random::<f64>() < start_p {
            remaining = cfg.burst_frames;
        }
        if remaining > 0 {
            remaining -= 1;
            for &k in &dims.pd {
                m[t * d + k] += polarity * cfg.burst_amplitude;
            }
            for &k in &dims.pd_shared {
                m[t * d + k] += effect * cfg.shared_amplitude;
            }
        }
    }
    Tensor::new(vec![t_frames, d], m.into_iter().map(|v| v as f32).collect())
        .expect("shape matches data")
}

/// Synthesized corpus held in memory.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub dims: DimMap,
    pub train: Vec<SynthUtterance>,
    pub validation: Vec<SynthUtterance>,
    pub test: Vec<SynthUtterance>,
}

impl SynthCorpus {
    pub fn split(&self, s: Split) -> &[SynthUtterance] {
        match s {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// In-memory equivalent of writing the tree and loading it with [`Corpus::load`],
    /// except that audio is not quantized to 16 bits first.
    pub fn to_corpus(&self, features: Option<&FeatureSettings>) -> Result<Corpus> {
        let convert = |utts: &[SynthUtterance]| {
            utts.iter()
                .map(|u| {
                    let wavelet = match features {
                        Some(f) => Some(wavelet_sequence(&u.audio, &f.frames, &f.wavelet)?.matrix),
                        None => None,
                    };
                    Ok(Utterance {
                        entry: u.entry.clone(),
                        ssl: u.ssl.clone(),
                        wavelet,
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok(Corpus {
            train: convert(&self.train)?,
            validation: convert(&self.validation)?,
            test: convert(&self.test)?,
        })
    }
}

/// Number of speakers of a class assigned to train and validation; the rest go to test.
fn split_counts(n: usize, ratios: &[f64; 3]) -> (usize, usize) {
    let train = ((n as f64) * ratios[0]).round() as usize;
    let val = ((n as f64) * ratios[1]).round() as usize;
    let train = train.min(n);
    (train, val.min(n - train))
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut global = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = DimMap::draw(cfg, &mut global);
    let mut corpus = SynthCorpus {
        dims: dims.clone(),
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let mut speaker_index = 0u64;
    for (li, lang) in cfg.languages.iter().enumerate() {
        let lang_dims = &dims.language[li].1;
        let mut lang_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        lang_rng.set_stream(1 << 32 | li as u64);
        let mut lang_shift = vec![0.0; cfg.d_ssl];
        for &k in lang_dims {
            let s = if lang_rng.random::<bool>() { 1.0 } else { -1.0 };
            lang_shift[k] = s * lang.shift;
        }

        let mut by_label: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let n_total = lang.healthy + lang.pd;
        for i in 0..n_total {
            by_label[usize::from(i >= lang.healthy)].push(i);
        }
        let mut assignment = vec![Split::Test; n_total];
        for group in &mut by_label {
            group.shuffle(&mut lang_rng);
            let (n_train, n_val) = split_counts(group.len(), &cfg.split);
            for (pos, &spk) in group.iter().enumerate() {
                assignment[spk] = if pos < n_train {
                    Split::Train
                } else if pos < n_train + n_val {
                    Split::Validation
                } else {
                    Split::Test
                };
            }
        }

        for (i, &split) in assignment.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(2 << 32 | speaker_index);
            speaker_index += 1;
            let label = u8::from(i >= lang.healthy);
            let spk = Speaker {
                lang,
                lang_dims,
                offset: (0..cfg.d_ssl)
                    .map(|_| cfg.speaker_std * normal(&mut rng))
                    .collect(),
                lang_shift: lang_shift.clone(),
                label,
                severity: rng.random_range(0.8..1.2),
            };
            let speaker_id = format!("{}_s{i:03}", lang.name);
            for task in TaskType::ALL {
                for u in 0..cfg.utterances_per_task {
                    let utterance_id = format!("{speaker_id}_{task}_{u}");
                    let pulses = pulse_train(cfg, &spk, task, &mut rng);
                    let samples = match task {
                        TaskType::Ddk => ddk_audio(cfg, &pulses, &mut rng),
                        TaskType::Continuous => continuous_audio(cfg, &spk, &mut rng),
                    };
                    let ssl = ssl_features(cfg, &dims, &spk, task, &pulses, &mut rng);
                    let entry = ManifestEntry {
                        utterance_id: utterance_id.clone(),
                        speaker_id: speaker_id.clone(),
                        dataset: lang.name.clone(),
                        task,
                        label,
                        audio_path: Some(format!("audio/{utterance_id}.wav")),
                        ssl_feature_path: format!("ssl/{utterance_id}.ftrx"),
                    };
                    let utt = SynthUtterance {
                        entry,
                        ssl,
                        audio: Waveform::new(samples, cfg.sample_rate)?,
                    };
                    match split {
                        Split::Train => corpus.train.push(utt),
                        Split::Validation => corpus.validation.push(utt),
                        Split::Test => corpus.test.push(utt),
                    }
                }
            }
        }
    }
    Ok(corpus)
}

/// Writes the corpus tree: `{train,validation,test}.jsonl`, `audio/`, `ssl/`,
/// `dim_map.json` and `synth_config.json`.
pub fn generate_synthetic_corpus(cfg: &SynthConfig, out: &Path) -> Result<SynthCorpus> {
    let corpus = synthesize(cfg)?;
    for sub in ["audio", "ssl"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for split in Split::ALL {
        let utts = corpus.split(split);
        for u in utts {
            if let Some(a) = &u.entry.audio_path {
                write_audio(&out.join(a), &u.audio)?;
            }
            write_matrix(&out.join(&u.entry.ssl_feature_path), &u.ssl)?;
        }
        let entries: Vec<ManifestEntry> = utts.iter().map(|u| u.entry.clone()).collect();
        write_manifest(&out.join(split.manifest_name()), &entries)?;
    }
    write_json(&out.join("dim_map.json"), &corpus.dims)?;
    write_json(&out.join("synth_config.json"), cfg)?;
    Ok(corpus)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
