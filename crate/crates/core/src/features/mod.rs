//! Frame-level feature extraction and SSL/wavelet fusion.

pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Real, Tensor};

pub use wavelet::{dwt, idwt, padded_len, wavelet_features, Pyramid, WaveletConfig, WaveletFamily};

/// Epsilon inside the fusion layer norms.
pub const FUSION_EPS: f64 = 1e-8;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("empty waveform".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            window_ms: 25.0,
            hop_ms: 20.0,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return Err(Error::Config(format!(
                "frame hop {} ms must be in (0, window {} ms]",
                self.hop_ms, self.window_ms
            )));
        }
        Ok(())
    }

    /// `(window, hop)` in samples at the given rate.
    pub fn samples(&self, rate: u32) -> (usize, usize) {
        let to_samples = |ms: f64| (ms * rate as f64 / 1000.0).round() as usize;
        (to_samples(self.window_ms), to_samples(self.hop_ms).max(1))
    }
}

/// Splits a waveform into overlapping windows; a trailing partial window is dropped.
pub fn frame_signal<'a>(w: &'a Waveform, cfg: &FrameConfig) -> Result<Vec<&'a [f64]>> {
    cfg.validate()?;
    let (win, hop) = cfg.samples(w.sample_rate);
    if win == 0 || w.samples.len() < win {
        return Err(Error::Input(format!(
            "waveform of {} samples is shorter than one {win}-sample window",
            w.samples.len()
        )));
    }
    let count = (w.samples.len() - win) / hop + 1;
    Ok((0..count)
        .map(|i| &w.samples[i * hop..i * hop + win])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Ssl,
    Wavelet,
    Fused,
}

/// Time-major `T×D` matrix of per-frame vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence<F = f32> {
    pub kind: FeatureKind,
    pub matrix: Tensor<F>,
}

impl<F: Real> FeatureSequence<F> {
    pub fn new(kind: FeatureKind, matrix: Tensor<F>) -> Result<Self> {
        match matrix.shape() {
            [t, d] if *t >= 1 && *d >= 1 => Ok(FeatureSequence { kind, matrix }),
            other => Err(Error::Input(format!(
                "{kind:?} feature sequence must be a non-empty T×D matrix, got {other:?}"
            ))),
        }
    }

    pub fn frames(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }
}

/// Wavelet feature sequence for a whole waveform.
pub fn wavelet_sequence(
    w: &Waveform,
    frames: &FrameConfig,
    wavelet: &WaveletConfig,
) -> Result<FeatureSequence<f32>> {
    let framed = frame_signal(w, frames)?;
    let d = wavelet.feature_dim();
    let mut data = Vec::with_capacity(framed.len() * d);
    for frame in framed.iter() {
        data.extend(
            wavelet_features(frame, wavelet)?
                .into_iter()
                .map(|v| v as f32),
        );
    }
    FeatureSequence::new(
        FeatureKind::Wavelet,
        Tensor::new(vec![framed.len(), d], data)?,
    )
}

/// Learnable affine parameters of the two per-stream layer norms.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionNorms<F> {
    pub ssl_gain: Tensor<F>,
    pub ssl_bias: Tensor<F>,
    pub wav_gain: Tensor<F>,
    pub wav_bias: Tensor<F>,
}

impl<F: Real> FusionNorms<F> {
    /// Unit gains, zero biases.
    pub fn identity(d_ssl: usize, d_wav: usize) -> Self {
        FusionNorms {
            ssl_gain: Tensor::full(&[d_ssl], F::one()),
            ssl_bias: Tensor::zeros(&[d_ssl]),
            wav_gain: Tensor::full(&[d_wav], F::one()),
            wav_bias: Tensor::zeros(&[d_wav]),
        }
    }
}

/// Truncates both sequences to the shorter frame count.
pub fn align<F: Real>(
    ssl: &FeatureSequence<F>,
    wav: &FeatureSequence<F>,
) -> (Tensor<F>, Tensor<F>) {
    let t = ssl.frames().min(wav.frames());
    (ssl.matrix.take_rows(t), wav.matrix.take_rows(t))
}

/// Layer-normalizes each stream and concatenates them frame by frame.
pub fn fuse<F: Real>(
    ssl: &FeatureSequence<F>,
    wav: &FeatureSequence<F>,
    norms: &FusionNorms<F>,
) -> Result<FeatureSequence<F>> {
    if ssl.frames() == 0 || wav.frames() == 0 {
        return Err(Error::Input("cannot fuse an empty sequence".into()));
    }
    let (s, w) = align(ssl, wav);
    let eps = F::of(FUSION_EPS);
    let (s_norm, _) = ops::layer_norm(&s, &norms.ssl_gain, &norms.ssl_bias, eps)?;
    let (w_norm, _) = ops::layer_norm(&w, &norms.wav_gain, &norms.wav_bias, eps)?;
    FeatureSequence::new(FeatureKind::Fused, ops::concat_cols(&s_norm, &w_norm)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(kind: FeatureKind, t: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureSequence<f64> {
        let data = (0..t * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureSequence::new(kind, Tensor::new(vec![t, d], data).unwrap()).unwrap()
    }

    #[test]
    fn one_second_gives_49_frames() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let frames = frame_signal(&w, &FrameConfig::default()).unwrap();
        assert_eq!(frames.len(), (16000 - 400) / 320 + 1);
        assert_eq!(frames.len(), 49);
        assert!(frames.iter().all(|f| f.len() == 400));
    }

    #[test]
    fn exact_window_and_partition() {
        let w = Waveform::new((0..400).map(f64::from).collect(), 16000).unwrap();
        assert_eq!(frame_signal(&w, &FrameConfig::default()).unwrap().len(), 1);

        let w = Waveform::new((0..1200).map(f64::from).collect(), 16000).unwrap();
        let cfg = FrameConfig {
            window_ms: 25.0,
            hop_ms: 25.0,
        };
        let frames = frame_signal(&w, &cfg).unwrap();
        assert_eq!(frames.len(), 3);
        let joined: Vec<f64> = frames.concat();
        assert_eq!(joined, w.samples);
    }

    #[test]
    fn short_waveform_and_bad_hop_rejected() {
        let w = Waveform::new(vec![0.0; 399], 16000).unwrap();
        assert!(matches!(
            frame_signal(&w, &FrameConfig::default()),
            Err(Error::Input(_))
        ));
        let bad = FrameConfig {
            window_ms: 25.0,
            hop_ms: 30.0,
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(Waveform::new(vec![], 16000).is_err());
    }

    #[test]
    fn features_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = WaveletConfig::default();
        let frame: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let feats = wavelet_features(&frame, &cfg).unwrap();
        let p = dwt(&frame, &cfg).unwrap();
        let bands: Vec<&Vec<f64>> = p.details.iter().chain([&p.approx]).collect();
        for (b, band) in bands.iter().enumerate() {
            let n = band.len() as f64;
            let energy: f64 = band.iter().map(|c| c * c).sum();
            let mean: f64 = band.iter().sum::<f64>() / n;
            let mean_abs: f64 = band.iter().map(|c| c.abs()).sum::<f64>() / n;
            let std = (band.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert_abs_diff_eq!(feats[3 * b], (energy + 1e-8).ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(feats[3 * b + 1], mean_abs, epsilon = 1e-12);
            assert_abs_diff_eq!(feats[3 * b + 2], std, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_shapes_and_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ssl = seq(FeatureKind::Ssl, 50, 4, &mut rng);
        let wav = seq(FeatureKind::Wavelet, 49, 2, &mut rng);
        let fused = fuse(&ssl, &wav, &FusionNorms::identity(4, 2)).unwrap();
        assert_eq!(fused.kind, FeatureKind::Fused);
        assert_eq!(fused.matrix.shape(), &[49, 6]);

        let (ssl_norm, _) = ops::layer_norm(
            &ssl.matrix.take_rows(49),
            &Tensor::full(&[4], 1.0),
            &Tensor::zeros(&[4]),
            FUSION_EPS,
        )
        .unwrap();
        for t in 0..49 {
            assert_eq!(&fused.matrix.row(t)[..4], ssl_norm.row(t));
        }
    }

    #[test]
    fn constant_frames_fuse_to_zero() {
        let ssl = FeatureSequence::new(
            FeatureKind::Ssl,
            Tensor::from_rows(&[vec![3.0, 3.0, 3.0, 3.0], vec![-1.0; 4]]).unwrap(),
        )
        .unwrap();
        let wav = FeatureSequence::new(
            FeatureKind::Wavelet,
            Tensor::from_rows(&[vec![0.5, 0.5], vec![2.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let fused = fuse(&ssl, &wav, &FusionNorms::identity(4, 2)).unwrap();
        assert!(fused.matrix.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(FeatureSequence::new(FeatureKind::Ssl, Tensor::<f32>::zeros(&[0, 4])).is_err());
    }

    #[test]
    fn wavelet_sequence_dims() {
        let w = Waveform::new(
            (0..16000).map(|i| (i as f64 * 0.05).sin() * 0.5).collect(),
            16000,
        )
        .unwrap();
        let s = wavelet_sequence(&w, &FrameConfig::default(), &WaveletConfig::default()).unwrap();
        assert_eq!(s.matrix.shape(), &[49, 18]);
        assert!(s.matrix.all_finite());
    }
}
