//! Multilevel orthonormal DWT with periodic boundary handling, and the
//! per-band statistics used as frame-level wavelet features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    Db4,
}

const HAAR_LO: [f64; 2] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];

// Daubechies, 4 vanishing moments (8 taps), decomposition low-pass.
const DB4_LO: [f64; 8] = [
    -0.010_597_401_784_997_278,
    0.032_883_011_666_982_945,
    0.030_841_381_835_986_965,
    -0.187_034_811_718_881_14,
    -0.027_983_769_416_983_85,
    0.630_880_767_929_590_4,
    0.714_846_570_552_541_5,
    0.230_377_813_308_855_23,
];

impl WaveletFamily {
    pub fn low_pass(self) -> &'static [f64] {
        match self {
            WaveletFamily::Haar => &HAAR_LO,
            WaveletFamily::Db4 => &DB4_LO,
        }
    }

    /// Quadrature mirror of the low-pass filter: `g[n] = (-1)^n h[L-1-n]`.
    pub fn high_pass(self) -> Vec<f64> {
        let lo = self.low_pass();
        let n = lo.len();
        (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    lo[n - 1 - i]
                } else {
                    -lo[n - 1 - i]
                }
            })
            .collect()
    }
}

impl std::str::FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(WaveletFamily::Haar),
            "db4" => Ok(WaveletFamily::Db4),
            other => Err(Error::Config(format!("unknown wavelet family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub family: WaveletFamily,
    pub levels: usize,
    /// Added to band energy before the logarithm.
    pub eps: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            family: WaveletFamily::Db4,
            levels: 5,
            eps: 1e-8,
        }
    }
}

impl WaveletConfig {
    /// Three statistics for each of the `levels` detail bands plus the approximation band.
    pub fn feature_dim(&self) -> usize {
        3 * (self.levels + 1)
    }
}

/// Output of a multilevel decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    /// Detail bands, finest (level 1) first.
    pub details: Vec<Vec<f64>>,
    /// Coarsest approximation band.
    pub approx: Vec<f64>,
}

impl Pyramid {
    /// Bands in feature order: details from finest to coarsest, then the approximation.
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        self.details
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.approx.as_slice()))
    }

    pub fn energy(&self) -> f64 {
        self.bands().flatten().map(|c| c * c).sum()
    }
}

/// One periodic analysis step on an even-length signal.
///
/// The high-pass filter sums to zero, so details are accumulated on
/// differences from the window's first sample. The transform is unchanged
/// and a constant window yields a detail of exactly zero.
fn analyze(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let base = x[2 * k];
        let (mut a, mut d) = (0.0, 0.0);
        for (i, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * k + i) % n];
            a += l * v;
            d += h * (v - base);
        }
        approx[k] = a;
        detail[k] = d;
    }
    (approx, detail)
}

/// One periodic synthesis step, the transpose of [`analyze`].
fn synthesize(approx: &[f64], detail: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = approx.len() * 2;
    let mut x = vec![0.0; n];
    for k in 0..approx.len() {
        for (i, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            x[(2 * k + i) % n] += l * approx[k] + h * detail[k];
        }
    }
    x
}

/// Inverse of [`dwt`]; returns the periodically extended frame of length
/// [`padded_len`].
pub fn idwt(p: &Pyramid, family: WaveletFamily) -> Result<Vec<f64>> {
    let hi = family.high_pass();
    let mut cur = p.approx.clone();
    for d in p.details.iter().rev() {
        if d.len() != cur.len() {
            return Err(Error::Input(format!(
                "detail band of {} coefficients under an approximation of {}",
                d.len(),
                cur.len()
            )));
        }
        cur = synthesize(&cur, d, family.low_pass(), &hi);
    }
    Ok(cur)
}

/// Length the frame is periodically extended to: the next multiple of `2^levels`.
pub fn padded_len(len: usize, levels: usize) -> usize {
    let block = 1usize << levels;
    len.div_ceil(block) * block
}

/// Multilevel DWT with periodic extension.
///
/// Frames whose length is not a multiple of `2^levels` are first wrapped
/// periodically up to the next multiple, so every level sees an even length.
pub fn dwt(frame: &[f64], cfg: &WaveletConfig) -> Result<Pyramid> {
    if cfg.levels == 0 {
        return Err(Error::Config("wavelet levels must be at least 1".into()));
    }
    if cfg.levels >= usize::BITS as usize || frame.len() < (1usize << cfg.levels) {
        return Err(Error::Config(format!(
            "frame of {} samples is too short for {} decomposition levels",
            frame.len(),
            cfg.levels
        )));
    }
    let n = padded_len(frame.len(), cfg.levels);
    let mut current: Vec<f64> = (0..n).map(|i| frame[i % frame.len()]).collect();
    let lo = cfg.family.low_pass();
    let hi = cfg.family.high_pass();
    let mut details = Vec::with_capacity(cfg.levels);
    for _ in 0..cfg.levels {
        let (a, d) = analyze(&current, lo, &hi);
        details.push(d);
        current = a;
    }
    Ok(Pyramid {
        details,
        approx: current,
    })
}

/// `[log(energy + eps), mean |c|, std c]` per band, bands ordered as in [`Pyramid::bands`].
pub fn band_statistics(pyramid: &Pyramid, eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * (pyramid.details.len() + 1));
    for band in pyramid.bands() {
        let n = band.len() as f64;
        let energy: f64 = band.iter().map(|c| c * c).sum();
        let mean_abs = band.iter().map(|c| c.abs()).sum::<f64>() / n;
        let mean = band.iter().sum::<f64>() / n;
        let var = band.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        out.extend([(energy + eps).ln(), mean_abs, var.sqrt()]);
    }
    out
}

pub fn wavelet_features(frame: &[f64], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    Ok(band_statistics(&dwt(frame, cfg)?, cfg.eps))
}
