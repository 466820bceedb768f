//! Log-mel feature extraction: Hann-windowed STFT power frames, a triangular
//! mel filterbank and per-dimension standardization fitted on training data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub frame_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    /// Model input width D; the lowest `input_dim` mel bands are kept.
    pub input_dim: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_size: 1024,
            hop_size: 512,
            n_mels: 64,
            input_dim: 64,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() || self.frame_size < 2 {
            return Err(Error::Parameter(format!(
                "frame size {} is not a power of two",
                self.frame_size
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.frame_size {
            return Err(Error::Parameter(format!(
                "hop size {} must be in 1..={}",
                self.hop_size, self.frame_size
            )));
        }
        if self.n_mels == 0 || self.input_dim == 0 || self.input_dim > self.n_mels {
            return Err(Error::Parameter(format!(
                "need 1 <= input_dim ({}) <= n_mels ({})",
                self.input_dim, self.n_mels
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Parameter("log floor must be positive".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Number of whole frames in a clip of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_size {
            0
        } else {
            (len - self.frame_size) / self.hop_size + 1
        }
    }
}

/// Per-column z-scoring statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const MIN_VARIANCE: f64 = 1e-12;

impl Standardization {
    pub fn fit(data: &Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Input("cannot standardize an empty matrix".into()));
        }
        let mean = data.column_means();
        let mut var = vec![0.0; data.cols()];
        for r in data.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let n = data.rows() as f64;
        let std = var
            .into_iter()
            .map(|v| libm::sqrt((v / n).max(MIN_VARIANCE)))
            .collect();
        Ok(Standardization { mean, std })
    }

    /// Widens every divisor by `factor`: data standardized with the result
    /// has per-column standard deviation `1/factor`.
    pub fn widened(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Parameter(format!("spread {factor} is not positive")));
        }
        for s in &mut self.std {
            *s *= factor;
        }
        Ok(self)
    }

    pub fn identity(dims: usize) -> Self {
        Standardization {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols() != self.dims() {
            return Err(Error::dim(
                "Standardization::apply",
                self.dims(),
                data.cols(),
            ));
        }
        let mut out = data.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Per-frame feature vectors, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Matrix,
    pub config: FeatureConfig,
    /// Set once the rows have been z-scored with these statistics.
    pub standardization: Option<Standardization>,
}

impl FeatureMatrix {
    pub fn new(frames: Matrix, config: FeatureConfig) -> Self {
        FeatureMatrix {
            frames,
            config,
            standardization: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.frames.rows()
    }

    pub fn dims(&self) -> usize {
        self.frames.cols()
    }

    /// Fits statistics on these rows and applies them.
    pub fn standardize(&self) -> Result<FeatureMatrix> {
        let stats = Standardization::fit(&self.frames)?;
        self.standardize_with(&stats)
    }

    /// Applies previously fitted (training) statistics.
    pub fn standardize_with(&self, stats: &Standardization) -> Result<FeatureMatrix> {
        if self.standardization.is_some() {
            return Err(Error::Input("features are already standardized".into()));
        }
        Ok(FeatureMatrix {
            frames: stats.apply(&self.frames)?,
            config: self.config,
            standardization: Some(stats.clone()),
        })
    }
}

/// Radix-2 complex FFT plan for one power-of-two size.
struct FftPlan {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let half = n / 2;
        let cos = (0..half)
            .map(|k| libm::cos(-2.0 * PI * k as f64 / n as f64))
            .collect();
        let sin = (0..half)
            .map(|k| libm::sin(-2.0 * PI * k as f64 / n as f64))
            .collect();
        FftPlan {
            n,
            cos,
            sin,
            bitrev,
        }
    }

    /// In-place forward transform `X_k = Σ x_t e^{-2πi kt/n}`.
    fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.cos[k * stride], self.sin[k * stride]);
                    let a = start + k;
                    let b = a + len / 2;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

/// Power spectrum `|FFT(hann · frame)|²` of every whole frame, one row per
/// frame and `frame_size/2 + 1` columns. A trailing partial frame is dropped.
pub fn stft_power(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Matrix> {
    cfg.validate()?;
    if clip.samples.len() < cfg.frame_size {
        return Err(Error::Input(format!(
            "clip has {} samples, fewer than one frame of {}",
            clip.samples.len(),
            cfg.frame_size
        )));
    }
    let n = cfg.frame_size;
    let frames = cfg.frame_count(clip.samples.len());
    let window = hann_window(n);
    let plan = FftPlan::new(n);
    let mut out = Matrix::zeros(frames, cfg.bins());
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for t in 0..frames {
        let start = t * cfg.hop_size;
        for (i, (r, w)) in re.iter_mut().zip(&window).enumerate() {
            *r = clip.samples[start + i] * w;
        }
        im.iter_mut().for_each(|v| *v = 0.0);
        plan.forward(&mut re, &mut im);
        for (k, p) in out.row_mut(t).iter_mut().enumerate() {
            *p = re[k] * re[k] + im[k] * im[k];
        }
    }
    Ok(out)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// The `n_mels + 2` filter edge frequencies, equally spaced on the mel scale
/// from 0 Hz to Nyquist. Filter `m` peaks at edge `m + 1`.
pub fn mel_edge_frequencies(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, `n_mels × (frame_size/2 + 1)`, peak weight 1.
///
/// A filter too narrow to cover any FFT bin gets weight 1 on the bin closest
/// to its center so every filter has positive mass.
pub fn mel_filterbank(cfg: &FeatureConfig, sample_rate: u32) -> Result<Matrix> {
    cfg.validate()?;
    if sample_rate == 0 {
        return Err(Error::Input("sample rate must be positive".into()));
    }
    let bins = cfg.bins();
    let bin_hz = sample_rate as f64 / cfg.frame_size as f64;
    let edges = mel_edge_frequencies(cfg.n_mels, sample_rate);
    let mut fb = Matrix::zeros(cfg.n_mels, bins);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = fb.row_mut(m);
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            *w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
        }
        if row.iter().all(|w| *w == 0.0) {
            let nearest = libm::round(center / bin_hz) as usize;
            row[nearest.min(bins - 1)] = 1.0;
        }
    }
    Ok(fb)
}

/// Unstandardized log-mel features: `log(max(fb · power, floor))` per frame,
/// keeping the lowest `input_dim` bands.
pub fn log_mel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let power = stft_power(clip, cfg)?;
    let fb = mel_filterbank(cfg, clip.sample_rate)?;
    let mut out = Matrix::zeros(power.rows(), cfg.input_dim);
    for t in 0..power.rows() {
        let frame = power.row(t);
        for (m, v) in out.row_mut(t).iter_mut().enumerate() {
            let e: f64 = fb.row(m).iter().zip(frame).map(|(w, p)| w * p).sum();
            *v = libm::log(e.max(cfg.log_floor));
        }
    }
    Ok(FeatureMatrix::new(out, *cfg))
}
