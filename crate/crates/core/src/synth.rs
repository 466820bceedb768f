//! Deterministic synthetic fan audio and test fixtures.
//!
//! A fan is a harmonic series plus low-passed broadband noise under a slow
//! amplitude modulation. Anomalies are short perturbations of a clip: an
//! added tone, an amplitude drop, a noise burst, or a pitch shift.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::AudioClip;
use crate::numcore::{Matrix, RngSeed};

#[derive(Debug, Clone, PartialEq)]
pub struct FanProfile {
    /// Blade-pass fundamental in Hz.
    pub fundamental: f64,
    /// Absolute amplitude of harmonic `i + 1`.
    pub harmonics: Vec<f64>,
    /// Peak amplitude of the broadband noise.
    pub noise_level: f64,
    /// Cutoff of the one-pole low-pass shaping the noise, in Hz.
    pub noise_cutoff: f64,
    /// Amplitude-modulation rate in Hz.
    pub am_rate: f64,
    /// Modulation depth in `[0, 1)`.
    pub am_depth: f64,
}

impl FanProfile {
    /// Worst-case absolute sample value.
    pub fn peak_bound(&self) -> f64 {
        let tonal: f64 = self.harmonics.iter().map(|a| a.abs()).sum();
        (tonal + self.noise_level) * (1.0 + self.am_depth)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist_quarter = sample_rate as f64 / 4.0;
        if !(self.fundamental > 20.0 && self.fundamental < nyquist_quarter) {
            return Err(Error::Parameter(format!(
                "fundamental {} Hz outside (20, {nyquist_quarter})",
                self.fundamental
            )));
        }
        if self.harmonics.is_empty() {
            return Err(Error::Parameter(
                "fan profile needs at least one harmonic".into(),
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_cutoff > 0.0) {
            return Err(Error::Parameter(
                "noise level and cutoff out of range".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.am_depth) || !(self.am_rate >= 0.0) {
            return Err(Error::Parameter(
                "modulation depth must be in [0, 1)".into(),
            ));
        }
        if !(self.peak_bound() < 1.0) {
            return Err(Error::Parameter(format!(
                "profile can reach {:.3}, which clips",
                self.peak_bound()
            )));
        }
        Ok(())
    }
}

/// `count` mutually distinct profiles, each with headroom for anomalies.
pub fn default_profiles(count: usize) -> Vec<FanProfile> {
    (0..count)
        .map(|i| {
            let f = i as f64;
            let fundamental = 90.0 * libm::pow(1.45, f);
            let rolloff = 0.55 + 0.07 * (i % 3) as f64;
            let harmonics: Vec<f64> = (0..6)
                .map(|h| 0.18 * libm::pow(rolloff, h as f64))
                .collect();
            FanProfile {
                fundamental,
                harmonics,
                noise_level: 0.03 + 0.015 * (i % 4) as f64,
                noise_cutoff: 1500.0 + 700.0 * (i % 5) as f64,
                am_rate: 0.2 + 0.1 * f,
                am_depth: 0.4,
            }
        })
        .collect()
}

/// Renders `duration` seconds of a fan.
pub fn generate_fan(
    profile: &FanProfile,
    duration: f64,
    sample_rate: u32,
    seed: RngSeed,
) -> Result<AudioClip> {
    if !(duration >= 1.0) {
        return Err(Error::Parameter(format!(
            "duration {duration} s is below 1 s"
        )));
    }
    profile.validate(sample_rate)?;
    let sr = sample_rate as f64;
    let n = libm::round(duration * sr) as usize;
    let mut rng = seed.rng();
    let phases: Vec<f64> = profile
        .harmonics
        .iter()
        .map(|_| rng.uniform_in(0.0, 2.0 * PI))
        .collect();
    let am_phase = rng.uniform_in(0.0, 2.0 * PI);
    let alpha = libm::exp(-2.0 * PI * profile.noise_cutoff / sr);
    let mut lp = 0.0;
    let mut samples = Vec::with_capacity(n);
    for t in 0..n {
        let time = t as f64 / sr;
        let mut s = 0.0;
        for (h, (&a, &p)) in profile.harmonics.iter().zip(&phases).enumerate() {
            s += a * libm::sin(2.0 * PI * profile.fundamental * (h + 1) as f64 * time + p);
        }
        lp = alpha * lp + (1.0 - alpha) * rng.uniform_in(-1.0, 1.0);
        s += profile.noise_level * lp;
        let am = 1.0 + profile.am_depth * libm::sin(2.0 * PI * profile.am_rate * time + am_phase);
        samples.push(s * am);
    }
    AudioClip::new(samples, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnomalyKind {
    /// Sinusoid of amplitude `0.25·severity` at `frequency` Hz.
    AddedTone { frequency: f64 },
    /// Signal scaled by `1 − 0.9·severity`.
    AmplitudeDrop,
    /// White noise of peak `0.2·severity` added.
    NoiseBurst,
    /// Time axis stretched by `1 + 0.05·severity`, raising every partial.
    HarmonicShift,
}

impl AnomalyKind {
    pub fn name(&self) -> &'static str {
        match self {
            AnomalyKind::AddedTone { .. } => "tone",
            AnomalyKind::AmplitudeDrop => "drop",
            AnomalyKind::NoiseBurst => "burst",
            AnomalyKind::HarmonicShift => "shift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Start of the perturbed window, seconds.
    pub onset: f64,
    pub duration: f64,
    /// In `(0, 1]`.
    pub severity: f64,
}

/// Sample range `[start, end)` of a window in seconds.
fn window(clip: &AudioClip, onset: f64, duration: f64) -> (usize, usize) {
    let sr = clip.sample_rate as f64;
    let start = libm::round(onset * sr) as usize;
    let end = (libm::round((onset + duration) * sr) as usize).min(clip.samples.len());
    (start, end)
}

/// Applies one anomaly. Samples outside `[onset, onset + duration)` are
/// copied unchanged; perturbed samples saturate at ±1.
pub fn inject_anomaly(clip: &AudioClip, spec: &AnomalySpec, seed: RngSeed) -> Result<AudioClip> {
    let len = clip.duration_seconds();
    if !(spec.onset >= 0.0 && spec.duration > 0.0 && spec.onset + spec.duration <= len + 1e-9) {
        return Err(Error::Parameter(format!(
            "anomaly window [{}, {}) outside a {len} s clip",
            spec.onset,
            spec.onset + spec.duration
        )));
    }
    if !(spec.severity > 0.0 && spec.severity <= 1.0) {
        return Err(Error::Parameter(format!(
            "severity {} outside (0, 1]",
            spec.severity
        )));
    }
    let sr = clip.sample_rate as f64;
    let (start, end) = window(clip, spec.onset, spec.duration);
    let mut out = clip.samples.clone();
    let sev = spec.severity;
    let mut rng = seed.rng();
    match spec.kind {
        AnomalyKind::AddedTone { frequency } => {
            if !(frequency > 0.0 && frequency < sr / 2.0) {
                return Err(Error::Parameter(format!(
                    "tone at {frequency} Hz is above Nyquist"
                )));
            }
            for (t, v) in out[start..end].iter_mut().enumerate() {
                *v += 0.25 * sev * libm::sin(2.0 * PI * frequency * t as f64 / sr);
            }
        }
        AnomalyKind::AmplitudeDrop => {
            out[start..end]
                .iter_mut()
                .for_each(|v| *v *= 1.0 - 0.9 * sev);
        }
        AnomalyKind::NoiseBurst => {
            for v in &mut out[start..end] {
                *v += 0.2 * sev * rng.uniform_in(-1.0, 1.0);
            }
        }
        AnomalyKind::HarmonicShift => {
            let rate = 1.0 + 0.05 * sev;
            let last = clip.samples.len() - 1;
            for (t, v) in out[start..end].iter_mut().enumerate() {
                let pos = start as f64 + t as f64 * rate;
                let i = (libm::floor(pos) as usize).min(last);
                let frac = pos - i as f64;
                let j = (i + 1).min(last);
                *v = clip.samples[i] * (1.0 - frac) + clip.samples[j] * frac;
            }
        }
    }
    out[start..end]
        .iter_mut()
        .for_each(|v| *v = v.clamp(-1.0, 1.0));
    AudioClip::new(out, clip.sample_rate)
}

/// One labelled stretch of a fixture recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub file: String,
    pub start: f64,
    pub end: f64,
    pub anomalous: bool,
    /// Anomaly kind name, `None` for normal segments.
    pub kind: Option<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub fans: usize,
    pub duration: f64,
    pub sample_rate: u32,
    pub anomalies_per_fan: usize,
    /// Length of every segment, anomalous or not.
    pub segment: f64,
    pub severity: f64,
    pub seed: RngSeed,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            fans: 6,
            duration: 60.0,
            sample_rate: 16_000,
            anomalies_per_fan: 10,
            segment: 1.0,
            severity: 0.5,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    /// `(file name, audio)` per fan.
    pub clips: Vec<(String, AudioClip)>,
    pub segments: Vec<Segment>,
}

/// Fans from [`default_profiles`], each with anomalies in distinct
/// segment-aligned windows, kinds cycling through all four.
pub fn default_fixture(cfg: &FixtureConfig) -> Result<Fixture> {
    if !(cfg.segment > 0.0) {
        return Err(Error::Parameter("segment length must be positive".into()));
    }
    let slots = libm::floor(cfg.duration / cfg.segment + 1e-9) as usize;
    if cfg.anomalies_per_fan > slots {
        return Err(Error::Parameter(format!(
            "{} anomalies do not fit in {slots} segments",
            cfg.anomalies_per_fan
        )));
    }
    let profiles = default_profiles(cfg.fans);
    let mut clips = Vec::with_capacity(cfg.fans);
    let mut segments = Vec::with_capacity(cfg.fans * slots);
    for (f, profile) in profiles.iter().enumerate() {
        let seed = cfg.seed.derive(f as u64);
        let mut clip = generate_fan(profile, cfg.duration, cfg.sample_rate, seed.derive(0))?;
        let mut rng = seed.derive(1).rng();
        let mut order: Vec<usize> = (0..slots).collect();
        rng.shuffle(&mut order);
        let mut kinds: Vec<Option<&'static str>> = vec![None; slots];
        for (a, &slot) in order[..cfg.anomalies_per_fan].iter().enumerate() {
            let kind = match (a + f) % 4 {
                0 => AnomalyKind::AddedTone {
                    frequency: rng.uniform_in(1000.0, 4000.0),
                },
                1 => AnomalyKind::AmplitudeDrop,
                2 => AnomalyKind::NoiseBurst,
                _ => AnomalyKind::HarmonicShift,
            };
            let spec = AnomalySpec {
                kind,
                onset: slot as f64 * cfg.segment,
                duration: cfg.segment,
                severity: cfg.severity,
            };
            clip = inject_anomaly(&clip, &spec, seed.derive(2 + a as u64))?;
            kinds[slot] = Some(kind.name());
        }
        let name = format!("fan{f:02}.wav");
        for (slot, kind) in kinds.into_iter().enumerate() {
            segments.push(Segment {
                file: name.clone(),
                start: slot as f64 * cfg.segment,
                end: (slot + 1) as f64 * cfg.segment,
                anomalous: kind.is_some(),
                kind,
            });
        }
        clips.push((name, clip));
    }
    Ok(Fixture { clips, segments })
}

/// `k` isotropic Gaussian blobs (σ = 1, `per` points each) in `dims`
/// dimensions with centers at least `separation` apart.
pub fn blobs(k: usize, per: usize, dims: usize, separation: f64, seed: RngSeed) -> Matrix {
    let mut rng = seed.rng();
    let side = separation * (2.0 + k as f64);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    while centers.len() < k {
        let c: Vec<f64> = (0..dims).map(|_| rng.uniform_in(0.0, side)).collect();
        let clear = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            libm::sqrt(d2) >= separation
        });
        if clear {
            centers.push(c);
        }
    }
    let mut m = Matrix::zeros(k * per, dims);
    for (b, c) in centers.iter().enumerate() {
        for i in 0..per {
            for (j, &cj) in c.iter().enumerate() {
                m[(b * per + i, j)] = cj + rng.normal();
            }
        }
    }
    m
}

/// `n` points of a rank-`rank` Gaussian signal mapped into `ambient`
/// dimensions by a random linear map, plus isotropic noise of std `noise`.
pub fn low_rank_embedding(
    n: usize,
    ambient: usize,
    rank: usize,
    noise: f64,
    seed: RngSeed,
) -> Matrix {
    let mut rng = seed.rng();
    let map: Vec<f64> = (0..ambient * rank).map(|_| rng.normal()).collect();
    let mut m = Matrix::zeros(n, ambient);
    let mut latent = vec![0.0; rank];
    for i in 0..n {
        latent.iter_mut().for_each(|v| *v = rng.normal());
        for j in 0..ambient {
            let signal: f64 = (0..rank).map(|r| map[j * rank + r] * latent[r]).sum();
            m[(i, j)] = signal + noise * rng.normal();
        }
    }
    m
}
