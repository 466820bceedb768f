//! Hyper-parameter selection: the number of mixture components from the gap
//! statistic, the bottleneck width from the PCA cumulative-variance curve,
//! and the bending-point detector both curves share.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::{kmeans_with, KMeansConfig, Matrix, Pca, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Gap,
    Variance,
}

/// Ordered `(x, y)` samples with strictly increasing `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub kind: CurveKind,
}

impl Curve {
    pub fn new(x: Vec<f64>, y: Vec<f64>, kind: CurveKind) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::dim("curve", x.len(), y.len()));
        }
        if x.len() < 3 {
            return Err(Error::Input(format!(
                "a curve needs at least 3 points, got {}",
                x.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("curve x must be strictly increasing".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Input("curve contains non-finite values".into()));
        }
        Ok(Curve { x, y, kind })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BendingConfig {
    /// Centered 3-point moving average of `y` before normalization (only for
    /// curves with at least five points). Off by default: it moves sharp
    /// knees one sample to the right.
    pub smoothing: bool,
}

/// Every intermediate of the detector, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct BendingPointResult {
    /// Selected abscissa in the curve's original units; `None` when no
    /// local maximum was confirmed.
    pub x_star: Option<f64>,
    pub x_norm: Vec<f64>,
    pub y_norm: Vec<f64>,
    /// `y_norm − x_norm`; the difference curve shares `x_norm` as abscissa.
    pub y_diff: Vec<f64>,
    /// Indices of strict local maxima of `y_diff`.
    pub maxima: Vec<usize>,
    /// One threshold per local maximum.
    pub thresholds: Vec<f64>,
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        v.iter().map(|a| (a - lo) / span).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn moving_average(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                y[i]
            } else {
                (y[i - 1] + y[i] + y[i + 1]) / 3.0
            }
        })
        .collect()
}

/// Knee detection on min-max-normalized coordinates.
///
/// A strict local maximum of `y_n − x_n` is confirmed when some later
/// difference value, before the next maximum, falls below the maximum minus
/// the mean normalized x-spacing. The first confirmed maximum wins.
pub fn bending_point(curve: &Curve) -> BendingPointResult {
    bending_point_with(curve, &BendingConfig::default())
}

pub fn bending_point_with(curve: &Curve, cfg: &BendingConfig) -> BendingPointResult {
    let m = curve.len();
    let y = if cfg.smoothing && m >= 5 {
        moving_average(&curve.y)
    } else {
        curve.y.clone()
    };
    let x_norm = min_max(&curve.x);
    let y_norm = min_max(&y);
    let y_diff: Vec<f64> = y_norm.iter().zip(&x_norm).map(|(a, b)| a - b).collect();
    let maxima: Vec<usize> = (1..m - 1)
        .filter(|&i| y_diff[i - 1] < y_diff[i] && y_diff[i + 1] < y_diff[i])
        .collect();
    let spacing = x_norm.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (m - 1) as f64;
    let thresholds: Vec<f64> = maxima.iter().map(|&i| y_diff[i] - spacing).collect();

    let x_star = maxima.iter().enumerate().find_map(|(j, &i)| {
        let end = maxima.get(j + 1).copied().unwrap_or(m);
        y_diff[i + 1..end]
            .iter()
            .any(|&v| v < thresholds[j])
            .then(|| curve.x[i])
    });
    BendingPointResult {
        x_star,
        x_norm,
        y_norm,
        y_diff,
        maxima,
        thresholds,
    }
}

/// Within-cluster dispersion `Σ_k (1/2n_k) Σ_{i,j∈C_k} ‖x_i − x_j‖²`,
/// evaluated through the identity
/// `Σ_{i,j∈C_k} ‖x_i − x_j‖² = 2 n_k Σ_{i∈C_k} ‖x_i − x̄_k‖²`.
pub fn dispersion(data: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    if labels.len() != data.rows() {
        return Err(Error::dim("dispersion labels", data.rows(), labels.len()));
    }
    let d = data.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in data.row_iter().zip(labels) {
        if l >= k {
            return Err(Error::Parameter(format!("label {l} outside [0, {k})")));
        }
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    Ok(data
        .row_iter()
        .zip(labels)
        .map(|(row, &l)| crate::numcore::squared_distance(row, &means[l]))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Number of uniform reference sets `B` averaged per `k`.
    pub reference_draws: usize,
    pub seed: RngSeed,
    pub kmeans: KMeansConfig,
    /// A bending point only counts if `G(x*) − G(k_min)` exceeds this many
    /// times the largest gap standard error; 0 disables the check. Min-max
    /// normalization otherwise turns pure simulation noise into knees.
    pub min_rise_se: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig {
            k_min: 1,
            k_max: 10,
            reference_draws: 10,
            seed: RngSeed(0),
            kmeans: KMeansConfig::default(),
            min_rise_se: 3.0,
        }
    }
}

impl GapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 1 || self.k_min >= self.k_max {
            return Err(Error::Parameter(format!(
                "need 1 <= k_min < k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if self.reference_draws == 0 {
            return Err(Error::Parameter("need at least one reference draw".into()));
        }
        if !(self.min_rise_se >= 0.0) {
            return Err(Error::Parameter("min_rise_se must be nonnegative".into()));
        }
        Ok(())
    }
}

const REFERENCE_TAG: u64 = 0x5245_4600;
const CLUSTER_TAG: u64 = 0x434c_5500;

/// Reference set `b`: uniform per dimension over the data's bounding box.
/// The same sets serve every `k`.
fn reference_set(data: &Matrix, b: usize, seed: RngSeed) -> Matrix {
    let d = data.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in data.row_iter() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut rng = seed.derive(REFERENCE_TAG).derive(b as u64).rng();
    let mut out = Matrix::zeros(data.rows(), d);
    for i in 0..data.rows() {
        for j in 0..d {
            out[(i, j)] = rng.uniform_in(lo[j], hi[j]);
        }
    }
    out
}

/// Clustering seed for set `set` (0 = data, `b + 1` = reference `b`) at `k`.
fn cluster_seed(seed: RngSeed, k: usize, set: usize) -> RngSeed {
    seed.derive(CLUSTER_TAG).derive(k as u64).derive(set as u64)
}

fn log_dispersion(data: &Matrix, k: usize, seed: RngSeed, cfg: &KMeansConfig) -> Result<f64> {
    let fit = kmeans_with(data, k, seed, cfg)?;
    let d = dispersion(data, &fit.assignment, k)?;
    Ok(libm::log(d))
}

/// Gap values over `k_min..=k_max` with their simulation spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCurve {
    pub curve: Curve,
    /// `sd_k · sqrt(1 + 1/B)` over the reference draws.
    pub std_err: Vec<f64>,
}

fn gap_at(data: &Matrix, refs: &[Matrix], k: usize, cfg: &GapConfig) -> Result<(f64, f64)> {
    let observed = log_dispersion(data, k, cluster_seed(cfg.seed, k, 0), &cfg.kmeans)?;
    if observed == f64::NEG_INFINITY {
        return Err(Error::DegenerateInput(
            "within-cluster dispersion of the data is zero",
        ));
    }
    let mut logs = Vec::with_capacity(refs.len());
    for (b, r) in refs.iter().enumerate() {
        logs.push(log_dispersion(
            r,
            k,
            cluster_seed(cfg.seed, k, b + 1),
            &cfg.kmeans,
        )?);
    }
    let bf = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / bf;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / bf;
    Ok((
        mean - observed,
        libm::sqrt(var) * libm::sqrt(1.0 + 1.0 / bf),
    ))
}

fn check_gap_input(data: &Matrix, k: usize) -> Result<()> {
    if data.rows() < k {
        return Err(Error::Input(format!(
            "gap statistic at k = {k} needs at least {k} rows, got {}",
            data.rows()
        )));
    }
    if !data.is_finite() {
        return Err(Error::Input("gap statistic input is not finite".into()));
    }
    Ok(())
}

/// `G_k = (1/B) Σ_b log D_r^(b)(k) − log D_o(k)`.
pub fn gap_statistic(data: &Matrix, k: usize, cfg: &GapConfig) -> Result<f64> {
    cfg.validate()?;
    if k < cfg.k_min || k > cfg.k_max {
        return Err(Error::Parameter(format!(
            "k = {k} outside [{}, {}]",
            cfg.k_min, cfg.k_max
        )));
    }
    check_gap_input(data, k)?;
    let refs: Vec<Matrix> = (0..cfg.reference_draws)
        .map(|b| reference_set(data, b, cfg.seed))
        .collect();
    Ok(gap_at(data, &refs, k, cfg)?.0)
}

pub fn gap_curve(data: &Matrix, cfg: &GapConfig) -> Result<GapCurve> {
    cfg.validate()?;
    check_gap_input(data, cfg.k_max)?;
    let refs: Vec<Matrix> = (0..cfg.reference_draws)
        .map(|b| reference_set(data, b, cfg.seed))
        .collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut std_err = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let (g, s) = gap_at(data, &refs, k, cfg)?;
        x.push(k as f64);
        y.push(g);
        std_err.push(s);
    }
    Ok(GapCurve {
        curve: Curve::new(x, y, CurveKind::Gap)?,
        std_err,
    })
}

/// A selected hyper-parameter and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub value: usize,
    /// True when no bending point was confirmed and the fallback applied.
    pub fallback: bool,
    pub curve: Curve,
    pub bending: BendingPointResult,
}

/// Nearest integer, ties up.
fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5).max(0.0) as usize
}

/// Number of mixture components: the bending point of the gap curve, or
/// `k_min` when the curve has none or its rise is within the noise.
pub fn select_k(data: &Matrix, cfg: &GapConfig) -> Result<Selection> {
    select_k_with(data, cfg, &BendingConfig::default()).map(|(s, _)| s)
}

/// Like [`select_k`], also returning the standard errors of the gap curve.
pub fn select_k_with(
    data: &Matrix,
    cfg: &GapConfig,
    bending_cfg: &BendingConfig,
) -> Result<(Selection, Vec<f64>)> {
    let gap = gap_curve(data, cfg)?;
    let bending = bending_point_with(&gap.curve, bending_cfg);
    let noise = gap.std_err.iter().copied().fold(0.0, f64::max);
    let significant = |x: f64| {
        let i = gap.curve.x.iter().position(|&v| v == x).unwrap_or(0);
        gap.curve.y[i] - gap.curve.y[0] > cfg.min_rise_se * noise
    };
    let (value, fallback) = match bending.x_star {
        Some(x) if significant(x) => (round_half_up(x).clamp(cfg.k_min, cfg.k_max), false),
        _ => (cfg.k_min, true),
    };
    Ok((
        Selection {
            value,
            fallback,
            curve: gap.curve,
            bending,
        },
        gap.std_err,
    ))
}

/// Cumulative explained-variance ratio of the principal components, by
/// descending variance, at `x = 1..=D`.
pub fn variance_ratio_curve(data: &Matrix) -> Result<Curve> {
    if data.rows() < 2 || data.cols() < 2 {
        return Err(Error::Input(format!(
            "variance ratio curve needs at least 2×2 data, got {}×{}",
            data.rows(),
            data.cols()
        )));
    }
    let pca = Pca::fit(data, 1)?;
    let total: f64 = pca.variances.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("data has zero total variance"));
    }
    let mut acc = 0.0;
    let mut y: Vec<f64> = pca
        .variances
        .iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect();
    if let Some(last) = y.last_mut() {
        *last = 1.0;
    }
    let x = (1..=y.len()).map(|i| i as f64).collect();
    Curve::new(x, y, CurveKind::Variance)
}

/// Cumulative-variance level used when the curve has no bending point.
pub const FALLBACK_VARIANCE: f64 = 0.95;

/// Bottleneck width: the bending point of the variance-ratio curve, clamped
/// to `[1, D − 1]`; otherwise the fewest components explaining 95%.
pub fn select_c(data: &Matrix) -> Result<Selection> {
    select_c_with(data, &BendingConfig::default())
}

pub fn select_c_with(data: &Matrix, bending_cfg: &BendingConfig) -> Result<Selection> {
    let curve = variance_ratio_curve(data)?;
    let bending = bending_point_with(&curve, bending_cfg);
    let upper = data.cols() - 1;
    let (value, fallback) = match bending.x_star {
        Some(x) => (round_half_up(x).clamp(1, upper), false),
        None => {
            let first = curve
                .y
                .iter()
                .position(|&v| v >= FALLBACK_VARIANCE - 1e-12)
                .map_or(upper, |i| i + 1);
            (first.clamp(1, upper), true)
        }
    };
    Ok(Selection {
        value,
        fallback,
        curve,
        bending,
    })
}

#[cfg(test)]
mod tests;
