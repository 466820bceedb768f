//! Metrics, the evaluation split, and the baseline detectors DAGMM is
//! compared against: a plain autoencoder scored by reconstruction error, a
//! diagonal-covariance GMM, and two-step reduce-then-GMM pipelines.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dagmm::{
    encode_batch, reconstruction_errors, ModelParameters, NetworkArchitecture, TrainConfig, Trainer,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::numcore::{kmeans_with, log_sum_exp, KMeansConfig, Matrix, Pca, RngSeed};

/// Scores (higher = more anomalous) with ground truth (true = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::dim("labeled scores", scores.len(), labels.len()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Input("scores contain NaN".into()));
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Rank-sum (Mann–Whitney) AUC; tied scores share their average rank, so a
/// tied anomaly/normal pair counts one half.
pub fn auc(s: &LabeledScores) -> Result<f64> {
    let (pos, neg) = (s.positives(), s.negatives());
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs both anomalous and normal samples"));
    }
    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if s.labels[idx] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Confusion counts and derived rates at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn classification_from_counts(
    threshold: f64,
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
) -> Classification {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Classification {
        threshold,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision,
        recall,
        f1,
    }
}

/// A sample is flagged when its score is strictly above `threshold`.
pub fn classification_metrics(s: &LabeledScores, threshold: f64) -> Classification {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&score, &label) in s.scores.iter().zip(&s.labels) {
        match (score > threshold, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    classification_from_counts(threshold, tp, fp, tn, fn_)
}

/// The threshold maximizing F1. Candidates sit halfway between consecutive
/// distinct scores, plus one below the minimum; the lowest F1-optimal
/// threshold wins.
pub fn best_f1(s: &LabeledScores) -> Result<Classification> {
    if s.scores.is_empty() {
        return Err(Error::Metric("no scores to threshold"));
    }
    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]));
    let pos = s.positives();
    let neg = s.negatives();
    let mut best = classification_metrics(s, f64::INFINITY);
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let v = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == v {
            if s.labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&next) => 0.5 * (v + s.scores[next]),
            None => v - 1.0_f64.max(v.abs()),
        };
        let c = classification_from_counts(threshold, tp, fp, neg - fp, pos - tp);
        if c.f1 >= best.f1 {
            best = c;
        }
    }
    Ok(best)
}

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub classification: Classification,
}

/// AUC plus classification at the best-F1 threshold.
pub fn evaluate_scores(s: &LabeledScores) -> Result<MetricsReport> {
    Ok(MetricsReport {
        auc: auc(s)?,
        classification: best_f1(s)?,
    })
}

/// Row indices of the evaluation protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Every anomalous item plus as many randomly chosen normal items form the
/// test set; the remaining normal items train.
pub fn split_segments(anomalous: &[bool], seed: RngSeed) -> Result<Split> {
    let anomalies: Vec<usize> = (0..anomalous.len()).filter(|&i| anomalous[i]).collect();
    let mut normals: Vec<usize> = (0..anomalous.len()).filter(|&i| !anomalous[i]).collect();
    if anomalies.is_empty() {
        return Err(Error::Input("no anomalous segments to evaluate".into()));
    }
    if normals.len() <= anomalies.len() {
        return Err(Error::Input(format!(
            "{} normal segments cannot supply {} test segments and a training set",
            normals.len(),
            anomalies.len()
        )));
    }
    seed.rng().shuffle(&mut normals);
    let mut test = anomalies;
    test.extend_from_slice(&normals[..test.len()]);
    test.sort_unstable();
    let mut train = normals[test.len() / 2..].to_vec();
    train.sort_unstable();
    Ok(Split { train, test })
}

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const EM_TOLERANCE: f64 = 1e-7;
pub const EM_MAX_ITERATIONS: usize = 500;

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: DiagonalGmm,
    /// Mean per-sample log-likelihood at the start of every iteration and
    /// after the last update.
    pub log_likelihood: Vec<f64>,
    /// Components re-seeded at the farthest point after losing all mass.
    pub reinitialized: usize,
}

impl DiagonalGmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn log_terms(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.components() {
            let mut q = 0.0;
            let mut log_det = 0.0;
            for ((v, m), s) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
                q += (v - m) * (v - m) / s;
                log_det += libm::log(2.0 * PI * s);
            }
            out[k] = libm::log(self.weights[k]) - 0.5 * (q + log_det);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut t = vec![0.0; self.components()];
        self.log_terms(x, &mut t);
        log_sum_exp(&t)
    }

    /// Negative log-likelihood per row.
    pub fn score(&self, data: &Matrix) -> Result<Vec<f64>> {
        if data.cols() != self.means[0].len() {
            return Err(Error::dim("GMM input", self.means[0].len(), data.cols()));
        }
        Ok(data.row_iter().map(|r| -self.log_density(r)).collect())
    }

    /// EM from a k-means start. Stops once the mean log-likelihood gains
    /// less than 1e-7 or after 500 iterations.
    pub fn fit(data: &Matrix, k: usize, seed: RngSeed) -> Result<EmFit> {
        let (n, d) = (data.rows(), data.cols());
        if k == 0 || n < k {
            return Err(Error::Parameter(format!("GMM with K = {k} on {n} rows")));
        }
        if !data.is_finite() {
            return Err(Error::Input("GMM input is not finite".into()));
        }
        let km = kmeans_with(
            data,
            k,
            seed,
            &KMeansConfig {
                restarts: 3,
                ..KMeansConfig::default()
            },
        )?;
        let mut resp = Matrix::zeros(n, k);
        for (i, &a) in km.assignment.iter().enumerate() {
            resp[(i, a)] = 1.0;
        }
        let mut model = DiagonalGmm {
            weights: vec![1.0 / k as f64; k],
            means: vec![vec![0.0; d]; k],
            variances: vec![vec![1.0; d]; k],
        };
        let mut reinitialized = 0;
        reinitialized += m_step(data, &resp, &mut model);
        let mut trace = Vec::new();
        let mut terms = vec![0.0; k];
        for _ in 0..EM_MAX_ITERATIONS {
            let mut total = 0.0;
            for (i, x) in data.row_iter().enumerate() {
                model.log_terms(x, &mut terms);
                let lse = log_sum_exp(&terms);
                total += lse;
                for c in 0..k {
                    resp[(i, c)] = libm::exp(terms[c] - lse);
                }
            }
            let ll = total / n as f64;
            if !ll.is_finite() {
                return Err(Error::Numeric("EM log-likelihood is not finite".into()));
            }
            let done = trace
                .last()
                .is_some_and(|&prev: &f64| ll - prev < EM_TOLERANCE);
            trace.push(ll);
            if done {
                break;
            }
            reinitialized += m_step(data, &resp, &mut model);
        }
        Ok(EmFit {
            model,
            log_likelihood: trace,
            reinitialized,
        })
    }
}

/// Maximizes the expected complete-data log-likelihood with every variance
/// floored. Returns how many empty components were re-seeded.
fn m_step(data: &Matrix, resp: &Matrix, model: &mut DiagonalGmm) -> usize {
    let (n, d, k) = (data.rows(), data.cols(), resp.cols());
    let mut reseeded = 0;
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp[(i, c)]).sum();
        if nk < 1e-10 {
            let far = farthest_point(data, model);
            model.means[c] = data.row(far).to_vec();
            model.variances[c] = vec![1.0; d];
            model.weights[c] = 1.0 / n as f64;
            reseeded += 1;
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in data.row_iter().enumerate() {
            let r = resp[(i, c)];
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (i, x) in data.row_iter().enumerate() {
            let r = resp[(i, c)];
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        var.iter_mut()
            .for_each(|s| *s = (*s / nk).max(VARIANCE_FLOOR));
        model.means[c] = mean;
        model.variances[c] = var;
        model.weights[c] = nk / n as f64;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    reseeded
}

fn farthest_point(data: &Matrix, model: &DiagonalGmm) -> usize {
    (0..data.rows())
        .max_by(|&a, &b| {
            (-model.log_density(data.row(a))).total_cmp(&-model.log_density(data.row(b)))
        })
        .unwrap_or(0)
}

fn check_pair(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<()> {
    if train.dims() != test.dims() {
        return Err(Error::dim(
            "baseline test features",
            train.dims(),
            test.dims(),
        ));
    }
    Ok(())
}

/// Trains the autoencoder alone (both density weights zeroed).
pub fn train_autoencoder(
    train: &FeatureMatrix,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
) -> Result<ModelParameters> {
    let cfg = cfg.reconstruction_only();
    let mut trainer = Trainer::new(train, arch, &cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_params())
}

/// Deep-autoencoder baseline: squared reconstruction error.
pub fn da_baseline(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    check_pair(train, test)?;
    let params = train_autoencoder(train, arch, cfg)?;
    reconstruction_errors(&test.frames, &params)
}

/// Diagonal GMM on the full feature space: negative log-likelihood.
pub fn gmm_em_baseline(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    k: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    check_pair(train, test)?;
    DiagonalGmm::fit(&train.frames, k, seed)?
        .model
        .score(&test.frames)
}

/// Dimensionality reduction stage of a two-step baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    Pca,
    /// Autoencoder trained on reconstruction only; the bottleneck code is
    /// the reduced representation.
    Autoencoder {
        arch: NetworkArchitecture,
        cfg: TrainConfig,
    },
}

/// Reduce to `c` dimensions (fitted on train only), then a `k`-component
/// diagonal GMM in the reduced space.
pub fn two_step_baseline(
    reducer: &Reducer,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    c: usize,
    k: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    check_pair(train, test)?;
    if c == 0 || c >= train.dims() {
        return Err(Error::Parameter(format!(
            "reduced dimension {c} outside [1, {})",
            train.dims()
        )));
    }
    let (z_train, z_test) = match reducer {
        Reducer::Pca => {
            let pca = Pca::fit(&train.frames, c)?;
            (pca.transform(&train.frames)?, pca.transform(&test.frames)?)
        }
        Reducer::Autoencoder { arch, cfg } => {
            if arch.bottleneck != c {
                return Err(Error::Parameter(format!(
                    "autoencoder bottleneck {} differs from c = {c}",
                    arch.bottleneck
                )));
            }
            let params = train_autoencoder(train, arch, cfg)?;
            (
                encode_batch(&train.frames, &params)?,
                encode_batch(&test.frames, &params)?,
            )
        }
    };
    DiagonalGmm::fit(&z_train, k, seed)?.model.score(&z_test)
}
