//! Minibatch Adam training, the frozen density model, and energy scoring.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gmm::{estimate_gmm, GmmDensity, GmmParameters};
use super::network::{ModelParameters, NetworkArchitecture};
use super::objective::{evaluate, latent_batch};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix, Standardization};
use crate::numcore::{Matrix, Rng, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Weight of the mean sample energy.
    pub lambda1: f64,
    /// Weight of the covariance-diagonal penalty.
    pub lambda2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: RngSeed,
    /// Initial covariance jitter; escalated ×10 up to 1e-2 when needed.
    pub jitter: f64,
    /// Percentile of training energies used as the anomaly threshold η.
    pub threshold_percentile: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 0.1,
            lambda2: 0.005,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 100,
            seed: RngSeed(0),
            jitter: 1e-6,
            threshold_percentile: 99.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Parameter(
                "lambda weights must be nonnegative".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.jitter > 0.0) {
            return Err(Error::Parameter(
                "learning rate and jitter must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if !(self.threshold_percentile > 0.0 && self.threshold_percentile <= 100.0) {
            return Err(Error::Parameter(format!(
                "threshold percentile {} outside (0, 100]",
                self.threshold_percentile
            )));
        }
        Ok(())
    }

    /// Same configuration with the density terms switched off: a plain
    /// autoencoder trained on reconstruction error only.
    pub fn reconstruction_only(&self) -> Self {
        TrainConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..*self
        }
    }
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (libm::sqrt(vh) + Self::EPS);
        }
    }
}

/// A trained detector: networks, the frozen mixture and the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub architecture: NetworkArchitecture,
    pub params: ModelParameters,
    /// Mixture estimated once over the whole training set after training;
    /// scoring never re-estimates it.
    pub gmm: GmmParameters,
    pub standardization: Standardization,
    /// Energy threshold η.
    pub threshold: f64,
    pub train_config: TrainConfig,
    pub feature_config: FeatureConfig,
    /// Objective over the training set before the first update.
    pub initial_loss: f64,
    /// Mean minibatch objective per epoch.
    pub loss_trace: Vec<f64>,
}

/// Stepwise trainer. On divergence the parameters are rolled back to the
/// last completed epoch, so [`Trainer::finish`] still yields a usable model.
pub struct Trainer {
    data: Matrix,
    feature_config: FeatureConfig,
    standardization: Standardization,
    arch: NetworkArchitecture,
    cfg: TrainConfig,
    params: ModelParameters,
    adam: Adam,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    batch_gmm: Option<GmmParameters>,
    checkpoint: (ModelParameters, Adam, Option<GmmParameters>),
    epoch: usize,
    initial_loss: f64,
    loss_trace: Vec<f64>,
}

impl Trainer {
    pub fn new(
        features: &FeatureMatrix,
        arch: &NetworkArchitecture,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        arch.validate()?;
        if features.dims() != arch.input_dim {
            return Err(Error::dim(
                "train features",
                arch.input_dim,
                features.dims(),
            ));
        }
        if features.rows() < cfg.batch_size {
            return Err(Error::Input(format!(
                "{} training rows is fewer than one batch of {}",
                features.rows(),
                cfg.batch_size
            )));
        }
        if !features.frames.is_finite() {
            return Err(Error::Input(
                "training features contain non-finite values".into(),
            ));
        }
        let params = ModelParameters::init(arch, cfg.seed.derive(0))?;
        let adam = Adam::new(params.param_count());
        let mut trainer = Trainer {
            data: features.frames.clone(),
            feature_config: features.config,
            standardization: features
                .standardization
                .clone()
                .unwrap_or_else(|| Standardization::identity(features.dims())),
            arch: arch.clone(),
            cfg: *cfg,
            checkpoint: (params.clone(), adam.clone(), None),
            params,
            adam,
            shuffle_rng: cfg.seed.derive(1).rng(),
            dropout_rng: cfg.seed.derive(2).rng(),
            batch_gmm: None,
            epoch: 0,
            initial_loss: 0.0,
            loss_trace: Vec::new(),
        };
        trainer.initial_loss = trainer.full_objective()?;
        Ok(trainer)
    }

    /// Mean objective over consecutive batches, dropout off, no updates.
    fn full_objective(&self) -> Result<f64> {
        let n = self.data.rows();
        let bs = self.cfg.batch_size;
        let batches = n / bs;
        let mut total = 0.0;
        for b in 0..batches {
            let idx: Vec<usize> = (b * bs..(b + 1) * bs).collect();
            let x = self.data.select_rows(&idx);
            total += evaluate(&x, &self.params, &self.arch, &self.cfg, None, None, false)?
                .terms
                .total;
        }
        Ok(total / batches as f64)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// One pass over shuffled minibatches; returns the mean batch objective.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let n = self.data.rows();
        let bs = self.cfg.batch_size;
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle_rng.shuffle(&mut order);
        let batches = n / bs;
        let mut total = 0.0;
        for b in 0..batches {
            let x = self.data.select_rows(&order[b * bs..(b + 1) * bs]);
            let step = evaluate(
                &x,
                &self.params,
                &self.arch,
                &self.cfg,
                Some(&mut self.dropout_rng),
                self.batch_gmm.as_ref(),
                true,
            );
            let ev = match step {
                Ok(ev) => ev,
                Err(Error::NonFiniteObjective { term }) => return Err(self.rollback(term)),
                Err(Error::Numeric(_)) => return Err(self.rollback("energy")),
                Err(e) => return Err(e),
            };
            let grad = ev.grad.expect("gradient requested").to_flat();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(self.rollback("gradient"));
            }
            let mut flat = self.params.to_flat();
            self.adam.step(&mut flat, &grad, self.cfg.learning_rate);
            self.params.set_flat(&flat)?;
            if ev.gmm.is_some() {
                self.batch_gmm = ev.gmm;
            }
            total += ev.terms.total;
        }
        let mean = total / batches as f64;
        self.epoch += 1;
        self.loss_trace.push(mean);
        self.checkpoint = (
            self.params.clone(),
            self.adam.clone(),
            self.batch_gmm.clone(),
        );
        Ok(mean)
    }

    fn rollback(&mut self, term: &'static str) -> Error {
        let (p, a, g) = self.checkpoint.clone();
        self.params = p;
        self.adam = a;
        self.batch_gmm = g;
        Error::Diverged {
            epoch: self.epoch + 1,
            term,
        }
    }

    /// Ends training without fitting the density model, for plain
    /// autoencoder use.
    pub fn into_params(self) -> ModelParameters {
        self.params
    }

    /// Freezes the mixture over the full training set and sets η.
    pub fn finish(self) -> Result<TrainedModel> {
        let z = latent_batch(&self.data, &self.params)?;
        let gamma = self.params.estimator.forward(&z, None)?;
        let gmm = estimate_gmm(&z, gamma.output(), self.batch_gmm.as_ref())?.params;
        let density = GmmDensity::new(&gmm, self.cfg.jitter)?;
        let energies = z
            .row_iter()
            .map(|zi| density.energy(zi))
            .collect::<Result<Vec<_>>>()?;
        let threshold = choose_threshold(&energies, self.cfg.threshold_percentile)?;
        Ok(TrainedModel {
            architecture: self.arch,
            params: self.params,
            gmm,
            standardization: self.standardization,
            threshold,
            train_config: self.cfg,
            feature_config: self.feature_config,
            initial_loss: self.initial_loss,
            loss_trace: self.loss_trace,
        })
    }
}

/// Trains for `cfg.epochs` epochs on standardized features.
pub fn train(
    features: &FeatureMatrix,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let mut trainer = Trainer::new(features, arch, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    trainer.finish()
}

impl TrainedModel {
    /// Brings raw features onto the model's scale; already-standardized
    /// features must carry the model's own statistics.
    pub fn prepare(&self, features: &FeatureMatrix) -> Result<Matrix> {
        if features.dims() != self.architecture.input_dim {
            return Err(Error::dim(
                "score features",
                self.architecture.input_dim,
                features.dims(),
            ));
        }
        match &features.standardization {
            None => self.standardization.apply(&features.frames),
            Some(s) if *s == self.standardization => Ok(features.frames.clone()),
            Some(_) => Err(Error::Input(
                "features were standardized with statistics other than the model's".into(),
            )),
        }
    }

    pub fn density(&self) -> Result<GmmDensity> {
        GmmDensity::new(&self.gmm, self.train_config.jitter)
    }
}

/// Per-row sample energy under the frozen mixture (dropout off).
pub fn score(model: &TrainedModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    let x = model.prepare(features)?;
    let density = model.density()?;
    let z = latent_batch(&x, &model.params)?;
    z.row_iter().map(|zi| density.energy(zi)).collect()
}

/// Linear-interpolated percentile of `energies`, `percentile ∈ (0, 100]`.
pub fn choose_threshold(energies: &[f64], percentile: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::Input("no energies to threshold".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Parameter(format!(
            "percentile {percentile} outside (0, 100]"
        )));
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = percentile / 100.0 * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
