//! Pipeline configuration: one flat `key = value` file, every key optional.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! train.epochs = 200
//! model.components = auto
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dagmm_ho_core::dagmm::TrainConfig;
use dagmm_ho_core::features::FeatureConfig;
use dagmm_ho_core::hpo::{BendingConfig, GapConfig};
use dagmm_ho_core::numcore::RngSeed;
use dagmm_ho_core::synth::FixtureConfig;

use crate::error::{CliError, Result};

/// Environment variable that overrides `seed` from the file.
pub const SEED_ENV: &str = "DAGMM_HO_SEED";

/// Every configuration key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; every random stream derives from it"),
    ("features.frame_size", "STFT frame length in samples"),
    ("features.hop_size", "STFT hop in samples"),
    ("features.n_mels", "mel bands in the filterbank"),
    ("features.input_dim", "feature dimension D (bands kept)"),
    ("features.log_floor", "floor added before the logarithm"),
    (
        "features.spread",
        "standardized features are divided by this factor",
    ),
    (
        "model.components",
        "GMM components K, or auto (gap statistic)",
    ),
    (
        "model.bottleneck",
        "bottleneck width c, or auto (explained variance)",
    ),
    ("train.lambda1", "weight of the mean sample energy"),
    ("train.lambda2", "weight of the covariance-diagonal penalty"),
    ("train.learning_rate", "Adam step size"),
    ("train.batch_size", "mini-batch size"),
    ("train.epochs", "passes over the training data"),
    ("train.jitter", "initial covariance jitter"),
    (
        "train.threshold_percentile",
        "training-energy percentile used as threshold",
    ),
    ("hpo.k_min", "smallest K on the gap curve"),
    ("hpo.k_max", "largest K on the gap curve"),
    ("hpo.reference_draws", "uniform reference sets B"),
    (
        "hpo.min_rise_se",
        "gap rise (in standard errors) needed to accept a knee",
    ),
    ("hpo.kmeans_restarts", "k-means restarts per clustering"),
    (
        "hpo.smoothing",
        "3-point smoothing before the bending-point search",
    ),
    (
        "hpo.tune_rows",
        "training rows subsampled for the gap statistic",
    ),
    ("synth.fans", "number of synthetic fans"),
    ("synth.duration", "seconds of audio per fan"),
    ("synth.sample_rate", "sample rate in Hz"),
    ("synth.anomalies_per_fan", "anomalous segments per fan"),
    (
        "synth.segment",
        "segment length in seconds (also used by score)",
    ),
    ("synth.severity", "anomaly strength multiplier"),
    ("paths.data_dir", "directory holding the WAV files"),
    ("paths.manifest", "segment manifest"),
    ("paths.model", "model file"),
    ("paths.report_dir", "directory for reports"),
];

/// Key reference for `--help`: name, default and description.
pub fn key_help() -> String {
    let defaults = PipelineConfig::default().to_text();
    let mut s = String::from("Configuration keys (key = default):\n");
    for (line, (key, doc)) in defaults.lines().zip(KEYS) {
        debug_assert!(line.starts_with(key));
        let _ = writeln!(s, "  {line:<40} {doc}");
    }
    let _ = writeln!(s, "\n{SEED_ENV} overrides seed from the file.");
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub features: FeatureConfig,
    /// Standardized features have per-column deviation `1/spread`, keeping
    /// most values inside the decoder's tanh range.
    pub spread: f64,
    /// Fixed mixture size; `None` selects it with the gap statistic.
    pub components: Option<usize>,
    /// Fixed bottleneck width; `None` selects it from the variance curve.
    pub bottleneck: Option<usize>,
    pub train: TrainConfig,
    pub gap: GapConfig,
    pub bending: BendingConfig,
    /// Rows subsampled from the training features for the gap statistic.
    pub tune_rows: usize,
    pub synth: FixtureConfig,
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    pub model: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            features: FeatureConfig::default(),
            spread: 3.0,
            components: None,
            bottleneck: None,
            train: TrainConfig {
                lambda2: 1e-4,
                epochs: 200,
                ..TrainConfig::default()
            },
            gap: GapConfig::default(),
            bending: BendingConfig::default(),
            tune_rows: 1000,
            synth: FixtureConfig::default(),
            data_dir: PathBuf::from("data"),
            manifest: PathBuf::from("data/manifest.tsv"),
            model: PathBuf::from("model.dghm"),
            report_dir: PathBuf::from("reports"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |n| n.to_string())
}

impl PipelineConfig {
    /// Defaults overridden by `path` (if any) and then by [`SEED_ENV`].
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.set("seed", v.trim())?;
        }
        cfg.sync_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        cfg.sync_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "features.frame_size" => self.features.frame_size = parse(key, v)?,
            "features.hop_size" => self.features.hop_size = parse(key, v)?,
            "features.n_mels" => self.features.n_mels = parse(key, v)?,
            "features.input_dim" => self.features.input_dim = parse(key, v)?,
            "features.log_floor" => self.features.log_floor = parse(key, v)?,
            "features.spread" => self.spread = parse(key, v)?,
            "model.components" => self.components = parse_auto(key, v)?,
            "model.bottleneck" => self.bottleneck = parse_auto(key, v)?,
            "train.lambda1" => self.train.lambda1 = parse(key, v)?,
            "train.lambda2" => self.train.lambda2 = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.jitter" => self.train.jitter = parse(key, v)?,
            "train.threshold_percentile" => self.train.threshold_percentile = parse(key, v)?,
            "hpo.k_min" => self.gap.k_min = parse(key, v)?,
            "hpo.k_max" => self.gap.k_max = parse(key, v)?,
            "hpo.reference_draws" => self.gap.reference_draws = parse(key, v)?,
            "hpo.min_rise_se" => self.gap.min_rise_se = parse(key, v)?,
            "hpo.kmeans_restarts" => self.gap.kmeans.restarts = parse(key, v)?,
            "hpo.smoothing" => self.bending.smoothing = parse(key, v)?,
            "hpo.tune_rows" => self.tune_rows = parse(key, v)?,
            "synth.fans" => self.synth.fans = parse(key, v)?,
            "synth.duration" => self.synth.duration = parse(key, v)?,
            "synth.sample_rate" => self.synth.sample_rate = parse(key, v)?,
            "synth.anomalies_per_fan" => self.synth.anomalies_per_fan = parse(key, v)?,
            "synth.segment" => self.synth.segment = parse(key, v)?,
            "synth.severity" => self.synth.severity = parse(key, v)?,
            "paths.data_dir" => self.data_dir = PathBuf::from(v),
            "paths.manifest" => self.manifest = PathBuf::from(v),
            "paths.model" => self.model = PathBuf::from(v),
            "paths.report_dir" => self.report_dir = PathBuf::from(v),
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Propagates the top-level seed into the component configs.
    pub fn sync_seeds(&mut self) {
        let s = RngSeed(self.seed);
        self.train.seed = s.derive(1);
        self.gap.seed = s.derive(2);
        self.synth.seed = s.derive(3);
    }

    pub fn split_seed(&self) -> RngSeed {
        RngSeed(self.seed).derive(4)
    }

    pub fn baseline_seed(&self) -> RngSeed {
        RngSeed(self.seed).derive(5)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(CliError::Config(format!(
                "features.spread = {} must be positive",
                self.spread
            )));
        }
        self.gap.validate()?;
        if self.tune_rows < self.gap.k_max {
            return Err(CliError::Config(format!(
                "hpo.tune_rows = {} is below hpo.k_max = {}",
                self.tune_rows, self.gap.k_max
            )));
        }
        if self.components == Some(0) || self.bottleneck == Some(0) {
            return Err(CliError::Config(
                "model.components and model.bottleneck must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("features.frame_size", self.features.frame_size.to_string());
        kv("features.hop_size", self.features.hop_size.to_string());
        kv("features.n_mels", self.features.n_mels.to_string());
        kv("features.input_dim", self.features.input_dim.to_string());
        kv("features.log_floor", self.features.log_floor.to_string());
        kv("features.spread", self.spread.to_string());
        kv("model.components", auto(self.components));
        kv("model.bottleneck", auto(self.bottleneck));
        kv("train.lambda1", self.train.lambda1.to_string());
        kv("train.lambda2", self.train.lambda2.to_string());
        kv("train.learning_rate", self.train.learning_rate.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.jitter", self.train.jitter.to_string());
        kv(
            "train.threshold_percentile",
            self.train.threshold_percentile.to_string(),
        );
        kv("hpo.k_min", self.gap.k_min.to_string());
        kv("hpo.k_max", self.gap.k_max.to_string());
        kv("hpo.reference_draws", self.gap.reference_draws.to_string());
        kv("hpo.min_rise_se", self.gap.min_rise_se.to_string());
        kv("hpo.kmeans_restarts", self.gap.kmeans.restarts.to_string());
        kv("hpo.smoothing", self.bending.smoothing.to_string());
        kv("hpo.tune_rows", self.tune_rows.to_string());
        kv("synth.fans", self.synth.fans.to_string());
        kv("synth.duration", self.synth.duration.to_string());
        kv("synth.sample_rate", self.synth.sample_rate.to_string());
        kv(
            "synth.anomalies_per_fan",
            self.synth.anomalies_per_fan.to_string(),
        );
        kv("synth.segment", self.synth.segment.to_string());
        kv("synth.severity", self.synth.severity.to_string());
        kv("paths.data_dir", self.data_dir.display().to_string());
        kv("paths.manifest", self.manifest.display().to_string());
        kv("paths.model", self.model.display().to_string());
        kv("paths.report_dir", self.report_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = PipelineConfig::parse_text(
            "seed = 9\n# note\ntrain.epochs = 3   # inline\nmodel.components = 4\nhpo.smoothing = true\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.components, Some(4));
        assert!(cfg.bending.smoothing);
        assert_eq!(cfg.train.seed, RngSeed(9).derive(1));
        let again = PipelineConfig::parse_text(&cfg.to_text()).unwrap();
        cfg.sync_seeds();
        assert_eq!(again, cfg);
    }

    #[test]
    fn every_key_is_documented_in_order() {
        let text = PipelineConfig::default().to_text();
        let keys: Vec<&str> = text
            .lines()
            .map(|l| l.split(" = ").next().unwrap())
            .collect();
        let documented: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, documented);
        let mut cfg = PipelineConfig::default();
        for k in keys {
            assert!(cfg.set(k, "1").is_ok() || cfg.set(k, "true").is_ok(), "{k}");
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::parse_text("train.epoch = 3").is_err());
        assert!(PipelineConfig::parse_text("train.epochs = three").is_err());
        assert!(PipelineConfig::parse_text("features.spread = 0").is_err());
        assert!(PipelineConfig::parse_text("just words").is_err());
        assert!(PipelineConfig::parse_text("hpo.k_min = 5\nhpo.k_max = 5").is_err());
        assert!(PipelineConfig::parse_text("model.bottleneck = 0").is_err());
    }
}
