//! The five operator commands. Each writes its primary output only after
//! all work has succeeded, and always through an atomic rename.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dagmm_ho_core::dagmm::score;
use dagmm_ho_core::features::{log_mel, AudioClip, FeatureMatrix};
use dagmm_ho_core::synth::default_fixture;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::formats::{read_features, read_model, write_features, write_model, ModelFile};
use crate::manifest;
use crate::persist::write_text;
use crate::pipeline::{
    compare, fit_model, prepare, standardize, training_features, tune, Dataset, Tuning,
};
use crate::report::{
    comparison_text, comparison_tsv, scores_tsv, tuning_text, tuning_tsv, SegmentScore, TableRow,
};
use crate::wav::{load_wav, save_wav};

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const TUNING_REPORT: &str = "tuning.txt";
pub const TUNING_CURVES: &str = "tuning.tsv";
pub const COMPARISON_REPORT: &str = "comparison.txt";
pub const COMPARISON_TABLE: &str = "comparison.tsv";

/// Writes the synthetic fixture (one WAV per fan plus the manifest) into
/// `out_dir` and returns the manifest path.
pub fn cmd_synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<PathBuf> {
    let fx = default_fixture(&cfg.synth)?;
    for (name, clip) in &fx.clips {
        save_wav(&out_dir.join(name), clip)?;
    }
    let path = out_dir.join(MANIFEST_NAME);
    manifest::write(&path, &crate::pipeline::fixture_manifest(&fx))?;
    Ok(path)
}

fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    Dataset::load(&cfg.data_dir, &cfg.manifest)
}

/// Normal training features: either a feature cache or the training side
/// of the split of the configured dataset.
fn tuning_features(cfg: &PipelineConfig, cache: Option<&Path>) -> Result<FeatureMatrix> {
    match cache {
        Some(p) => {
            let fm = read_features(p)?;
            if fm.standardization.is_some() {
                Ok(fm)
            } else {
                standardize(&fm, cfg.spread)
            }
        }
        None => {
            let prepared = prepare(&load_dataset(cfg)?, &cfg.features, cfg.split_seed())?;
            training_features(&prepared.per_segment, &prepared.split, cfg)
        }
    }
}

/// Selects (K, c) and writes the text report and the curve table into
/// `report_dir`.
pub fn cmd_tune(cfg: &PipelineConfig, cache: Option<&Path>, report_dir: &Path) -> Result<Tuning> {
    let fm = tuning_features(cfg, cache)?;
    let tuning = tune(&fm.frames, cfg)?;
    write_text(&report_dir.join(TUNING_CURVES), &tuning_tsv(&tuning))?;
    write_text(&report_dir.join(TUNING_REPORT), &tuning_text(&tuning))?;
    Ok(tuning)
}

/// Feature cache written next to a model file.
pub fn feature_cache_path(model: &Path) -> PathBuf {
    model.with_extension("dghf")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub components: usize,
    pub bottleneck: usize,
    pub initial_loss: f64,
    pub final_loss: Option<f64>,
    pub epochs: usize,
    pub threshold: f64,
}

impl TrainSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "K = {}, c = {}, {} epochs\ninitial J = {}\n",
            self.components, self.bottleneck, self.epochs, self.initial_loss
        );
        if let Some(f) = self.final_loss {
            let _ = writeln!(s, "final J   = {f}");
        }
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "model written to {}", self.model_path.display());
        s
    }
}

/// Trains on the normal training segments of the split. (K, c) come from
/// the configuration when set and are tuned otherwise. The standardized
/// training features are cached beside the model.
pub fn cmd_train(cfg: &PipelineConfig, model_path: &Path) -> Result<TrainSummary> {
    let prepared = prepare(&load_dataset(cfg)?, &cfg.features, cfg.split_seed())?;
    let features = training_features(&prepared.per_segment, &prepared.split, cfg)?;
    let (k, c) = match (cfg.components, cfg.bottleneck) {
        (Some(k), Some(c)) => (k, c),
        _ => {
            let t = tune(&features.frames, cfg)?;
            (t.components, t.bottleneck)
        }
    };
    let model = fit_model(&features, k, c, cfg)?;
    let summary = TrainSummary {
        model_path: model_path.to_path_buf(),
        components: model.architecture.components,
        bottleneck: model.architecture.bottleneck,
        initial_loss: model.initial_loss,
        final_loss: model.loss_trace.last().copied(),
        epochs: model.loss_trace.len(),
        threshold: model.threshold,
    };
    write_features(&feature_cache_path(model_path), &features)?;
    write_model(
        model_path,
        &ModelFile {
            model,
            config_text: cfg.to_text(),
        },
    )?;
    Ok(summary)
}

/// Scores each audio file in consecutive segments of `synth.segment`
/// seconds; a trailing remainder is scored if it holds at least one frame.
pub fn cmd_score(
    cfg: &PipelineConfig,
    model_path: &Path,
    audio: &[PathBuf],
) -> Result<Vec<SegmentScore>> {
    let model = read_model(model_path)?.model;
    let fcfg = model.feature_config;
    let mut rows = Vec::new();
    for path in audio {
        let clip = load_wav(path)?;
        let sr = clip.sample_rate as f64;
        let seg = (cfg.synth.segment * sr).round() as usize;
        if seg < fcfg.frame_size {
            return Err(CliError::Config(format!(
                "synth.segment = {} s is shorter than one frame",
                cfg.synth.segment
            )));
        }
        let name = path.display().to_string();
        let starts = (0..clip.samples.len())
            .step_by(seg)
            .take_while(|s| s + fcfg.frame_size <= clip.samples.len());
        for (segment, start) in starts.enumerate() {
            let end = (start + seg).min(clip.samples.len());
            let sub = AudioClip::new(clip.samples[start..end].to_vec(), clip.sample_rate)?;
            let energies = score(&model, &log_mel(&sub, &fcfg)?)?;
            let mean = energies.iter().sum::<f64>() / energies.len() as f64;
            let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rows.push(SegmentScore {
                file: name.clone(),
                segment,
                start: start as f64 / sr,
                end: end as f64 / sr,
                mean_energy: mean,
                max_energy: max,
                flagged: mean > model.threshold,
            });
        }
    }
    Ok(rows)
}

pub fn write_scores(path: &Path, rows: &[SegmentScore]) -> Result<()> {
    write_text(path, &scores_tsv(rows))
}

/// Runs the method comparison on the configured dataset and writes the
/// table. With a model file, DAGMM-HO is that model (trained by `train` on
/// the same split); without one it is tuned and trained here.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    model_path: Option<&Path>,
    report_dir: &Path,
) -> Result<Vec<TableRow>> {
    let model = model_path.map(read_model).transpose()?.map(|m| m.model);
    let cmp = compare(&load_dataset(cfg)?, cfg, model.as_ref())?;
    let rows: Vec<TableRow> = cmp.results.iter().map(TableRow::from).collect();
    if let Some(t) = &cmp.tuning {
        write_text(&report_dir.join(TUNING_CURVES), &tuning_tsv(t))?;
        write_text(&report_dir.join(TUNING_REPORT), &tuning_text(t))?;
    }
    write_text(&report_dir.join(COMPARISON_TABLE), &comparison_tsv(&rows))?;
    write_text(&report_dir.join(COMPARISON_REPORT), &comparison_text(&rows))?;
    Ok(rows)
}
