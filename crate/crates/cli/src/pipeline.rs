//! Dataset assembly, tuning and the method comparison shared by the
//! commands.

use std::collections::BTreeMap;
use std::path::Path;

use dagmm_ho_core::dagmm::{score, train, NetworkArchitecture, TrainConfig, TrainedModel};
use dagmm_ho_core::eval::{
    da_baseline, evaluate_scores, gmm_em_baseline, split_segments, two_step_baseline,
    LabeledScores, MetricsReport, Reducer, Split,
};
use dagmm_ho_core::features::{log_mel, AudioClip, FeatureConfig, FeatureMatrix, Standardization};
use dagmm_ho_core::hpo::{select_c_with, select_k_with, Selection};
use dagmm_ho_core::numcore::{Matrix, RngSeed};
use dagmm_ho_core::synth::Fixture;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::manifest::{self, ManifestEntry};
use crate::wav::load_wav;

/// Audio clips and their labelled segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clips: BTreeMap<String, AudioClip>,
    pub segments: Vec<ManifestEntry>,
}

impl Dataset {
    /// Reads the manifest and every WAV file it names (relative to
    /// `data_dir`).
    pub fn load(data_dir: &Path, manifest_path: &Path) -> Result<Self> {
        let segments = manifest::read(manifest_path)?;
        if segments.is_empty() {
            return Err(CliError::Data(format!(
                "{}: manifest lists no segments",
                manifest_path.display()
            )));
        }
        let mut clips = BTreeMap::new();
        for s in &segments {
            if !clips.contains_key(&s.file) {
                let clip = load_wav(&data_dir.join(&s.file))?;
                clips.insert(s.file.clone(), clip);
            }
        }
        Ok(Dataset { clips, segments })
    }

    pub fn from_fixture(fx: &Fixture) -> Self {
        Dataset {
            clips: fx.clips.iter().cloned().collect(),
            segments: fixture_manifest(fx),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.segments.iter().map(|s| s.anomalous).collect()
    }

    /// Log-mel frames lying entirely inside each segment.
    pub fn segment_features(&self, cfg: &FeatureConfig) -> Result<Vec<Matrix>> {
        self.segments
            .iter()
            .map(|s| {
                let clip = &self.clips[&s.file];
                let sr = clip.sample_rate as f64;
                let a = (s.start * sr).round() as usize;
                let b = ((s.end * sr).round() as usize).min(clip.samples.len());
                if a >= b {
                    return Err(CliError::Data(format!(
                        "segment {}@{}-{} lies outside the audio",
                        s.file, s.start, s.end
                    )));
                }
                let sub = AudioClip::new(clip.samples[a..b].to_vec(), clip.sample_rate)?;
                let fm = log_mel(&sub, cfg)?;
                if fm.rows() == 0 {
                    return Err(CliError::Data(format!(
                        "segment {}@{}-{} is shorter than one frame",
                        s.file, s.start, s.end
                    )));
                }
                Ok(fm.frames)
            })
            .collect()
    }
}

pub fn fixture_manifest(fx: &Fixture) -> Vec<ManifestEntry> {
    fx.segments
        .iter()
        .map(|s| ManifestEntry {
            file: s.file.clone(),
            start: s.start,
            end: s.end,
            anomalous: s.anomalous,
            kind: s.kind.map(str::to_string),
        })
        .collect()
}

/// Rows of the chosen segments stacked in order, with the owning position
/// (index into `idx`) of every row.
pub fn stack(per_segment: &[Matrix], idx: &[usize]) -> Result<(Matrix, Vec<usize>)> {
    let parts: Vec<&Matrix> = idx.iter().map(|&i| &per_segment[i]).collect();
    let owner = idx
        .iter()
        .enumerate()
        .flat_map(|(pos, &i)| std::iter::repeat_n(pos, per_segment[i].rows()))
        .collect();
    Ok((Matrix::vstack(&parts)?, owner))
}

/// Up to `n` rows drawn without replacement, kept in original order.
pub fn subsample_rows(m: &Matrix, n: usize, seed: RngSeed) -> Matrix {
    if m.rows() <= n {
        return m.clone();
    }
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    seed.rng().shuffle(&mut idx);
    let mut keep = idx[..n].to_vec();
    keep.sort_unstable();
    m.select_rows(&keep)
}

/// Hyper-parameters for one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub k: Selection,
    pub k_std_err: Vec<f64>,
    pub c: Selection,
    pub components: usize,
    pub bottleneck: usize,
}

/// Runs both selectors on standardized training features; explicit
/// `model.components` / `model.bottleneck` settings win over the selection.
pub fn tune(train_std: &Matrix, cfg: &PipelineConfig) -> Result<Tuning> {
    let rows = subsample_rows(train_std, cfg.tune_rows, RngSeed(cfg.seed).derive(6));
    let (k, k_std_err) = select_k_with(&rows, &cfg.gap, &cfg.bending)?;
    let c = select_c_with(train_std, &cfg.bending)?;
    Ok(Tuning {
        components: cfg.components.unwrap_or(k.value),
        bottleneck: cfg.bottleneck.unwrap_or(c.value),
        k,
        k_std_err,
        c,
    })
}

/// Segment features of a dataset and its train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub per_segment: Vec<Matrix>,
    pub labels: Vec<bool>,
    pub split: Split,
}

pub fn prepare(dataset: &Dataset, features: &FeatureConfig, seed: RngSeed) -> Result<Prepared> {
    let per_segment = dataset.segment_features(features)?;
    let labels = dataset.labels();
    let split = split_segments(&labels, seed)?;
    Ok(Prepared {
        per_segment,
        labels,
        split,
    })
}

/// Standardizes with the matrix's own statistics, widened by `spread`.
pub fn standardize(features: &FeatureMatrix, spread: f64) -> Result<FeatureMatrix> {
    let stats = Standardization::fit(&features.frames)?.widened(spread)?;
    Ok(features.standardize_with(&stats)?)
}

/// Training features of a split, standardized with their own statistics.
pub fn training_features(
    per_segment: &[Matrix],
    split: &Split,
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix> {
    let (m, _) = stack(per_segment, &split.train)?;
    standardize(&FeatureMatrix::new(m, cfg.features), cfg.spread)
}

pub fn fit_model(
    features: &FeatureMatrix,
    components: usize,
    bottleneck: usize,
    cfg: &PipelineConfig,
) -> Result<TrainedModel> {
    let arch = NetworkArchitecture::standard(features.dims(), bottleneck, components)?;
    Ok(train(features, &arch, &cfg.train)?)
}

/// A model fitted on the training side of the split.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: TrainedModel,
    pub tuning: Tuning,
    pub features: FeatureMatrix,
}

/// Tunes (K, c) on the normal training segments and trains DAGMM-HO.
pub fn fit(prepared: &Prepared, cfg: &PipelineConfig) -> Result<Fitted> {
    let features = training_features(&prepared.per_segment, &prepared.split, cfg)?;
    let tuning = tune(&features.frames, cfg)?;
    let model = fit_model(&features, tuning.components, tuning.bottleneck, cfg)?;
    Ok(Fitted {
        model,
        tuning,
        features,
    })
}

pub const METHODS: [&str; 5] = ["DAGMM-HO", "DAE", "GMM", "PCA+GMM", "DAE+GMM"];

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: &'static str,
    pub report: MetricsReport,
    /// One score per test segment (mean over its frames).
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Selection details when the model was fitted here.
    pub tuning: Option<Tuning>,
    pub test_segments: Vec<usize>,
    pub labels: Vec<bool>,
    pub results: Vec<MethodResult>,
    /// DAGMM-HO energy threshold η from training.
    pub threshold: f64,
}

fn segment_means(frame_scores: &[f64], owner: &[usize], segments: usize) -> Vec<f64> {
    let mut sum = vec![0.0; segments];
    let mut count = vec![0usize; segments];
    for (&s, &o) in frame_scores.iter().zip(owner) {
        sum[o] += s;
        count[o] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Scores the test segments with DAGMM-HO and every baseline. Without a
/// model one is tuned and trained here; a supplied model must come from the
/// same split (same seed), and its (K, c) and standardization are reused by
/// the baselines.
pub fn compare(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    model: Option<&TrainedModel>,
) -> Result<Comparison> {
    let features_cfg = model.map_or(cfg.features, |m| m.feature_config);
    let prepared = prepare(dataset, &features_cfg, cfg.split_seed())?;
    let (model, tuning, train_fm) = match model {
        Some(m) => {
            let (raw, _) = stack(&prepared.per_segment, &prepared.split.train)?;
            let fm = FeatureMatrix::new(raw, features_cfg).standardize_with(&m.standardization)?;
            (m.clone(), None, fm)
        }
        None => {
            let f = fit(&prepared, cfg)?;
            (f.model, Some(f.tuning), f.features)
        }
    };
    let split = &prepared.split;
    let (test_raw, owner) = stack(&prepared.per_segment, &split.test)?;
    let test_fm =
        FeatureMatrix::new(test_raw, features_cfg).standardize_with(&model.standardization)?;

    let arch = model.architecture.clone();
    let (k, c) = (arch.components, arch.bottleneck);
    let seed = cfg.baseline_seed();
    let base_train = TrainConfig {
        seed: seed.derive(0),
        ..model.train_config
    };

    let n = split.test.len();
    let reducer = Reducer::Autoencoder {
        arch: arch.clone(),
        cfg: TrainConfig {
            seed: seed.derive(3),
            ..base_train
        },
    };
    let frame_scores: Vec<(&'static str, Vec<f64>)> = vec![
        (METHODS[0], score(&model, &test_fm)?),
        (
            METHODS[1],
            da_baseline(&train_fm, &test_fm, &arch, &base_train)?,
        ),
        (
            METHODS[2],
            gmm_em_baseline(&train_fm, &test_fm, k, seed.derive(1))?,
        ),
        (
            METHODS[3],
            two_step_baseline(&Reducer::Pca, &train_fm, &test_fm, c, k, seed.derive(2))?,
        ),
        (
            METHODS[4],
            two_step_baseline(&reducer, &train_fm, &test_fm, c, k, seed.derive(4))?,
        ),
    ];

    let labels: Vec<bool> = split.test.iter().map(|&i| prepared.labels[i]).collect();
    let mut results = Vec::new();
    for (method, fs) in frame_scores {
        let scores = segment_means(&fs, &owner, n);
        let report = evaluate_scores(&LabeledScores::new(scores.clone(), labels.clone())?)?;
        results.push(MethodResult {
            method,
            report,
            scores,
        });
    }
    Ok(Comparison {
        tuning,
        test_segments: split.test.clone(),
        labels,
        results,
        threshold: model.threshold,
    })
}
