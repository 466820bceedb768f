//! Binary file formats, all little-endian.
//!
//! Feature cache (`DGHF`):
//!
//! ```text
//! "DGHF" u32 version  u32 rows  u32 cols
//! f64[rows·cols]      row-major frames
//! u8  standardized    0 or 1
//! f64[cols] mean, f64[cols] std   (only when standardized)
//! u32 frame_size u32 hop_size u32 n_mels u32 input_dim f64 log_floor
//! ```
//!
//! Model (`DGHM`): magic, version, architecture, parameters in flat layout
//! order, frozen mixture, standardization, threshold, training record, the
//! train and feature configuration, and the full pipeline config as text.

use std::path::Path;

use dagmm_ho_core::dagmm::{
    Activation, GmmParameters, LayerSpec, ModelParameters, NetworkArchitecture, TrainConfig,
    TrainedModel,
};
use dagmm_ho_core::features::{FeatureConfig, FeatureMatrix, Standardization};
use dagmm_ho_core::numcore::{Matrix, RngSeed};

use crate::error::{CliError, Result};
use crate::persist::{write_bytes, Decoder, Encoder};

pub const FEATURE_MAGIC: &[u8; 4] = b"DGHF";
pub const MODEL_MAGIC: &[u8; 4] = b"DGHM";
pub const VERSION: u32 = 1;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| CliError::Data(format!("{what} {v} does not fit the file format")))
}

fn put_feature_config(e: &mut Encoder, c: &FeatureConfig) -> Result<()> {
    e.u32(u32_of(c.frame_size, "frame size")?);
    e.u32(u32_of(c.hop_size, "hop size")?);
    e.u32(u32_of(c.n_mels, "mel count")?);
    e.u32(u32_of(c.input_dim, "input dimension")?);
    e.f64(c.log_floor);
    Ok(())
}

fn get_feature_config(d: &mut Decoder) -> Result<FeatureConfig> {
    Ok(FeatureConfig {
        frame_size: d.u32()? as usize,
        hop_size: d.u32()? as usize,
        n_mels: d.u32()? as usize,
        input_dim: d.u32()? as usize,
        log_floor: d.f64()?,
    })
}

fn check_magic(d: &mut Decoder, magic: &[u8; 4]) -> Result<()> {
    if d.take(4)? != magic {
        return Err(d.fail("wrong magic number"));
    }
    let v = d.u32()?;
    if v != VERSION {
        return Err(d.fail(&format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn encode_features(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut e = Encoder::default();
    e.bytes(FEATURE_MAGIC);
    e.u32(VERSION);
    e.u32(u32_of(fm.rows(), "row count")?);
    e.u32(u32_of(fm.dims(), "column count")?);
    e.f64s(fm.frames.as_slice());
    match &fm.standardization {
        Some(s) => {
            e.u8(1);
            e.f64s(&s.mean);
            e.f64s(&s.std);
        }
        None => e.u8(0),
    }
    put_feature_config(&mut e, &fm.config)?;
    Ok(e.buf)
}

pub fn decode_features(bytes: &[u8], origin: &str) -> Result<FeatureMatrix> {
    let mut d = Decoder::new(bytes, origin);
    check_magic(&mut d, FEATURE_MAGIC)?;
    let rows = d.u32()? as usize;
    let cols = d.u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| d.fail("implausible shape"))?;
    let frames = Matrix::from_vec(rows, cols, d.f64s(n)?)?;
    let standardization = match d.u8()? {
        0 => None,
        1 => Some(Standardization {
            mean: d.f64s(cols)?,
            std: d.f64s(cols)?,
        }),
        _ => return Err(d.fail("bad standardization flag")),
    };
    let config = get_feature_config(&mut d)?;
    d.finish()?;
    let mut fm = FeatureMatrix::new(frames, config);
    fm.standardization = standardization;
    Ok(fm)
}

pub fn write_features(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    write_bytes(path, &encode_features(fm)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_features(&bytes, &path.display().to_string())
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Tanh => 1,
        Activation::Softmax => 2,
    }
}

fn put_layers(e: &mut Encoder, layers: &[LayerSpec]) -> Result<()> {
    e.u32(u32_of(layers.len(), "layer count")?);
    for l in layers {
        e.u32(u32_of(l.outputs, "layer width")?);
        e.u8(activation_code(l.activation));
    }
    Ok(())
}

fn get_layers(d: &mut Decoder) -> Result<Vec<LayerSpec>> {
    let n = d.u32()? as usize;
    if n > 1024 {
        return Err(d.fail("implausible layer count"));
    }
    (0..n)
        .map(|_| {
            let outputs = d.u32()? as usize;
            let activation = match d.u8()? {
                0 => Activation::Linear,
                1 => Activation::Tanh,
                2 => Activation::Softmax,
                _ => return Err(d.fail("unknown activation")),
            };
            Ok(LayerSpec::new(outputs, activation))
        })
        .collect()
}

/// A trained model together with the pipeline configuration that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub config_text: String,
}

pub fn encode_model(m: &ModelFile) -> Result<Vec<u8>> {
    let model = &m.model;
    let a = &model.architecture;
    let mut e = Encoder::default();
    e.bytes(MODEL_MAGIC);
    e.u32(VERSION);

    e.u32(u32_of(a.input_dim, "input dimension")?);
    e.u32(u32_of(a.bottleneck, "bottleneck")?);
    e.u32(u32_of(a.components, "component count")?);
    e.f64(a.dropout_keep);
    put_layers(&mut e, &a.encoder)?;
    put_layers(&mut e, &a.decoder)?;
    put_layers(&mut e, &a.estimator)?;

    let flat = model.params.to_flat();
    e.usize(flat.len());
    e.f64s(&flat);

    let g = &model.gmm;
    e.u32(u32_of(g.components(), "component count")?);
    e.u32(u32_of(g.dim(), "latent dimension")?);
    e.f64s(&g.phi);
    g.mu.iter().for_each(|m| e.f64s(m));
    g.sigma.iter().for_each(|s| e.f64s(s.as_slice()));

    e.u32(u32_of(
        model.standardization.dims(),
        "standardization width",
    )?);
    e.f64s(&model.standardization.mean);
    e.f64s(&model.standardization.std);

    e.f64(model.threshold);
    e.f64(model.initial_loss);
    e.usize(model.loss_trace.len());
    e.f64s(&model.loss_trace);

    let t = &model.train_config;
    e.f64(t.lambda1);
    e.f64(t.lambda2);
    e.f64(t.learning_rate);
    e.usize(t.batch_size);
    e.usize(t.epochs);
    e.u64(t.seed.0);
    e.f64(t.jitter);
    e.f64(t.threshold_percentile);
    put_feature_config(&mut e, &model.feature_config)?;

    e.str(&m.config_text);
    Ok(e.buf)
}

pub fn decode_model(bytes: &[u8], origin: &str) -> Result<ModelFile> {
    let mut d = Decoder::new(bytes, origin);
    check_magic(&mut d, MODEL_MAGIC)?;
    let architecture = NetworkArchitecture {
        input_dim: d.u32()? as usize,
        bottleneck: d.u32()? as usize,
        components: d.u32()? as usize,
        dropout_keep: d.f64()?,
        encoder: get_layers(&mut d)?,
        decoder: get_layers(&mut d)?,
        estimator: get_layers(&mut d)?,
    };
    architecture
        .validate()
        .map_err(|e| d.fail(&format!("invalid architecture ({e})")))?;
    let mut params = ModelParameters::init(&architecture, RngSeed(0))?;
    let n = d.usize()?;
    if n != params.param_count() {
        return Err(d.fail("parameter count does not match the architecture"));
    }
    params.set_flat(&d.f64s(n)?)?;

    let k = d.u32()? as usize;
    let dim = d.u32()? as usize;
    if k != architecture.components || dim != architecture.latent_dim() {
        return Err(d.fail("mixture shape does not match the architecture"));
    }
    let phi = d.f64s(k)?;
    let mu = (0..k).map(|_| d.f64s(dim)).collect::<Result<Vec<_>>>()?;
    let sigma = (0..k)
        .map(|_| Ok(Matrix::from_vec(dim, dim, d.f64s(dim * dim)?)?))
        .collect::<Result<Vec<_>>>()?;
    let gmm = GmmParameters { phi, mu, sigma };

    let sd = d.u32()? as usize;
    if sd != architecture.input_dim {
        return Err(d.fail("standardization width does not match the input"));
    }
    let standardization = Standardization {
        mean: d.f64s(sd)?,
        std: d.f64s(sd)?,
    };
    let threshold = d.f64()?;
    let initial_loss = d.f64()?;
    let trace_len = d.usize()?;
    let loss_trace = d.f64s(trace_len)?;
    let train_config = TrainConfig {
        lambda1: d.f64()?,
        lambda2: d.f64()?,
        learning_rate: d.f64()?,
        batch_size: d.usize()?,
        epochs: d.usize()?,
        seed: RngSeed(d.u64()?),
        jitter: d.f64()?,
        threshold_percentile: d.f64()?,
    };
    let feature_config = get_feature_config(&mut d)?;
    let config_text = d.str()?;
    d.finish()?;
    Ok(ModelFile {
        model: TrainedModel {
            architecture,
            params,
            gmm,
            standardization,
            threshold,
            train_config,
            feature_config,
            initial_loss,
            loss_trace,
        },
        config_text,
    })
}

pub fn write_model(path: &Path, m: &ModelFile) -> Result<()> {
    write_bytes(path, &encode_model(m)?)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}
