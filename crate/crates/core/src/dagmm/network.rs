//! Fully connected networks with hand-written forward and backward passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    /// Row-wise softmax; only valid as the final estimation layer.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(outputs: usize, activation: Activation) -> Self {
        LayerSpec {
            outputs,
            activation,
        }
    }
}

/// Shapes of the compression (encoder/decoder) and estimation networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArchitecture {
    /// D, the feature width.
    pub input_dim: usize,
    /// c, the width of the latent code `z_c`.
    pub bottleneck: usize,
    /// K, the number of mixture components.
    pub components: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub estimator: Vec<LayerSpec>,
    /// Keep probability of the dropout after each hidden estimation layer.
    pub dropout_keep: f64,
}

impl NetworkArchitecture {
    /// Encoder `D-30-10-c` (tanh, tanh, linear), decoder `c-10-30-D` (tanh),
    /// estimator `(c+1)-10-K` with tanh, dropout (keep 0.5) and softmax.
    pub fn standard(input_dim: usize, bottleneck: usize, components: usize) -> Result<Self> {
        use Activation::*;
        let arch = NetworkArchitecture {
            input_dim,
            bottleneck,
            components,
            encoder: vec![
                LayerSpec::new(30, Tanh),
                LayerSpec::new(10, Tanh),
                LayerSpec::new(bottleneck, Linear),
            ],
            decoder: vec![
                LayerSpec::new(10, Tanh),
                LayerSpec::new(30, Tanh),
                LayerSpec::new(input_dim, Tanh),
            ],
            estimator: vec![
                LayerSpec::new(10, Tanh),
                LayerSpec::new(components, Softmax),
            ],
            dropout_keep: 0.5,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Width of `z = [z_c, z_r]`.
    pub fn latent_dim(&self) -> usize {
        self.bottleneck + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck == 0 || self.bottleneck >= self.input_dim {
            return Err(Error::Parameter(format!(
                "bottleneck c = {} must satisfy 1 <= c < D = {}",
                self.bottleneck, self.input_dim
            )));
        }
        if self.components == 0 {
            return Err(Error::Parameter(
                "need at least one mixture component".into(),
            ));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Parameter(format!(
                "dropout keep probability {} outside (0, 1]",
                self.dropout_keep
            )));
        }
        let check = |name: &str, layers: &[LayerSpec], out: usize, softmax_last: bool| {
            let Some(last) = layers.last() else {
                return Err(Error::Parameter(format!("{name} has no layers")));
            };
            if last.outputs != out {
                return Err(Error::Parameter(format!(
                    "{name} ends with {} outputs, expected {out}",
                    last.outputs
                )));
            }
            for (i, l) in layers.iter().enumerate() {
                let is_last = i + 1 == layers.len();
                if l.outputs == 0 {
                    return Err(Error::Parameter(format!("{name} layer {i} has no outputs")));
                }
                if (l.activation == Activation::Softmax) != (is_last && softmax_last) {
                    return Err(Error::Parameter(format!(
                        "{name} layer {i}: softmax is only allowed on the estimator output"
                    )));
                }
            }
            Ok(())
        };
        check("encoder", &self.encoder, self.bottleneck, false)?;
        check("decoder", &self.decoder, self.input_dim, false)?;
        check("estimator", &self.estimator, self.components, true)?;
        Ok(())
    }
}

/// One fully connected layer. `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let mut d = Dense::zeros(inputs, outputs, activation);
        d.weights
            .iter_mut()
            .for_each(|w| *w = rng.uniform_in(-limit, limit));
        d
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_row(&self, input: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *v = self.bias[o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
        }
        match self.activation {
            Activation::Linear => {}
            Activation::Tanh => out.iter_mut().for_each(|v| *v = libm::tanh(*v)),
            Activation::Softmax => softmax_in_place(out),
        }
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations recorded by a batch forward pass.
pub(crate) struct MlpTrace {
    /// `inputs[l]` is what layer `l` consumed (after any dropout).
    inputs: Vec<Matrix>,
    /// Activation output of each layer, before dropout.
    outputs: Vec<Matrix>,
    /// Inverted-dropout multipliers (0 or 1/keep) per hidden layer.
    masks: Vec<Option<Vec<f64>>>,
}

impl MlpTrace {
    pub(crate) fn output(&self) -> &Matrix {
        self.outputs.last().expect("non-empty network")
    }
}

impl Mlp {
    fn init(inputs: usize, specs: &[LayerSpec], rng: &mut Rng) -> Self {
        let mut width = inputs;
        let layers = specs
            .iter()
            .map(|s| {
                let d = Dense::glorot(width, s.outputs, s.activation, rng);
                width = s.outputs;
                d
            })
            .collect();
        Mlp { layers }
    }

    fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Forward pass for a single vector, no dropout.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("Mlp::forward", self.input_dim(), x.len()));
        }
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = vec![0.0; l.outputs];
            l.forward_row(&cur, &mut next);
            cur = next;
        }
        Ok(cur)
    }

    /// Batch forward pass. With `dropout = Some((rng, keep))` every hidden
    /// layer's output is masked (inverted dropout).
    pub(crate) fn forward(
        &self,
        x: &Matrix,
        mut dropout: Option<(&mut Rng, f64)>,
    ) -> Result<MlpTrace> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("Mlp::forward", self.input_dim(), x.cols()));
        }
        let n = x.rows();
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for (li, l) in self.layers.iter().enumerate() {
            let mut out = Matrix::zeros(n, l.outputs);
            for i in 0..n {
                l.forward_row(cur.row(i), out.row_mut(i));
            }
            let hidden = li + 1 < self.layers.len();
            let mask = match (&mut dropout, hidden) {
                (Some((rng, keep)), true) if *keep < 1.0 => {
                    let scale = 1.0 / *keep;
                    let m: Vec<f64> = (0..n * l.outputs)
                        .map(|_| if rng.uniform() < *keep { scale } else { 0.0 })
                        .collect();
                    Some(m)
                }
                _ => None,
            };
            let next = match &mask {
                Some(m) => {
                    let mut d = out.clone();
                    d.as_mut_slice()
                        .iter_mut()
                        .zip(m)
                        .for_each(|(v, s)| *v *= s);
                    d
                }
                None => out.clone(),
            };
            trace.inputs.push(cur);
            trace.outputs.push(out);
            trace.masks.push(mask);
            cur = next;
        }
        Ok(trace)
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the final output),
    /// accumulating parameter gradients into `grads`. Returns the gradient
    /// w.r.t. the network input.
    pub(crate) fn backward(&self, trace: &MlpTrace, grad_out: &Matrix, grads: &mut Mlp) -> Matrix {
        let mut g = grad_out.clone();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let gl = &mut grads.layers[li];
            let input = &trace.inputs[li];
            let output = &trace.outputs[li];
            let n = input.rows();
            if let Some(mask) = &trace.masks[li] {
                g.as_mut_slice()
                    .iter_mut()
                    .zip(mask)
                    .for_each(|(v, m)| *v *= m);
            }
            // gradient w.r.t. the pre-activation
            for i in 0..n {
                let y = output.row(i);
                let gi = g.row_mut(i);
                match l.activation {
                    Activation::Linear => {}
                    Activation::Tanh => gi.iter_mut().zip(y).for_each(|(v, y)| *v *= 1.0 - y * y),
                    Activation::Softmax => {
                        let s: f64 = gi.iter().zip(y).map(|(a, b)| a * b).sum();
                        gi.iter_mut().zip(y).for_each(|(v, y)| *v = y * (*v - s));
                    }
                }
            }
            let mut gin = Matrix::zeros(n, l.inputs);
            for i in 0..n {
                let gi = g.row(i);
                let xi = input.row(i);
                let gin_i = gin.row_mut(i);
                for (o, &go) in gi.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gl.bias[o] += go;
                    let w = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let gw = &mut gl.weights[o * l.inputs..(o + 1) * l.inputs];
                    for j in 0..l.inputs {
                        gw[j] += go * xi[j];
                        gin_i[j] += go * w[j];
                    }
                }
            }
            g = gin;
        }
        g
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }

    fn for_each_param(&self, mut f: impl FnMut(f64)) {
        for l in &self.layers {
            l.weights.iter().copied().for_each(&mut f);
            l.bias.iter().copied().for_each(&mut f);
        }
    }
}

/// Weights and biases of the encoder, decoder and estimation networks.
///
/// The flat layout used by the optimizer and the model file is: encoder,
/// decoder, estimator; within each, layer by layer, weights then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub estimator: Mlp,
}

impl ModelParameters {
    pub fn init(arch: &NetworkArchitecture, seed: RngSeed) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed.rng();
        let encoder = Mlp::init(arch.input_dim, &arch.encoder, &mut rng);
        let decoder = Mlp::init(arch.bottleneck, &arch.decoder, &mut rng);
        let estimator = Mlp::init(arch.latent_dim(), &arch.estimator, &mut rng);
        Ok(ModelParameters {
            encoder,
            decoder,
            estimator,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParameters {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            estimator: self.estimator.zeros_like(),
        }
    }

    /// Checks that layer shapes agree with `arch`.
    pub fn check_shapes(&self, arch: &NetworkArchitecture) -> Result<()> {
        let check = |net: &Mlp, inputs: usize, specs: &[LayerSpec]| -> Result<()> {
            if net.layers.len() != specs.len() {
                return Err(Error::dim("layer count", specs.len(), net.layers.len()));
            }
            let mut width = inputs;
            for (l, s) in net.layers.iter().zip(specs) {
                if l.inputs != width || l.outputs != s.outputs || l.activation != s.activation {
                    return Err(Error::dim("layer shape", s.outputs, l.outputs));
                }
                if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                    return Err(Error::dim(
                        "layer storage",
                        l.inputs * l.outputs,
                        l.weights.len(),
                    ));
                }
                width = s.outputs;
            }
            Ok(())
        };
        check(&self.encoder, arch.input_dim, &arch.encoder)?;
        check(&self.decoder, arch.bottleneck, &arch.decoder)?;
        check(&self.estimator, arch.latent_dim(), &arch.estimator)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count() + self.estimator.param_count()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for net in [&self.encoder, &self.decoder, &self.estimator] {
            net.for_each_param(|p| v.push(p));
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(
                "ModelParameters::set_flat",
                self.param_count(),
                flat.len(),
            ));
        }
        let mut it = flat.iter();
        for net in [&mut self.encoder, &mut self.decoder, &mut self.estimator] {
            net.for_each_param_mut(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        for net in [&self.encoder, &self.decoder, &self.estimator] {
            net.for_each_param(|p| ok &= p.is_finite());
        }
        ok
    }
}
