//! Compression and estimation forward passes, the joint objective
//! `J = mean‖x − x′‖² + λ₁·mean E(z) + λ₂·P(Σ)`, and its analytic gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::gmm::{estimate_gmm, GmmDensity, GmmParameters};
use super::network::{ModelParameters, NetworkArchitecture};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::{log_sum_exp, Matrix, Rng};

/// Added to `‖x‖` in the relative reconstruction error.
pub const RECON_EPS: f64 = 1e-12;

/// Code `z_c = f(x)`; the last encoder layer is linear.
pub fn encode(x: &[f64], params: &ModelParameters) -> Result<Vec<f64>> {
    params.encoder.forward_vec(x)
}

/// Reconstruction `x′ = g(z_c)`.
pub fn decode(z_c: &[f64], params: &ModelParameters) -> Result<Vec<f64>> {
    params.decoder.forward_vec(z_c)
}

/// Relative Euclidean reconstruction error `‖x − x′‖ / (‖x‖ + ε)`.
pub fn recon_feature(x: &[f64], x_prime: &[f64]) -> f64 {
    let err: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = x.iter().map(|a| a * a).sum();
    libm::sqrt(err) / (libm::sqrt(norm) + RECON_EPS)
}

/// Latent vector `z = [z_c, z_r]` of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub code: Vec<f64>,
    pub recon_error: f64,
}

impl LatentVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = self.code.clone();
        z.push(self.recon_error);
        z
    }
}

pub fn latent(x: &[f64], params: &ModelParameters) -> Result<LatentVector> {
    let code = encode(x, params)?;
    let x_prime = decode(&code, params)?;
    Ok(LatentVector {
        recon_error: recon_feature(x, &x_prime),
        code,
    })
}

/// Soft memberships `γ = softmax(MLN(z))`. Passing an `rng` enables
/// training-mode dropout.
pub fn membership(
    z: &[f64],
    params: &ModelParameters,
    arch: &NetworkArchitecture,
    train_rng: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    match train_rng {
        None => params.estimator.forward_vec(z),
        Some(rng) => {
            let m = Matrix::from_vec(1, z.len(), z.to_vec())?;
            let trace = params
                .estimator
                .forward(&m, Some((rng, arch.dropout_keep)))?;
            Ok(trace.output().row(0).to_vec())
        }
    }
}

/// The three objective terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// Mean squared reconstruction error.
    pub reconstruction: f64,
    /// Mean sample energy.
    pub energy: f64,
    /// `P(Σ) = Σ_k Σ_j 1/Σ̃_k[j,j]`.
    pub penalty: f64,
    pub total: f64,
}

/// Latent vectors of a batch, one row `[z_c, z_r]` per sample.
pub fn latent_batch(x: &Matrix, params: &ModelParameters) -> Result<Matrix> {
    let enc = params.encoder.forward(x, None)?;
    let code = enc.output();
    let dec = params.decoder.forward(code, None)?;
    let recon = dec.output();
    let c = code.cols();
    let mut z = Matrix::zeros(x.rows(), c + 1);
    for i in 0..x.rows() {
        let row = z.row_mut(i);
        row[..c].copy_from_slice(code.row(i));
        row[c] = recon_feature(x.row(i), recon.row(i));
    }
    Ok(z)
}

/// Bottleneck codes `z_c` of a batch.
pub fn encode_batch(x: &Matrix, params: &ModelParameters) -> Result<Matrix> {
    Ok(params.encoder.forward(x, None)?.output().clone())
}

/// Per-row squared reconstruction error `‖x − x′‖²`.
pub fn reconstruction_errors(x: &Matrix, params: &ModelParameters) -> Result<Vec<f64>> {
    let enc = params.encoder.forward(x, None)?;
    let dec = params.decoder.forward(enc.output(), None)?;
    Ok(x.row_iter()
        .zip(dec.output().row_iter())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
        .collect())
}

pub(crate) struct Evaluation {
    pub terms: ObjectiveTerms,
    pub gmm: Option<GmmParameters>,
    pub grad: Option<ModelParameters>,
}

/// `J` on a batch with dropout disabled and the mixture estimated from the
/// batch itself.
pub fn objective(
    x: &Matrix,
    params: &ModelParameters,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
) -> Result<ObjectiveTerms> {
    Ok(evaluate(x, params, arch, cfg, None, None, false)?.terms)
}

/// `J` and its analytic gradient (dropout disabled).
pub fn objective_gradient(
    x: &Matrix,
    params: &ModelParameters,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
) -> Result<(ObjectiveTerms, ModelParameters)> {
    let ev = evaluate(x, params, arch, cfg, None, None, true)?;
    Ok((ev.terms, ev.grad.expect("gradient requested")))
}

fn check_term(value: f64, term: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteObjective { term })
    }
}

pub(crate) fn evaluate(
    x: &Matrix,
    params: &ModelParameters,
    arch: &NetworkArchitecture,
    cfg: &TrainConfig,
    dropout: Option<&mut Rng>,
    previous: Option<&GmmParameters>,
    with_grad: bool,
) -> Result<Evaluation> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::Input("objective needs a nonempty batch".into()));
    }
    if x.cols() != arch.input_dim {
        return Err(Error::dim("objective input", arch.input_dim, x.cols()));
    }
    let nf = n as f64;
    let c = arch.bottleneck;
    let d = c + 1;

    let enc = params.encoder.forward(x, None)?;
    let code = enc.output();
    let dec = params.decoder.forward(code, None)?;
    let recon = dec.output();

    let residual = x.sub(recon)?;
    let mut err_norm = vec![0.0; n];
    let mut x_norm = vec![0.0; n];
    let mut sq_total = 0.0;
    for i in 0..n {
        let sq: f64 = residual.row(i).iter().map(|v| v * v).sum();
        sq_total += sq;
        err_norm[i] = libm::sqrt(sq);
        x_norm[i] = libm::sqrt(x.row(i).iter().map(|v| v * v).sum::<f64>());
    }
    let reconstruction = check_term(sq_total / nf, "reconstruction")?;

    let uses_density = cfg.lambda1 != 0.0 || cfg.lambda2 != 0.0;
    if !uses_density {
        let terms = ObjectiveTerms {
            reconstruction,
            energy: 0.0,
            penalty: 0.0,
            total: reconstruction,
        };
        let grad = with_grad.then(|| {
            let mut grad = params.zeros_like();
            let mut g_recon = residual.clone();
            g_recon
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v *= -2.0 / nf);
            let g_code = params.decoder.backward(&dec, &g_recon, &mut grad.decoder);
            params.encoder.backward(&enc, &g_code, &mut grad.encoder);
            grad
        });
        return Ok(Evaluation {
            terms,
            gmm: None,
            grad,
        });
    }

    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        let row = z.row_mut(i);
        row[..c].copy_from_slice(code.row(i));
        row[c] = err_norm[i] / (x_norm[i] + RECON_EPS);
    }
    let est = params
        .estimator
        .forward(&z, dropout.map(|r| (r, arch.dropout_keep)))?;
    let gamma = est.output();
    let estimate = estimate_gmm(&z, gamma, previous)?;
    let gmm = &estimate.params;
    let density = GmmDensity::new(gmm, cfg.jitter)?;
    let k = gmm.components();

    // responsibilities r_ik = posterior of component k for sample i
    let mut resp = Matrix::zeros(n, k);
    let mut energy_total = 0.0;
    let mut terms_buf = vec![0.0; k];
    for i in 0..n {
        density.log_terms(z.row(i), &mut terms_buf);
        let lse = log_sum_exp(&terms_buf);
        energy_total -= lse;
        for (r, t) in resp.row_mut(i).iter_mut().zip(&terms_buf) {
            *r = libm::exp(t - lse);
        }
    }
    let energy = check_term(energy_total / nf, "energy")?;
    let penalty: f64 = density
        .diag
        .iter()
        .flat_map(|diag| diag.iter().map(|v| 1.0 / v))
        .sum();
    let penalty = check_term(penalty, "penalty")?;
    let total = check_term(
        reconstruction + cfg.lambda1 * energy + cfg.lambda2 * penalty,
        "total",
    )?;
    let terms = ObjectiveTerms {
        reconstruction,
        energy,
        penalty,
        total,
    };
    if !with_grad {
        return Ok(Evaluation {
            terms,
            gmm: Some(estimate.params),
            grad: None,
        });
    }

    let mut g_z = Matrix::zeros(n, d);
    let mut g_gamma = Matrix::zeros(n, k);
    let mut delta = vec![0.0; d];
    let mut p_delta = vec![0.0; d];
    for comp in 0..k {
        let precision = density.factor(comp).inverse();
        let mu = &gmm.mu[comp];
        let mut w_sum = 0.0;
        let mut g_mu = vec![0.0; d];
        let mut weighted_outer = Matrix::zeros(d, d);
        for i in 0..n {
            let w = cfg.lambda1 / nf * resp[(i, comp)];
            for ((dl, v), m) in delta.iter_mut().zip(z.row(i)).zip(mu) {
                *dl = v - m;
            }
            mat_vec(&precision, &delta, &mut p_delta);
            w_sum += w;
            for a in 0..d {
                g_z[(i, a)] += w * p_delta[a];
                g_mu[a] -= w * p_delta[a];
                for b in 0..d {
                    weighted_outer[(a, b)] += w * delta[a] * delta[b];
                }
            }
        }
        if estimate.empty[comp] {
            // parameters carried over from outside the batch: constants here
            continue;
        }
        let phi = gmm.phi[comp];
        let g_phi = if phi > 0.0 { -w_sum / phi } else { 0.0 };
        // G = ∂J/∂Σ_k = ½(W·P − P·M·P) − λ₂·diag(1/Σ̃²)
        let pmp = precision.matmul(&weighted_outer)?.matmul(&precision)?;
        let mut g_sigma = Matrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                g_sigma[(a, b)] = 0.5 * (w_sum * precision[(a, b)] - pmp[(a, b)]);
            }
            let s = density.diag[comp][a];
            g_sigma[(a, a)] -= cfg.lambda2 / (s * s);
        }
        let sigma = &gmm.sigma[comp];
        let g_dot_sigma: f64 = g_sigma
            .as_slice()
            .iter()
            .zip(sigma.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let mass = estimate.mass[comp];
        let mut g_delta = vec![0.0; d];
        for i in 0..n {
            for ((dl, v), m) in delta.iter_mut().zip(z.row(i)).zip(mu) {
                *dl = v - m;
            }
            mat_vec(&g_sigma, &delta, &mut g_delta);
            let quad: f64 = delta.iter().zip(&g_delta).map(|(a, b)| a * b).sum();
            let mu_dot: f64 = g_mu.iter().zip(&delta).map(|(a, b)| a * b).sum();
            g_gamma[(i, comp)] = g_phi / nf + (mu_dot + quad - g_dot_sigma) / mass;
            let scale = gamma[(i, comp)] / mass;
            for a in 0..d {
                g_z[(i, a)] += scale * (g_mu[a] + 2.0 * g_delta[a]);
            }
        }
    }

    let mut grad = params.zeros_like();
    let g_z_est = params
        .estimator
        .backward(&est, &g_gamma, &mut grad.estimator);
    let mut g_code = Matrix::zeros(n, c);
    let mut g_recon = Matrix::zeros(n, arch.input_dim);
    for i in 0..n {
        let g_zr = g_z[(i, c)] + g_z_est[(i, c)];
        for a in 0..c {
            g_code[(i, a)] = g_z[(i, a)] + g_z_est[(i, a)];
        }
        let zr_scale = if err_norm[i] > 0.0 {
            g_zr / (err_norm[i] * (x_norm[i] + RECON_EPS))
        } else {
            0.0
        };
        for (g, e) in g_recon.row_mut(i).iter_mut().zip(residual.row(i)) {
            *g = -2.0 * e / nf - zr_scale * e;
        }
    }
    let g_code_dec = params.decoder.backward(&dec, &g_recon, &mut grad.decoder);
    for (a, b) in g_code.as_mut_slice().iter_mut().zip(g_code_dec.as_slice()) {
        *a += b;
    }
    params.encoder.backward(&enc, &g_code, &mut grad.encoder);
    Ok(Evaluation {
        terms,
        gmm: Some(estimate.params),
        grad: Some(grad),
    })
}

fn mat_vec(m: &Matrix, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.row_iter()) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}
