//! Mixture parameters estimated from soft memberships, and sample energy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::{cholesky, log_sum_exp, CholeskyFactor, Matrix};

/// Membership mass below which a component counts as empty.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-12;
/// Covariance jitter is escalated ×10 up to this value before giving up.
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmParameters {
    /// Mixture probabilities φ_k.
    pub phi: Vec<f64>,
    /// Means μ_k.
    pub mu: Vec<Vec<f64>>,
    /// Covariances Σ_k, before jitter.
    pub sigma: Vec<Matrix>,
}

impl GmmParameters {
    pub fn components(&self) -> usize {
        self.phi.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.phi.len();
        let d = self.dim();
        if k == 0 || self.mu.len() != k || self.sigma.len() != k {
            return Err(Error::dim("GmmParameters components", k, self.mu.len()));
        }
        for (mu, s) in self.mu.iter().zip(&self.sigma) {
            if mu.len() != d || s.rows() != d || s.cols() != d {
                return Err(Error::dim("GmmParameters dimension", d, mu.len()));
            }
        }
        let total: f64 = self.phi.iter().sum();
        if self.phi.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }
}

/// Result of [`estimate_gmm`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmEstimate {
    pub params: GmmParameters,
    /// Σ_i γ_ik per component.
    pub mass: Vec<f64>,
    /// Components whose mass fell below [`EMPTY_COMPONENT_MASS`]; their μ and
    /// Σ were carried over from `previous` (or reset to 0 and I).
    pub empty: Vec<bool>,
}

/// Mixture weights, means and covariances from a batch of latent vectors
/// `z` (N × d) and memberships `gamma` (N × K):
///
/// `φ_k = Σ_i γ_ik / N`, `μ_k = Σ_i γ_ik z_i / Σ_i γ_ik`,
/// `Σ_k = Σ_i γ_ik (z_i − μ_k)(z_i − μ_k)ᵀ / Σ_i γ_ik`.
pub fn estimate_gmm(
    z: &Matrix,
    gamma: &Matrix,
    previous: Option<&GmmParameters>,
) -> Result<GmmEstimate> {
    let n = z.rows();
    let d = z.cols();
    let k = gamma.cols();
    if n == 0 {
        return Err(Error::Input(
            "cannot estimate a mixture from an empty batch".into(),
        ));
    }
    if gamma.rows() != n {
        return Err(Error::dim("estimate_gmm memberships", n, gamma.rows()));
    }
    if let Some(p) = previous {
        if p.components() != k || p.dim() != d {
            return Err(Error::dim("estimate_gmm previous", k, p.components()));
        }
    }
    let mut mass = vec![0.0; k];
    let mut mu = vec![vec![0.0; d]; k];
    for i in 0..n {
        let zi = z.row(i);
        for (c, g) in gamma.row(i).iter().enumerate() {
            mass[c] += g;
            for (m, v) in mu[c].iter_mut().zip(zi) {
                *m += g * v;
            }
        }
    }
    let empty: Vec<bool> = mass.iter().map(|m| *m < EMPTY_COMPONENT_MASS).collect();
    for c in 0..k {
        if !empty[c] {
            mu[c].iter_mut().for_each(|m| *m /= mass[c]);
        }
    }
    let mut sigma = vec![Matrix::zeros(d, d); k];
    let mut delta = vec![0.0; d];
    for i in 0..n {
        let zi = z.row(i);
        for c in 0..k {
            if empty[c] {
                continue;
            }
            let g = gamma[(i, c)];
            for ((dl, v), m) in delta.iter_mut().zip(zi).zip(&mu[c]) {
                *dl = v - m;
            }
            let s = sigma[c].as_mut_slice();
            for a in 0..d {
                let ga = g * delta[a];
                for b in a..d {
                    s[a * d + b] += ga * delta[b];
                }
            }
        }
    }
    for c in 0..k {
        if empty[c] {
            match previous {
                Some(p) => {
                    mu[c] = p.mu[c].clone();
                    sigma[c] = p.sigma[c].clone();
                }
                None => {
                    mu[c] = vec![0.0; d];
                    sigma[c] = Matrix::identity(d);
                }
            }
            continue;
        }
        for a in 0..d {
            for b in a..d {
                let v = sigma[c][(a, b)] / mass[c];
                sigma[c][(a, b)] = v;
                sigma[c][(b, a)] = v;
            }
        }
    }
    let mut phi: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    if empty.iter().any(|e| *e) {
        let total: f64 = phi.iter().sum();
        phi.iter_mut().for_each(|p| *p /= total);
    }
    Ok(GmmEstimate {
        params: GmmParameters { phi, mu, sigma },
        mass,
        empty,
    })
}

/// A mixture prepared for repeated energy evaluation: each covariance is
/// jittered (`Σ̃_k = Σ_k + j_k·I`) and Cholesky-factored once.
#[derive(Debug, Clone)]
pub struct GmmDensity {
    log_phi: Vec<f64>,
    mu: Vec<Vec<f64>>,
    factors: Vec<CholeskyFactor>,
    /// `−½ log|2π Σ̃_k|`.
    log_norm: Vec<f64>,
    /// Jitter actually applied per component after escalation.
    pub jitter: Vec<f64>,
    /// Diagonal of each Σ̃_k.
    pub diag: Vec<Vec<f64>>,
}

impl GmmDensity {
    pub fn new(gmm: &GmmParameters, jitter: f64) -> Result<Self> {
        if !(jitter > 0.0) {
            return Err(Error::Parameter("jitter must be positive".into()));
        }
        gmm.validate()?;
        let d = gmm.dim();
        let log_2pi = libm::log(2.0 * PI);
        let mut out = GmmDensity {
            log_phi: gmm.phi.iter().map(|p| libm::log(*p)).collect(),
            mu: gmm.mu.clone(),
            factors: Vec::with_capacity(gmm.components()),
            log_norm: Vec::with_capacity(gmm.components()),
            jitter: Vec::with_capacity(gmm.components()),
            diag: Vec::with_capacity(gmm.components()),
        };
        for (c, s) in gmm.sigma.iter().enumerate() {
            let mut j = jitter;
            let factor = loop {
                let mut st = s.clone();
                for a in 0..d {
                    st[(a, a)] += j;
                }
                match cholesky(&st) {
                    Ok(f) => break f,
                    Err(_) if j * 10.0 <= MAX_JITTER * (1.0 + 1e-9) => j *= 10.0,
                    Err(_) => {
                        return Err(Error::Numeric(format!(
                            "covariance of component {c} is not positive definite even with jitter {j:e}"
                        )))
                    }
                }
            };
            out.log_norm
                .push(-0.5 * (d as f64 * log_2pi + factor.log_det()));
            out.diag.push((0..d).map(|a| s[(a, a)] + j).collect());
            out.factors.push(factor);
            out.jitter.push(j);
        }
        Ok(out)
    }

    pub fn components(&self) -> usize {
        self.log_phi.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    /// Per-component log joint densities `log φ_k + log N(z; μ_k, Σ̃_k)`.
    pub fn log_terms(&self, z: &[f64], out: &mut [f64]) {
        let mut delta = vec![0.0; z.len()];
        for c in 0..self.components() {
            for ((dl, v), m) in delta.iter_mut().zip(z).zip(&self.mu[c]) {
                *dl = v - m;
            }
            let q = self.factors[c].quadratic_form(&delta);
            out[c] = self.log_phi[c] + self.log_norm[c] - 0.5 * q;
        }
    }

    /// `E(z) = −log Σ_k φ_k N(z; μ_k, Σ̃_k)`.
    pub fn energy(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::dim("sample_energy", self.dim(), z.len()));
        }
        let mut terms = vec![0.0; self.components()];
        self.log_terms(z, &mut terms);
        Ok(-log_sum_exp(&terms))
    }

    pub(crate) fn factor(&self, c: usize) -> &CholeskyFactor {
        &self.factors[c]
    }
}

/// Sample energy of `z` under `gmm` with covariance jitter.
pub fn sample_energy(z: &[f64], gmm: &GmmParameters, jitter: f64) -> Result<f64> {
    GmmDensity::new(gmm, jitter)?.energy(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngSeed;

    fn unit_gmm(d: usize) -> GmmParameters {
        GmmParameters {
            phi: vec![1.0],
            mu: vec![vec![0.0; d]],
            sigma: vec![Matrix::identity(d)],
        }
    }

    #[test]
    fn standard_normal_mode() {
        // jitter is tiny relative to I, so compare loosely at 1e-5
        for d in 1..5 {
            let e = sample_energy(&vec![0.0; d], &unit_gmm(d), 1e-12).unwrap();
            assert!((e - 0.5 * d as f64 * libm::log(2.0 * PI)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_growth() {
        let d = 3;
        let r = 1.7;
        let z = [r, 0.0, 0.0];
        let e = sample_energy(&z, &unit_gmm(d), 1e-14).unwrap();
        let expect = 1.5 * libm::log(2.0 * PI) + r * r / 2.0;
        assert!((e - expect).abs() < 1e-9);
    }

    #[test]
    fn k1_estimate_is_batch_mean_and_biased_covariance() {
        let mut rng = RngSeed(3).rng();
        let z = Matrix::from_rows(
            &(0..20)
                .map(|_| [rng.normal(), rng.normal()])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let gamma = Matrix::from_vec(20, 1, vec![1.0; 20]).unwrap();
        let est = estimate_gmm(&z, &gamma, None).unwrap();
        assert_eq!(est.params.phi, vec![1.0]);
        let mean = z.column_means();
        let cov = z.covariance();
        for a in 0..2 {
            assert!((est.params.mu[0][a] - mean[a]).abs() < 1e-12);
            for b in 0..2 {
                assert!((est.params.sigma[0][(a, b)] - cov[(a, b)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_points_give_zero_covariance() {
        let z = Matrix::from_rows(&[[1.0, 2.0]; 5]).unwrap();
        let gamma = Matrix::from_vec(5, 1, vec![1.0; 5]).unwrap();
        let est = estimate_gmm(&z, &gamma, None).unwrap();
        assert!(est.params.sigma[0].as_slice().iter().all(|v| *v == 0.0));
        // energy then relies on jitter alone
        let density = GmmDensity::new(&est.params, 1e-6).unwrap();
        assert!(density.energy(&[1.0, 2.0]).unwrap().is_finite());
    }

    #[test]
    fn empty_component_falls_back() {
        let z = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let gamma = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let est = estimate_gmm(&z, &gamma, None).unwrap();
        assert_eq!(est.empty, vec![false, true]);
        assert_eq!(est.params.mu[1], vec![0.0]);
        assert_eq!(est.params.sigma[1], Matrix::identity(1));
        assert!((est.params.phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut prev = est.params.clone();
        prev.mu[1] = vec![9.0];
        let again = estimate_gmm(&z, &gamma, Some(&prev)).unwrap();
        assert_eq!(again.params.mu[1], vec![9.0]);
    }

    #[test]
    fn jitter_escalates_then_fails() {
        let mut g = unit_gmm(2);
        g.sigma[0] = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        // singular PSD: succeeds once jitter is added
        let dens = GmmDensity::new(&g, 1e-6).unwrap();
        assert!(dens.jitter[0] >= 1e-6);
        g.sigma[0] = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(matches!(GmmDensity::new(&g, 1e-6), Err(Error::Numeric(_))));
    }
}
