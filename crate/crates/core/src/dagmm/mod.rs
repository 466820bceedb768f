//! Deep autoencoding Gaussian mixture model.
//!
//! A compression network maps each feature vector `x` to a code `z_c` and a
//! reconstruction `x′`; the code and the relative reconstruction error `z_r`
//! form `z = [z_c, z_r]`. An estimation network turns `z` into soft mixture
//! memberships, from which a Gaussian mixture over `z` is estimated per
//! batch. Everything is trained jointly; the negative log-likelihood of `z`
//! under the mixture (the sample energy) is the anomaly score.

mod gmm;
mod network;
mod objective;
mod train;

pub use gmm::{
    estimate_gmm, sample_energy, GmmDensity, GmmEstimate, GmmParameters, EMPTY_COMPONENT_MASS,
    MAX_JITTER,
};
pub use network::{Activation, Dense, LayerSpec, Mlp, ModelParameters, NetworkArchitecture};
pub use objective::{
    decode, encode, encode_batch, latent, latent_batch, membership, objective, objective_gradient,
    recon_feature, reconstruction_errors, LatentVector, ObjectiveTerms, RECON_EPS,
};
pub use train::{choose_threshold, score, train, TrainConfig, TrainedModel, Trainer};

#[cfg(test)]
mod tests;
