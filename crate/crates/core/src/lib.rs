#![cfg_attr(not(test), no_std)]

//! Numeric core of DAGMM-HO: a deep autoencoding Gaussian mixture model for
//! unsupervised acoustic anomaly detection, together with the hyper-parameter
//! selection machinery that picks the number of mixture components (gap
//! statistic) and the autoencoder bottleneck width (cumulative PCA variance).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, WAV decoding
//! and the command-line pipeline live in the `dagmm-ho` companion crate.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod dagmm;
pub mod error;
pub mod eval;
pub mod features;
pub mod hpo;
pub mod numcore;
pub mod synth;

pub use error::{Error, Result};
