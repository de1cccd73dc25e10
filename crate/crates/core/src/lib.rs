//! Random feature latent variable models.
//!
//! Observations Y (N × J) are modelled as y_j ~ L(g(φ(X)β_j), θ_j) where φ is a
//! random Fourier feature map of latent coordinates X (N × D), whose spectral
//! frequencies follow a Dirichlet-process Gaussian mixture. Inference is a
//! Gibbs sampler over the mixture and per-feature parameters with MAP updates
//! of X.

pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod latent;
pub mod likelihoods;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod polya_gamma;
pub mod rng;
pub mod selfcheck;
pub mod spectral;
pub mod tracefile;

pub use error::{Error, Result};
