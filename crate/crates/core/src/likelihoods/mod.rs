//! Observation models: log-likelihoods, gradients and the conjugate or
//! augmented updates for per-feature parameters.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub mod gaussian;
pub mod logistic;
pub mod model;
pub mod multinomial;
pub mod poisson;

pub use gaussian::{gaussian_log_marginal, gaussian_posterior, gaussian_sample_beta_sigma, GaussianPosterior, MarginalStats};
pub use logistic::{
    crt_sample, logistic_family_terms, logistic_log_density, pg_gibbs_beta, sample_dispersion, sample_dispersion_rate, ColumnData,
    LogisticTerms, PgConditional,
};
pub use model::{
    coefficient_objective, latent_objective, log_likelihood_psi, log_likelihood_psi_gradient, model_log_likelihood,
    model_log_likelihood_phi, predict_mean, ExplicitFrequencyLikelihood, MarginalFrequencyLikelihood,
};
pub use multinomial::{
    multinomial_log_likelihood, multinomial_pg_beta, multinomial_stick_breaking_transform, stick_breaking_probabilities,
};
pub use poisson::{poisson_grad_beta, poisson_log_likelihood, poisson_map_beta};

/// Bound applied to linear predictors inside exp/logistic evaluations.
pub const PSI_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LikelihoodKind {
    Gaussian,
    GaussianMarginalized,
    Poisson,
    Bernoulli,
    Binomial,
    NegativeBinomial,
    Multinomial,
}

impl LikelihoodKind {
    pub const ALL: [LikelihoodKind; 7] = [
        LikelihoodKind::Gaussian,
        LikelihoodKind::GaussianMarginalized,
        LikelihoodKind::Poisson,
        LikelihoodKind::Bernoulli,
        LikelihoodKind::Binomial,
        LikelihoodKind::NegativeBinomial,
        LikelihoodKind::Multinomial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LikelihoodKind::Gaussian => "gaussian",
            LikelihoodKind::GaussianMarginalized => "gaussian-marginalized",
            LikelihoodKind::Poisson => "poisson",
            LikelihoodKind::Bernoulli => "bernoulli",
            LikelihoodKind::Binomial => "binomial",
            LikelihoodKind::NegativeBinomial => "negative-binomial",
            LikelihoodKind::Multinomial => "multinomial",
        }
    }

    /// Kinds handled by Pólya-gamma augmentation of a single logit.
    pub fn is_logistic(self) -> bool {
        matches!(self, LikelihoodKind::Bernoulli | LikelihoodKind::Binomial | LikelihoodKind::NegativeBinomial)
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, LikelihoodKind::Gaussian | LikelihoodKind::GaussianMarginalized)
    }

    /// Kinds whose observations must be nonnegative integers.
    pub fn is_count(self) -> bool {
        !self.is_gaussian()
    }

    /// Number of coefficient columns for J observed features.
    pub fn coefficient_columns(self, num_features: usize) -> usize {
        match self {
            LikelihoodKind::Multinomial => num_features.saturating_sub(1),
            _ => num_features,
        }
    }

    pub fn supported_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unsupported likelihood '{s}' (supported: {})", Self::supported_names())))
    }
}

/// Priors on the coefficients and per-feature likelihood parameters.
///
/// `cov` is B₀ for explicit-coefficient kinds. For the Gaussian kinds the
/// normal-inverse-gamma prior β | σ² ~ N(β₀, σ² S₀⁻¹), σ² ~ IG(a₀, b₀) is used,
/// with `nig_precision` = S₀.
#[derive(Clone, Debug)]
pub struct CoefficientPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub nig_precision: DMatrix<f64>,
    pub noise_shape: f64,
    pub noise_scale: f64,
    /// Shape of the gamma prior on each dispersion r_j.
    pub dispersion_shape: f64,
    /// Shape and rate of the gamma prior on the shared dispersion rate h.
    pub dispersion_rate_shape: f64,
    pub dispersion_rate_rate: f64,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
    log_det_nig: f64,
}

impl CoefficientPrior {
    pub fn new(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        nig_precision: DMatrix<f64>,
        noise_shape: f64,
        noise_scale: f64,
    ) -> Result<Self> {
        let m = mean.len();
        if cov.shape() != (m, m) || nig_precision.shape() != (m, m) {
            return Err(Error::shape(format!("coefficient prior matrices must be {m}x{m}")));
        }
        if !(noise_shape > 0.0 && noise_scale > 0.0) {
            return Err(Error::Parameter("inverse-gamma hyperparameters must be positive".into()));
        }
        let cov_chol = linalg::cholesky(&cov)?;
        let precision = linalg::symmetrize(cov_chol.inverse());
        let precision_mean = &precision * &mean;
        let log_det_nig = linalg::log_det(&linalg::cholesky(&nig_precision)?);
        Ok(Self {
            mean,
            cov,
            nig_precision,
            noise_shape,
            noise_scale,
            dispersion_shape: 1.0,
            dispersion_rate_shape: 1.0,
            dispersion_rate_rate: 1.0,
            precision,
            precision_mean,
            log_det_nig,
        })
    }

    /// β₀ = 0, B₀ = I, S₀ = I, a₀ = b₀ = 1, dispersion hierarchy constants 1.
    pub fn isotropic(num_features: usize) -> Self {
        Self::scaled(num_features, 1.0, 1.0, 1.0, 1.0).expect("identity prior is valid")
    }

    pub fn scaled(num_features: usize, cov_scale: f64, nig_precision_scale: f64, a0: f64, b0: f64) -> Result<Self> {
        if !(cov_scale > 0.0 && nig_precision_scale > 0.0) {
            return Err(Error::Parameter("prior scales must be positive".into()));
        }
        Self::new(
            DVector::zeros(num_features),
            DMatrix::identity(num_features, num_features) * cov_scale,
            DMatrix::identity(num_features, num_features) * nig_precision_scale,
            a0,
            b0,
        )
    }

    pub fn with_dispersion_hyper(mut self, shape: f64, rate_shape: f64, rate_rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate_shape > 0.0 && rate_rate > 0.0) {
            return Err(Error::Parameter("dispersion hyperparameters must be positive".into()));
        }
        self.dispersion_shape = shape;
        self.dispersion_rate_shape = rate_shape;
        self.dispersion_rate_rate = rate_rate;
        Ok(self)
    }

    pub fn num_features(&self) -> usize {
        self.mean.len()
    }

    /// B₀⁻¹.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// B₀⁻¹ β₀.
    pub fn precision_mean(&self) -> &DVector<f64> {
        &self.precision_mean
    }

    pub(crate) fn log_det_nig_precision(&self) -> f64 {
        self.log_det_nig
    }

    /// log N(β | β₀, B₀) up to the normalizing constant.
    pub fn log_prior_kernel(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.mean;
        -0.5 * d.dot(&(&self.precision * &d))
    }
}

/// Per-feature likelihood parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodState {
    /// M × J′ coefficients, one column per (stick-)feature.
    pub coefficients: DMatrix<f64>,
    /// Noise variances σ_j² (Gaussian kinds).
    pub noise_var: DVector<f64>,
    /// Dispersions r_j (negative binomial).
    pub dispersion: DVector<f64>,
    /// Shared gamma rate h of the dispersion prior.
    pub dispersion_rate: f64,
    /// N × J′ Pólya-gamma auxiliaries (logistic kinds and multinomial).
    pub pg_aux: DMatrix<f64>,
}

impl LikelihoodState {
    pub fn new(num_rows: usize, num_coef: usize, num_features: usize) -> Self {
        Self {
            coefficients: DMatrix::zeros(num_features, num_coef),
            noise_var: DVector::from_element(num_coef, 1.0),
            dispersion: DVector::from_element(num_coef, 1.0),
            dispersion_rate: 1.0,
            pg_aux: DMatrix::zeros(num_rows, num_coef),
        }
    }
}

/// Counter for ψ clamping events.
#[derive(Debug, Default)]
pub struct ClampCounter(Cell<u64>);

impl ClampCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.get()
    }

    pub fn clamp(&self, psi: f64) -> f64 {
        if psi > PSI_CLAMP {
            self.0.set(self.0.get() + 1);
            PSI_CLAMP
        } else if psi < -PSI_CLAMP {
            self.0.set(self.0.get() + 1);
            -PSI_CLAMP
        } else {
            psi
        }
    }

    pub fn bump(&self) {
        self.0.set(self.0.get() + 1);
    }
}

/// Held-out mask lookup: `true` marks an entry excluded from fitting.
#[inline]
pub fn held_out(mask: Option<&DMatrix<bool>>, n: usize, j: usize) -> bool {
    mask.is_some_and(|m| m[(n, j)])
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// log(1 + eˣ), computed without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in LikelihoodKind::ALL {
            assert_eq!(k.name().parse::<LikelihoodKind>().unwrap(), k);
        }
        let err = "gamma".parse::<LikelihoodKind>().unwrap_err().to_string();
        assert!(err.contains("negative-binomial"));
    }

    #[test]
    fn stable_logistic_helpers() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }
}
