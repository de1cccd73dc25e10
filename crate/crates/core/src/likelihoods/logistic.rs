//! Logistic-family observations (Bernoulli, binomial, negative binomial):
//! p(y | ψ) = c(y) · (e^ψ)^a / (1 + e^ψ)^b, augmented with Pólya-gamma
//! variables so the coefficient update is conditionally Gaussian.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use super::{softplus, ClampCounter, CoefficientPrior, LikelihoodKind};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{self, Chol};
use crate::polya_gamma::{sample_pg, PgParams};

/// Exponents a, b and κ = a − b/2 of one observation, plus log c(y).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticTerms {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub log_c: f64,
}

/// (a, b, κ) for one entry. `dispersion` is r_j (negative binomial) and
/// `trials` the binomial trial count; both are ignored by other kinds.
pub fn logistic_family_terms(kind: LikelihoodKind, y: f64, dispersion: f64, trials: f64) -> Result<LogisticTerms> {
    let (a, b, log_c) = match kind {
        LikelihoodKind::Bernoulli => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::Parameter(format!("bernoulli observation must be 0 or 1, got {y}")));
            }
            (y, 1.0, 0.0)
        }
        LikelihoodKind::Binomial => {
            if y < 0.0 || y > trials {
                return Err(Error::Parameter(format!("binomial observation {y} outside [0, {trials}]")));
            }
            (y, trials, ln_gamma(trials + 1.0) - ln_gamma(y + 1.0) - ln_gamma(trials - y + 1.0))
        }
        LikelihoodKind::NegativeBinomial => {
            if y < 0.0 {
                return Err(Error::Parameter(format!("negative-binomial observation must be nonnegative, got {y}")));
            }
            if !(dispersion > 0.0) {
                return Err(Error::Parameter(format!("dispersion must be positive, got {dispersion}")));
            }
            (y, y + dispersion, ln_gamma(y + dispersion) - ln_gamma(dispersion) - ln_gamma(y + 1.0))
        }
        other => return Err(Error::Parameter(format!("{other} is not a logistic-family likelihood"))),
    };
    Ok(LogisticTerms { a, b, kappa: a - 0.5 * b, log_c })
}

/// log p(y | ψ) = log c + aψ − b·log(1 + e^ψ).
pub fn logistic_log_density(terms: &LogisticTerms, psi: f64) -> f64 {
    terms.log_c + terms.a * psi - terms.b * softplus(psi)
}

/// Gaussian full conditional of β given Ω and κ:
/// precision ΦᵀΩΦ + B₀⁻¹, mean V(Φᵀκ + B₀⁻¹β₀).
#[derive(Clone, Debug)]
pub struct PgConditional {
    pub mean: DVector<f64>,
    pub precision: Chol,
}

impl PgConditional {
    pub fn new(phi: &DMatrix<f64>, omega: &DVector<f64>, kappa: &DVector<f64>, prior: &CoefficientPrior) -> Result<Self> {
        let mut weighted = phi.clone();
        for (n, mut row) in weighted.row_iter_mut().enumerate() {
            row *= omega[n];
        }
        let precision_matrix = phi.transpose() * weighted + prior.precision();
        let precision = linalg::cholesky(&linalg::symmetrize(precision_matrix))?;
        let rhs = phi.transpose() * kappa + prior.precision_mean();
        let mean = precision.solve(&rhs);
        Ok(Self { mean, precision })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision.inverse()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        linalg::sample_mvn_precision(&self.mean, &self.precision, 1.0, rng)
    }
}

/// Per-column inputs of the augmented update.
#[derive(Clone, Copy, Debug)]
pub struct ColumnData<'a> {
    pub y: &'a DVector<f64>,
    /// Binomial trials; ignored by other kinds.
    pub trials: Option<&'a DVector<f64>>,
    /// Held-out flags; held-out rows contribute nothing.
    pub mask: Option<&'a [bool]>,
    /// Negative-binomial dispersion r_j.
    pub dispersion: f64,
}

/// ω_nj ~ PG(b_nj, φ(x_n)ᵀβ_j) for every observed row, then
/// β_j ~ N(m_ω, V_ω). Returns the new β_j and ω_{·j}.
pub fn pg_gibbs_beta<R: Rng + ?Sized>(
    column: ColumnData<'_>,
    phi: &FeatureMatrix,
    prior: &CoefficientPrior,
    beta: &DVector<f64>,
    kind: LikelihoodKind,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = column.y.len();
    if phi.nrows() != n || beta.len() != phi.ncols() {
        return Err(Error::shape("pg_gibbs_beta shapes disagree".to_string()));
    }
    let psi = phi.as_matrix() * beta;
    let mut omega = DVector::zeros(n);
    let mut kappa = DVector::zeros(n);
    for i in 0..n {
        if column.mask.is_some_and(|m| m[i]) {
            continue;
        }
        let trials = column.trials.map_or(1.0, |t| t[i]);
        let terms = logistic_family_terms(kind, column.y[i], column.dispersion, trials)
            .map_err(|e| Error::data(i, 0, e.to_string()))?;
        if terms.b <= 0.0 {
            continue;
        }
        omega[i] = sample_pg(PgParams::new(terms.b, psi[i])?, rng)?;
        kappa[i] = terms.kappa;
    }
    let cond = PgConditional::new(phi.as_matrix(), &omega, &kappa, prior)?;
    Ok((cond.sample(rng), omega))
}

/// Chinese-restaurant-table count: Σ_{t=1}^{y} Bernoulli(r / (r + t − 1)).
pub fn crt_sample<R: Rng + ?Sized>(y: u64, r: f64, rng: &mut R) -> u64 {
    (0..y).filter(|&t| rng.random::<f64>() < r / (r + t as f64)).count() as u64
}

/// Draw r_j given counts and success probabilities p_nj = σ(ψ_nj):
/// L = Σ_n CRT(y_nj, r_j), r_j ~ Gamma(a_r + L, rate h + Σ_n −log(1 − p_nj)).
/// `1 − p` is floored at 1e-300; each floor event bumps `clamps`.
#[allow(clippy::too_many_arguments)]
pub fn sample_dispersion<R: Rng + ?Sized>(
    y: &DVector<f64>,
    success_prob: &DVector<f64>,
    dispersion: f64,
    dispersion_rate: f64,
    prior: &CoefficientPrior,
    mask: Option<&[bool]>,
    clamps: &ClampCounter,
    rng: &mut R,
) -> Result<f64> {
    if !(dispersion > 0.0) {
        return Err(Error::Parameter(format!("dispersion must be positive, got {dispersion}")));
    }
    let mut tables = 0u64;
    let mut rate = dispersion_rate;
    for n in 0..y.len() {
        if mask.is_some_and(|m| m[n]) {
            continue;
        }
        let p = success_prob[n];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("success probability {p} outside [0, 1]")));
        }
        tables += crt_sample(y[n].round() as u64, dispersion, rng);
        let mut q = 1.0 - p;
        if q < 1e-300 {
            q = 1e-300;
            clamps.bump();
        }
        rate -= q.ln();
    }
    let shape = prior.dispersion_shape + tables as f64;
    let draw = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("gamma({shape}, rate {rate}): {e}")))?
        .sample(rng);
    Ok(draw.max(1e-12))
}

/// Shared dispersion rate h ~ Gamma(b_h + J·a_r, rate g₀ + Σ_j r_j).
pub fn sample_dispersion_rate<R: Rng + ?Sized>(dispersions: &DVector<f64>, prior: &CoefficientPrior, rng: &mut R) -> Result<f64> {
    let shape = prior.dispersion_rate_shape + dispersions.len() as f64 * prior.dispersion_shape;
    let rate = prior.dispersion_rate_rate + dispersions.sum();
    Ok(Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("gamma({shape}, rate {rate}): {e}")))?
        .sample(rng))
}
