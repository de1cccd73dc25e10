//! Kind-dispatched model likelihood, its gradients with respect to the linear
//! predictor, β and X, predictive means, and the incremental likelihoods
//! driving the frequency MH sweep.

use nalgebra::{DMatrix, DVector};

use super::gaussian::{gaussian_log_likelihood, marginal_value_and_phi_gradient, MarginalStats};
use super::logistic::{logistic_family_terms, logistic_log_density};
use super::multinomial::{multinomial_log_likelihood, multinomial_stick_breaking_transform, observed_rows};
use super::poisson::poisson_log_likelihood_psi;
use super::{sigmoid, ClampCounter, CoefficientPrior, LikelihoodKind, LikelihoodState};
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::features::{feature_map, latent_gradient, FeatureMatrix, FrequencyMatrix};
use crate::spectral::FrequencyLikelihood;

fn trials_at(obs: &ObservationMatrix, n: usize, j: usize) -> f64 {
    obs.trials().map_or(1.0, |t| t[(n, j)])
}

fn logistic_log_likelihood(obs: &ObservationMatrix, psi: &DMatrix<f64>, state: &LikelihoodState) -> Result<f64> {
    let y = obs.y();
    let mut total = 0.0;
    for j in 0..y.ncols() {
        for n in 0..y.nrows() {
            if obs.is_held_out(n, j) {
                continue;
            }
            let terms = logistic_family_terms(obs.kind(), y[(n, j)], state.dispersion[j], trials_at(obs, n, j))
                .map_err(|e| Error::data(n, j, e.to_string()))?;
            total += logistic_log_density(&terms, psi[(n, j)]);
        }
    }
    Ok(total)
}

/// log p(Y | ψ, θ) for the explicit-coefficient kinds, ψ = ΦB.
pub fn log_likelihood_psi(
    obs: &ObservationMatrix,
    psi: &DMatrix<f64>,
    state: &LikelihoodState,
    clamps: &ClampCounter,
) -> Result<f64> {
    let kind = obs.kind();
    if psi.shape() != (obs.num_rows(), kind.coefficient_columns(obs.num_cols())) {
        return Err(Error::shape(format!("linear predictor is {:?}", psi.shape())));
    }
    match kind {
        LikelihoodKind::Gaussian => Ok(gaussian_log_likelihood(obs.y(), psi, &state.noise_var, obs.mask())),
        LikelihoodKind::Poisson => poisson_log_likelihood_psi(obs.y(), psi, obs.mask(), clamps),
        LikelihoodKind::Multinomial => multinomial_log_likelihood(obs.y(), psi, obs.mask(), clamps),
        LikelihoodKind::GaussianMarginalized => Err(Error::Parameter("the marginalized kind has no linear predictor".into())),
        _ => logistic_log_likelihood(obs, psi, state),
    }
}

/// log p(Y | Φ, θ); the marginalized Gaussian kind integrates β and σ² out.
pub fn model_log_likelihood_phi(
    obs: &ObservationMatrix,
    phi: &FeatureMatrix,
    state: &LikelihoodState,
    prior: &CoefficientPrior,
    clamps: &ClampCounter,
) -> Result<f64> {
    if obs.kind() == LikelihoodKind::GaussianMarginalized {
        return MarginalStats::new(obs.y(), obs.mask(), phi)?.log_marginal(prior);
    }
    if phi.ncols() != state.coefficients.nrows() {
        return Err(Error::shape(format!("{} features but {} coefficient rows", phi.ncols(), state.coefficients.nrows())));
    }
    log_likelihood_psi(obs, &(phi.as_matrix() * &state.coefficients), state, clamps)
}

pub fn model_log_likelihood(
    obs: &ObservationMatrix,
    x: &DMatrix<f64>,
    w: &FrequencyMatrix,
    state: &LikelihoodState,
    prior: &CoefficientPrior,
    clamps: &ClampCounter,
) -> Result<f64> {
    model_log_likelihood_phi(obs, &feature_map(x, w)?, state, prior, clamps)
}

/// ∂ log p(Y | ψ, θ) / ∂ψ, zero at held-out entries.
pub fn log_likelihood_psi_gradient(
    obs: &ObservationMatrix,
    psi: &DMatrix<f64>,
    state: &LikelihoodState,
    clamps: &ClampCounter,
) -> Result<DMatrix<f64>> {
    let y = obs.y();
    let kind = obs.kind();
    let mut g = DMatrix::zeros(psi.nrows(), psi.ncols());
    if kind == LikelihoodKind::Multinomial {
        let (_, remaining) = multinomial_stick_breaking_transform(y)?;
        let rows = observed_rows(y.nrows(), obs.mask());
        for j in 0..psi.ncols() {
            for n in 0..psi.nrows() {
                if rows[n] {
                    g[(n, j)] = y[(n, j)] - remaining[(n, j)] * sigmoid(clamps.clamp(psi[(n, j)]));
                }
            }
        }
        return Ok(g);
    }
    for j in 0..psi.ncols() {
        for n in 0..psi.nrows() {
            if obs.is_held_out(n, j) {
                continue;
            }
            let v = y[(n, j)];
            let p = psi[(n, j)];
            g[(n, j)] = match kind {
                LikelihoodKind::Gaussian => (v - p) / state.noise_var[j],
                LikelihoodKind::Poisson => v - clamps.clamp(p).exp(),
                LikelihoodKind::GaussianMarginalized => {
                    return Err(Error::Parameter("the marginalized kind has no linear predictor".into()))
                }
                _ => {
                    let t = logistic_family_terms(kind, v, state.dispersion[j], trials_at(obs, n, j))
                        .map_err(|e| Error::data(n, j, e.to_string()))?;
                    t.a - t.b * sigmoid(p)
                }
            };
        }
    }
    Ok(g)
}

/// Log posterior in B (likelihood plus N(β₀, B₀) priors, up to constants) and
/// its M × J′ gradient, for the explicit-coefficient kinds.
pub fn coefficient_objective(
    obs: &ObservationMatrix,
    phi: &FeatureMatrix,
    state: &LikelihoodState,
    prior: &CoefficientPrior,
    clamps: &ClampCounter,
) -> Result<(f64, DMatrix<f64>)> {
    let b = &state.coefficients;
    let psi = phi.as_matrix() * b;
    let mut value = log_likelihood_psi(obs, &psi, state, clamps)?;
    let mut grad = phi.as_matrix().transpose() * log_likelihood_psi_gradient(obs, &psi, state, clamps)?;
    for j in 0..b.ncols() {
        let beta = b.column(j).into_owned();
        value += prior.log_prior_kernel(&beta);
        let d = prior.precision() * (beta - &prior.mean);
        let mut col = grad.column_mut(j);
        col -= d;
    }
    Ok((value, grad))
}

/// MAP objective in X, log p(Y | X, W, θ) − ½‖X‖²_F, and its N × D gradient.
pub fn latent_objective(
    obs: &ObservationMatrix,
    x: &DMatrix<f64>,
    w: &FrequencyMatrix,
    state: &LikelihoodState,
    prior: &CoefficientPrior,
    clamps: &ClampCounter,
) -> Result<(f64, DMatrix<f64>)> {
    let phi = feature_map(x, w)?;
    let (ll, d_phi) = if obs.kind() == LikelihoodKind::GaussianMarginalized {
        marginal_value_and_phi_gradient(obs.y(), obs.mask(), &phi, prior)?
    } else {
        let psi = phi.as_matrix() * &state.coefficients;
        let ll = log_likelihood_psi(obs, &psi, state, clamps)?;
        let g = log_likelihood_psi_gradient(obs, &psi, state, clamps)?;
        (ll, g * state.coefficients.transpose())
    };
    let grad = latent_gradient(&phi, w, &d_phi) - x;
    Ok((ll - 0.5 * x.norm_squared(), grad))
}

/// Link-transformed mean g(ψ) for every entry, N × J. Multinomial means use
/// each row's observed total; negative-binomial means are r_j e^ψ.
pub fn predict_mean(
    obs: &ObservationMatrix,
    phi: &FeatureMatrix,
    state: &LikelihoodState,
    clamps: &ClampCounter,
) -> Result<DMatrix<f64>> {
    let psi = phi.as_matrix() * &state.coefficients;
    let (n, j) = (obs.num_rows(), obs.num_cols());
    Ok(match obs.kind() {
        LikelihoodKind::Gaussian | LikelihoodKind::GaussianMarginalized => psi,
        LikelihoodKind::Poisson => psi.map(|p| clamps.clamp(p).exp()),
        LikelihoodKind::Bernoulli => psi.map(sigmoid),
        LikelihoodKind::Binomial => DMatrix::from_fn(n, j, |r, c| trials_at(obs, r, c) * sigmoid(psi[(r, c)])),
        LikelihoodKind::NegativeBinomial => DMatrix::from_fn(n, j, |r, c| state.dispersion[c] * clamps.clamp(psi[(r, c)]).exp()),
        LikelihoodKind::Multinomial => {
            let probs = super::stick_breaking_probabilities(&psi, clamps);
            let totals: DVector<f64> = DVector::from_fn(n, |r, _| obs.y().row(r).sum());
            DMatrix::from_fn(n, j, |r, c| totals[r] * probs[(r, c)])
        }
    })
}

/// Collapsed Gaussian likelihood under single-pair changes of Φ.
pub struct MarginalFrequencyLikelihood<'a> {
    obs: &'a ObservationMatrix,
    x: &'a DMatrix<f64>,
    prior: &'a CoefficientPrior,
    phi: FeatureMatrix,
    stats: MarginalStats,
    pending: Option<(FeatureMatrix, MarginalStats)>,
}

impl<'a> MarginalFrequencyLikelihood<'a> {
    /// Returns the likelihood and its current value.
    pub fn new(
        obs: &'a ObservationMatrix,
        x: &'a DMatrix<f64>,
        w: &FrequencyMatrix,
        prior: &'a CoefficientPrior,
    ) -> Result<(Self, f64)> {
        let phi = feature_map(x, w)?;
        let stats = MarginalStats::new(obs.y(), obs.mask(), &phi)?;
        let current = stats.log_marginal(prior)?;
        Ok((Self { obs, x, prior, phi, stats, pending: None }, current))
    }
}

impl FrequencyLikelihood for MarginalFrequencyLikelihood<'_> {
    fn propose(&mut self, w: &FrequencyMatrix, m: usize, proposal: &DVector<f64>) -> Result<f64> {
        let mut w_new = w.clone();
        w_new.set_row(m, proposal);
        let mut phi = self.phi.clone();
        phi.refresh_pair(self.x, &w_new, m);
        let stats = self.stats.with_pair_replaced(self.obs.y(), &phi, m);
        let value = stats.log_marginal(self.prior);
        self.pending = Some((phi, stats));
        value
    }

    fn accept(&mut self) {
        if let Some((phi, stats)) = self.pending.take() {
            self.phi = phi;
            self.stats = stats;
        }
    }
}

/// Explicit-coefficient likelihood under single-pair changes of Φ, updating
/// ψ = ΦB through the two affected rows of B.
pub struct ExplicitFrequencyLikelihood<'a> {
    obs: &'a ObservationMatrix,
    x: &'a DMatrix<f64>,
    state: &'a LikelihoodState,
    clamps: &'a ClampCounter,
    phi: FeatureMatrix,
    psi: DMatrix<f64>,
    pending: Option<(FeatureMatrix, DMatrix<f64>)>,
}

impl<'a> ExplicitFrequencyLikelihood<'a> {
    pub fn new(
        obs: &'a ObservationMatrix,
        x: &'a DMatrix<f64>,
        w: &FrequencyMatrix,
        state: &'a LikelihoodState,
        clamps: &'a ClampCounter,
    ) -> Result<(Self, f64)> {
        let phi = feature_map(x, w)?;
        let psi = phi.as_matrix() * &state.coefficients;
        let current = log_likelihood_psi(obs, &psi, state, clamps)?;
        Ok((Self { obs, x, state, clamps, phi, psi, pending: None }, current))
    }
}

impl FrequencyLikelihood for ExplicitFrequencyLikelihood<'_> {
    fn propose(&mut self, w: &FrequencyMatrix, m: usize, proposal: &DVector<f64>) -> Result<f64> {
        let mut w_new = w.clone();
        w_new.set_row(m, proposal);
        let mut phi = self.phi.clone();
        phi.refresh_pair(self.x, &w_new, m);
        let delta = phi.as_matrix().columns(2 * m, 2) - self.phi.as_matrix().columns(2 * m, 2);
        let psi = &self.psi + delta * self.state.coefficients.rows(2 * m, 2);
        let value = log_likelihood_psi(self.obs, &psi, self.state, self.clamps);
        self.pending = Some((phi, psi));
        value
    }

    fn accept(&mut self) {
        if let Some((phi, psi)) = self.pending.take() {
            self.phi = phi;
            self.psi = psi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_rbf_frequencies;
    use crate::likelihoods::gaussian_log_marginal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    #[test]
    fn zero_gaussian_model() {
        let obs = ObservationMatrix::new(DMatrix::zeros(3, 2), LikelihoodKind::Gaussian).unwrap();
        let phi = FeatureMatrix::from_matrix_unchecked(DMatrix::from_element(3, 4, 0.5));
        let state = LikelihoodState::new(3, 2, 4);
        let v = model_log_likelihood_phi(&obs, &phi, &state, &CoefficientPrior::isotropic(4), &ClampCounter::new()).unwrap();
        assert!((v + 3.0 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn marginalized_sums_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>());
        let w = sample_rbf_frequencies(3, 2, 1.0, &mut rng).unwrap();
        let phi = feature_map(&x, &w).unwrap();
        let y = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        let prior = CoefficientPrior::isotropic(6);
        let obs = ObservationMatrix::new(y.clone(), LikelihoodKind::GaussianMarginalized).unwrap();
        let total = model_log_likelihood_phi(&obs, &phi, &LikelihoodState::new(6, 3, 6), &prior, &ClampCounter::new()).unwrap();
        let sum: f64 = (0..3).map(|j| gaussian_log_marginal(&y.column(j).into_owned(), &phi, &prior).unwrap()).sum();
        assert!((total - sum).abs() < 1e-12);
    }

    #[test]
    fn incremental_mh_likelihoods_match_full_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>() - 0.5);
        let w = sample_rbf_frequencies(4, 2, 1.0, &mut rng).unwrap();
        let prior = CoefficientPrior::isotropic(8);
        let clamps = ClampCounter::new();
        let proposal = DVector::from_vec(vec![0.3, -1.2]);
        let mut w_new = w.clone();
        w_new.set_row(2, &proposal);
        let mut mask = DMatrix::from_element(8, 3, false);
        mask[(1, 0)] = true;
        mask[(5, 2)] = true;

        let y = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>());
        let obs = ObservationMatrix::from_parts(y, LikelihoodKind::GaussianMarginalized, Some(mask.clone()), None, None).unwrap();
        let state = LikelihoodState::new(8, 3, 8);
        let (mut lik, _) = MarginalFrequencyLikelihood::new(&obs, &x, &w, &prior).unwrap();
        let inc = lik.propose(&w, 2, &proposal).unwrap();
        let full = model_log_likelihood(&obs, &x, &w_new, &state, &prior, &clamps).unwrap();
        assert!((inc - full).abs() < 1e-9 * full.abs());

        let y = DMatrix::from_fn(8, 3, |_, _| (rng.random::<f64>() * 5.0).floor());
        let obs = ObservationMatrix::from_parts(y, LikelihoodKind::Poisson, Some(mask), None, None).unwrap();
        let mut state = LikelihoodState::new(8, 3, 8);
        state.coefficients = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>() - 0.5);
        let (mut lik, _) = ExplicitFrequencyLikelihood::new(&obs, &x, &w, &state, &clamps).unwrap();
        let inc = lik.propose(&w, 2, &proposal).unwrap();
        let full = model_log_likelihood(&obs, &x, &w_new, &state, &prior, &clamps).unwrap();
        assert!((inc - full).abs() < 1e-10 * full.abs());
    }
}
