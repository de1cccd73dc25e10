//! Fast invariant battery behind `rflvm selfcheck`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::data::ObservationMatrix;
use crate::error::Result;
use crate::features::{feature_map, FrequencyMatrix};
use crate::likelihoods::{
    coefficient_objective, gaussian_log_marginal, latent_objective, ClampCounter, CoefficientPrior, LikelihoodKind,
    LikelihoodState,
};
use crate::oracle;
use crate::polya_gamma::{pg_mean, pg_variance, sample_pg, PgParams};
use crate::rng::{RngStreams, SamplerRng};
use crate::spectral::{niw_posterior, NiwHyper};

/// Draws per (b, c) pair in the Pólya-gamma moment check.
pub const PG_DRAWS: usize = 100_000;
/// (b, c) pairs exercised by the moment checks.
pub const PG_CASES: [(f64, f64); 4] = [(1.0, 0.0), (2.0, 1.5), (3.7, -2.0), (10.0, 0.5)];
/// Largest tolerated |z| of an empirical PG mean.
pub const PG_Z_LIMIT: f64 = 5.0;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
/// Gradient entries below this magnitude are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

/// Max relative errors of the analytic β and X gradients against central
/// differences on one random instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientErrors {
    pub beta: f64,
    pub x: f64,
}

/// Random small explicit-coefficient instance (N ≤ 5, J ≤ 3, M ≤ 6, D ≤ 2)
/// of `kind`, with its analytic gradients compared to central differences.
pub fn gradient_check<R: Rng + ?Sized>(kind: LikelihoodKind, rng: &mut R) -> Result<GradientErrors> {
    let n = rng.random_range(2..=5);
    let j = rng.random_range(1..=3);
    let half = rng.random_range(1..=3);
    let d = rng.random_range(1..=2);
    let m = 2 * half;
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = FrequencyMatrix::new(DMatrix::from_fn(half, d, |_, _| rng.sample::<f64, _>(StandardNormal)))?;
    let trials = DMatrix::from_fn(n, j, |_, _| rng.random_range(1..=6) as f64);
    let y = DMatrix::from_fn(n, j, |r, c| match kind {
        LikelihoodKind::Bernoulli => f64::from(rng.random_bool(0.5)),
        LikelihoodKind::Binomial => rng.random_range(0..=trials[(r, c)] as u64) as f64,
        LikelihoodKind::Gaussian => rng.sample(StandardNormal),
        _ => Poisson::new(2.0).expect("valid rate").sample(rng),
    });
    let obs = ObservationMatrix::from_parts(
        y,
        kind,
        None,
        None,
        (kind == LikelihoodKind::Binomial).then_some(trials),
    )?;
    let cols = kind.coefficient_columns(j);
    let mut state = LikelihoodState::new(n, cols, m);
    state.coefficients = DMatrix::from_fn(m, cols, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    state.dispersion = DVector::from_fn(j, |_, _| rng.random_range(0.5..3.0));
    state.noise_var = DVector::from_fn(cols, |_, _| rng.random_range(0.5..2.0));
    let prior = CoefficientPrior::isotropic(m);
    let clamps = ClampCounter::new();
    let phi = feature_map(&x, &w)?;

    let (_, g_beta) = coefficient_objective(&obs, &phi, &state, &prior, &clamps)?;
    let fd_beta = oracle::finite_difference(
        |b| {
            let mut s = state.clone();
            s.coefficients = b.clone();
            coefficient_objective(&obs, &phi, &s, &prior, &clamps).map(|r| r.0).unwrap_or(f64::NAN)
        },
        &state.coefficients,
        FD_STEP,
    );
    let (_, g_x) = latent_objective(&obs, &x, &w, &state, &prior, &clamps)?;
    let fd_x = oracle::finite_difference(
        |xx| latent_objective(&obs, xx, &w, &state, &prior, &clamps).map(|r| r.0).unwrap_or(f64::NAN),
        &x,
        FD_STEP,
    );
    Ok(GradientErrors {
        beta: oracle::max_relative_error(&g_beta, &fd_beta, GRADIENT_FLOOR),
        x: oracle::max_relative_error(&g_x, &fd_x, GRADIENT_FLOOR),
    })
}

/// The N = 4, M = 2 toy: targets, a one-frequency feature matrix and the
/// default prior.
pub fn marginal_toy(seed: u64) -> Result<(DVector<f64>, DMatrix<f64>, CoefficientPrior)> {
    let mut rng = RngStreams::new(seed).stream("marginal-toy");
    let x = DMatrix::from_fn(4, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = FrequencyMatrix::new(DMatrix::from_fn(1, 2, |_, _| rng.sample::<f64, _>(StandardNormal)))?;
    let phi = feature_map(&x, &w)?.into_inner();
    let y = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((y, phi, CoefficientPrior::isotropic(2)))
}

/// Relative error of the closed-form marginal likelihood against quadrature.
pub fn marginal_oracle_error(seed: u64) -> Result<f64> {
    let (y, phi, prior) = marginal_toy(seed)?;
    let closed = gaussian_log_marginal(
        &y,
        &crate::features::FeatureMatrix::from_matrix_unchecked(phi.clone()),
        &prior,
    )?;
    let quad = oracle::gaussian_marginal_quadrature(
        &y,
        &phi,
        &prior.nig_precision,
        prior.noise_shape,
        prior.noise_scale,
        0.0,
        1e-9,
    );
    Ok((closed - quad).abs() / quad.abs())
}

/// Largest discrepancy between the sampler's NIW update and the textbook form
/// over `cases` random member sets.
pub fn niw_oracle_error(cases: usize, seed: u64) -> f64 {
    let mut rng = RngStreams::new(seed).stream("niw-oracle");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=3);
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let hyper = NiwHyper {
            mean: DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)),
            lambda: rng.random_range(0.1..5.0),
            nu: d as f64 + rng.random_range(0.5..5.0),
            psi: &a * a.transpose() + DMatrix::identity(d, d),
        };
        let count = rng.random_range(0..=8);
        let members: Vec<DVector<f64>> =
            (0..count).map(|_| DVector::from_fn(d, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal))).collect();
        let got = niw_posterior(&hyper, &members);
        let (mu, kappa, nu, lambda) = oracle::niw_textbook(&hyper.mean, hyper.lambda, hyper.nu, &hyper.psi, &members);
        let scale = 1.0 + lambda.abs().max();
        worst = worst
            .max((got.mean - mu).abs().max())
            .max((got.lambda - kappa).abs())
            .max((got.nu - nu).abs())
            .max((got.psi - lambda).abs().max() / scale);
    }
    worst
}

/// Empirical PG mean and its z-score against the exact mean.
pub fn pg_moment_z<S>(params: PgParams, draws: usize, sampler: &S, rng: &mut SamplerRng) -> Result<(f64, f64)>
where
    S: Fn(PgParams, &mut SamplerRng) -> Result<f64>,
{
    let mut sum = 0.0;
    for _ in 0..draws {
        sum += sampler(params, rng)?;
    }
    let mean = sum / draws as f64;
    let se = (pg_variance(params) / draws as f64).sqrt();
    Ok((mean, (mean - pg_mean(params)) / se))
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn run_selfcheck(seed: u64) -> SelfcheckReport {
    run_selfcheck_with(seed, &|p, rng: &mut SamplerRng| sample_pg(p, rng))
}

/// The battery with an injected Pólya-gamma sampler.
pub fn run_selfcheck_with<S>(seed: u64, pg_sampler: &S) -> SelfcheckReport
where
    S: Fn(PgParams, &mut SamplerRng) -> Result<f64>,
{
    let streams = RngStreams::new(seed);
    let mut checks = Vec::new();

    checks.push(outcome("row-norm", {
        let mut rng = streams.stream("row-norm");
        (|| {
            let x = DMatrix::from_fn(20, 2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let w = FrequencyMatrix::new(DMatrix::from_fn(50, 2, |_, _| rng.sample::<f64, _>(StandardNormal)))?;
            let phi = feature_map(&x, &w)?;
            let worst = phi.as_matrix().row_iter().map(|r| (r.norm_squared() - 1.0).abs()).fold(0.0, f64::max);
            Ok((worst < 1e-12, format!("max |diag(ΦΦᵀ) − 1| = {worst:.2e}")))
        })()
    }));

    checks.push(outcome("pg-sampler", {
        let mut rng = streams.stream("pg-sampler");
        (|| {
            let mut worst: f64 = 0.0;
            for (b, c) in PG_CASES {
                let (_, z) = pg_moment_z(PgParams::new(b, c)?, PG_DRAWS, pg_sampler, &mut rng)?;
                worst = worst.max(z.abs());
            }
            Ok((worst < PG_Z_LIMIT, format!("max |z| of empirical means = {worst:.2}")))
        })()
    }));

    checks.push(outcome("gradients", {
        let mut rng = streams.stream("gradients");
        (|| {
            let mut worst: f64 = 0.0;
            for kind in [LikelihoodKind::Poisson, LikelihoodKind::Bernoulli, LikelihoodKind::Binomial, LikelihoodKind::NegativeBinomial] {
                for _ in 0..3 {
                    let e = gradient_check(kind, &mut rng)?;
                    worst = worst.max(e.beta).max(e.x);
                }
            }
            Ok((worst < GRADIENT_TOLERANCE, format!("max relative error = {worst:.2e}")))
        })()
    }));

    checks.push(outcome("marginal-likelihood", {
        marginal_oracle_error(seed).map(|e| (e <= 1e-5, format!("relative error vs quadrature = {e:.2e}")))
    }));

    checks.push(outcome("niw-update", {
        let e = niw_oracle_error(20, seed);
        Ok((e < 1e-12, format!("max discrepancy = {e:.2e}")))
    }));

    SelfcheckReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_with_the_real_sampler() {
        let report = run_selfcheck(3);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn biased_pg_sampler_is_named() {
        let report = run_selfcheck_with(3, &|p, rng: &mut SamplerRng| sample_pg(p, rng).map(|v| v * 1.05));
        assert_eq!(report.failures(), vec!["pg-sampler"]);
    }

    #[test]
    fn halved_pg_sampler_is_named() {
        let report = run_selfcheck_with(3, &|p, rng: &mut SamplerRng| sample_pg(p, rng).map(|v| v * 0.5));
        assert_eq!(report.failures(), vec!["pg-sampler"]);
    }
}
