//! Poisson observations with log link: y_nj ~ Poisson(exp(φ(x_n)ᵀβ_j)).

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{held_out, ClampCounter, CoefficientPrior};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::optim::{gradient_ascent, OptimizerBudget};

/// Σ over observed (n, j) of y·ψ − exp(ψ) − log y!, with ψ = ΦB.
pub fn poisson_log_likelihood(
    y: &DMatrix<f64>,
    phi: &FeatureMatrix,
    coefficients: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    clamps: &ClampCounter,
) -> Result<f64> {
    if phi.ncols() != coefficients.nrows() || y.ncols() != coefficients.ncols() || y.nrows() != phi.nrows() {
        return Err(Error::shape("poisson likelihood shapes disagree".to_string()));
    }
    let psi = phi.as_matrix() * coefficients;
    poisson_log_likelihood_psi(y, &psi, mask, clamps)
}

pub(crate) fn poisson_log_likelihood_psi(
    y: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    clamps: &ClampCounter,
) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..y.ncols() {
        for n in 0..y.nrows() {
            if held_out(mask, n, j) {
                continue;
            }
            let v = y[(n, j)];
            if v < 0.0 {
                return Err(Error::data(n, j, format!("negative count {v}")));
            }
            let p = psi[(n, j)];
            total += v * p - clamps.clamp(p).exp() - ln_gamma(v + 1.0);
        }
    }
    Ok(total)
}

fn observed(mask: Option<&[bool]>, n: usize) -> bool {
    mask.is_none_or(|m| !m[n])
}

/// Gradient of the column log posterior Σ_n [y ψ − e^ψ] + log N(β | β₀, B₀).
pub fn poisson_grad_beta(
    y: &DVector<f64>,
    phi: &FeatureMatrix,
    beta: &DVector<f64>,
    prior: &CoefficientPrior,
    mask: Option<&[bool]>,
) -> DVector<f64> {
    let p = phi.as_matrix();
    let psi = p * beta;
    let clamps = ClampCounter::new();
    let resid = DVector::from_fn(y.len(), |n, _| {
        if observed(mask, n) {
            y[n] - clamps.clamp(psi[n]).exp()
        } else {
            0.0
        }
    });
    p.transpose() * resid - prior.precision() * (beta - &prior.mean)
}

pub(crate) fn poisson_column_objective(
    y: &DVector<f64>,
    phi: &FeatureMatrix,
    beta: &DVector<f64>,
    prior: &CoefficientPrior,
    mask: Option<&[bool]>,
    clamps: &ClampCounter,
) -> f64 {
    let psi = phi.as_matrix() * beta;
    let mut total = prior.log_prior_kernel(beta);
    for n in 0..y.len() {
        if observed(mask, n) {
            total += y[n] * psi[n] - clamps.clamp(psi[n]).exp();
        }
    }
    total
}

/// MAP estimate of β_j by gradient ascent from `init`.
pub fn poisson_map_beta(
    y: &DVector<f64>,
    phi: &FeatureMatrix,
    init: &DVector<f64>,
    prior: &CoefficientPrior,
    mask: Option<&[bool]>,
    budget: &OptimizerBudget,
    clamps: &ClampCounter,
) -> Result<DVector<f64>> {
    let m = init.len();
    let start = DMatrix::from_column_slice(m, 1, init.as_slice());
    let result = gradient_ascent(
        start,
        |b: &DMatrix<f64>| {
            let beta = b.column(0).into_owned();
            let value = poisson_column_objective(y, phi, &beta, prior, mask, clamps);
            let grad = poisson_grad_beta(y, phi, &beta, prior, mask);
            Ok((value, DMatrix::from_column_slice(m, 1, grad.as_slice())))
        },
        budget,
    )?;
    Ok(result.x.column(0).into_owned())
}
