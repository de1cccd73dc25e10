//! Multinomial observations through a stick-breaking factorization into J − 1
//! binomials, each augmented with Pólya-gamma variables.
//!
//! With C_n = Σ_j y_nj, C_n1 = C_n and C_nj = C_n − Σ_{i<j} y_ni, the count
//! y_nj is Binomial(C_nj, σ(ψ_nj)) for j < J and κ_nj = y_nj − C_nj / 2.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::logistic::PgConditional;
use super::{log_sigmoid, ClampCounter, CoefficientPrior};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::polya_gamma::{sample_pg, PgParams};

/// (κ, C), both N × (J − 1).
pub fn multinomial_stick_breaking_transform(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, j) = y.shape();
    if j < 2 {
        return Err(Error::shape(format!("multinomial observations need at least 2 categories, got {j}")));
    }
    let mut kappa = DMatrix::zeros(n, j - 1);
    let mut remaining = DMatrix::zeros(n, j - 1);
    for r in 0..n {
        for c in 0..j {
            let v = y[(r, c)];
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::data(r, c, format!("expected a nonnegative integer count, got {v}")));
            }
        }
        let mut left: f64 = y.row(r).sum();
        for c in 0..j - 1 {
            remaining[(r, c)] = left;
            kappa[(r, c)] = y[(r, c)] - 0.5 * left;
            left -= y[(r, c)];
        }
    }
    Ok((kappa, remaining))
}

/// Category probabilities π_nj = σ(ψ_nj) Π_{i<j} (1 − σ(ψ_ni)), N × J.
pub fn stick_breaking_probabilities(psi: &DMatrix<f64>, clamps: &ClampCounter) -> DMatrix<f64> {
    let (n, sticks) = psi.shape();
    let mut out = DMatrix::zeros(n, sticks + 1);
    for r in 0..n {
        let mut rest = 1.0;
        for c in 0..sticks {
            let p = super::sigmoid(clamps.clamp(psi[(r, c)]));
            out[(r, c)] = rest * p;
            rest *= 1.0 - p;
        }
        out[(r, sticks)] = rest;
    }
    out
}

/// Rows whose counts take part in the fit: a row with any held-out entry is
/// excluded as a whole.
pub fn observed_rows(num_rows: usize, mask: Option<&DMatrix<bool>>) -> Vec<bool> {
    (0..num_rows).map(|n| mask.is_none_or(|m| !m.row(n).iter().any(|&h| h))).collect()
}

/// Σ over observed rows of log Multinomial(y_n | C_n, π_n), evaluated as the
/// product of the stick binomials.
pub fn multinomial_log_likelihood(
    y: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    clamps: &ClampCounter,
) -> Result<f64> {
    let (_, remaining) = multinomial_stick_breaking_transform(y)?;
    let rows = observed_rows(y.nrows(), mask);
    let mut total = 0.0;
    for n in 0..y.nrows() {
        if !rows[n] {
            continue;
        }
        for j in 0..psi.ncols() {
            let c = remaining[(n, j)];
            let v = y[(n, j)];
            let p = clamps.clamp(psi[(n, j)]);
            total += ln_gamma(c + 1.0) - ln_gamma(v + 1.0) - ln_gamma(c - v + 1.0) + v * log_sigmoid(p)
                + (c - v) * log_sigmoid(-p);
        }
    }
    Ok(total)
}

/// One Gibbs sweep over the J − 1 stick coefficients. Rows with C_nj = 0 carry
/// no information and get ω_nj = 0. `coefficients` is M × (J − 1) and `omega`
/// N × (J − 1).
pub fn multinomial_pg_beta<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    phi: &FeatureMatrix,
    prior: &CoefficientPrior,
    coefficients: &mut DMatrix<f64>,
    omega: &mut DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    rng: &mut R,
) -> Result<()> {
    let (kappa, remaining) = multinomial_stick_breaking_transform(y)?;
    let n = y.nrows();
    let sticks = kappa.ncols();
    if phi.nrows() != n || coefficients.shape() != (phi.ncols(), sticks) || omega.shape() != (n, sticks) {
        return Err(Error::shape("multinomial update shapes disagree".to_string()));
    }
    let rows = observed_rows(n, mask);
    for j in 0..sticks {
        let psi = phi.as_matrix() * coefficients.column(j);
        let mut w = DVector::zeros(n);
        let mut k = DVector::zeros(n);
        for i in 0..n {
            if rows[i] && remaining[(i, j)] > 0.0 {
                w[i] = sample_pg(PgParams::new(remaining[(i, j)], psi[i])?, rng)?;
                k[i] = kappa[(i, j)];
            }
        }
        let cond = PgConditional::new(phi.as_matrix(), &w, &k, prior)?;
        coefficients.set_column(j, &cond.sample(rng));
        omega.set_column(j, &w);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_examples() {
        let (k, c) = multinomial_stick_breaking_transform(&DMatrix::from_row_slice(1, 2, &[3.0, 5.0])).unwrap();
        assert_eq!((c[(0, 0)], k[(0, 0)]), (8.0, -1.0));
        let (k, c) = multinomial_stick_breaking_transform(&DMatrix::from_row_slice(1, 3, &[2.0, 1.0, 4.0])).unwrap();
        assert_eq!(c.as_slice(), &[7.0, 5.0]);
        assert_eq!(k.as_slice(), &[-1.5, -1.5]);
        let (k, c) = multinomial_stick_breaking_transform(&DMatrix::zeros(1, 3)).unwrap();
        assert!(k.iter().chain(c.iter()).all(|&v| v == 0.0));
        assert!(multinomial_stick_breaking_transform(&DMatrix::from_row_slice(1, 2, &[-1.0, 1.0])).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let psi = DMatrix::from_row_slice(2, 3, &[0.3, -1.0, 2.0, 5.0, 0.0, -4.0]);
        let p = stick_breaking_probabilities(&psi, &ClampCounter::new());
        for r in 0..2 {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn likelihood_matches_multinomial_pmf() {
        let y = DMatrix::from_row_slice(1, 3, &[2.0, 1.0, 4.0]);
        let psi = DMatrix::from_row_slice(1, 2, &[0.4, -0.7]);
        let c = ClampCounter::new();
        let pi = stick_breaking_probabilities(&psi, &c);
        let direct = ln_gamma(8.0) - ln_gamma(3.0) - ln_gamma(2.0) - ln_gamma(5.0)
            + 2.0 * pi[(0, 0)].ln()
            + pi[(0, 1)].ln()
            + 4.0 * pi[(0, 2)].ln();
        assert!((multinomial_log_likelihood(&y, &psi, None, &c).unwrap() - direct).abs() < 1e-12);
    }
}
