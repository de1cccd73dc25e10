//! Gaussian observations with the normal-inverse-gamma coefficient prior.
//!
//! With β | σ² ~ N(β₀, σ² S₀⁻¹) and σ² ~ IG(a₀, b₀):
//! S_N = ΦᵀΦ + S₀, β_N = S_N⁻¹(S₀β₀ + Φᵀy), a_N = a₀ + N/2,
//! b_N = b₀ + ½(yᵀy + β₀ᵀS₀β₀ − β_NᵀS_Nβ_N), and
//! log p(y) = −(N/2)log 2π + ½(log|S₀| − log|S_N|) + a₀ log b₀ − a_N log b_N
//!            + log Γ(a_N) − log Γ(a₀).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use super::{held_out, CoefficientPrior};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{self, Chol};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    /// Cholesky factor of S_N.
    pub precision: Chol,
    pub mean: DVector<f64>,
    pub shape: f64,
    pub rate: f64,
    pub num_obs: usize,
}

impl GaussianPosterior {
    /// Posterior from sufficient statistics ΦᵀΦ, Φᵀy, yᵀy and N.
    pub fn from_stats(gram: &DMatrix<f64>, xty: &DVector<f64>, yy: f64, num_obs: usize, prior: &CoefficientPrior) -> Result<Self> {
        Self::from_factor(posterior_precision(gram, prior)?, xty, yy, num_obs, prior)
    }

    /// As [`from_stats`](Self::from_stats) with S_N already factored.
    pub fn from_factor(precision: Chol, xty: &DVector<f64>, yy: f64, num_obs: usize, prior: &CoefficientPrior) -> Result<Self> {
        let s0_b0 = &prior.nig_precision * &prior.mean;
        let rhs = &s0_b0 + xty;
        let l = precision.l_dirty().lower_triangle();
        let v = l
            .solve_lower_triangular(&rhs)
            .ok_or_else(|| Error::Numeric("singular posterior precision".into()))?;
        let mean = l
            .tr_solve_lower_triangular(&v)
            .ok_or_else(|| Error::Numeric("singular posterior precision".into()))?;
        let rate = prior.noise_scale + 0.5 * (yy + prior.mean.dot(&s0_b0) - v.norm_squared());
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Numeric(format!(
                "inverse-gamma rate b_N = {rate:e} is not positive (yᵀy = {yy:e}, N = {num_obs})"
            )));
        }
        Ok(Self { precision, mean, shape: prior.noise_shape + 0.5 * num_obs as f64, rate, num_obs })
    }

    pub fn log_marginal(&self, prior: &CoefficientPrior) -> f64 {
        -0.5 * self.num_obs as f64 * LN_2PI + 0.5 * (prior.log_det_nig_precision() - linalg::log_det(&self.precision))
            + prior.noise_shape * prior.noise_scale.ln()
            - self.shape * self.rate.ln()
            + ln_gamma(self.shape)
            - ln_gamma(prior.noise_shape)
    }

    /// σ² ~ IG(a_N, b_N), then β ~ N(β_N, σ² S_N⁻¹).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64)> {
        let precision_draw = Gamma::new(self.shape, 1.0 / self.rate)
            .map_err(|e| Error::Parameter(format!("gamma({}, rate {}): {e}", self.shape, self.rate)))?
            .sample(rng);
        let sigma2 = 1.0 / precision_draw.max(f64::MIN_POSITIVE);
        let beta = linalg::sample_mvn_precision(&self.mean, &self.precision, sigma2.sqrt(), rng);
        Ok((beta, sigma2))
    }
}

fn posterior_precision(gram: &DMatrix<f64>, prior: &CoefficientPrior) -> Result<Chol> {
    linalg::cholesky(&(gram + &prior.nig_precision))
}

fn check_rows(y: &DVector<f64>, phi: &FeatureMatrix, prior: &CoefficientPrior) -> Result<()> {
    if y.len() != phi.nrows() {
        return Err(Error::shape(format!("{} observations for {} feature rows", y.len(), phi.nrows())));
    }
    if phi.ncols() != prior.num_features() {
        return Err(Error::shape(format!("{} features but prior over {}", phi.ncols(), prior.num_features())));
    }
    Ok(())
}

pub fn gaussian_posterior(y: &DVector<f64>, phi: &FeatureMatrix, prior: &CoefficientPrior) -> Result<GaussianPosterior> {
    check_rows(y, phi, prior)?;
    let p = phi.as_matrix();
    GaussianPosterior::from_stats(&(p.transpose() * p), &(p.transpose() * y), y.norm_squared(), y.len(), prior)
}

/// Log marginal likelihood of one column with β and σ² integrated out.
pub fn gaussian_log_marginal(y: &DVector<f64>, phi: &FeatureMatrix, prior: &CoefficientPrior) -> Result<f64> {
    Ok(gaussian_posterior(y, phi, prior)?.log_marginal(prior))
}

/// Joint draw of (β_j, σ_j²) from the normal-inverse-gamma posterior.
pub fn gaussian_sample_beta_sigma<R: Rng + ?Sized>(
    y: &DVector<f64>,
    phi: &FeatureMatrix,
    prior: &CoefficientPrior,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    gaussian_posterior(y, phi, prior)?.sample(rng)
}

/// Columns sharing one held-out row pattern.
#[derive(Clone, Debug)]
struct Group {
    columns: Vec<usize>,
    held_out_rows: Vec<usize>,
    gram: DMatrix<f64>,
    xty: DMatrix<f64>,
    yy: Vec<f64>,
    num_obs: usize,
}

/// Sufficient statistics for the collapsed Gaussian model over all columns,
/// grouped by held-out pattern so fully observed columns share one Gram.
#[derive(Clone, Debug)]
pub struct MarginalStats {
    groups: Vec<Group>,
}

impl MarginalStats {
    pub fn new(y: &DMatrix<f64>, mask: Option<&DMatrix<bool>>, phi: &FeatureMatrix) -> Result<Self> {
        if y.nrows() != phi.nrows() {
            return Err(Error::shape(format!("{} observation rows for {} feature rows", y.nrows(), phi.nrows())));
        }
        let mut patterns: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for j in 0..y.ncols() {
            let rows: Vec<usize> = (0..y.nrows()).filter(|&n| held_out(mask, n, j)).collect();
            patterns.entry(rows).or_default().push(j);
        }
        let p = phi.as_matrix();
        let full_gram = p.transpose() * p;
        let full_xty = p.transpose() * y;
        let groups = patterns
            .into_iter()
            .map(|(held_out_rows, columns)| {
                let held = DMatrix::from_fn(held_out_rows.len(), p.ncols(), |r, i| p[(held_out_rows[r], i)]);
                let y_held = DMatrix::from_fn(held_out_rows.len(), columns.len(), |r, c| y[(held_out_rows[r], columns[c])]);
                let gram = if held_out_rows.is_empty() { full_gram.clone() } else { &full_gram - held.transpose() * &held };
                let mut xty = DMatrix::from_fn(p.ncols(), columns.len(), |i, c| full_xty[(i, columns[c])]);
                if !held_out_rows.is_empty() {
                    xty -= held.transpose() * &y_held;
                }
                let yy: Vec<f64> =
                    columns.iter().enumerate().map(|(c, &j)| y.column(j).norm_squared() - y_held.column(c).norm_squared()).collect();
                let num_obs = y.nrows() - held_out_rows.len();
                Group { columns, held_out_rows, gram, xty, yy, num_obs }
            })
            .collect();
        Ok(Self { groups })
    }

    /// Σ_j log p(y_j | Φ) over observed entries.
    pub fn log_marginal(&self, prior: &CoefficientPrior) -> Result<f64> {
        let mut total = 0.0;
        for g in &self.groups {
            let chol = posterior_precision(&g.gram, prior)?;
            for c in 0..g.columns.len() {
                let post = GaussianPosterior::from_factor(chol.clone(), &g.xty.column(c).into_owned(), g.yy[c], g.num_obs, prior)?;
                total += post.log_marginal(prior);
            }
        }
        Ok(total)
    }

    /// Statistics after feature pair `m` of Φ changed; `phi` already holds
    /// the new pair.
    pub fn with_pair_replaced(&self, y: &DMatrix<f64>, phi: &FeatureMatrix, m: usize) -> MarginalStats {
        let p = phi.as_matrix();
        let idx = [2 * m, 2 * m + 1];
        let pair = p.columns(2 * m, 2);
        let full_rows = pair.transpose() * p; // 2 × M
        let full_xty = pair.transpose() * y; // 2 × J
        let mut out = self.clone();
        for g in &mut out.groups {
            let mut rows = full_rows.clone();
            let mut xty_rows = DMatrix::from_fn(2, g.columns.len(), |r, c| full_xty[(r, g.columns[c])]);
            for &n in &g.held_out_rows {
                for r in 0..2 {
                    let v = p[(n, idx[r])];
                    for i in 0..p.ncols() {
                        rows[(r, i)] -= v * p[(n, i)];
                    }
                    for (c, &j) in g.columns.iter().enumerate() {
                        xty_rows[(r, c)] -= v * y[(n, j)];
                    }
                }
            }
            for r in 0..2 {
                for i in 0..p.ncols() {
                    g.gram[(idx[r], i)] = rows[(r, i)];
                    g.gram[(i, idx[r])] = rows[(r, i)];
                }
                for c in 0..g.columns.len() {
                    g.xty[(idx[r], c)] = xty_rows[(r, c)];
                }
            }
        }
        out
    }

    /// Posterior draws (β_j, σ_j²) for every column, written into
    /// `coefficients` and `noise_var`.
    pub fn sample_all<R: Rng + ?Sized>(
        &self,
        prior: &CoefficientPrior,
        coefficients: &mut DMatrix<f64>,
        noise_var: &mut DVector<f64>,
        rng: &mut R,
    ) -> Result<()> {
        let mut draws = Vec::new();
        for g in &self.groups {
            let chol = posterior_precision(&g.gram, prior)?;
            for (c, &j) in g.columns.iter().enumerate() {
                let post = GaussianPosterior::from_factor(chol.clone(), &g.xty.column(c).into_owned(), g.yy[c], g.num_obs, prior)?;
                draws.push((j, post));
            }
        }
        // Column order, independent of grouping.
        draws.sort_by_key(|(j, _)| *j);
        for (j, post) in draws {
            let (beta, s2) = post.sample(rng)?;
            coefficients.set_column(j, &beta);
            noise_var[j] = s2;
        }
        Ok(())
    }
}

/// Total collapsed log-likelihood and its gradient with respect to Φ.
///
/// ∂/∂Φ of one column's log marginal is −Φ S_N⁻¹ + (a_N/b_N)(y − Φβ_N)β_Nᵀ,
/// restricted to the column's observed rows.
pub fn marginal_value_and_phi_gradient(
    y: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    phi: &FeatureMatrix,
    prior: &CoefficientPrior,
) -> Result<(f64, DMatrix<f64>)> {
    let stats = MarginalStats::new(y, mask, phi)?;
    let p = phi.as_matrix();
    let (n, m) = p.shape();
    let mut value = 0.0;
    let mut grad = DMatrix::<f64>::zeros(n, m);
    for g in &stats.groups {
        let chol = posterior_precision(&g.gram, prior)?;
        let mut betas = DMatrix::<f64>::zeros(m, g.columns.len());
        let mut resid = DMatrix::<f64>::zeros(n, g.columns.len());
        for (c, &j) in g.columns.iter().enumerate() {
            let post = GaussianPosterior::from_factor(chol.clone(), &g.xty.column(c).into_owned(), g.yy[c], g.num_obs, prior)?;
            value += post.log_marginal(prior);
            let weight = post.shape / post.rate;
            betas.set_column(c, &post.mean);
            let fitted = p * &post.mean;
            for r in 0..n {
                resid[(r, c)] = weight * (y[(r, j)] - fitted[r]);
            }
        }
        let phi_sinv = chol.solve(&p.transpose()).transpose();
        let mut h = resid * betas.transpose() - phi_sinv * g.columns.len() as f64;
        for &r in &g.held_out_rows {
            h.row_mut(r).fill(0.0);
        }
        grad += h;
    }
    Ok((value, grad))
}

/// Explicit-coefficient Gaussian log-likelihood Σ log N(y_nj | ψ_nj, σ_j²).
pub fn gaussian_log_likelihood(
    y: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    noise_var: &DVector<f64>,
    mask: Option<&DMatrix<bool>>,
) -> f64 {
    let mut total = 0.0;
    for j in 0..y.ncols() {
        let s2 = noise_var[j];
        let c = -0.5 * (LN_2PI + s2.ln());
        for n in 0..y.nrows() {
            if held_out(mask, n, j) {
                continue;
            }
            let r = y[(n, j)] - psi[(n, j)];
            total += c - 0.5 * r * r / s2;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: usize, cols: usize, data: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_matrix_unchecked(DMatrix::from_row_slice(rows, cols, data))
    }

    #[test]
    fn zero_features_reduce_to_noise_only_marginal() {
        let prior = CoefficientPrior::isotropic(2);
        let y = DVector::from_vec(vec![0.3, -1.2, 0.8]);
        let phi = fm(3, 2, &[0.0; 6]);
        let post = gaussian_posterior(&y, &phi, &prior).unwrap();
        assert!(post.mean.norm() < 1e-15);
        assert!((post.rate - (1.0 + 0.5 * y.norm_squared())).abs() < 1e-14);
        let a_n = 1.0 + 1.5;
        let direct = -1.5 * LN_2PI + 0.0 - a_n * post.rate.ln() + ln_gamma(a_n) - ln_gamma(1.0);
        assert!((post.log_marginal(&prior) - direct).abs() < 1e-12);
    }

    #[test]
    fn row_permutation_invariance() {
        let prior = CoefficientPrior::isotropic(2);
        let y = DVector::from_vec(vec![0.3, -1.2, 0.8, 0.1]);
        let phi = fm(4, 2, &[0.1, 0.9, -0.4, 0.2, 0.7, -0.7, 0.3, 0.5]);
        let a = gaussian_log_marginal(&y, &phi, &prior).unwrap();
        let perm = [2, 0, 3, 1];
        let y2 = DVector::from_fn(4, |i, _| y[perm[i]]);
        let phi2 = FeatureMatrix::from_matrix_unchecked(DMatrix::from_fn(4, 2, |i, j| phi.as_matrix()[(perm[i], j)]));
        let b = gaussian_log_marginal(&y2, &phi2, &prior).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_data_draws_from_prior() {
        let prior = CoefficientPrior::isotropic(1);
        let phi = FeatureMatrix::from_matrix_unchecked(DMatrix::zeros(0, 1));
        let y = DVector::zeros(0);
        let post = gaussian_posterior(&y, &phi, &prior).unwrap();
        assert_eq!(post.shape, prior.noise_shape);
        assert_eq!(post.rate, prior.noise_scale);
        assert_eq!(post.mean[0], 0.0);
    }

    #[test]
    fn tight_inverse_gamma_pins_sigma() {
        // a0 → ∞ with b0/a0 = s² fixed
        let prior = CoefficientPrior::scaled(1, 1.0, 1.0, 1e7, 0.25e7).unwrap();
        let phi = fm(2, 1, &[0.5, 0.5]);
        let y = DVector::from_vec(vec![0.1, -0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (_, s2) = gaussian_sample_beta_sigma(&y, &phi, &prior, &mut rng).unwrap();
            assert!((s2 - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn stats_match_columnwise_and_pair_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let mut w = crate::features::sample_rbf_frequencies(3, 2, 1.0, &mut rng).unwrap();
        let phi = crate::features::feature_map(&x, &w).unwrap();
        let y = DMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).cos());
        let mut mask = DMatrix::from_element(6, 3, false);
        mask[(1, 0)] = true;
        mask[(4, 2)] = true;
        mask[(5, 2)] = true;
        let prior = CoefficientPrior::isotropic(6);
        let stats = MarginalStats::new(&y, Some(&mask), &phi).unwrap();
        let colwise = |phi: &FeatureMatrix| -> f64 {
            (0..3)
                .map(|j| {
                    let rows: Vec<usize> = (0..6).filter(|&n| !mask[(n, j)]).collect();
                    let yj = DVector::from_fn(rows.len(), |r, _| y[(rows[r], j)]);
                    let pj = FeatureMatrix::from_matrix_unchecked(DMatrix::from_fn(rows.len(), 6, |r, c| phi.as_matrix()[(rows[r], c)]));
                    gaussian_log_marginal(&yj, &pj, &prior).unwrap()
                })
                .sum()
        };
        assert!((stats.log_marginal(&prior).unwrap() - colwise(&phi)).abs() < 1e-10);

        w.set_row(1, &DVector::from_vec(vec![0.9, -2.0]));
        let mut phi2 = phi.clone();
        phi2.refresh_pair(&x, &w, 1);
        let updated = stats.with_pair_replaced(&y, &phi2, 1);
        assert!((updated.log_marginal(&prior).unwrap() - colwise(&phi2)).abs() < 1e-10);
    }
}
