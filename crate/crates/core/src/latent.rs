//! Latent coordinates: PCA initialization, MAP updates and standardization.

use nalgebra::DMatrix;

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::features::FrequencyMatrix;
use crate::likelihoods::{latent_objective, ClampCounter, CoefficientPrior, LikelihoodState};
use crate::linalg;
use crate::optim::{gradient_ascent, AscentResult, OptimizerBudget};

/// N × D latent coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub x: DMatrix<f64>,
    /// Columns have zero mean and identity (1/N) covariance.
    pub standardized: bool,
}

impl LatentState {
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Leading-D principal-component scores of column-centered Y, scaled to unit
/// variance. Held-out entries are replaced by their column's observed mean.
pub fn pca_initialize(obs: &ObservationMatrix, dim: usize) -> Result<LatentState> {
    let (n, j) = (obs.num_rows(), obs.num_cols());
    if dim == 0 || dim >= n.min(j) {
        return Err(Error::Config(format!("latent dimension {dim} must lie in [1, min(N, J)) = [1, {})", n.min(j))));
    }
    let mut y = obs.y().clone();
    for c in 0..j {
        let observed: Vec<f64> = (0..n).filter(|&r| !obs.is_held_out(r, c)).map(|r| y[(r, c)]).collect();
        let mean = observed.iter().sum::<f64>() / observed.len().max(1) as f64;
        for r in 0..n {
            y[(r, c)] = if obs.is_held_out(r, c) { 0.0 } else { y[(r, c)] - mean };
        }
    }
    // Scores are proportional to the leading eigenvectors of Y Yᵀ, or to
    // Y v for the leading eigenvectors v of Yᵀ Y; use the smaller Gram.
    let mut x = if n <= j {
        let (vals, vecs) = linalg::jacobi_eigen(&(&y * y.transpose()));
        check_rank(&vals, dim)?;
        vecs.columns(0, dim).into_owned()
    } else {
        let (vals, vecs) = linalg::jacobi_eigen(&(y.transpose() * &y));
        check_rank(&vals, dim)?;
        &y * vecs.columns(0, dim)
    };
    let x_centered = linalg::column_centered(&x);
    x = x_centered;
    for mut col in x.column_iter_mut() {
        let sd = (col.norm_squared() / n as f64).sqrt();
        col /= sd;
    }
    linalg::fix_column_signs(&mut x);
    Ok(LatentState { x, standardized: true })
}

fn check_rank(vals: &nalgebra::DVector<f64>, dim: usize) -> Result<()> {
    let largest = vals[0].max(0.0).sqrt();
    let smallest = vals[dim - 1].max(0.0).sqrt();
    if !(smallest > 1e-12 * largest) {
        return Err(Error::DegenerateLatent { smallest, largest });
    }
    Ok(())
}

/// Gradient ascent on log p(Y | X, W, θ) + log N(X | 0, I) from `x`.
pub fn map_update_x(
    obs: &ObservationMatrix,
    x: &DMatrix<f64>,
    w: &FrequencyMatrix,
    state: &LikelihoodState,
    prior: &CoefficientPrior,
    budget: &OptimizerBudget,
    clamps: &ClampCounter,
) -> Result<AscentResult> {
    gradient_ascent(x.clone(), |x| latent_objective(obs, x, w, state, prior, clamps), budget)
}

/// X = √N · U_D from the SVD of the centered X̂, columns ordered by singular
/// value and sign-fixed so each column's largest-magnitude entry is positive.
/// The result has zero column means and identity (1/N) covariance.
pub fn standardize_x(x_hat: &DMatrix<f64>) -> Result<LatentState> {
    let (n, d) = x_hat.shape();
    if n <= d {
        return Err(Error::shape(format!("standardization needs N > D, got N = {n}, D = {d}")));
    }
    let centered = linalg::column_centered(x_hat);
    let (vals, vecs) = linalg::jacobi_eigen(&(centered.transpose() * &centered));
    let largest = vals[0].max(0.0).sqrt();
    let smallest = vals[d - 1].max(0.0).sqrt();
    if !(smallest >= 1e-12 * largest) || largest == 0.0 {
        return Err(Error::DegenerateLatent { smallest, largest });
    }
    let mut u = centered * vecs;
    let scale = (n as f64).sqrt();
    for (k, mut col) in u.column_iter_mut().enumerate() {
        col *= scale / vals[k].sqrt();
    }
    linalg::fix_column_signs(&mut u);
    Ok(LatentState { x: u, standardized: true })
}

/// Orthogonal Q minimizing ‖X Q − T‖_F.
pub fn procrustes_rotation(x: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = (x.transpose() * target).svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::Numeric("SVD failed in Procrustes alignment".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihoods::LikelihoodKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn standardized_covariance_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(40, 3, &mut rng) * DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.0, 1.0, 0.7, 0.1, 0.0, 0.2]);
        let s = standardize_x(&x).unwrap().x;
        assert!((linalg::sample_covariance(&s) - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        let again = standardize_x(&s).unwrap().x;
        assert!((again - &s).abs().max() < 1e-8);
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(30, 2, &mut rng) * DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.4, 0.6]);
        let base = standardize_x(&x).unwrap().x;
        for _ in 0..20 {
            let r = rotation(rng.random::<f64>() * 6.3);
            let out = standardize_x(&(&x * r)).unwrap().x;
            assert!((out - &base).abs().max() < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let col = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let x = DMatrix::from_fn(10, 2, |i, j| col[(i, 0)] * (j as f64 + 1.0));
        assert!(matches!(standardize_x(&x), Err(Error::DegenerateLatent { .. })));
    }

    #[test]
    fn pca_recovers_rank_d_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let factors = linalg::column_centered(&randn(25, 2, &mut rng));
        let loadings = randn(2, 8, &mut rng);
        let obs = ObservationMatrix::new(&factors * loadings, LikelihoodKind::Gaussian).unwrap();
        let x0 = pca_initialize(&obs, 2).unwrap().x;
        // Projecting the true factors on span(X₀) leaves no residual.
        let proj = &x0 * (x0.transpose() * &x0).try_inverse().unwrap() * x0.transpose();
        assert!((&proj * &factors - &factors).abs().max() < 1e-8);
        assert!((linalg::sample_covariance(&x0) - DMatrix::identity(2, 2)).abs().max() < 1e-10);
    }

    #[test]
    fn pca_duplicated_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = randn(12, 6, &mut rng);
        let doubled = DMatrix::from_fn(24, 6, |i, j| y[(i % 12, j)]);
        let x = pca_initialize(&ObservationMatrix::new(doubled, LikelihoodKind::Gaussian).unwrap(), 2).unwrap().x;
        for i in 0..12 {
            assert!((x.row(i) - x.row(i + 12)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn pca_rejects_large_dimension() {
        let obs = ObservationMatrix::new(DMatrix::zeros(5, 3), LikelihoodKind::Gaussian).unwrap();
        assert!(matches!(pca_initialize(&obs, 3), Err(Error::Config(_))));
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(20, 2, &mut rng);
        let r = rotation(0.8);
        let q = procrustes_rotation(&x, &(&x * &r)).unwrap();
        assert!((q - r).abs().max() < 1e-12);
    }
}
