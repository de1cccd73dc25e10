//! Random Fourier feature map and the kernel estimate it induces.
//!
//! Features are laid out as interleaved `(sin, cos)` pairs, one pair per
//! frequency row, scaled by `sqrt(2/M)` so every feature row has unit norm.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::SpectralState;

/// Spectral frequencies, one row per sin/cos pair: shape (M/2) × D.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMatrix(DMatrix<f64>);

impl FrequencyMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::shape(format!("frequency matrix must be non-empty, got {}x{}", w.nrows(), w.ncols())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("frequency matrix has non-finite entries".into()));
        }
        Ok(Self(w))
    }

    /// Number of features M (twice the number of frequencies).
    pub fn num_features(&self) -> usize {
        2 * self.0.nrows()
    }

    pub fn num_frequencies(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, m: usize) -> DVector<f64> {
        self.0.row(m).transpose()
    }

    pub fn set_row(&mut self, m: usize, w: &DVector<f64>) {
        self.0.set_row(m, &w.transpose());
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Feature matrix Φ of shape N × M with the `sqrt(2/M)` scale applied.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Recompute the sin/cos pair of frequency `m` after that row of W changed.
    pub fn refresh_pair(&mut self, x: &DMatrix<f64>, w: &FrequencyMatrix, m: usize) {
        let scale = (2.0 / w.num_features() as f64).sqrt();
        let wm = w.row(m);
        for n in 0..x.nrows() {
            let proj = x.row(n).dot(&wm.transpose());
            let (s, c) = proj.sin_cos();
            self.0[(n, 2 * m)] = scale * s;
            self.0[(n, 2 * m + 1)] = scale * c;
        }
    }

    /// Wrap a matrix without checking the unit row-norm property.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

pub fn feature_map(x: &DMatrix<f64>, w: &FrequencyMatrix) -> Result<FeatureMatrix> {
    if x.ncols() != w.dim() {
        return Err(Error::shape(format!(
            "latent dimension {} does not match frequency dimension {}",
            x.ncols(),
            w.dim()
        )));
    }
    let half = w.num_frequencies();
    let scale = (2.0 / w.num_features() as f64).sqrt();
    let proj = x * w.as_matrix().transpose();
    let mut phi = DMatrix::<f64>::zeros(x.nrows(), 2 * half);
    for n in 0..x.nrows() {
        for m in 0..half {
            let (s, c) = proj[(n, m)].sin_cos();
            phi[(n, 2 * m)] = scale * s;
            phi[(n, 2 * m + 1)] = scale * c;
        }
    }
    Ok(FeatureMatrix(phi))
}

/// Monte Carlo kernel estimate Φ_a Φ_bᵀ.
pub fn approximate_kernel(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!("feature widths differ: {} vs {}", a.ncols(), b.ncols())));
    }
    Ok(a.as_matrix() * b.as_matrix().transpose())
}

/// Exact RBF kernel exp(−‖x − x′‖² / (2ℓ²)).
pub fn rbf_kernel(xa: &DMatrix<f64>, xb: &DMatrix<f64>, lengthscale: f64) -> DMatrix<f64> {
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    DMatrix::from_fn(xa.nrows(), xb.nrows(), |i, j| {
        let d2 = (xa.row(i) - xb.row(j)).norm_squared();
        (-d2 * inv).exp()
    })
}

/// Frequencies for the RBF kernel: w ~ N(0, ℓ⁻² I).
pub fn sample_rbf_frequencies<R: Rng + ?Sized>(
    num_frequencies: usize,
    dim: usize,
    lengthscale: f64,
    rng: &mut R,
) -> Result<FrequencyMatrix> {
    if !(lengthscale > 0.0) {
        return Err(Error::Parameter(format!("lengthscale must be positive, got {lengthscale}")));
    }
    let w = DMatrix::from_fn(num_frequencies, dim, |_, _| rng.sample::<f64, _>(StandardNormal) / lengthscale);
    FrequencyMatrix::new(w)
}

/// Draw every frequency row from its assigned mixture component.
pub fn sample_frequencies_from_mixture<R: Rng + ?Sized>(spectral: &SpectralState, rng: &mut R) -> Result<FrequencyMatrix> {
    let d = spectral.dim();
    let mut w = DMatrix::<f64>::zeros(spectral.assignments().len(), d);
    for (m, &k) in spectral.assignments().iter().enumerate() {
        let comp = spectral
            .components()
            .get(k)
            .ok_or_else(|| Error::Parameter(format!("frequency {m} assigned to missing component {k}")))?;
        let draw = linalg::sample_mvn(&comp.mean, &comp.chol_lower(), rng);
        w.set_row(m, &draw.transpose());
    }
    FrequencyMatrix::new(w)
}

/// Chain rule from ∂L/∂Φ (N × M) to ∂L/∂X (N × D).
///
/// ∂Φ[n,2m]/∂x_n = s·cos(w_mᵀx_n)·w_m and ∂Φ[n,2m+1]/∂x_n = −s·sin(w_mᵀx_n)·w_m,
/// which are recovered from Φ itself.
pub fn latent_gradient(phi: &FeatureMatrix, w: &FrequencyMatrix, d_phi: &DMatrix<f64>) -> DMatrix<f64> {
    let p = phi.as_matrix();
    let half = w.num_frequencies();
    let g = DMatrix::from_fn(p.nrows(), half, |n, m| {
        d_phi[(n, 2 * m)] * p[(n, 2 * m + 1)] - d_phi[(n, 2 * m + 1)] * p[(n, 2 * m)]
    });
    g * w.as_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_input_gives_cos_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = sample_rbf_frequencies(3, 2, 1.0, &mut rng).unwrap();
        let phi = feature_map(&DMatrix::zeros(1, 2), &w).unwrap();
        let s = (2.0_f64 / 6.0).sqrt();
        let expected = [0.0, s, 0.0, s, 0.0, s];
        for (a, b) in phi.as_matrix().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn quarter_turn_single_frequency() {
        let w = FrequencyMatrix::new(DMatrix::from_element(1, 1, FRAC_PI_2)).unwrap();
        let phi = feature_map(&DMatrix::from_element(1, 1, 1.0), &w).unwrap();
        assert_abs_diff_eq!(phi.as_matrix()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phi.as_matrix()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let w = FrequencyMatrix::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(feature_map(&DMatrix::zeros(4, 2), &w), Err(Error::Shape(_))));
        let a = feature_map(&DMatrix::zeros(2, 3), &w).unwrap();
        let w2 = FrequencyMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let b = feature_map(&DMatrix::zeros(2, 3), &w2).unwrap();
        assert!(approximate_kernel(&a, &b).is_err());
        assert!(FrequencyMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn self_kernel_is_symmetric_with_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = sample_rbf_frequencies(100, 2, 1.0, &mut rng).unwrap();
        let x = DMatrix::from_fn(3, 2, |i, j| (i as f64) * 0.7 - j as f64);
        let phi = feature_map(&x, &w).unwrap();
        let k = approximate_kernel(&phi, &phi).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(k[(i, i)], 1.0, epsilon = 1e-12);
            for j in 0..3 {
                assert_abs_diff_eq!(k[(i, j)], k[(j, i)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn refresh_pair_matches_full_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = sample_rbf_frequencies(4, 2, 1.0, &mut rng).unwrap();
        let x = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 * 0.3);
        let mut phi = feature_map(&x, &w).unwrap();
        w.set_row(2, &DVector::from_vec(vec![0.4, -1.3]));
        phi.refresh_pair(&x, &w, 2);
        let full = feature_map(&x, &w).unwrap();
        assert!((phi.as_matrix() - full.as_matrix()).abs().max() < 1e-15);
    }
}
