//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Largest diagonal jitter (relative to the mean diagonal magnitude) added
/// before a Cholesky failure is reported.
pub const MAX_JITTER: f64 = 1e-8;

/// Cholesky factorization, retrying with escalating diagonal jitter up to
/// `max_jitter` (relative to the mean absolute diagonal, floored at 1).
pub fn cholesky_jittered(a: &DMatrix<f64>, max_jitter: f64) -> Result<Chol> {
    if !a.is_square() {
        return Err(Error::shape(format!("cholesky of {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("matrix has non-finite entries".into()));
    }
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let n = a.nrows().max(1);
    let scale = (a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(1.0);
    let mut jitter = 1e-14;
    while jitter <= max_jitter * (1.0 + 1e-9) {
        let mut b = a.clone();
        for i in 0..a.nrows() {
            b[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(b) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(format!(
        "cholesky failed for {}x{} matrix after jitter {:e}",
        a.nrows(),
        a.ncols(),
        max_jitter
    )))
}

pub fn cholesky(a: &DMatrix<f64>) -> Result<Chol> {
    cholesky_jittered(a, MAX_JITTER)
}

pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draw from N(mean, L Lᵀ) given the lower Cholesky factor `l`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vec(mean.len(), rng);
    mean + l.lower_triangle() * z
}

/// Draw from N(mean, scale² · P⁻¹) given the Cholesky factor of the precision P.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision: &Chol,
    scale: f64,
    rng: &mut R,
) -> DVector<f64> {
    let z = standard_normal_vec(mean.len(), rng);
    // P = L Lᵀ, x = L⁻ᵀ z has covariance P⁻¹.
    let x = precision
        .l_dirty()
        .lower_triangle()
        .tr_solve_lower_triangular(&z)
        .expect("cholesky factor has a positive diagonal");
    mean + x * scale
}

/// log N(x | mean, L Lᵀ).
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, chol: &Chol) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let u = chol
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det(chol) + u.norm_squared())
}

/// Σ ~ inverse-Wishart(Ψ, ν), via the Bartlett decomposition of the
/// corresponding Wishart(Ψ⁻¹, ν) precision.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(psi: &DMatrix<f64>, nu: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = psi.nrows();
    if nu <= d as f64 - 1.0 {
        return Err(Error::Parameter(format!("inverse-Wishart needs nu > D - 1, got nu = {nu}, D = {d}")));
    }
    let c = cholesky(psi)?.l();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let shape = 0.5 * (nu - i as f64);
        let chi2 = Gamma::new(shape, 2.0)
            .map_err(|e| Error::Parameter(format!("chi-square shape {shape}: {e}")))?
            .sample(rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // X = A Aᵀ ~ W(I, ν); Σ = C X⁻¹ Cᵀ = (C A⁻ᵀ)(C A⁻ᵀ)ᵀ.
    let ainv_t = a
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Numeric("singular Bartlett factor".into()))?
        .transpose();
    let b = &c * ainv_t;
    let sigma = &b * b.transpose();
    Ok(symmetrize(sigma))
}

pub fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Sample covariance with 1/N normalization.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.transpose() * &c / n
}

pub fn column_centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order. Rotations are skipped when an
/// off-diagonal entry is negligible relative to its diagonal pair, so an
/// already-diagonal input yields the identity basis, and near-ties keep their
/// input order.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let scale = (m[(p, p)].abs() * m[(q, q)].abs()).sqrt();
                if apq.abs() <= 1e-13 * scale || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = 0.5 * (2.0 * apq).atan2(m[(q, q)] - m[(p, p)]);
                let (s, c) = theta.sin_cos();
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let values: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    // Insertion sort, descending, swapping only on a clear gap.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 1..n {
        let mut j = i;
        while j > 0 && values[order[j]] > values[order[j - 1]] * (1.0 + 1e-10) + 1e-300 {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let vals = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &v.column(src));
    }
    (vals, vecs)
}

/// Flip column signs so the largest-magnitude entry of each column is positive.
pub fn fix_column_signs(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let mut best = 0.0_f64;
        for v in col.iter() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = cholesky(&a).unwrap();
        assert!(log_det(&c).is_finite());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let nu = 8.0;
        let n = 40_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            acc += sample_inverse_wishart(&psi, nu, &mut rng).unwrap();
        }
        acc /= n as f64;
        let expected = &psi / (nu - 2.0 - 1.0);
        assert!((acc - &expected).abs().max() < 0.02, "{expected}");
    }

    #[test]
    fn precision_sampling_has_inverse_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let chol = cholesky(&p).unwrap();
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let n = 100_000;
        let draws = DMatrix::from_fn(n, 2, |_, _| 0.0);
        let mut draws = draws;
        for i in 0..n {
            let x = sample_mvn_precision(&mean, &chol, 1.0, &mut rng);
            draws.set_row(i, &x.transpose());
        }
        let cov = sample_covariance(&draws);
        let expected = p.try_inverse().unwrap();
        assert!((cov - expected).abs().max() < 0.01);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = jacobi_eigen(&a);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - &a).abs().max() < 1e-12);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let (_, v) = jacobi_eigen(&diag);
        assert_eq!(v, DMatrix::identity(2, 2));
    }
}
