//! Independent reference computations: adaptive quadrature, textbook
//! conjugate updates, brute-force sums and finite differences. They share no
//! code paths with the samplers they check.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and |Kronrod − Gauss| on [a, b].
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration on a finite interval, bisecting
/// the interval with the largest error until the total error is below
/// `rel_tol`·|I| (or `abs_tol`).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= (rel_tol * total.abs()).max(abs_tol) {
            break;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// ∫_{−∞}^{∞} f via x = t / (1 − t²).
pub fn integrate_real_line<F: FnMut(f64) -> f64>(mut f: F, rel_tol: f64) -> f64 {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            if d <= 0.0 {
                return 0.0;
            }
            let x = t / d;
            let v = f(x) * (1.0 + t * t) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        rel_tol,
        0.0,
    )
}

/// ∫_0^∞ f via x = t / (1 − t).
pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, rel_tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - t;
            let v = f(t / d) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
        0.0,
    )
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn inverse_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x).exp()
}

/// log ∫∫ N(y | Φβ, σ²I) N(β | 0, σ² S₀⁻¹) IG(σ² | a₀, b₀) dβ dσ² for M = 2 by
/// nested adaptive quadrature. The integrand is rescaled by exp(−`shift`) to
/// keep it in floating range; pass a rough guess of the answer.
pub fn gaussian_marginal_quadrature(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    s0: &DMatrix<f64>,
    a0: f64,
    b0: f64,
    shift: f64,
    rel_tol: f64,
) -> f64 {
    assert_eq!(phi.ncols(), 2, "quadrature oracle is for two coefficients");
    let s0_det = s0[(0, 0)] * s0[(1, 1)] - s0[(0, 1)] * s0[(1, 0)];
    let n = y.len() as f64;
    let joint = |b1: f64, b2: f64, s2: f64| -> f64 {
        let mut sse = 0.0;
        for i in 0..y.len() {
            let r = y[i] - phi[(i, 0)] * b1 - phi[(i, 1)] * b2;
            sse += r * r;
        }
        let quad = s0[(0, 0)] * b1 * b1 + (s0[(0, 1)] + s0[(1, 0)]) * b1 * b2 + s0[(1, 1)] * b2 * b2;
        let log_lik = -0.5 * n * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * sse / s2;
        let log_prior = -(2.0 * std::f64::consts::PI * s2).ln() + 0.5 * s0_det.ln() - 0.5 * quad / s2;
        (log_lik + log_prior - shift).exp() * inverse_gamma_pdf(s2, a0, b0)
    };
    let value = integrate_half_line(
        |s2| {
            if s2 <= 0.0 {
                return 0.0;
            }
            let sd = s2.sqrt();
            // β scales with σ, so integrate over β / σ.
            integrate_real_line(
                |u1| integrate_real_line(|u2| joint(u1 * sd, u2 * sd, s2) * s2, rel_tol * 0.1),
                rel_tol * 0.1,
            )
        },
        rel_tol,
    );
    value.ln() + shift
}

/// Textbook NIW posterior (κ_n, ν_n, μ_n, Λ_n) with the centered scatter
/// matrix and the κ₀n/κ_n (ȳ − μ₀)(ȳ − μ₀)ᵀ shrinkage term.
pub fn niw_textbook(
    mu0: &DVector<f64>,
    kappa0: f64,
    nu0: f64,
    lambda0: &DMatrix<f64>,
    data: &[DVector<f64>],
) -> (DVector<f64>, f64, f64, DMatrix<f64>) {
    let n = data.len() as f64;
    let d = mu0.len();
    if data.is_empty() {
        return (mu0.clone(), kappa0, nu0, lambda0.clone());
    }
    let mut ybar = DVector::zeros(d);
    for y in data {
        ybar += y;
    }
    ybar /= n;
    let mut scatter = DMatrix::zeros(d, d);
    for y in data {
        let c = y - &ybar;
        scatter += &c * c.transpose();
    }
    let kappa_n = kappa0 + n;
    let mu_n = (mu0 * kappa0 + &ybar * n) / kappa_n;
    let dev = &ybar - mu0;
    let lambda_n = lambda0 + scatter + &dev * dev.transpose() * (kappa0 * n / kappa_n);
    (mu_n, kappa_n, nu0 + n, lambda_n)
}

/// D = 1 NIW predictive density at w by 2-D quadrature over (μ, σ²):
/// ∫∫ N(w | μ, σ²) N(μ | m, σ²/λ) IG(σ² | ν/2, ψ/2) dμ dσ².
pub fn niw_predictive_quadrature_1d(w: f64, m: f64, lambda: f64, nu: f64, psi: f64) -> f64 {
    integrate_half_line(
        |s2| {
            if s2 <= 0.0 {
                return 0.0;
            }
            let inner = integrate_real_line(|mu| normal_pdf(w, mu, s2) * normal_pdf(mu, m, s2 / lambda), 1e-12);
            inner * inverse_gamma_pdf(s2, 0.5 * nu, 0.5 * psi)
        },
        1e-11,
    )
}

/// Label probabilities for frequency m of a D = 1 state, by direct
/// evaluation: n_{−m,k} N(w_m | μ_k, σ_k²) for live clusters and α × the
/// quadrature predictive for a new one. The last entry is the new cluster.
#[allow(clippy::too_many_arguments)]
pub fn assignment_probabilities_1d(
    w: &[f64],
    z: &[usize],
    means: &[f64],
    vars: &[f64],
    alpha: f64,
    m: usize,
    prior: (f64, f64, f64, f64),
) -> Vec<f64> {
    let (m0, lambda0, nu0, psi0) = prior;
    let mut weights = Vec::new();
    for k in 0..means.len() {
        let count = (0..w.len()).filter(|&i| i != m && z[i] == k).count() as f64;
        weights.push(count * normal_pdf(w[m], means[k], vars[k]));
    }
    weights.push(alpha * niw_predictive_quadrature_1d(w[m], m0, lambda0, nu0, psi0));
    let total: f64 = weights.iter().sum();
    weights.iter().map(|v| v / total).collect()
}

/// E[α′] for the Escobar–West update by quadrature over η ~ Beta(α + 1, n).
pub fn concentration_mean_quadrature(alpha: f64, k: usize, n: usize, a: f64, b: f64) -> f64 {
    let kf = k as f64;
    let nf = n as f64;
    let log_beta_norm = ln_gamma(alpha + 1.0 + nf) - ln_gamma(alpha + 1.0) - ln_gamma(nf);
    integrate(
        |eta| {
            if eta <= 0.0 || eta >= 1.0 {
                return 0.0;
            }
            let dens = (log_beta_norm + alpha * eta.ln() + (nf - 1.0) * (-eta).ln_1p()).exp();
            let rate = b - eta.ln();
            let odds = (a + kf - 1.0) / (nf * rate);
            let pi = odds / (1.0 + odds);
            dens * (pi * (a + kf) + (1.0 - pi) * (a + kf - 1.0)) / rate
        },
        0.0,
        1.0,
        1e-12,
        0.0,
    )
}

/// Mean of the weighted-gamma series truncated at `terms`.
pub fn pg_series_mean(b: f64, c: f64, terms: usize) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    (1..=terms).map(|k| {
        let kk = k as f64 - 0.5;
        b / (2.0 * pi2 * (kk * kk + c * c / (4.0 * pi2)))
    })
    .sum()
}

/// Σ_{t=1}^{y} r / (r + t − 1).
pub fn crt_mean(y: u64, r: f64) -> f64 {
    (1..=y).map(|t| r / (r + t as f64 - 1.0)).sum()
}

/// E[K] for the CRP with `n` items: Σ_{i=1}^{n} α / (α + i − 1).
pub fn crp_expected_clusters(n: usize, alpha: f64) -> f64 {
    (1..=n).map(|i| alpha / (alpha + i as f64 - 1.0)).sum()
}

/// Σ_{n,j} [y ψ − e^ψ − log y!] with ψ_nj = Σ_m Φ_nm B_mj, term by term.
pub fn poisson_naive(y: &DMatrix<f64>, phi: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for n in 0..y.nrows() {
        for j in 0..y.ncols() {
            let mut psi = 0.0;
            for m in 0..phi.ncols() {
                psi += phi[(n, m)] * b[(m, j)];
            }
            let mut log_fact = 0.0;
            let mut k = 2.0;
            while k <= y[(n, j)] {
                log_fact += f64::ln(k);
                k += 1.0;
            }
            total += y[(n, j)] * psi - psi.exp() - log_fact;
        }
    }
    total
}

/// Central finite-difference gradient with step h.
pub fn finite_difference<F: FnMut(&DMatrix<f64>) -> f64>(mut f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// max_i |a_i − b_i| / max(|b_i|, floor).
pub fn max_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(floor)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_basics() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 0.0);
        assert!((v - 2.0).abs() < 1e-12);
        let g = integrate_real_line(|x| (-x * x / 2.0).exp(), 1e-12);
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
        let e = integrate_half_line(|x| (-x).exp(), 1e-12);
        assert!((e - 1.0).abs() < 1e-10);
    }

    #[test]
    fn student_t_predictive_by_quadrature() {
        // Closed form: t_{ν}(w | m, ψ(λ+1)/(λν)).
        let (w, m, lambda, nu, psi) = (0.7, 0.2, 1.5, 4.0, 2.0);
        let scale2: f64 = psi * (lambda + 1.0) / (lambda * nu);
        let z2 = (w - m) * (w - m) / scale2;
        let closed = (ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI * scale2).ln()
            - 0.5 * (nu + 1.0) * (z2 / nu).ln_1p())
        .exp();
        let quad = niw_predictive_quadrature_1d(w, m, lambda, nu, psi);
        assert!((quad - closed).abs() < 1e-10 * closed, "{quad} vs {closed}");
    }

    #[test]
    fn series_and_count_means() {
        assert!((pg_series_mean(1.0, 0.0, 100_000) - 0.25).abs() < 1e-5);
        assert_eq!(crt_mean(1, 3.0), 1.0);
        assert!((crp_expected_clusters(1, 2.0) - 1.0).abs() < 1e-15);
    }
}
