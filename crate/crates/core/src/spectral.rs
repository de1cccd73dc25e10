//! Dirichlet-process Gaussian mixture over the spectral frequencies.
//!
//! Each frequency row `w_m` carries a cluster label `z_m`; clusters hold a
//! Gaussian `(μ_k, Σ_k)` with a normal-inverse-Wishart prior. The updates here
//! are: label resampling (collapsed new-cluster weight via the NIW predictive),
//! conjugate component draws, Metropolis–Hastings refreshes of `w_m` with the
//! mixture prior as proposal, and the Escobar–West concentration update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::features::FrequencyMatrix;
use crate::linalg::{self, Chol};

/// Normal-inverse-Wishart hyperparameters (μ₀, λ₀, ν₀, Ψ₀).
#[derive(Clone, Debug, PartialEq)]
pub struct NiwHyper {
    pub mean: DVector<f64>,
    pub lambda: f64,
    pub nu: f64,
    pub psi: DMatrix<f64>,
}

impl NiwHyper {
    /// μ₀ = 0, λ₀ = 1, ν₀ = D + 2, Ψ₀ = I.
    pub fn default_for(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            lambda: 1.0,
            nu: dim as f64 + 2.0,
            psi: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.psi.nrows() != d || self.psi.ncols() != d {
            return Err(Error::shape(format!("NIW scale is {}x{}, expected {d}x{d}", self.psi.nrows(), self.psi.ncols())));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter(format!("NIW lambda must be positive, got {}", self.lambda)));
        }
        if !(self.nu > d as f64 - 1.0) {
            return Err(Error::Parameter(format!("NIW nu must exceed D - 1 = {}, got {}", d as f64 - 1.0, self.nu)));
        }
        linalg::cholesky_jittered(&self.psi, 0.0)?;
        Ok(())
    }

    /// Parameters of the prior itself, i.e. the no-data posterior.
    pub fn as_params(&self) -> NiwParams {
        NiwParams { mean: self.mean.clone(), lambda: self.lambda, nu: self.nu, psi: self.psi.clone() }
    }
}

/// NIW parameters (posterior or prior).
#[derive(Clone, Debug, PartialEq)]
pub struct NiwParams {
    pub mean: DVector<f64>,
    pub lambda: f64,
    pub nu: f64,
    pub psi: DMatrix<f64>,
}

/// Conjugate NIW update from cluster members, via sufficient statistics:
/// Ψₖ = Ψ₀ + Σ w wᵀ + λ₀ μ₀μ₀ᵀ − λₖ mₖmₖᵀ.
pub fn niw_posterior(hyper: &NiwHyper, members: &[DVector<f64>]) -> NiwParams {
    let d = hyper.dim();
    let n = members.len() as f64;
    if members.is_empty() {
        return hyper.as_params();
    }
    let mut sum = DVector::<f64>::zeros(d);
    let mut outer = DMatrix::<f64>::zeros(d, d);
    for w in members {
        sum += w;
        outer += w * w.transpose();
    }
    let lambda = hyper.lambda + n;
    let nu = hyper.nu + n;
    let mean = (&hyper.mean * hyper.lambda + &sum) / lambda;
    let psi = &hyper.psi + outer + &hyper.mean * hyper.mean.transpose() * hyper.lambda - &mean * mean.transpose() * lambda;
    NiwParams { mean, lambda, nu, psi: linalg::symmetrize(psi) }
}

/// Σ ~ W⁻¹(Ψ, ν), then μ ~ N(m, Σ/λ).
pub fn sample_niw<R: Rng + ?Sized>(params: &NiwParams, rng: &mut R) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let cov = linalg::sample_inverse_wishart(&params.psi, params.nu, rng)?;
    let chol = linalg::cholesky(&(&cov / params.lambda))?;
    let mean = linalg::sample_mvn(&params.mean, &chol.l(), rng);
    Ok((mean, cov))
}

/// log density of the NIW predictive (multivariate Student-t) at `w`.
pub fn niw_log_predictive(params: &NiwParams, w: &DVector<f64>) -> Result<f64> {
    let d = params.mean.len() as f64;
    let dof = params.nu - d + 1.0;
    let scale = &params.psi * ((params.lambda + 1.0) / (params.lambda * dof));
    let chol = linalg::cholesky(&scale)?;
    let diff = w - &params.mean;
    let u = chol
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Numeric("singular predictive scale".into()))?;
    let maha = u.norm_squared();
    Ok(ln_gamma(0.5 * (dof + d)) - ln_gamma(0.5 * dof) - 0.5 * d * (dof * std::f64::consts::PI).ln()
        - 0.5 * linalg::log_det(&chol)
        - 0.5 * (dof + d) * (maha / dof).ln_1p())
}

/// One Gaussian mixture component with its cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct Component {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Chol,
}

impl Component {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::shape("component covariance does not match its mean".to_string()));
        }
        let chol = linalg::cholesky(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn log_density(&self, w: &DVector<f64>) -> f64 {
        linalg::mvn_log_density(w, &self.mean, &self.chol)
    }

    pub fn chol_lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        linalg::sample_mvn(&self.mean, &self.chol.l(), rng)
    }
}

/// Frequencies W, labels z, live components and concentration α.
#[derive(Clone, Debug)]
pub struct SpectralState {
    w: FrequencyMatrix,
    z: Vec<usize>,
    components: Vec<Component>,
    alpha: f64,
}

impl SpectralState {
    pub fn new(w: FrequencyMatrix, z: Vec<usize>, components: Vec<Component>, alpha: f64) -> Result<Self> {
        if z.len() != w.num_frequencies() {
            return Err(Error::shape(format!("{} labels for {} frequencies", z.len(), w.num_frequencies())));
        }
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("concentration must be positive, got {alpha}")));
        }
        for (m, &k) in z.iter().enumerate() {
            if k >= components.len() {
                return Err(Error::Parameter(format!("frequency {m} assigned to missing component {k}")));
            }
        }
        for c in &components {
            if c.mean.len() != w.dim() {
                return Err(Error::shape("component dimension differs from frequency dimension".to_string()));
            }
        }
        let mut state = Self { w, z, components, alpha };
        state.compact();
        Ok(state)
    }

    pub fn frequencies(&self) -> &FrequencyMatrix {
        &self.w
    }

    pub fn set_frequency(&mut self, m: usize, w: &DVector<f64>) {
        self.w.set_row(m, w);
    }

    pub fn assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn num_clusters(&self) -> usize {
        self.components.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.components.len()];
        for &k in &self.z {
            counts[k] += 1;
        }
        counts
    }

    pub fn members(&self, k: usize) -> Vec<DVector<f64>> {
        self.z
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(m, _)| self.w.row(m))
            .collect()
    }

    pub fn set_component(&mut self, k: usize, component: Component) {
        self.components[k] = component;
    }

    /// Drop empty components and relabel contiguously, preserving order.
    pub fn compact(&mut self) {
        let counts = self.counts();
        if counts.iter().all(|&c| c > 0) {
            return;
        }
        let mut remap = vec![usize::MAX; counts.len()];
        let mut kept = Vec::with_capacity(counts.len());
        for (k, comp) in std::mem::take(&mut self.components).into_iter().enumerate() {
            if counts[k] > 0 {
                remap[k] = kept.len();
                kept.push(comp);
            }
        }
        self.components = kept;
        for z in &mut self.z {
            *z = remap[*z];
        }
    }
}

/// Cluster-conditional term used when resampling labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterLikelihood {
    /// N(w_m | μ_k, Σ_k) for existing clusters, NIW predictive for a new one.
    Gaussian,
    /// Constant term: labels follow the CRP prior alone.
    Constant,
}

/// Normalized label distribution for one frequency. `existing[k]` is zero
/// for a cluster that would be empty without `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentDistribution {
    pub existing: Vec<f64>,
    pub new_cluster: f64,
}

pub fn assignment_distribution(
    m: usize,
    state: &SpectralState,
    hyper: &NiwHyper,
    likelihood: ClusterLikelihood,
) -> Result<AssignmentDistribution> {
    let mut counts = state.counts();
    counts[state.z[m]] -= 1;
    let wm = state.w.row(m);
    let mut logw = Vec::with_capacity(counts.len() + 1);
    for (k, &n) in counts.iter().enumerate() {
        if n == 0 {
            logw.push(f64::NEG_INFINITY);
            continue;
        }
        let term = match likelihood {
            ClusterLikelihood::Gaussian => state.components[k].log_density(&wm),
            ClusterLikelihood::Constant => 0.0,
        };
        logw.push((n as f64).ln() + term);
    }
    let new_term = match likelihood {
        ClusterLikelihood::Gaussian => niw_log_predictive(&hyper.as_params(), &wm)?,
        ClusterLikelihood::Constant => 0.0,
    };
    logw.push(state.alpha.ln() + new_term);
    if logw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numeric(format!("non-finite assignment weight for frequency {m}")));
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(format!("all assignment weights vanish for frequency {m}")));
    }
    let mut probs: Vec<f64> = logw.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    let new_cluster = probs.pop().unwrap_or(0.0);
    Ok(AssignmentDistribution { existing: probs, new_cluster })
}

/// Resample `z_m`. A new cluster gets (μ, Σ) drawn from the NIW posterior
/// given `w_m` alone; a cluster left empty is removed. Returns the new label.
pub fn sample_assignment<R: Rng + ?Sized>(
    m: usize,
    state: &mut SpectralState,
    hyper: &NiwHyper,
    likelihood: ClusterLikelihood,
    rng: &mut R,
) -> Result<usize> {
    let dist = assignment_distribution(m, state, hyper, likelihood)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut choice = None;
    for (k, p) in dist.existing.iter().enumerate() {
        acc += p;
        if u < acc {
            choice = Some(k);
            break;
        }
    }
    let old = state.z[m];
    match choice {
        Some(k) => state.z[m] = k,
        None => {
            let post = niw_posterior(hyper, &[state.w.row(m)]);
            let (mean, cov) = sample_niw(&post, rng)?;
            state.components.push(Component::new(mean, cov)?);
            state.z[m] = state.components.len() - 1;
        }
    }
    if !state.z.contains(&old) {
        state.components.remove(old);
        for z in &mut state.z {
            if *z > old {
                *z -= 1;
            }
        }
    }
    Ok(state.z[m])
}

/// One in-order sweep of label updates over all frequencies.
pub fn sweep_assignments<R: Rng + ?Sized>(
    state: &mut SpectralState,
    hyper: &NiwHyper,
    likelihood: ClusterLikelihood,
    rng: &mut R,
) -> Result<()> {
    for m in 0..state.z.len() {
        sample_assignment(m, state, hyper, likelihood, rng)?;
    }
    Ok(())
}

/// Conjugate draw of (μ_k, Σ_k) given the members of cluster `k`.
pub fn sample_component_posterior<R: Rng + ?Sized>(
    k: usize,
    state: &SpectralState,
    hyper: &NiwHyper,
    rng: &mut R,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let members = state.members(k);
    if members.is_empty() {
        return Err(Error::Parameter(format!("component {k} has no members")));
    }
    sample_niw(&niw_posterior(hyper, &members), rng)
}

pub fn update_components<R: Rng + ?Sized>(state: &mut SpectralState, hyper: &NiwHyper, rng: &mut R) -> Result<()> {
    for k in 0..state.num_clusters() {
        let (mean, cov) = sample_component_posterior(k, state, hyper, rng)?;
        state.set_component(k, Component::new(mean, cov)?);
    }
    Ok(())
}

/// Data log-likelihood as a function of one frequency row, with caching left
/// to the implementor.
pub trait FrequencyLikelihood {
    /// log p(Y | X, W with row `m` replaced by `proposal`, θ).
    fn propose(&mut self, w: &FrequencyMatrix, m: usize, proposal: &DVector<f64>) -> Result<f64>;
    /// The most recent proposal was accepted.
    fn accept(&mut self);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    /// Log-likelihood of the state after the step.
    pub log_likelihood: f64,
    /// The proposal produced a non-finite likelihood and was rejected.
    pub non_finite: bool,
}

/// Accept/reject given log-likelihoods of the current and proposed rows and a
/// uniform draw. The prior terms cancel because the proposal is the prior.
pub fn mh_decision(current: f64, proposed: f64, uniform: f64) -> MhOutcome {
    if !proposed.is_finite() {
        return MhOutcome { accepted: false, log_likelihood: current, non_finite: true };
    }
    let log_ratio = proposed - current;
    let accepted = log_ratio >= 0.0 || uniform.ln() < log_ratio;
    MhOutcome { accepted, log_likelihood: if accepted { proposed } else { current }, non_finite: false }
}

/// Metropolis–Hastings refresh of `w_m` with proposal N(μ_{z_m}, Σ_{z_m}).
pub fn mh_update_frequency<R, L>(
    m: usize,
    state: &mut SpectralState,
    current_log_likelihood: f64,
    likelihood: &mut L,
    rng: &mut R,
) -> Result<MhOutcome>
where
    R: Rng + ?Sized,
    L: FrequencyLikelihood + ?Sized,
{
    let proposal = state.components[state.z[m]].sample(rng);
    mh_step_with_proposal(m, state, current_log_likelihood, &proposal, likelihood, rng.random())
}

pub fn mh_step_with_proposal<L: FrequencyLikelihood + ?Sized>(
    m: usize,
    state: &mut SpectralState,
    current_log_likelihood: f64,
    proposal: &DVector<f64>,
    likelihood: &mut L,
    uniform: f64,
) -> Result<MhOutcome> {
    let proposed = match likelihood.propose(&state.w, m, proposal) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite(_)) | Err(Error::Numeric(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let outcome = mh_decision(current_log_likelihood, proposed, uniform);
    if outcome.accepted {
        state.set_frequency(m, proposal);
        likelihood.accept();
    }
    Ok(outcome)
}

/// Escobar–West mixture weight π_η given the auxiliary η.
pub fn concentration_mixture_weight(eta: f64, num_clusters: usize, num_items: usize, a: f64, b: f64) -> f64 {
    let k = num_clusters as f64;
    let odds = (a + k - 1.0) / (num_items as f64 * (b - eta.ln()));
    odds / (1.0 + odds)
}

/// Escobar–West update of α with `num_items` CRP-distributed items.
pub fn sample_concentration<R: Rng + ?Sized>(
    alpha: f64,
    num_clusters: usize,
    num_items: usize,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<f64> {
    if num_clusters == 0 || num_items == 0 {
        return Err(Error::Parameter("concentration update needs at least one cluster".into()));
    }
    let eta = Beta::new(alpha + 1.0, num_items as f64)
        .map_err(|e| Error::Parameter(format!("beta({}, {num_items}): {e}", alpha + 1.0)))?
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let pi = concentration_mixture_weight(eta, num_clusters, num_items, a, b);
    let rate = b - eta.ln();
    let k = num_clusters as f64;
    let shape = if rng.random::<f64>() < pi { a + k } else { a + k - 1.0 };
    let draw = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("gamma({shape}, rate {rate}): {e}")))?
        .sample(rng);
    Ok(draw.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_state(alpha: f64) -> SpectralState {
        let w = FrequencyMatrix::new(DMatrix::from_row_slice(3, 1, &[0.2, -0.5, 1.4])).unwrap();
        let c0 = Component::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let c1 = Component::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 0.5)).unwrap();
        SpectralState::new(w, vec![0, 0, 1], vec![c0, c1], alpha).unwrap()
    }

    #[test]
    fn tiny_alpha_keeps_the_single_cluster() {
        let w = FrequencyMatrix::new(DMatrix::from_row_slice(2, 1, &[0.1, 0.3])).unwrap();
        let c = Component::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let state = SpectralState::new(w, vec![0, 0], vec![c], 1e-300).unwrap();
        let d = assignment_distribution(0, &state, &NiwHyper::default_for(1), ClusterLikelihood::Gaussian).unwrap();
        assert!((d.existing[0] - 1.0).abs() < 1e-12);
        assert!(d.new_cluster < 1e-250);
    }

    #[test]
    fn symmetric_clusters_get_equal_weight() {
        let w = FrequencyMatrix::new(DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 1.0, 2.0, 2.0])).unwrap();
        let c = Component::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let state = SpectralState::new(w, vec![2, 0, 0, 1, 1], vec![c.clone(), c.clone(), c], 1.0).unwrap();
        let d = assignment_distribution(0, &state, &NiwHyper::default_for(1), ClusterLikelihood::Gaussian).unwrap();
        assert!((d.existing[0] - d.existing[1]).abs() < 1e-15);
        assert_eq!(d.existing[2], 0.0);
        let total: f64 = d.existing.iter().sum::<f64>() + d.new_cluster;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_removal_compacts_labels() {
        let mut state = toy_state(1e-300);
        let before: Vec<_> = (0..3).map(|m| state.w.row(m)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Frequency 2 is a singleton; with α ≈ 0 it must join cluster 0.
        let label = sample_assignment(2, &mut state, &NiwHyper::default_for(1), ClusterLikelihood::Gaussian, &mut rng).unwrap();
        assert_eq!(label, 0);
        assert_eq!(state.num_clusters(), 1);
        assert_eq!(state.assignments(), &[0, 0, 0]);
        for (m, w) in before.iter().enumerate() {
            assert_eq!(&state.w.row(m), w);
        }
    }

    #[test]
    fn posterior_of_single_member_at_prior_mean() {
        let hyper = NiwHyper { mean: DVector::from_vec(vec![0.5, -1.0]), lambda: 1.0, nu: 4.0, psi: DMatrix::identity(2, 2) };
        let p = niw_posterior(&hyper, &[hyper.mean.clone()]);
        assert_eq!(p.mean, hyper.mean);
        assert_eq!(p.lambda, 2.0);
        assert_eq!(p.nu, 5.0);
        assert!((p.psi - &hyper.psi).abs().max() < 1e-15);
        assert_eq!(niw_posterior(&hyper, &[]), hyper.as_params());
    }

    #[test]
    fn empty_component_is_rejected() {
        let state = toy_state(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_component_posterior(5, &state, &NiwHyper::default_for(1), &mut rng).is_err());
    }

    #[test]
    fn mh_decisions() {
        let same = mh_decision(-3.0, -3.0, 0.999_999);
        assert!(same.accepted);
        let better = mh_decision(-3.0, -1.0, 0.999_999);
        assert!(better.accepted);
        let nan = mh_decision(-3.0, f64::NAN, 0.0);
        assert!(!nan.accepted && nan.non_finite);
        let worse = mh_decision(0.0, -(2.0f64).ln(), 0.6);
        assert!(!worse.accepted);
    }

    #[test]
    fn mixture_weight_is_a_probability() {
        for &eta in &[1e-12, 0.01, 0.5, 0.999_999] {
            for k in 1..10 {
                let pi = concentration_mixture_weight(eta, k, 50, 1.0, 1.0);
                assert!((0.0..=1.0).contains(&pi));
            }
        }
    }

    #[test]
    fn huge_rate_drives_alpha_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mean: f64 = (0..1000)
            .map(|_| sample_concentration(1.0, 3, 50, 1.0, 1e9, &mut rng).unwrap())
            .sum::<f64>()
            / 1000.0;
        assert!(mean < 1e-7);
    }
}
