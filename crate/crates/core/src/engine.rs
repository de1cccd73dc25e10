//! The Gibbs/MAP sampler: initialization, one sweep over all conditionals,
//! and full runs recorded into a posterior trace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result, Stage};
use crate::features::{feature_map, sample_frequencies_from_mixture, FrequencyMatrix};
use crate::latent::{map_update_x, pca_initialize, procrustes_rotation, standardize_x, LatentState};
use crate::likelihoods::{
    model_log_likelihood_phi, multinomial_pg_beta, pg_gibbs_beta, poisson_map_beta, predict_mean, sample_dispersion,
    sample_dispersion_rate, sigmoid, ClampCounter, CoefficientPrior, ColumnData, ExplicitFrequencyLikelihood,
    LikelihoodKind, LikelihoodState, MarginalFrequencyLikelihood, MarginalStats,
};
use crate::linalg;
use crate::optim::OptimizerBudget;
use crate::rng::{RngStreams, SamplerRng};
use crate::spectral::{
    mh_update_frequency, sample_concentration, sample_niw, sweep_assignments, update_components, ClusterLikelihood,
    Component, FrequencyLikelihood, NiwHyper, SpectralState,
};

/// Stages of one iteration that can be switched off for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageToggles {
    pub assignments: bool,
    pub components: bool,
    pub frequency_mh: bool,
    pub concentration: bool,
    pub likelihood: bool,
    pub latent_map: bool,
    pub standardize: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            assignments: true,
            components: true,
            frequency_mh: true,
            concentration: true,
            likelihood: true,
            latent_map: true,
            standardize: true,
        }
    }
}

/// How the standardized X is oriented after each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alignment {
    /// Singular-vector basis as returned by [`standardize_x`].
    SingularVectors,
    /// Singular-vector basis rotated onto the MAP estimate it came from.
    Procrustes,
}

impl Alignment {
    pub fn name(self) -> &'static str {
        match self {
            Alignment::SingularVectors => "svd",
            Alignment::Procrustes => "procrustes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "svd" => Ok(Alignment::SingularVectors),
            "procrustes" => Ok(Alignment::Procrustes),
            other => Err(Error::Config(format!("unknown alignment '{other}' (supported: svd, procrustes)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Number of random features M (even).
    pub num_features: usize,
    pub latent_dim: usize,
    pub initial_clusters: usize,
    pub initial_alpha: f64,
    pub kind: LikelihoodKind,
    pub seed: u64,
    /// Gamma(shape, rate) prior on α.
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    /// NIW λ₀ and ν₀ (`None` = D + 2); μ₀ = 0 and Ψ₀ = `niw_scale`·I.
    pub niw_lambda: f64,
    pub niw_nu: Option<f64>,
    pub niw_scale: f64,
    /// B₀ = `coef_var`·I, β₀ = 0.
    pub coef_var: f64,
    /// S₀ = `nig_precision`·I and IG(a₀, b₀) for the Gaussian kinds.
    pub nig_precision: f64,
    pub noise_shape: f64,
    pub noise_scale: f64,
    /// a₀^(r), b₀^(h), g₀.
    pub dispersion_shape: f64,
    pub dispersion_rate_shape: f64,
    pub dispersion_rate_rate: f64,
    pub optimizer: OptimizerBudget,
    pub stages: StageToggles,
    pub alignment: Alignment,
    /// Replace the data likelihood by a constant.
    pub prior_only: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            thinning: 1,
            num_features: 100,
            latent_dim: 2,
            initial_clusters: 20,
            initial_alpha: 1.0,
            kind: LikelihoodKind::GaussianMarginalized,
            seed: 0,
            alpha_shape: 1.0,
            alpha_rate: 1.0,
            niw_lambda: 1.0,
            niw_nu: None,
            niw_scale: 1.0,
            coef_var: 1.0,
            nig_precision: 1.0,
            noise_shape: 1.0,
            noise_scale: 1.0,
            dispersion_shape: 1.0,
            dispersion_rate_shape: 1.0,
            dispersion_rate_rate: 1.0,
            optimizer: OptimizerBudget::default(),
            stages: StageToggles::default(),
            alignment: Alignment::Procrustes,
            prior_only: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.num_features < 2 || self.num_features % 2 != 0 {
            return Err(Error::Config(format!("M must be even and at least 2, got {}", self.num_features)));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if self.initial_clusters == 0 {
            return Err(Error::Config("initial cluster count must be at least 1".into()));
        }
        let positive = [
            ("initial alpha", self.initial_alpha),
            ("alpha shape", self.alpha_shape),
            ("alpha rate", self.alpha_rate),
            ("niw lambda", self.niw_lambda),
            ("niw scale", self.niw_scale),
            ("coefficient variance", self.coef_var),
            ("nig precision", self.nig_precision),
            ("noise shape", self.noise_shape),
            ("noise scale", self.noise_scale),
            ("dispersion shape", self.dispersion_shape),
            ("dispersion rate shape", self.dispersion_rate_shape),
            ("dispersion rate rate", self.dispersion_rate_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.optimizer.validate()?;
        self.niw_hyper().validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Records kept: iterations after burn-in, every `thinning`-th.
    pub fn num_records(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }

    pub fn niw_hyper(&self) -> NiwHyper {
        let d = self.latent_dim;
        NiwHyper {
            mean: DVector::zeros(d),
            lambda: self.niw_lambda,
            nu: self.niw_nu.unwrap_or(d as f64 + 2.0),
            psi: DMatrix::identity(d, d) * self.niw_scale,
        }
    }

    pub fn coefficient_prior(&self) -> Result<CoefficientPrior> {
        CoefficientPrior::scaled(self.num_features, self.coef_var, self.nig_precision, self.noise_shape, self.noise_scale)?
            .with_dispersion_hyper(self.dispersion_shape, self.dispersion_rate_shape, self.dispersion_rate_rate)
    }
}

/// All sampler state of one chain.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub latent: LatentState,
    pub spectral: SpectralState,
    pub likelihood: LikelihoodState,
    /// g(Φ(X, W)B) from the latest coefficient update, N × J.
    pub prediction: Option<DMatrix<f64>>,
}

/// Per-stage random streams derived from one seed.
#[derive(Clone, Debug)]
pub struct StageRngs {
    pub init: SamplerRng,
    pub assignments: SamplerRng,
    pub components: SamplerRng,
    pub frequency_mh: SamplerRng,
    pub concentration: SamplerRng,
    pub likelihood: SamplerRng,
}

impl StageRngs {
    pub fn new(seed: u64) -> Self {
        let s = RngStreams::new(seed);
        Self {
            init: s.stream("initialize"),
            assignments: s.stream("assignments"),
            components: s.stream("components"),
            frequency_mh: s.stream("frequency-mh"),
            concentration: s.stream("concentration"),
            likelihood: s.stream("likelihood"),
        }
    }
}

/// Diagnostics of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// log p(Y | X, W, θ) at the end of the iteration.
    pub log_likelihood: f64,
    pub mh_acceptance: f64,
    pub mh_non_finite: u64,
    pub num_clusters: usize,
    pub alpha: f64,
    pub clamp_events: u64,
    /// MAP objective before and after the X update.
    pub map_start: f64,
    pub map_end: f64,
}

/// Sequential CRP draws for `n` items with at most `cap` tables.
pub fn capped_crp<R: Rng + ?Sized>(n: usize, alpha: f64, cap: usize, rng: &mut R) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::new();
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let open = counts.len() < cap;
        let total = i as f64 + if open { alpha } else { 0.0 };
        let mut u = rng.random::<f64>() * total;
        let mut choice = counts.len();
        for (k, &c) in counts.iter().enumerate() {
            if u < c as f64 {
                choice = k;
                break;
            }
            u -= c as f64;
        }
        if choice == counts.len() && !open {
            choice = counts.len() - 1;
        }
        if choice == counts.len() {
            counts.push(0);
        }
        counts[choice] += 1;
        z.push(choice);
    }
    z
}

fn wrap(stage: Stage, iteration: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Aborted { .. } => e,
        other => Error::Aborted { iteration, stage, source: Box::new(other) },
    }
}

/// A configured model: run configuration plus derived priors.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: RunConfig,
    pub hyper: NiwHyper,
    pub prior: CoefficientPrior,
}

impl Model {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { hyper: config.niw_hyper(), prior: config.coefficient_prior()?, config })
    }

    fn check_data(&self, obs: &ObservationMatrix) -> Result<()> {
        if obs.kind() != self.config.kind {
            return Err(Error::Config(format!("data are tagged {} but the run uses {}", obs.kind(), self.config.kind)));
        }
        if obs.num_rows() <= self.config.latent_dim {
            return Err(Error::Config(format!("need more rows than latent dimensions, got N = {}", obs.num_rows())));
        }
        Ok(())
    }

    /// X from PCA (N(0, I) draws, standardized, when there are no columns),
    /// labels from a CRP capped at K₀ tables, components from the NIW prior,
    /// W from the mixture and likelihood parameters from their priors.
    pub fn initialize(&self, obs: &ObservationMatrix, rngs: &mut StageRngs) -> Result<ModelState> {
        self.check_data(obs)?;
        let cfg = &self.config;
        let rng = &mut rngs.init;
        let (n, j) = (obs.num_rows(), obs.num_cols());
        let latent = if j == 0 {
            let x = DMatrix::from_fn(n, cfg.latent_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            standardize_x(&x)?
        } else {
            pca_initialize(obs, cfg.latent_dim)?
        };
        let half = cfg.num_features / 2;
        let z = capped_crp(half, cfg.initial_alpha, cfg.initial_clusters, rng);
        let k = z.iter().max().map_or(0, |m| m + 1);
        let prior_params = self.hyper.as_params();
        let mut components = Vec::with_capacity(k);
        for _ in 0..k {
            let (mean, cov) = sample_niw(&prior_params, rng)?;
            components.push(Component::new(mean, cov)?);
        }
        let placeholder = FrequencyMatrix::new(DMatrix::zeros(half, cfg.latent_dim))?;
        let mut spectral = SpectralState::new(placeholder, z, components, cfg.initial_alpha)?;
        let w = sample_frequencies_from_mixture(&spectral, rng)?;
        for m in 0..half {
            spectral.set_frequency(m, &w.row(m));
        }
        let likelihood = self.initial_likelihood_state(n, j, rng)?;
        Ok(ModelState { latent, spectral, likelihood, prediction: None })
    }

    fn initial_likelihood_state<R: Rng + ?Sized>(&self, n: usize, j: usize, rng: &mut R) -> Result<LikelihoodState> {
        let kind = self.config.kind;
        let cols = kind.coefficient_columns(j);
        let m = self.config.num_features;
        let p = &self.prior;
        let mut state = LikelihoodState::new(n, cols, m);
        let gamma = |shape: f64, rate: f64, rng: &mut R| -> Result<f64> {
            Ok(Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::Parameter(format!("gamma({shape}, rate {rate}): {e}")))?
                .sample(rng))
        };
        if kind.is_gaussian() {
            let s0 = linalg::cholesky(&p.nig_precision)?;
            for c in 0..cols {
                let s2 = 1.0 / gamma(p.noise_shape, p.noise_scale, rng)?.max(f64::MIN_POSITIVE);
                state.noise_var[c] = s2;
                state.coefficients.set_column(c, &linalg::sample_mvn_precision(&p.mean, &s0, s2.sqrt(), rng));
            }
        } else {
            let l = linalg::cholesky(&p.cov)?.l();
            for c in 0..cols {
                state.coefficients.set_column(c, &linalg::sample_mvn(&p.mean, &l, rng));
            }
        }
        if kind == LikelihoodKind::NegativeBinomial {
            state.dispersion_rate = gamma(p.dispersion_rate_shape, p.dispersion_rate_rate, rng)?;
            for c in 0..cols {
                state.dispersion[c] = gamma(p.dispersion_shape, state.dispersion_rate, rng)?.max(1e-12);
            }
        }
        Ok(state)
    }

    /// One iteration: (1) label sweep, (2) component draws, (3) MH sweep over
    /// frequencies, (4) concentration, (5) likelihood parameters, (6) MAP
    /// update of X, (7) standardization. Errors carry the iteration and stage.
    pub fn step(
        &self,
        state: &mut ModelState,
        obs: &ObservationMatrix,
        rngs: &mut StageRngs,
        iteration: usize,
    ) -> Result<IterationDiagnostics> {
        let cfg = &self.config;
        let stages = cfg.stages;
        let clamps = ClampCounter::new();
        let half = state.spectral.assignments().len();
        let data_free = cfg.prior_only || obs.num_cols() == 0;

        if stages.assignments {
            let lik = ClusterLikelihood::Gaussian;
            sweep_assignments(&mut state.spectral, &self.hyper, lik, &mut rngs.assignments)
                .map_err(wrap(Stage::Assignments, iteration))?;
        }
        if stages.components {
            update_components(&mut state.spectral, &self.hyper, &mut rngs.components)
                .map_err(wrap(Stage::Components, iteration))?;
        }
        let (mut accepted, mut non_finite) = (0usize, 0u64);
        if stages.frequency_mh {
            self.mh_sweep(state, obs, data_free, &clamps, &mut rngs.frequency_mh, &mut accepted, &mut non_finite)
                .map_err(wrap(Stage::FrequencyMh, iteration))?;
        }
        if stages.concentration {
            let k = state.spectral.num_clusters();
            let alpha = sample_concentration(state.spectral.alpha(), k, half, cfg.alpha_shape, cfg.alpha_rate, &mut rngs.concentration)
                .map_err(wrap(Stage::Concentration, iteration))?;
            state.spectral.set_alpha(alpha);
        }
        if stages.likelihood && !data_free {
            self.update_likelihood(state, obs, &clamps, &mut rngs.likelihood)
                .map_err(wrap(Stage::LikelihoodParameters, iteration))?;
        }
        let (mut map_start, mut map_end) = (f64::NAN, f64::NAN);
        if stages.latent_map && !data_free {
            let result = map_update_x(
                obs,
                &state.latent.x,
                state.spectral.frequencies(),
                &state.likelihood,
                &self.prior,
                &cfg.optimizer,
                &clamps,
            )
            .map_err(wrap(Stage::LatentMap, iteration))?;
            map_start = result.trace[0];
            map_end = result.objective;
            state.latent = LatentState { x: result.x, standardized: false };
        }
        if stages.standardize && !state.latent.standardized {
            let x_hat = &state.latent.x;
            let mut s = standardize_x(x_hat).map_err(wrap(Stage::Standardize, iteration))?;
            if cfg.alignment == Alignment::Procrustes {
                let q = procrustes_rotation(&s.x, &linalg::column_centered(x_hat)).map_err(wrap(Stage::Standardize, iteration))?;
                s.x = &s.x * q;
            }
            state.latent = s;
        }
        let log_likelihood = if obs.num_cols() == 0 {
            0.0
        } else {
            let phi = feature_map(&state.latent.x, state.spectral.frequencies())?;
            model_log_likelihood_phi(obs, &phi, &state.likelihood, &self.prior, &clamps)
                .map_err(wrap(Stage::Standardize, iteration))?
        };
        Ok(IterationDiagnostics {
            iteration,
            log_likelihood,
            mh_acceptance: if stages.frequency_mh { accepted as f64 / half as f64 } else { 0.0 },
            mh_non_finite: non_finite,
            num_clusters: state.spectral.num_clusters(),
            alpha: state.spectral.alpha(),
            clamp_events: clamps.get(),
            map_start,
            map_end,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn mh_sweep(
        &self,
        state: &mut ModelState,
        obs: &ObservationMatrix,
        data_free: bool,
        clamps: &ClampCounter,
        rng: &mut SamplerRng,
        accepted: &mut usize,
        non_finite: &mut u64,
    ) -> Result<()> {
        let half = state.spectral.assignments().len();
        let x = &state.latent.x;
        let w0 = state.spectral.frequencies().clone();
        let (mut lik, mut current): (Box<dyn FrequencyLikelihood + '_>, f64) = if data_free {
            (Box::new(ConstantLikelihood), 0.0)
        } else if obs.kind() == LikelihoodKind::GaussianMarginalized {
            let (l, v) = MarginalFrequencyLikelihood::new(obs, x, &w0, &self.prior)?;
            (Box::new(l), v)
        } else {
            let (l, v) = ExplicitFrequencyLikelihood::new(obs, x, &w0, &state.likelihood, clamps)?;
            (Box::new(l), v)
        };
        for m in 0..half {
            let outcome = mh_update_frequency(m, &mut state.spectral, current, lik.as_mut(), rng)?;
            current = outcome.log_likelihood;
            *accepted += usize::from(outcome.accepted);
            *non_finite += u64::from(outcome.non_finite);
        }
        Ok(())
    }

    fn update_likelihood(
        &self,
        state: &mut ModelState,
        obs: &ObservationMatrix,
        clamps: &ClampCounter,
        rng: &mut SamplerRng,
    ) -> Result<()> {
        let phi = feature_map(&state.latent.x, state.spectral.frequencies())?;
        let ls = &mut state.likelihood;
        let kind = obs.kind();
        let y = obs.y();
        match kind {
            LikelihoodKind::Gaussian | LikelihoodKind::GaussianMarginalized => {
                MarginalStats::new(y, obs.mask(), &phi)?.sample_all(&self.prior, &mut ls.coefficients, &mut ls.noise_var, rng)?;
            }
            LikelihoodKind::Poisson => {
                for j in 0..y.ncols() {
                    let mask = obs.column_mask(j);
                    let beta = poisson_map_beta(
                        &y.column(j).into_owned(),
                        &phi,
                        &ls.coefficients.column(j).into_owned(),
                        &self.prior,
                        mask.as_deref(),
                        &self.config.optimizer,
                        clamps,
                    )?;
                    ls.coefficients.set_column(j, &beta);
                }
            }
            LikelihoodKind::Multinomial => {
                multinomial_pg_beta(y, &phi, &self.prior, &mut ls.coefficients, &mut ls.pg_aux, obs.mask(), rng)?;
            }
            _ => {
                for j in 0..y.ncols() {
                    let mask = obs.column_mask(j);
                    let yj = y.column(j).into_owned();
                    let trials = obs.trials().map(|t| t.column(j).into_owned());
                    let column = ColumnData { y: &yj, trials: trials.as_ref(), mask: mask.as_deref(), dispersion: ls.dispersion[j] };
                    let current = ls.coefficients.column(j).into_owned();
                    let (beta, omega) = pg_gibbs_beta(column, &phi, &self.prior, &current, kind, rng)?;
                    ls.coefficients.set_column(j, &beta);
                    ls.pg_aux.set_column(j, &omega);
                    if kind == LikelihoodKind::NegativeBinomial {
                        let p = (phi.as_matrix() * &beta).map(sigmoid);
                        ls.dispersion[j] =
                            sample_dispersion(&yj, &p, ls.dispersion[j], ls.dispersion_rate, &self.prior, mask.as_deref(), clamps, rng)?;
                    }
                }
                if kind == LikelihoodKind::NegativeBinomial {
                    ls.dispersion_rate = sample_dispersion_rate(&ls.dispersion, &self.prior, rng)?;
                }
            }
        }
        state.prediction = Some(predict_mean(obs, &phi, ls, clamps)?);
        Ok(())
    }

    /// Initialize and iterate, keeping post-burn-in records.
    pub fn run(&self, obs: &ObservationMatrix) -> Result<PosteriorTrace> {
        self.run_with(obs, |_, _| {})
    }

    /// As [`run`](Self::run), calling `progress` after every iteration.
    pub fn run_with<F: FnMut(&IterationDiagnostics, &ModelState)>(
        &self,
        obs: &ObservationMatrix,
        mut progress: F,
    ) -> Result<PosteriorTrace> {
        let cfg = &self.config;
        let mut rngs = StageRngs::new(cfg.seed);
        let mut state = self.initialize(obs, &mut rngs).map_err(|e| match e.class() {
            crate::error::ErrorClass::Numeric => Error::Aborted { iteration: 0, stage: Stage::Initialize, source: Box::new(e) },
            _ => e,
        })?;
        let initial_x = state.latent.x.clone();
        let mut trace = PosteriorTrace::new(initial_x);
        for t in 1..=cfg.iterations {
            let diag = self.step(&mut state, obs, &mut rngs, t)?;
            if !diag.log_likelihood.is_finite() {
                return Err(Error::Aborted {
                    iteration: t,
                    stage: Stage::Standardize,
                    source: Box::new(Error::Numeric(format!("log-likelihood is {}", diag.log_likelihood))),
                });
            }
            progress(&diag, &state);
            if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0 {
                trace.push(&state, &diag);
            }
            trace.diagnostics.push(diag);
        }
        trace.finish();
        Ok(trace)
    }
}

/// Constant data likelihood (prior-only runs, no columns).
struct ConstantLikelihood;

impl FrequencyLikelihood for ConstantLikelihood {
    fn propose(&mut self, _: &FrequencyMatrix, _: usize, _: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn accept(&mut self) {}
}

/// One kept iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub z: Vec<usize>,
    pub alpha: f64,
    pub num_clusters: usize,
    pub noise_var: DVector<f64>,
    pub dispersion: DVector<f64>,
    pub dispersion_rate: f64,
    pub log_likelihood: f64,
    pub mh_acceptance: f64,
    pub clamp_events: u64,
}

/// Kept records, per-iteration diagnostics and posterior means over the kept
/// records: X, the coefficients B and the predictive mean g(ΦB).
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTrace {
    pub initial_x: DMatrix<f64>,
    pub records: Vec<TraceRecord>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub x_mean: DMatrix<f64>,
    pub coefficient_mean: DMatrix<f64>,
    pub prediction_mean: Option<DMatrix<f64>>,
}

impl PosteriorTrace {
    fn new(initial_x: DMatrix<f64>) -> Self {
        Self {
            x_mean: DMatrix::zeros(initial_x.nrows(), initial_x.ncols()),
            initial_x,
            records: Vec::new(),
            diagnostics: Vec::new(),
            coefficient_mean: DMatrix::zeros(0, 0),
            prediction_mean: None,
        }
    }

    fn push(&mut self, state: &ModelState, diag: &IterationDiagnostics) {
        let s = &state.spectral;
        let coefs = &state.likelihood.coefficients;
        if self.records.is_empty() {
            self.coefficient_mean = DMatrix::zeros(coefs.nrows(), coefs.ncols());
        }
        self.x_mean += &state.latent.x;
        self.coefficient_mean += coefs;
        if let Some(p) = &state.prediction {
            match &mut self.prediction_mean {
                Some(acc) => *acc += p,
                None => self.prediction_mean = Some(p.clone()),
            }
        }
        self.records.push(TraceRecord {
            iteration: diag.iteration,
            x: state.latent.x.clone(),
            w: s.frequencies().as_matrix().clone(),
            z: s.assignments().to_vec(),
            alpha: s.alpha(),
            num_clusters: s.num_clusters(),
            noise_var: state.likelihood.noise_var.clone(),
            dispersion: state.likelihood.dispersion.clone(),
            dispersion_rate: state.likelihood.dispersion_rate,
            log_likelihood: diag.log_likelihood,
            mh_acceptance: diag.mh_acceptance,
            clamp_events: diag.clamp_events,
        });
    }

    fn finish(&mut self) {
        let n = self.records.len().max(1) as f64;
        self.x_mean /= n;
        self.coefficient_mean /= n;
        if let Some(p) = &mut self.prediction_mean {
            *p /= n;
        }
    }

    /// FNV-1a digest over every stored number, for reproducibility checks.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for r in &self.records {
            r.x.iter().chain(r.w.iter()).chain(r.noise_var.iter()).chain(r.dispersion.iter()).for_each(|&v| eat(v));
            r.z.iter().for_each(|&z| eat(z as f64));
            [r.alpha, r.log_likelihood, r.mh_acceptance, r.dispersion_rate].into_iter().for_each(&mut eat);
        }
        self.x_mean.iter().chain(self.coefficient_mean.iter()).for_each(|&v| eat(v));
        for d in &self.diagnostics {
            [d.log_likelihood, d.mh_acceptance, d.alpha, d.map_start, d.map_end].into_iter().for_each(&mut eat);
        }
        h
    }
}

/// Initialize and run a chain.
pub fn run(config: &RunConfig, obs: &ObservationMatrix) -> Result<PosteriorTrace> {
    Model::new(config.clone())?.run(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_s_curve, sample_gp_observations, EmissionOptions};
    use rand::SeedableRng;

    fn toy(kind: LikelihoodKind, n: usize, j: usize, seed: u64) -> ObservationMatrix {
        let mut rng = SamplerRng::seed_from_u64(seed);
        let x = generate_s_curve(n, 0.05, &mut rng).unwrap();
        sample_gp_observations(&x, j, kind, &EmissionOptions::default(), &mut rng).unwrap().0
    }

    fn small_config(kind: LikelihoodKind) -> RunConfig {
        RunConfig { iterations: 6, burn_in: 3, num_features: 10, kind, seed: 11, ..Default::default() }
    }

    #[test]
    fn capped_crp_respects_cap() {
        let mut rng = SamplerRng::seed_from_u64(1);
        for _ in 0..200 {
            let z = capped_crp(5, 50.0, 20, &mut rng);
            assert!(z.iter().max().unwrap() < &5);
            let z = capped_crp(40, 50.0, 3, &mut rng);
            assert!(z.iter().max().unwrap() < &3);
        }
    }

    #[test]
    fn initialization_is_deterministic() {
        let obs = toy(LikelihoodKind::Gaussian, 20, 5, 1);
        let model = Model::new(small_config(LikelihoodKind::Gaussian)).unwrap();
        let a = model.initialize(&obs, &mut StageRngs::new(3)).unwrap();
        let b = model.initialize(&obs, &mut StageRngs::new(3)).unwrap();
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.spectral.frequencies(), b.spectral.frequencies());
        assert_eq!(a.likelihood, b.likelihood);
    }

    #[test]
    fn every_kind_runs() {
        for kind in LikelihoodKind::ALL {
            let obs = toy(kind, 25, 4, 2);
            let trace = run(&small_config(kind), &obs).unwrap_or_else(|e| panic!("{kind}: {e}"));
            assert_eq!(trace.records.len(), 3);
            assert_eq!(trace.diagnostics.len(), 6);
            for d in &trace.diagnostics {
                assert!(d.log_likelihood.is_finite(), "{kind}");
            }
            for r in &trace.records {
                assert!((linalg::sample_covariance(&r.x) - DMatrix::identity(2, 2)).abs().max() < 1e-8);
                let counts = r.z.iter().fold(vec![0usize; r.num_clusters], |mut c, &z| {
                    c[z] += 1;
                    c
                });
                assert!(counts.iter().all(|&c| c > 0));
                assert_eq!(counts.iter().sum::<usize>(), 5);
            }
        }
    }

    #[test]
    fn reruns_are_identical() {
        let obs = toy(LikelihoodKind::Poisson, 20, 3, 3);
        let cfg = small_config(LikelihoodKind::Poisson);
        assert_eq!(run(&cfg, &obs).unwrap().digest(), run(&cfg, &obs).unwrap().digest());
    }

    #[test]
    fn one_record_when_single_iteration_is_kept() {
        let obs = toy(LikelihoodKind::Gaussian, 15, 3, 4);
        let cfg = RunConfig { iterations: 11, burn_in: 10, num_features: 6, kind: LikelihoodKind::Gaussian, ..Default::default() };
        assert_eq!(run(&cfg, &obs).unwrap().records.len(), 1);
    }

    #[test]
    fn latent_only_stages_ascend() {
        let obs = toy(LikelihoodKind::GaussianMarginalized, 30, 6, 5);
        let mut cfg = small_config(LikelihoodKind::GaussianMarginalized);
        cfg.stages = StageToggles {
            assignments: false,
            components: false,
            frequency_mh: false,
            concentration: false,
            likelihood: false,
            latent_map: true,
            standardize: false,
        };
        let trace = run(&cfg, &obs).unwrap();
        let ends: Vec<f64> = trace.diagnostics.iter().map(|d| d.map_end).collect();
        for pair in ends.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn mismatched_kind_is_a_config_error() {
        let obs = toy(LikelihoodKind::Poisson, 10, 3, 6);
        assert!(matches!(run(&small_config(LikelihoodKind::Gaussian), &obs), Err(Error::Config(_))));
    }
}
