//! WebAssembly entry points for the static demo page in `www/`.
//!
//! Every export returns a JSON string; errors come back as `{"error": ...}`.

use nalgebra::DMatrix;
use rflvm::data::{generate_s_curve_raw, s_curve_labels, sample_gp_observations, standardize_columns, EmissionOptions};
use rflvm::engine::{run, RunConfig};
use rflvm::eval::affine_align_r2;
use rflvm::features::{approximate_kernel, feature_map, rbf_kernel, sample_rbf_frequencies};
use rflvm::likelihoods::LikelihoodKind;
use rflvm::rng::RngStreams;
use rflvm::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bounds that keep a single call interactive in the browser.
const MAX_POINTS: usize = 300;
const MAX_FEATURES: usize = 2000;
const MAX_ITERATIONS: usize = 400;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_json(result: Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn bounded(name: &str, value: usize, lo: usize, hi: usize) -> Result<usize> {
    if (lo..=hi).contains(&value) {
        Ok(value)
    } else {
        Err(rflvm::Error::Config(format!("{name} must lie in [{lo}, {hi}], got {value}")))
    }
}

/// S-curve latents, standardized per column, with their color labels.
fn s_curve(n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<i64>)> {
    let (mut x, t) = generate_s_curve_raw(n, 0.05, &mut RngStreams::new(seed).stream("demo-data"))?;
    standardize_columns(&mut x);
    Ok((x, s_curve_labels(&t)))
}

/// Exact RBF kernel next to its random Fourier estimate on S-curve points.
pub fn kernel_comparison(n: usize, num_features: usize, lengthscale: f64, seed: u64) -> Result<Value> {
    let n = bounded("points", n, 3, MAX_POINTS)?;
    let m = bounded("features", num_features, 2, MAX_FEATURES)?;
    let (x, _) = s_curve(n, seed)?;
    let w = sample_rbf_frequencies(m / 2, 2, lengthscale, &mut RngStreams::new(seed).stream("demo-frequencies"))?;
    let phi = feature_map(&x, &w)?;
    let approx = approximate_kernel(&phi, &phi)?;
    let exact = rbf_kernel(&x, &x, lengthscale);
    let diff = &approx - &exact;
    Ok(json!({
        "exact": rows(&exact),
        "approx": rows(&approx),
        "relative_frobenius": diff.norm() / exact.norm(),
        "max_abs": diff.amax(),
    }))
}

/// A synthetic data set: latent S-curve, labels and GP-driven observations.
pub fn simulate(n: usize, j: usize, kind: &str, seed: u64) -> Result<Value> {
    let n = bounded("points", n, 3, MAX_POINTS)?;
    let j = bounded("columns", j, 1, 200)?;
    let kind: LikelihoodKind = kind.parse()?;
    let (x, labels) = s_curve(n, seed)?;
    let (obs, _) = sample_gp_observations(&x, j, kind, &EmissionOptions::default(), &mut RngStreams::new(seed).stream("demo-y"))?;
    Ok(json!({ "x": rows(&x), "labels": labels, "y": rows(obs.y()) }))
}

/// Fit a small model to simulated data and report both latent estimates.
pub fn fit(n: usize, j: usize, kind: &str, num_features: usize, iterations: usize, seed: u64) -> Result<Value> {
    let n = bounded("points", n, 10, MAX_POINTS)?;
    let j = bounded("columns", j, 1, 200)?;
    let m = bounded("features", num_features, 2, 400)?;
    let iterations = bounded("iterations", iterations, 2, MAX_ITERATIONS)?;
    let kind: LikelihoodKind = kind.parse()?;
    let (x, labels) = s_curve(n, seed)?;
    let (obs, _) = sample_gp_observations(&x, j, kind, &EmissionOptions::default(), &mut RngStreams::new(seed).stream("demo-y"))?;
    let config = RunConfig { iterations, burn_in: iterations / 2, num_features: m, latent_dim: 2, kind, seed, ..Default::default() };
    let trace = run(&config, &obs)?;
    let log_likelihood: Vec<f64> = trace.diagnostics.iter().map(|d| d.log_likelihood).collect();
    Ok(json!({
        "truth": rows(&x),
        "labels": labels,
        "initial": rows(&trace.initial_x),
        "posterior": rows(&trace.x_mean),
        "r2_initial": affine_align_r2(&x, &trace.initial_x)?.r2,
        "r2_posterior": affine_align_r2(&x, &trace.x_mean)?.r2,
        "log_likelihood": log_likelihood,
    }))
}

#[wasm_bindgen(js_name = kernelComparison)]
pub fn kernel_comparison_js(n: usize, num_features: usize, lengthscale: f64, seed: u32) -> String {
    to_json(kernel_comparison(n, num_features, lengthscale, u64::from(seed)))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(n: usize, j: usize, kind: &str, seed: u32) -> String {
    to_json(simulate(n, j, kind, u64::from(seed)))
}

#[wasm_bindgen(js_name = fit)]
pub fn fit_js(n: usize, j: usize, kind: &str, num_features: usize, iterations: usize, seed: u32) -> String {
    to_json(fit(n, j, kind, num_features, iterations, u64::from(seed)))
}
