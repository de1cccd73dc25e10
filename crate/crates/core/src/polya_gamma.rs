//! Pólya-gamma variates PG(b, c).
//!
//! Draws use the weighted-gamma series
//! ω = (1/2π²) Σ_k g_k / ((k − ½)² + c²/(4π²)), g_k ~ Ga(b, 1),
//! truncated at [`TRUNCATION`] terms with the mean of the discarded tail added
//! back deterministically. For b > [`NORMAL_APPROX_SHAPE`] a moment-matched
//! normal is used instead.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const TRUNCATION: usize = 200;
pub const NORMAL_APPROX_SHAPE: f64 = 170.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgParams {
    pub b: f64,
    pub c: f64,
}

impl PgParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Parameter(format!("Polya-gamma shape must be positive and finite, got {b}")));
        }
        if !c.is_finite() {
            return Err(Error::Parameter(format!("Polya-gamma tilt must be finite, got {c}")));
        }
        Ok(Self { b, c })
    }
}

/// E[PG(b, c)] = b/(2c)·tanh(c/2), or b/4 at c = 0.
pub fn pg_mean(params: PgParams) -> f64 {
    let c = params.c.abs();
    if c < 1e-6 {
        // Taylor: b/4 · (1 − c²/12)
        params.b * 0.25 * (1.0 - c * c / 12.0)
    } else {
        params.b / (2.0 * c) * (0.5 * c).tanh()
    }
}

/// Var[PG(b, c)] = b/(4c³)·(sinh c − c)/cosh²(c/2), or b/24 at c = 0.
pub fn pg_variance(params: PgParams) -> f64 {
    let c = params.c.abs();
    if c < 1e-3 {
        params.b / 24.0 * (1.0 - c * c / 5.0)
    } else {
        let ch = (0.5 * c).cosh();
        params.b / (4.0 * c * c * c) * (c.sinh() - c) / (ch * ch)
    }
}

fn term_denominator(k: usize, c: f64) -> f64 {
    let h = k as f64 - 0.5;
    h * h + c * c / (4.0 * PI * PI)
}

pub fn sample_pg<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> Result<f64> {
    let PgParams { b, c } = PgParams::new(params.b, params.c)?;
    if b > NORMAL_APPROX_SHAPE {
        let z: f64 = rng.sample(StandardNormal);
        let draw = pg_mean(params) + pg_variance(params).sqrt() * z;
        return Ok(draw.max(f64::MIN_POSITIVE));
    }
    let gamma = Gamma::new(b, 1.0).map_err(|e| Error::Parameter(format!("gamma({b}, 1): {e}")))?;
    let mut acc = 0.0;
    let mut head_mean = 0.0;
    for k in 1..=TRUNCATION {
        let denom = term_denominator(k, c);
        acc += gamma.sample(rng) / denom;
        head_mean += b / denom;
    }
    let scale = 1.0 / (2.0 * PI * PI);
    let tail = (pg_mean(params) - scale * head_mean).max(0.0);
    Ok((scale * acc + tail).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_formula() {
        assert_eq!(pg_mean(PgParams::new(1.0, 0.0).unwrap()), 0.25);
        let a = pg_mean(PgParams::new(2.5, 1.7).unwrap());
        let b = pg_mean(PgParams::new(2.5, -1.7).unwrap());
        assert_eq!(a, b);
        let v = pg_mean(PgParams::new(3.7, -2.0).unwrap());
        assert!((v - 3.7 / 4.0 * 1.0_f64.tanh()).abs() < 1e-15);
        assert!((v - 0.704_47).abs() < 1e-5);
        // continuity at the Taylor switch
        let near = pg_mean(PgParams::new(1.0, 1.0001e-6).unwrap());
        assert!((near - 0.25).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_series() {
        for &(b, c) in &[(1.0, 0.0), (2.0, 1.5), (3.7, -2.0), (1.0, 1e-4)] {
            let series: f64 = (1..2_000_000).map(|k| 1.0 / term_denominator(k, c).powi(2)).sum::<f64>() * b / (4.0 * PI.powi(4));
            let closed = pg_variance(PgParams::new(b, c).unwrap());
            assert!((series - closed).abs() < 1e-9 * closed.max(1.0), "{b} {c}: {series} vs {closed}");
        }
    }

    #[test]
    fn rejects_bad_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pg(PgParams { b: 0.0, c: 1.0 }, &mut rng).is_err());
        assert!(sample_pg(PgParams { b: -1.0, c: 1.0 }, &mut rng).is_err());
        assert!(PgParams::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn draws_are_positive_and_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        for &(b, c) in &[(0.01, 0.0), (1.0, 30.0), (500.0, 2.0)] {
            let p = PgParams::new(b, c).unwrap();
            let x = sample_pg(p, &mut r1).unwrap();
            assert!(x > 0.0);
            assert_eq!(x, sample_pg(p, &mut r2).unwrap());
        }
    }
}
