//! Observation containers, synthetic generators, CSV ingestion and result
//! serialization.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::rbf_kernel;
use crate::likelihoods::LikelihoodKind;

/// Version stamped into every report and trace header.
pub const FORMAT_VERSION: u32 = 1;

/// N × J data with its likelihood tag and optional held-out mask
/// (`true` = held out), class labels and binomial trial counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMatrix {
    y: DMatrix<f64>,
    kind: LikelihoodKind,
    mask: Option<DMatrix<bool>>,
    labels: Option<Vec<i64>>,
    trials: Option<DMatrix<f64>>,
}

impl ObservationMatrix {
    pub fn new(y: DMatrix<f64>, kind: LikelihoodKind) -> Result<Self> {
        Self::from_parts(y, kind, None, None, None)
    }

    pub fn from_parts(
        y: DMatrix<f64>,
        kind: LikelihoodKind,
        mask: Option<DMatrix<bool>>,
        labels: Option<Vec<i64>>,
        trials: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let shape = y.shape();
        if let Some(m) = &mask {
            if m.shape() != shape {
                return Err(Error::shape(format!("mask is {:?} but data is {shape:?}", m.shape())));
            }
            if shape.0 * shape.1 > 0 && m.iter().all(|&h| h) {
                return Err(Error::Config("every entry is held out".into()));
            }
        }
        if let Some(l) = &labels {
            if l.len() != shape.0 {
                return Err(Error::shape(format!("{} labels for {} rows", l.len(), shape.0)));
            }
        }
        if let Some(t) = &trials {
            if t.shape() != shape {
                return Err(Error::shape(format!("trials are {:?} but data is {shape:?}", t.shape())));
            }
        } else if kind == LikelihoodKind::Binomial {
            return Err(Error::Config("binomial observations need trial counts".into()));
        }
        let obs = Self { y, kind, mask, labels, trials };
        obs.validate()?;
        Ok(obs)
    }

    fn validate(&self) -> Result<()> {
        for j in 0..self.y.ncols() {
            for n in 0..self.y.nrows() {
                if self.is_held_out(n, j) {
                    continue;
                }
                let v = self.y[(n, j)];
                if !v.is_finite() {
                    return Err(Error::data(n, j, format!("non-finite value {v}")));
                }
                if self.kind.is_count() && (v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::data(n, j, format!("{} observations must be nonnegative integers, got {v}", self.kind)));
                }
                match self.kind {
                    LikelihoodKind::Bernoulli if v > 1.0 => {
                        return Err(Error::data(n, j, format!("bernoulli observations must be 0 or 1, got {v}")));
                    }
                    LikelihoodKind::Binomial => {
                        let t = self.trials.as_ref().map_or(0.0, |t| t[(n, j)]);
                        if t < 0.0 || t.fract() != 0.0 || v > t {
                            return Err(Error::data(n, j, format!("count {v} exceeds trials {t}")));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        self.mask.as_ref()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn trials(&self) -> Option<&DMatrix<f64>> {
        self.trials.as_ref()
    }

    pub fn num_rows(&self) -> usize {
        self.y.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.y.ncols()
    }

    #[inline]
    pub fn is_held_out(&self, n: usize, j: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[(n, j)])
    }

    /// Held-out flags of column j, or `None` when nothing is masked.
    pub fn column_mask(&self, j: usize) -> Option<Vec<bool>> {
        self.mask.as_ref().map(|m| m.column(j).iter().copied().collect())
    }

    pub fn with_kind(&self, kind: LikelihoodKind) -> Result<Self> {
        Self::from_parts(self.y.clone(), kind, self.mask.clone(), self.labels.clone(), self.trials.clone())
    }

    pub fn with_mask(&self, mask: Option<DMatrix<bool>>) -> Result<Self> {
        Self::from_parts(self.y.clone(), self.kind, mask, self.labels.clone(), self.trials.clone())
    }
}

/// Ground truth behind a synthetic data set. `f_true` holds the natural
/// parameter each emission used (the raw GP draw for Gaussian data).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub x_true: DMatrix<f64>,
    pub f_true: DMatrix<f64>,
    pub settings: EmissionOptions,
}

/// Emission settings for [`sample_gp_observations`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionOptions {
    pub lengthscale: f64,
    /// Gaussian noise sd as a fraction of each column's sd.
    pub noise_ratio: f64,
    /// Added to the standardized GP draw for Poisson rates.
    pub poisson_offset: f64,
    /// Trials per entry (binomial) or per row (multinomial).
    pub trials: u64,
    /// Shared negative-binomial dispersion.
    pub dispersion: f64,
}

impl Default for EmissionOptions {
    fn default() -> Self {
        Self { lengthscale: 1.0, noise_ratio: 0.1, poisson_offset: 1.0, trials: 10, dispersion: 2.0 }
    }
}

fn s_curve_point(t: f64) -> (f64, f64) {
    (t.sin(), t.signum() * (t.cos() - 1.0))
}

/// S-curve latents with their curve parameter t ~ U[−3π/2, 3π/2], before
/// noise and standardization.
pub fn generate_s_curve_raw<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if n < 2 {
        return Err(Error::Parameter(format!("S-curve needs at least 2 points, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::Parameter(format!("noise must be nonnegative, got {noise}")));
    }
    let half = 1.5 * std::f64::consts::PI;
    let t = DVector::from_fn(n, |_, _| rng.random_range(-half..=half));
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        let (a, b) = s_curve_point(t[i]);
        x[(i, 0)] = a + noise * rng.sample::<f64, _>(StandardNormal);
        x[(i, 1)] = b + noise * rng.sample::<f64, _>(StandardNormal);
    }
    Ok((x, t))
}

/// Standardize every column to zero mean and unit (1/N) variance.
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

pub fn generate_s_curve<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let (mut x, _) = generate_s_curve_raw(n, noise, rng)?;
    standardize_columns(&mut x);
    Ok(x)
}

/// Segment of the S-curve (0, 1, 2 along t), used as class labels.
pub fn s_curve_labels(t: &DVector<f64>) -> Vec<i64> {
    let half = 1.5 * std::f64::consts::PI;
    t.iter().map(|&v| (((v + half) / (2.0 * half) * 3.0).floor() as i64).clamp(0, 2)).collect()
}

const GP_JITTERS: [f64; 3] = [1e-6, 1e-5, 1e-4];

/// J independent draws f_j ~ N(0, K_X + εI) with ε escalated from 1e-6 to 1e-4
/// until the Cholesky factorization succeeds.
pub fn sample_gp_functions<R: Rng + ?Sized>(x: &DMatrix<f64>, j: usize, lengthscale: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(lengthscale > 0.0) {
        return Err(Error::Parameter(format!("lengthscale must be positive, got {lengthscale}")));
    }
    let n = x.nrows();
    let k = rbf_kernel(x, x, lengthscale);
    let l = GP_JITTERS
        .iter()
        .find_map(|&eps| {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += eps;
            }
            nalgebra::Cholesky::new(kj).map(|c| c.unpack())
        })
        .ok_or_else(|| Error::NotPositiveDefinite("GP covariance after jitter 1e-4".into()))?;
    let z = DMatrix::from_fn(n, j, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(l * z)
}

fn column_standardized(f: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = f.clone();
    standardize_columns(&mut g);
    g
}

/// GP functions of `x_true` pushed through the emission of `kind`.
///
/// Gaussian: y = f + N(0, (ρ·sd f_j)²). Other kinds first standardize each f_j;
/// Poisson uses rate exp(f + offset), the logistic kinds and the multinomial
/// sticks use σ(f).
pub fn sample_gp_observations<R: Rng + ?Sized>(
    x_true: &DMatrix<f64>,
    j: usize,
    kind: LikelihoodKind,
    options: &EmissionOptions,
    rng: &mut R,
) -> Result<(ObservationMatrix, SyntheticTruth)> {
    let n = x_true.nrows();
    let num_functions = kind.coefficient_columns(j);
    if kind == LikelihoodKind::Multinomial && j < 2 {
        return Err(Error::Parameter("multinomial data needs at least 2 categories".into()));
    }
    let raw = sample_gp_functions(x_true, num_functions, options.lengthscale, rng)?;
    let mut trials = None;
    let (y, f) = match kind {
        LikelihoodKind::Gaussian | LikelihoodKind::GaussianMarginalized => {
            let mut y = raw.clone();
            for c in 0..j {
                let col = raw.column(c);
                let mean = col.mean();
                let sd = (col.map(|v| (v - mean).powi(2)).sum() / n as f64).sqrt();
                let s = options.noise_ratio * sd;
                for r in 0..n {
                    y[(r, c)] += s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            (y, raw)
        }
        LikelihoodKind::Poisson => {
            let f = column_standardized(&raw).add_scalar(options.poisson_offset);
            let y = f.map(|v| Poisson::new(v.exp()).expect("finite positive rate").sample(rng));
            (y, f)
        }
        LikelihoodKind::Bernoulli | LikelihoodKind::Binomial => {
            let f = column_standardized(&raw);
            let count = if kind == LikelihoodKind::Bernoulli { 1 } else { options.trials };
            let y = f.map(|v| Binomial::new(count, crate::likelihoods::sigmoid(v)).expect("valid probability").sample(rng) as f64);
            if kind == LikelihoodKind::Binomial {
                trials = Some(DMatrix::from_element(n, j, count as f64));
            }
            (y, f)
        }
        LikelihoodKind::NegativeBinomial => {
            if !(options.dispersion > 0.0) {
                return Err(Error::Parameter("dispersion must be positive".into()));
            }
            let f = column_standardized(&raw);
            // Gamma–Poisson mixture with odds e^f.
            let y = f.map(|v| {
                let rate = Gamma::new(options.dispersion, v.exp()).expect("valid gamma").sample(rng);
                if rate > 0.0 {
                    Poisson::new(rate).expect("finite positive rate").sample(rng)
                } else {
                    0.0
                }
            });
            (y, f)
        }
        LikelihoodKind::Multinomial => {
            let f = column_standardized(&raw);
            let mut y = DMatrix::zeros(n, j);
            for r in 0..n {
                let mut left = options.trials;
                for c in 0..j - 1 {
                    let draw = Binomial::new(left, crate::likelihoods::sigmoid(f[(r, c)])).expect("valid probability").sample(rng);
                    y[(r, c)] = draw as f64;
                    left -= draw;
                }
                y[(r, j - 1)] = left as f64;
            }
            (y, f)
        }
    };
    let obs = ObservationMatrix::from_parts(y, kind, None, None, trials)?;
    Ok((obs, SyntheticTruth { x_true: x_true.clone(), f_true: f, settings: options.clone() }))
}

/// Uniformly random mask with exactly ⌊fraction·N·J⌋ held-out entries.
pub fn make_holdout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, fraction: f64, rng: &mut R) -> Result<DMatrix<bool>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("holdout fraction must lie in (0, 1), got {fraction}")));
    }
    let total = rows * cols;
    let count = (fraction * total as f64).floor() as usize;
    let mut mask = DMatrix::from_element(rows, cols, false);
    for idx in rand::seq::index::sample(rng, total, count) {
        mask[(idx % rows, idx / rows)] = true;
    }
    Ok(mask)
}

/// CSV parsing options.
#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// `Some(true)` forces a header row, `None` detects one from a
    /// non-numeric first row.
    pub header: Option<bool>,
    /// Header name of an integer label column to split off.
    pub label_column: Option<String>,
}

/// Numeric table with optional header and label column.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
    pub labels: Option<Vec<i64>>,
}

pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        records.push(rec.map_err(|e| Error::data(row, 0, e.to_string()))?);
    }
    let has_header = match options.header {
        Some(h) => h,
        None => options.label_column.is_some()
            || records.first().is_some_and(|r| r.iter().any(|c| c.trim().parse::<f64>().is_err())),
    };
    let header: Option<Vec<String>> = if has_header && !records.is_empty() {
        Some(records.remove(0).iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let offset = usize::from(header.is_some());
    let label_idx = match (&options.label_column, &header) {
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Config(format!("label column '{name}' not found in header")))?,
        ),
        (Some(name), None) => return Err(Error::Config(format!("label column '{name}' needs a header row"))),
        _ => None,
    };
    let width = header.as_ref().map(|h| h.len()).or_else(|| records.first().map(|r| r.len())).unwrap_or(0);
    let cols = width - usize::from(label_idx.is_some());
    let mut values = DMatrix::zeros(records.len(), cols);
    let mut labels = label_idx.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::data(r + offset, rec.len(), format!("expected {width} fields, found {}", rec.len())));
        }
        let mut c_out = 0;
        for (c, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_idx {
                let label = cell.parse::<i64>().map_err(|_| Error::data(r + offset, c, format!("label '{cell}' is not an integer")))?;
                labels.as_mut().expect("label column").push(label);
                continue;
            }
            values[(r, c_out)] = cell.parse::<f64>().map_err(|_| Error::data(r + offset, c, format!("'{cell}' is not numeric")))?;
            c_out += 1;
        }
    }
    let header = header.map(|h| h.into_iter().enumerate().filter(|(i, _)| Some(*i) != label_idx).map(|(_, s)| s).collect());
    Ok(CsvTable { header, values, labels })
}

pub fn read_csv_table(path: &Path, options: &CsvOptions) -> Result<CsvTable> {
    parse_csv(&fs::read_to_string(path)?, options)
}

/// Observation matrix from a CSV file, validated for `kind`.
pub fn load_csv(path: &Path, kind: LikelihoodKind, options: &CsvOptions) -> Result<ObservationMatrix> {
    let table = read_csv_table(path, options)?;
    ObservationMatrix::from_parts(table.values, kind, None, table.labels, None)
}

/// Plain matrix read (no header detection beyond the default rule).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_csv_table(path, &CsvOptions::default())?.values)
}

/// 0/1 mask file.
pub fn read_mask(path: &Path) -> Result<DMatrix<bool>> {
    let m = read_matrix(path)?;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::data(r, c, format!("mask entries must be 0 or 1, got {v}")));
            }
        }
    }
    Ok(m.map(|v| v == 1.0))
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let m = read_matrix(path)?;
    m.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.fract() == 0.0 {
                Ok(v as i64)
            } else {
                Err(Error::data(i, 0, format!("label {v} is not an integer")))
            }
        })
        .collect()
}

/// Render a matrix as CSV; `{}` on f64 prints the shortest representation that
/// parses back to the same value.
pub fn matrix_to_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m, None))
}

pub fn write_mask(path: &Path, mask: &DMatrix<bool>) -> Result<()> {
    write_matrix(path, &mask.map(|h| if h { 1.0 } else { 0.0 }))
}

pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// One JSON document with a `format_version` field.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Versioned<'a, T> {
        format_version: u32,
        #[serde(flatten)]
        body: &'a T,
    }
    let text = serde_json::to_string_pretty(&Versioned { format_version: FORMAT_VERSION, body: report })?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s_curve_origin_and_curve() {
        assert_eq!(s_curve_point(0.0), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, t) = generate_s_curve_raw(100, 0.0, &mut rng).unwrap();
        for i in 0..100 {
            let (a, b) = s_curve_point(t[i]);
            assert!((x[(i, 0)] - a).abs() < 1e-12 && (x[(i, 1)] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn s_curve_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = generate_s_curve(10_000, 0.05, &mut rng).unwrap();
        for c in 0..2 {
            let col = x.column(c);
            let mean = col.mean();
            assert!(mean.abs() < 1e-10);
            assert!((col.map(|v| (v - mean).powi(2)).sum() / 1e4 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gp_draws_reproducible() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 1.0]);
        let a = sample_gp_functions(&x, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_gp_functions(&x, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_lengthscale_gives_flat_functions() {
        // K → 11ᵀ, so f_j = c·1 plus the jitter term of sd √1e-6.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = generate_s_curve(50, 0.0, &mut rng).unwrap();
        let f = sample_gp_functions(&x, 5, 1e8, &mut rng).unwrap();
        for c in 0..5 {
            let col = f.column(c);
            let spread = col.max() - col.min();
            assert!(spread < 1e-2, "{spread}");
            assert!(col.mean().abs() > spread);
        }
    }

    #[test]
    fn noiseless_gaussian_emission_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = generate_s_curve(30, 0.0, &mut rng).unwrap();
        let opts = EmissionOptions { noise_ratio: 0.0, ..Default::default() };
        let (obs, truth) = sample_gp_observations(&x, 4, LikelihoodKind::Gaussian, &opts, &mut rng).unwrap();
        assert_eq!(obs.y(), &truth.f_true);
    }

    #[test]
    fn count_emissions_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = generate_s_curve(40, 0.0, &mut rng).unwrap();
        for kind in LikelihoodKind::ALL {
            let (obs, truth) = sample_gp_observations(&x, 3, kind, &EmissionOptions::default(), &mut rng).unwrap();
            assert_eq!(obs.y().shape(), (40, 3));
            assert_eq!(truth.f_true.ncols(), kind.coefficient_columns(3));
        }
    }

    #[test]
    fn holdout_mask_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = make_holdout_mask(10, 10, 0.2, &mut rng).unwrap();
        assert_eq!(m.iter().filter(|&&h| h).count(), 20);
        let a = make_holdout_mask(10, 10, 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = make_holdout_mask(10, 10, 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = make_holdout_mask(10, 10, 0.2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(make_holdout_mask(3, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn holdout_fraction_concentrates_per_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = make_holdout_mask(5000, 4, 0.2, &mut rng).unwrap();
        for c in 0..4 {
            let frac = m.column(c).iter().filter(|&&h| h).count() as f64 / 5000.0;
            assert!((frac - 0.2).abs() < 0.02, "{frac}");
        }
    }

    #[test]
    fn csv_parsing() {
        let t = parse_csv("1,2\n3,4\n", &CsvOptions::default()).unwrap();
        assert_eq!(t.values, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(t.header.is_none());
        let t = parse_csv("a,label,b\n1,0,2\n3,1,4\n", &CsvOptions { label_column: Some("label".into()), ..Default::default() }).unwrap();
        assert_eq!(t.labels, Some(vec![0, 1]));
        assert_eq!(t.values, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        match parse_csv("1,2\n3\n", &CsvOptions::default()) {
            Err(Error::Data { row: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_csv("1,2\n3,x\n", &CsvOptions::default()) {
            Err(Error::Data { row: 1, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn poisson_rejects_fractional_entry() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.5, 0.0, 3.0]);
        match ObservationMatrix::new(y, LikelihoodKind::Poisson) {
            Err(Error::Data { row: 0, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = generate_s_curve(50, 0.1, &mut rng).unwrap();
        let (obs, _) = sample_gp_observations(&x, 7, LikelihoodKind::Gaussian, &EmissionOptions::default(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        write_matrix(&path, obs.y()).unwrap();
        let back = load_csv(&path, LikelihoodKind::Gaussian, &CsvOptions::default()).unwrap();
        assert_eq!(back.y(), obs.y());
    }
}
