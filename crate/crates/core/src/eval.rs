//! Evaluation metrics: affine-alignment R², held-out MSE and cross-validated
//! nearest-neighbour accuracy.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Best affine map from an estimate onto the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    /// (D′ + 1) × D; the last row is the intercept.
    pub map: DMatrix<f64>,
    pub r2: f64,
    /// The design [X̂, 1] was rank deficient and a pseudoinverse was used.
    pub rank_deficient: bool,
}

/// A = argmin ‖X − [X̂, 1]A‖²_F and R² = 1 − SSE / ‖X − mean(X)‖²_F.
pub fn affine_align_r2(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<AffineFit> {
    let n = x_true.nrows();
    if x_hat.nrows() != n {
        return Err(Error::shape(format!("{} true rows vs {} estimated rows", n, x_hat.nrows())));
    }
    let dp = x_hat.ncols();
    if n <= dp {
        return Err(Error::shape(format!("need N > D′, got N = {n}, D′ = {dp}")));
    }
    let mut design = DMatrix::from_element(n, dp + 1, 1.0);
    design.columns_mut(0, dp).copy_from(x_hat);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * x_true;
    let (map, rank_deficient) = match gram.clone().cholesky() {
        Some(c) if rcond_ok(&gram) => (c.solve(&rhs), false),
        _ => {
            let pinv = design
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Numeric(format!("pseudoinverse failed: {e}")))?;
            (pinv * x_true, true)
        }
    };
    let resid = x_true - &design * &map;
    let centered = crate::linalg::column_centered(x_true);
    let total = centered.norm_squared();
    let r2 = if total > 0.0 { 1.0 - resid.norm_squared() / total } else { 0.0 };
    Ok(AffineFit { map, r2, rank_deficient })
}

fn rcond_ok(gram: &DMatrix<f64>) -> bool {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    max > 0.0 && min > 1e-12 * max
}

/// Mean squared error over held-out entries.
pub fn heldout_mse(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    if y_true.shape() != y_pred.shape() || y_true.shape() != mask.shape() {
        return Err(Error::shape("truth, prediction and mask shapes differ".to_string()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((t, p), &h) in y_true.iter().zip(y_pred.iter()).zip(mask.iter()) {
        if h {
            sum += (t - p).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("held-out mask is empty".into()));
    }
    Ok(sum / count as f64)
}

/// Mean and standard error over replicates, with the replicate values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub mean: f64,
    pub standard_error: f64,
    pub values: Vec<f64>,
    pub config: Vec<(String, String)>,
}

impl EvalReport {
    pub fn from_values(metric: &str, values: Vec<f64>, config: Vec<(String, String)>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{metric}: replicate values must be finite and non-empty")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let standard_error = if values.len() >= 2 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            f64::NAN
        };
        Ok(Self { metric: metric.to_string(), mean, standard_error, values, config })
    }
}

/// Cross-validation settings for [`knn_cv_accuracy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnOptions {
    pub folds: usize,
    pub neighbours: usize,
    pub repeats: usize,
}

impl Default for KnnOptions {
    fn default() -> Self {
        Self { folds: 5, neighbours: 1, repeats: 5 }
    }
}

/// Stratified fold index for every row: each class is shuffled and dealt
/// round-robin across folds.
fn stratified_folds<R: Rng + ?Sized>(labels: &[i64], folds: usize, rng: &mut R) -> Vec<usize> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut fold = vec![0; labels.len()];
    let mut offset = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        for (k, &i) in idx.iter().enumerate() {
            fold[i] = (k + offset) % folds;
        }
        offset += idx.len();
    }
    fold
}

/// Majority vote among the K nearest training rows (Euclidean); distance ties
/// go to the smaller training index, vote ties to the nearer neighbour.
fn knn_predict(x: &DMatrix<f64>, labels: &[i64], train: &[usize], query: usize, k: usize) -> i64 {
    let mut dists: Vec<(f64, usize)> = train.iter().map(|&i| ((x.row(i) - x.row(query)).norm_squared(), i)).collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &dists[..k.min(dists.len())];
    let mut best = labels[nearest[0].1];
    let mut best_votes = 0;
    for &(_, i) in nearest {
        let votes = nearest.iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
        if votes > best_votes {
            best_votes = votes;
            best = labels[i];
        }
    }
    best
}

/// Repeated stratified K-fold accuracy of a K-nearest-neighbour classifier.
/// The report's values are the per-repeat mean accuracies.
pub fn knn_cv_accuracy<R: Rng + ?Sized>(x: &DMatrix<f64>, labels: &[i64], options: KnnOptions, rng: &mut R) -> Result<EvalReport> {
    if labels.len() != x.nrows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if options.folds < 2 || options.neighbours == 0 || options.repeats == 0 {
        return Err(Error::Config("folds must be at least 2, neighbours and repeats at least 1".into()));
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Config("KNN evaluation needs at least 2 classes".into()));
    }
    for c in &classes {
        let count = labels.iter().filter(|&&l| l == *c).count();
        if count < options.folds {
            return Err(Error::Config(format!("class {c} has {count} members, fewer than {} folds", options.folds)));
        }
    }
    let mut values = Vec::with_capacity(options.repeats);
    for _ in 0..options.repeats {
        let fold = stratified_folds(labels, options.folds, rng);
        let mut acc = 0.0;
        for f in 0..options.folds {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
            let correct = test.iter().filter(|&&q| knn_predict(x, labels, &train, q, options.neighbours) == labels[q]).count();
            acc += correct as f64 / test.len() as f64;
        }
        values.push(acc / options.folds as f64);
    }
    let config = vec![
        ("folds".to_string(), options.folds.to_string()),
        ("neighbours".to_string(), options.neighbours.to_string()),
        ("repeats".to_string(), options.repeats.to_string()),
    ];
    EvalReport::from_values("knn_accuracy", values, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn perfect_and_affine_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(50, 2, &mut rng);
        assert!((affine_align_r2(&x, &x).unwrap().r2 - 1.0).abs() < 1e-12);
        let a = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let moved = (&x * a).add_scalar(3.0);
        assert!((affine_align_r2(&x, &moved).unwrap().r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_predictor_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(30, 2, &mut rng);
        let fit = affine_align_r2(&x, &DMatrix::zeros(30, 1)).unwrap();
        assert!(fit.r2.abs() < 1e-12);
        assert!(fit.rank_deficient);
    }

    #[test]
    fn mse_cases() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut mask = DMatrix::from_element(2, 3, false);
        assert!(heldout_mse(&y, &y, &mask).is_err());
        mask[(0, 1)] = true;
        mask[(1, 2)] = true;
        assert_eq!(heldout_mse(&y, &y, &mask).unwrap(), 0.0);
        // Constant prediction at the held-out mean gives the held-out variance.
        let pred = DMatrix::from_element(2, 3, 4.0);
        assert!((heldout_mse(&y, &pred, &mask).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn duplicated_points_are_classified_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = randn(10, 2, &mut rng);
        let x = DMatrix::from_fn(50, 2, |i, j| base[(i % 10, j)]);
        let labels: Vec<i64> = (0..50).map(|i| (i % 10) as i64 % 2).collect();
        let report = knn_cv_accuracy(&x, &labels, KnnOptions::default(), &mut rng).unwrap();
        assert_eq!(report.mean, 1.0);
    }

    #[test]
    fn small_class_is_rejected() {
        let x = DMatrix::zeros(8, 1);
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 1];
        assert!(matches!(knn_cv_accuracy(&x, &labels, KnnOptions::default(), &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Config(_))));
    }
}
