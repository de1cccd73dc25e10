//! Property tests over the public API.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rflvm::data::{matrix_to_csv, parse_csv, CsvOptions, ObservationMatrix};
use rflvm::eval::{affine_align_r2, knn_cv_accuracy, KnnOptions};
use rflvm::features::{approximate_kernel, feature_map, sample_rbf_frequencies, FrequencyMatrix};
use rflvm::latent::standardize_x;
use rflvm::likelihoods::model::log_likelihood_psi;
use rflvm::likelihoods::multinomial::multinomial_stick_breaking_transform;
use rflvm::likelihoods::{ClampCounter, LikelihoodKind, LikelihoodState};
use rflvm::linalg::sample_covariance;
use rflvm::polya_gamma::{pg_mean, PgParams};
use rflvm::spectral::{assignment_distribution, ClusterLikelihood, Component, NiwHyper, SpectralState};

fn matrix(rows: usize, cols: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-range..range, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Equal up to a sign flip of each column.
fn equal_up_to_signs(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.column_iter().zip(b.column_iter()).all(|(x, y)| (x - y).amax() < tol || (x + y).amax() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_rows_have_unit_norm(x in matrix(7, 3, 5.0), w in matrix(9, 3, 4.0)) {
        let phi = feature_map(&x, &FrequencyMatrix::new(w).unwrap()).unwrap();
        for row in phi.as_matrix().row_iter() {
            prop_assert!((row.norm_squared() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_estimate_is_shift_invariant(x in matrix(6, 2, 3.0), w in matrix(20, 2, 2.0), c in -10.0..10.0f64) {
        let w = FrequencyMatrix::new(w).unwrap();
        let shifted = x.add_scalar(c);
        let k = approximate_kernel(&feature_map(&x, &w).unwrap(), &feature_map(&x, &w).unwrap()).unwrap();
        let ks = approximate_kernel(&feature_map(&shifted, &w).unwrap(), &feature_map(&shifted, &w).unwrap()).unwrap();
        prop_assert!((k - ks).amax() < 1e-9);
    }

    #[test]
    fn standardization_whitens_and_is_idempotent(x in matrix(12, 2, 4.0)) {
        prop_assume!(sample_covariance(&x).determinant() > 1e-3);
        let once = standardize_x(&x).unwrap().x;
        prop_assert!((sample_covariance(&once) - DMatrix::identity(2, 2)).amax() < 1e-8);
        prop_assert!(once.row_sum().amax() < 1e-9);
        let twice = standardize_x(&once).unwrap().x;
        prop_assert!(equal_up_to_signs(&once, &twice, 1e-8));
    }

    #[test]
    fn standardization_ignores_rotations(x in matrix(12, 2, 4.0), theta in 0.0..std::f64::consts::TAU) {
        prop_assume!(sample_covariance(&x).determinant() > 1e-2);
        let base = standardize_x(&x).unwrap().x;
        let rotated = standardize_x(&(&x * rotation(theta))).unwrap().x;
        prop_assert!(equal_up_to_signs(&base, &rotated, 1e-7));
    }

    #[test]
    fn r2_is_invariant_to_affine_maps(
        truth in matrix(15, 2, 3.0),
        est in matrix(15, 2, 3.0),
        a in matrix(2, 2, 2.0),
        shift in matrix(1, 2, 5.0),
    ) {
        prop_assume!(a.determinant().abs() > 0.1);
        prop_assume!(sample_covariance(&est).determinant() > 1e-2);
        let base = affine_align_r2(&truth, &est).unwrap().r2;
        let mut moved = &est * &a;
        for mut row in moved.row_iter_mut() {
            row += &shift;
        }
        let after = affine_align_r2(&truth, &moved).unwrap().r2;
        prop_assert!(base <= 1.0 + 1e-12);
        prop_assert!((base - after).abs() < 1e-10);
    }

    #[test]
    fn knn_accuracy_is_invariant_to_isometries(
        x in matrix(30, 2, 3.0),
        theta in 0.0..std::f64::consts::TAU,
        shift in matrix(1, 2, 5.0),
        seed in any::<u64>(),
    ) {
        let labels: Vec<i64> = (0..30).map(|i| (i % 3) as i64).collect();
        let mut moved = &x * rotation(theta);
        for mut row in moved.row_iter_mut() {
            row += &shift;
        }
        let options = KnnOptions { folds: 3, neighbours: 1, repeats: 2 };
        let a = knn_cv_accuracy(&x, &labels, options, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = knn_cv_accuracy(&moved, &labels, options, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn csv_round_trip_is_lossless(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
        let m = DMatrix::from_vec(4, 3, values);
        let parsed = parse_csv(&matrix_to_csv(&m, None), &CsvOptions { header: Some(false), label_column: None }).unwrap();
        prop_assert_eq!(parsed.values, m);
    }

    #[test]
    fn stick_counts_conserve_row_totals(counts in prop::collection::vec(0u32..20, 5 * 4)) {
        let y = DMatrix::from_vec(5, 4, counts.iter().map(|&c| c as f64).collect());
        let (kappa, remaining) = multinomial_stick_breaking_transform(&y).unwrap();
        for n in 0..5 {
            prop_assert_eq!(remaining[(n, 0)], y.row(n).sum());
            for j in 0..2 {
                prop_assert_eq!(remaining[(n, j + 1)], remaining[(n, j)] - y[(n, j)]);
            }
            for j in 0..3 {
                prop_assert_eq!(kappa[(n, j)], y[(n, j)] - remaining[(n, j)] / 2.0);
            }
        }
    }

    #[test]
    fn masked_likelihood_is_additive(
        counts in prop::collection::vec(0u32..8, 4 * 3),
        psi in matrix(4, 3, 2.0),
        held in prop::collection::vec(any::<bool>(), 4 * 3),
    ) {
        let y = DMatrix::from_vec(4, 3, counts.iter().map(|&c| c as f64).collect());
        let mask = DMatrix::from_vec(4, 3, held);
        let complement = mask.map(|b| !b);
        let state = LikelihoodState::new(4, 3, 1);
        let clamps = ClampCounter::new();
        let ll = |m: Option<DMatrix<bool>>| {
            let obs = ObservationMatrix::from_parts(y.clone(), LikelihoodKind::Poisson, m, None, None).unwrap();
            log_likelihood_psi(&obs, &psi, &state, &clamps).unwrap()
        };
        let total = ll(None);
        let split = ll(Some(mask)) + ll(Some(complement));
        prop_assert!((total - split).abs() < 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn assignment_probabilities_sum_to_one(
        w in matrix(6, 2, 3.0),
        labels in prop::collection::vec(0usize..3, 6),
        means in matrix(3, 2, 2.0),
        alpha in 0.05..20.0f64,
        m in 0usize..6,
    ) {
        let components = (0..3)
            .map(|k| Component::new(DVector::from_iterator(2, means.row(k).iter().copied()), DMatrix::identity(2, 2)).unwrap())
            .collect();
        let state = SpectralState::new(FrequencyMatrix::new(w).unwrap(), labels, components, alpha).unwrap();
        let dist = assignment_distribution(m, &state, &NiwHyper::default_for(2), ClusterLikelihood::Gaussian).unwrap();
        let total: f64 = dist.existing.iter().sum::<f64>() + dist.new_cluster;
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compaction_keeps_frequency_component_pairs(
        labels in prop::collection::vec(0usize..5, 8),
        means in prop::collection::vec(-5.0..5.0f64, 5),
    ) {
        let w = FrequencyMatrix::new(DMatrix::zeros(8, 1)).unwrap();
        let components: Vec<Component> = means
            .iter()
            .map(|&m| Component::new(DVector::from_element(1, m), DMatrix::identity(1, 1)).unwrap())
            .collect();
        let state = SpectralState::new(w, labels.clone(), components, 1.0).unwrap();
        prop_assert!(state.counts().iter().all(|&c| c > 0));
        for (m, &k) in labels.iter().enumerate() {
            prop_assert_eq!(state.components()[state.assignments()[m]].mean[0], means[k]);
        }
    }

    #[test]
    fn pg_mean_is_positive_and_linear_in_b(b in 0.1..50.0f64, c in -10.0..10.0f64) {
        let one = pg_mean(PgParams::new(b, c).unwrap());
        let two = pg_mean(PgParams::new(2.0 * b, c).unwrap());
        prop_assert!(one > 0.0);
        prop_assert!((two - 2.0 * one).abs() < 1e-12 * two);
    }

    #[test]
    fn frequency_draws_are_seed_deterministic(seed in any::<u64>()) {
        let a = sample_rbf_frequencies(5, 2, 0.7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = sample_rbf_frequencies(5, 2, 0.7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.as_matrix(), b.as_matrix());
    }
}
