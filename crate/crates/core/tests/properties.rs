//! Property tests for the structural invariants: simplex feasibility,
//! projection idempotence, convex-combination bounds, and metric
//! invariances.

use ndarray::Array2;
use proptest::prelude::*;

use unmix_core::denoise::{denoise, nlm_denoise_band, DenoiserSpec};
use unmix_core::hsi::{lmm_mix, project_simplex_columns, EndmemberMatrix, HyperspectralImage};
use unmix_core::metrics::{msad, msid, permute_endmember_columns, rmse};
use unmix_core::nn::{encoder_forward, init_params, EncoderSpec};
use unmix_core::synth::gaussian_field_abundances;

fn finite_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn positive_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(0.05f64..1.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #[test]
    fn projection_is_idempotent(m in finite_matrix(4, 6)) {
        let once = project_simplex_columns(&m).unwrap();
        let twice = project_simplex_columns(once.data()).unwrap();
        for (a, b) in once.data().iter().zip(twice.data().iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_output_is_feasible(m in finite_matrix(5, 4)) {
        let p = project_simplex_columns(&m).unwrap();
        for col in p.data().columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-9);
            prop_assert!(col.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn lmm_respects_convex_combination_bounds(
        s_raw in positive_matrix(6, 3),
        a_raw in finite_matrix(3, 8),
    ) {
        let s = EndmemberMatrix::new(s_raw).unwrap();
        let a = project_simplex_columns(&a_raw).unwrap();
        let y = lmm_mix(&s, &a, (2, 4)).unwrap();
        let max_row_sum = s
            .data()
            .rows()
            .into_iter()
            .map(|r| r.sum())
            .fold(f64::NEG_INFINITY, f64::max);
        for &v in y.data().iter() {
            prop_assert!(v >= -1e-12);
            prop_assert!(v <= max_row_sum + 1e-12);
        }
    }

    #[test]
    fn rmse_is_symmetric_and_zero_only_at_equality(
        a_raw in finite_matrix(3, 5),
        b_raw in finite_matrix(3, 5),
    ) {
        let a = project_simplex_columns(&a_raw).unwrap();
        let b = project_simplex_columns(&b_raw).unwrap();
        let ab = rmse(&a, &b).unwrap();
        let ba = rmse(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ab >= 0.0);
        if ab == 0.0 {
            prop_assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn angle_metrics_ignore_scale_and_permutation(
        s_raw in positive_matrix(8, 3),
        scale in 0.1f64..10.0,
    ) {
        let s = EndmemberMatrix::new(s_raw).unwrap();
        let scaled = EndmemberMatrix::new(s.data() * scale).unwrap();
        prop_assert!(msad(&s, &scaled).unwrap() < 1e-9);
        prop_assert!(msid(&s, &scaled).unwrap().abs() < 1e-9);
        let shuffled = permute_endmember_columns(&scaled, &[2, 0, 1]).unwrap();
        prop_assert!(msad(&s, &shuffled).unwrap() < 1e-9);
    }

    #[test]
    fn nlm_stays_inside_window_range(seed in 0u64..1000) {
        let band = Array2::from_shape_fn((7, 7), |(y, x)| {
            let t = (seed as f64) * 0.37 + y as f64 * 1.3 + x as f64 * 0.7;
            (t.sin() + 1.0) / 2.0
        });
        let out = nlm_denoise_band(&band, 1, 2, 0.15).unwrap();
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &v in out.iter() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn denoisers_preserve_shape_and_finiteness(seed in 0u64..500) {
        let a = gaussian_field_abundances(6, 6, 3, 1.5, seed).unwrap();
        for spec in [DenoiserSpec::Identity, DenoiserSpec::Box { radius: 1 }, DenoiserSpec::nlm_default()] {
            let out = denoise(a.data(), (6, 6), &spec).unwrap();
            prop_assert_eq!(out.dim(), a.data().dim());
            prop_assert!(out.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn generated_fields_are_feasible(seed in 0u64..2000) {
        let a = gaussian_field_abundances(5, 4, 3, 1.0, seed).unwrap();
        for col in a.data().columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn encoder_output_feasible_for_random_params(seed in 0u64..200) {
        let mut gen = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        use rand::{Rng, SeedableRng};
        let y = HyperspectralImage::new(
            Array2::from_shape_fn((5, 9), |_| gen.random_range(0.0..1.0)),
            3,
            3,
        )
        .unwrap();
        let spec = EncoderSpec::with_hidden_widths(5, 2, [6, 4, 4, 4]);
        let params = init_params(&spec, &y, 2, seed).unwrap();
        let e = encoder_forward(&params, &spec, &y).unwrap();
        for col in e.data().columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-9);
            prop_assert!(col.iter().all(|&v| v >= 0.0));
        }
    }
}
