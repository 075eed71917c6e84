use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riemann_bci::dsp::{bandpass, BandSpec, Epoch};
use riemann_bci::features::sample_covariance_raw;
use riemann_bci::io::EpochFile;
use riemann_bci::mdm::{argmax_scores, DistanceVector};
use riemann_bci::spd::{geodesic, random_invertible, random_spd, riemann_distance, SpdMatrix};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn triple(seed: u64, dim: usize, cond: f64) -> (SpdMatrix, SpdMatrix, SpdMatrix, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_spd(&mut rng, dim, cond);
    let b = random_spd(&mut rng, dim, cond);
    let c = random_spd(&mut rng, dim, cond);
    (a, b, c, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric_and_inversion_invariant(seed: u64, dim in 2usize..10, cond in 1.0f64..1e4) {
        let (a, b, _, _) = triple(seed, dim, cond);
        let d = riemann_distance(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(rel(d, riemann_distance(&b, &a).unwrap()) < 1e-8);
        prop_assert!(rel(d, riemann_distance(&a.inverse(), &b.inverse()).unwrap()) < 1e-8);
    }

    #[test]
    fn distance_is_congruence_invariant(seed: u64, dim in 2usize..10, cond in 1.0f64..1e3) {
        let (a, b, _, mut rng) = triple(seed, dim, cond);
        let w = random_invertible(&mut rng, dim, 10.0);
        let d = riemann_distance(&a, &b).unwrap();
        let dw = riemann_distance(&a.congruence(&w).unwrap(), &b.congruence(&w).unwrap()).unwrap();
        prop_assert!(rel(d, dw) < 1e-8, "{} vs {}", d, dw);
    }

    #[test]
    fn triangle_inequality(seed: u64, dim in 2usize..10, cond in 1.0f64..1e4) {
        let (a, b, c, _) = triple(seed, dim, cond);
        let ab = riemann_distance(&a, &b).unwrap();
        let bc = riemann_distance(&b, &c).unwrap();
        let ac = riemann_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn geodesic_is_a_constant_speed_curve(seed: u64, dim in 2usize..8, t in 0.0f64..1.0) {
        let (a, b, _, _) = triple(seed, dim, 100.0);
        let d = riemann_distance(&a, &b).unwrap();
        let g = geodesic(&a, &b, t).unwrap();
        prop_assert!((riemann_distance(&a, &g).unwrap() - t * d).abs() < 1e-8 * d.max(1.0));
        prop_assert!((riemann_distance(&g, &b).unwrap() - (1.0 - t) * d).abs() < 1e-8 * d.max(1.0));
    }

    #[test]
    fn bandpass_is_linear(seed: u64, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(3, 200, |_, _| rng.random::<f64>() - 0.5);
        let y = DMatrix::from_fn(3, 200, |r, c| ((r + 2) as f64 * c as f64 * 0.11).cos());
        let spec = BandSpec::new(8.0, 30.0, 4);
        let f = |m: DMatrix<f64>| bandpass(&Epoch::new(m, 128.0, None, Vec::new()).unwrap(), &spec).unwrap().data().clone();
        let lhs = f(&x * alpha + &y * beta);
        let rhs = f(x) * alpha + f(y) * beta;
        prop_assert!((lhs - &rhs).amax() <= 1e-10 * (1.0 + rhs.amax()));
    }

    #[test]
    fn covariance_ignores_sample_order(seed: u64, n in 1usize..6, t in 2usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, t, |_, _| rng.random::<f64>() - 0.5);
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut rng);
        let y = DMatrix::from_fn(n, t, |r, c| x[(r, perm[c])]);
        let cx = sample_covariance_raw(&Epoch::new(x, 1.0, None, Vec::new()).unwrap()).unwrap();
        let cy = sample_covariance_raw(&Epoch::new(y, 1.0, None, Vec::new()).unwrap()).unwrap();
        prop_assert_eq!(cx.as_matrix(), cy.as_matrix());
    }

    #[test]
    fn epoch_file_round_trips_f32(values in proptest::collection::vec(-1e6f32..1e6, 12), label in -1i64..4) {
        let data = DMatrix::from_fn(3, 4, |r, c| f64::from(values[r * 4 + c]));
        let label = (label >= 0).then_some(label as u32);
        let file = EpochFile::new(vec![Epoch::new(data, 250.0, label, vec!["a".into(), "b".into(), "c".into()]).unwrap()], None);
        let bytes = file.to_bytes().unwrap();
        prop_assert_eq!(EpochFile::from_reader(bytes.as_slice()).unwrap(), file);
    }

    #[test]
    fn soft_scores_form_a_distribution_led_by_the_nearest_class(values in proptest::collection::vec(0.0f64..50.0, 2..8)) {
        let ids: Vec<u32> = (0..values.len() as u32).collect();
        let d = DistanceVector::new(ids.clone(), values).unwrap();
        let p = d.soft_scores();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert_eq!(argmax_scores(&ids, &p), d.argmin());
    }
}
