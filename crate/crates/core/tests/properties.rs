mod common;

use condcov::conditional::{assemble_dag, cross_cov_at, Point};
use condcov::domain::Observations;
use condcov::inference::loglik;
use condcov::kernels::MaternParams;
use condcov::linalg::JitterPolicy;
use condcov::predict::crps_gaussian;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn joint_matrix_is_positive_semidefinite(seed in any::<u64>(), p in 2usize..5, n in 3usize..16, dim in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (grid, net) = common::random_model(&mut rng, p, n, dim);
        let model = assemble_dag(&grid, &net).unwrap();
        let c = model.matrix();
        let scale = c.diagonal().mean();
        for _ in 0..10 {
            let x = DVector::from_fn(c.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let q = (x.transpose() * &c * &x)[(0, 0)];
            prop_assert!(q >= -1e-8 * scale * x.norm_squared(), "{q}");
        }
    }

    #[test]
    fn cross_covariance_is_transpose_symmetric(seed in any::<u64>(), s in 0.0f64..1.0, u in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (grid, net) = common::random_model(&mut rng, 3, 12, 1);
        let model = assemble_dag(&grid, &net).unwrap();
        for (q, r) in [(0, 1), (0, 2), (1, 2)] {
            let a = cross_cov_at(&model, q, r, &[s], &[u]).unwrap();
            let b = cross_cov_at(&model, r, q, &[u], &[s]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
        }
    }

    #[test]
    fn loglik_ignores_observation_order(seed in any::<u64>(), m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (grid, net) = common::random_model(&mut rng, 2, 10, 1);
        let net = condcov::inference::with_parameters(&net, &[("Y1.noise".into(), 0.1), ("Y2.noise".into(), 0.1)]).unwrap();
        let mut obs: Vec<Observations> = (0..2)
            .map(|q| {
                let locs: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
                let vals = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                Observations::new(q, locs, vals).unwrap()
            })
            .collect();
        let a = loglik(&grid, &net, &obs, JitterPolicy::default());
        let rev: Vec<usize> = (0..m).rev().collect();
        obs[0] = obs[0].select(&rev);
        obs.swap(0, 1);
        let b = loglik(&grid, &net, &obs, JitterPolicy::default());
        prop_assert!(a.is_finite());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn crps_is_nonnegative_and_equivariant(mu in -10.0f64..10.0, sigma in 0.01f64..10.0, y in -10.0f64..10.0, c in 0.1f64..10.0) {
        let v = crps_gaussian(mu, sigma, y);
        prop_assert!(v >= 0.0);
        prop_assert!((crps_gaussian(-mu, sigma, -y) - v).abs() <= 1e-12 * (1.0 + v));
        prop_assert!((crps_gaussian(c * mu, c * sigma, c * y) - c * v).abs() <= 1e-10 * (1.0 + c * v));
        prop_assert!((crps_gaussian(mu + 3.0, sigma, y + 3.0) - v).abs() <= 1e-10 * (1.0 + v));
    }

    #[test]
    fn matern_is_bounded_and_decreasing(v in 0.1f64..5.0, k in 0.1f64..50.0, nu in 0.05f64..5.0, d in 0.0f64..2.0, dd in 0.0f64..1.0) {
        let p = MaternParams::new(v, k, nu).unwrap();
        let c0 = p.covariance(d);
        let c1 = p.covariance(d + dd);
        prop_assert!(c0 <= v * (1.0 + 1e-12) && c0 >= 0.0);
        prop_assert!(c1 <= c0 * (1.0 + 1e-10) + 1e-300);
    }

    #[test]
    fn point_covariance_matches_grid_block(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (grid, net) = common::random_model(&mut rng, 3, 8, 1);
        let model = assemble_dag(&grid, &net).unwrap();
        let pts: Vec<Point> = (0..3).flat_map(|q| (0..8).map(move |k| (q, k)))
            .map(|(q, k)| Point::new(q, grid.vertex(k).to_vec()))
            .collect();
        let c = model.covariance_of(&pts, true).unwrap();
        let j = model.matrix();
        prop_assert!((c - j).amax() < 1e-12);
    }
}
