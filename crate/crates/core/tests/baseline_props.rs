mod common;

use common::rng_for;
use proptest::prelude::*;
use rand::Rng;
use sega::baselines::{pgd_step, rds_step};
use sega::linalg::{self, Metric};
use sega::problems::{make_synthetic, Objective};
use sega::prox::Regularizer;
use sega::verify::gaussian_vector;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rds_never_increases_objective(seed in any::<u64>(), ty in 1u8..=4, n in 2usize..=12, alpha in 1e-4f64..10.0) {
        let mut rng = rng_for(seed);
        let problem = make_synthetic::<f64>(ty, n, seed).unwrap();
        let mut x = gaussian_vector(n, &mut rng) * 5.0;
        for _ in 0..50 {
            let mut s = gaussian_vector(n, &mut rng);
            s /= s.norm();
            let next = rds_step(|y| problem.value(y), &x, &s, alpha);
            prop_assert!(problem.value(&next) <= problem.value(&x));
            x = next;
        }
    }

    #[test]
    fn rds_stays_put_at_minimizer(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = rng_for(seed);
        let problem = make_synthetic::<f64>(3, n, seed).unwrap();
        let x = problem.x_star();
        let s = gaussian_vector(n, &mut rng);
        prop_assert_eq!(rds_step(|y| problem.value(y), &x, &s, 1e-3), x.clone());
        prop_assert_eq!(rds_step(|y| problem.value(y), &x, &s, 0.0), x);
    }

    #[test]
    fn pgd_decreases_objective(seed in any::<u64>(), ty in 1u8..=4, n in 2usize..=12, frac in 0.05f64..=1.0) {
        let mut rng = rng_for(seed);
        let problem = make_synthetic::<f64>(ty, n, seed).unwrap();
        let alpha = frac / linalg::lambda_max(problem.m()).unwrap();
        let id = Metric::identity(n);
        let mut x = gaussian_vector(n, &mut rng) * 5.0;
        for _ in 0..rng.random_range(10..50) {
            let next = pgd_step(&x, &problem.gradient(&x), alpha, &Regularizer::Zero, &id).unwrap();
            let (f0, f1) = (problem.value(&x), problem.value(&next));
            prop_assert!(f1 <= f0 + 1e-12 * f0.abs().max(1.0));
            x = next;
        }
    }
}
