mod common;

use common::rng_for;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use sega::baselines::run_cd;
use sega::estimator::{optimal_subspace_setup, range_projector};
use sega::linalg::{self, Metric};
use sega::problems::{make_least_squares_subspace, LeastSquaresProblem, Objective, QuadraticProblem};
use sega::prox::Regularizer;
use sega::rng::SegaRng;
use sega::sketch::SketchDistribution;
use sega::solvers::contraction::{expected_one_step_contraction, expected_one_step_coordinate, expected_one_step_metric_g};
use sega::solvers::stepsize::{importance_trace, resolve_subspace, stepsize_coordinate_nonacc, stepsize_metric_g};
use sega::solvers::{asega_params, run_sega, EstimatorMode, RunOptions, SegaState, StepsizePolicy};
use sega::verify::{gaussian_matrix, gaussian_vector, random_probabilities, random_spd};

fn random_quadratic(n: usize, rng: &mut SegaRng) -> QuadraticProblem<f64> {
    QuadraticProblem::from_matrix(random_spd(n, rng), gaussian_vector(n, rng)).unwrap()
}

fn random_state(center: &DVector<f64>, rng: &mut SegaRng) -> SegaState<f64> {
    let spread = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let n = center.len();
    SegaState { x: center + gaussian_vector(n, rng) * spread, h: gaussian_vector(n, rng) * spread, k: 0 }
}

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-9 * rhs.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn general_lyapunov_contracts(seed in any::<u64>(), n in 2usize..=10, uniform in any::<bool>()) {
        let mut rng = rng_for(seed);
        let problem = random_quadratic(n, &mut rng);
        let sol = problem.solve(&Regularizer::Zero).unwrap();
        let p = if uniform { DVector::from_element(n, 1.0 / n as f64) } else { random_probabilities(n, &mut rng) };
        let bound = SketchDistribution::coordinate(p).unwrap().bind(&Metric::identity(n)).unwrap();
        let step = StepsizePolicy::General { sigma: None }.resolve(problem.smoothness(), &bound).unwrap();
        for _ in 0..5 {
            let state = random_state(&sol.x, &mut rng);
            let one = expected_one_step_contraction(&problem, &state, &bound, step.alpha, step.sigma, &Regularizer::Zero, &EstimatorMode::Standard, &sol).unwrap();
            prop_assert!(holds(one.lhs, one.rhs), "{} > {}", one.lhs, one.rhs);
        }
    }

    #[test]
    fn coordinate_lyapunov_contracts(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let problem = random_quadratic(n, &mut rng);
        let sol = problem.solve(&Regularizer::Zero).unwrap();
        let m = problem.m().clone();
        let (p, alpha, sigma) = importance_trace(&m).unwrap();
        let gamma = stepsize_coordinate_nonacc(&m, &p, &m.diagonal(), problem.smoothness().mu, alpha, sigma).unwrap();
        let bound = SketchDistribution::coordinate(p).unwrap().bind(&Metric::identity(n)).unwrap();
        for _ in 0..5 {
            let state = random_state(&sol.x, &mut rng);
            let one = expected_one_step_coordinate(&problem, &state, &bound, alpha, sigma, gamma, sol.f).unwrap();
            prop_assert!(holds(one.lhs, one.rhs), "{} > {}", one.lhs, one.rhs);
        }
    }

    #[test]
    fn coordinate_lyapunov_contracts_under_pl(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = rng_for(seed);
        let d = rng.random_range(1..n);
        let a = gaussian_matrix(d, n, &mut rng);
        let gram = &a * a.transpose();
        prop_assume!(linalg::lambda_max(&gram).unwrap() <= 1e4 * linalg::lambda_min(&gram).unwrap());
        let problem = LeastSquaresProblem::new(a, gaussian_vector(d, &mut rng)).unwrap();
        let sol = problem.solve(&Regularizer::Zero).unwrap();
        let m = problem.smoothness().m.clone().unwrap();
        prop_assert!(linalg::lambda_min(&m).unwrap().abs() <= 1e-8 * linalg::lambda_max(&m).unwrap());
        let mu = problem.smoothness().mu;
        let mu_pl = mu.min(m.diagonal().min());
        let (p, alpha, sigma) = importance_trace(&m).unwrap();
        let gamma = stepsize_coordinate_nonacc(&m, &p, &m.diagonal(), mu_pl, alpha, sigma).unwrap();
        let bound = SketchDistribution::coordinate(p).unwrap().bind(&Metric::identity(n)).unwrap();
        for _ in 0..5 {
            let state = random_state(&sol.x, &mut rng);
            let one = expected_one_step_coordinate(&problem, &state, &bound, alpha, sigma, gamma, sol.f).unwrap();
            let psi = one.rhs / (1.0 - gamma * mu);
            let rhs = (1.0 - gamma * mu_pl) * psi;
            prop_assert!(holds(one.lhs, rhs), "{} > {}", one.lhs, rhs);
        }
    }

    #[test]
    fn metric_g_lyapunov_contracts(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let problem = random_quadratic(n, &mut rng);
        let sol = problem.solve(&Regularizer::Zero).unwrap();
        let g = problem.m().diagonal();
        let gis = g.map(|v| 1.0 / v.sqrt());
        let scaled = DMatrix::from_diagonal(&gis) * problem.m() * DMatrix::from_diagonal(&gis);
        let (l, mu) = (linalg::lambda_max(&scaled).unwrap(), linalg::lambda_min(&scaled).unwrap());
        let sigma = 1.0 / (2.0 * l);
        let alpha = stepsize_metric_g(&DVector::from_element(n, 1.0 / n as f64), l, mu, sigma).unwrap();
        let bound = SketchDistribution::uniform_coordinate(n).unwrap().bind(&Metric::identity(n)).unwrap();
        for _ in 0..5 {
            let state = random_state(&sol.x, &mut rng);
            let one = expected_one_step_metric_g(&problem, &state, &bound, &g, alpha, sigma, l, mu, &sol).unwrap();
            prop_assert!(holds(one.lhs, one.rhs), "{} > {}", one.lhs, one.rhs);
        }
    }

    #[test]
    fn subspace_lyapunov_contracts(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let d = rng.random_range(1..=n);
        let problem: LeastSquaresProblem<f64> = make_least_squares_subspace(n, d, seed).unwrap();
        let sol = problem.solve(&Regularizer::Zero).unwrap();
        let setup = optimal_subspace_setup(problem.a()).unwrap();
        let proj = range_projector(problem.a(), &setup.metric).unwrap();
        let bound = setup.distribution.bind(&setup.metric).unwrap();
        let step = resolve_subspace(problem.smoothness(), &bound, &proj, None).unwrap();
        let mode = EstimatorMode::Subspace(proj);
        for _ in 0..5 {
            let spread = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let x = &sol.x + problem.a().tr_mul(&gaussian_vector(d, &mut rng)) * spread;
            let h = problem.a().tr_mul(&gaussian_vector(d, &mut rng)) * spread;
            let state = SegaState { x, h, k: 0 };
            let one = expected_one_step_contraction(&problem, &state, &bound, step.alpha, step.sigma, &Regularizer::Zero, &mode, &sol).unwrap();
            prop_assert!(holds(one.lhs, one.rhs), "{} > {}", one.lhs, one.rhs);
        }
    }

    #[test]
    fn accelerated_parameters_follow_pattern(seed in any::<u64>(), n in 1usize..=20, mu in 1e-4f64..10.0) {
        let mut rng = rng_for(seed);
        let p = random_probabilities(n, &mut rng);
        let v = DVector::from_fn(n, |_, _| rng.random_range(0.1..10.0));
        let params = asega_params(&v, &p, mu).unwrap();
        prop_assert!(params.alpha > 0.0 && params.beta > 0.0 && params.sigma > 0.0 && params.c1 > 0.0);
        prop_assert!(params.tau > 0.0 && params.tau < 1.0);
        prop_assert!((params.sigma - 5.0 * params.beta * params.beta).abs() <= 1e-12 * params.sigma);
        let target = params.alpha - params.alpha * params.alpha * params.td * params.td;
        prop_assert!((params.beta * 6.0 * params.tau - target).abs() <= 1e-12 * target);
    }

    #[test]
    fn zero_estimator_reduces_to_coordinate_descent(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = rng_for(seed);
        let problem = random_quadratic(n, &mut rng);
        let p = random_probabilities(n, &mut rng);
        let bound = SketchDistribution::coordinate(p).unwrap().bind(&Metric::identity(n)).unwrap();
        let alpha = 0.1 / linalg::lambda_max(problem.m()).unwrap();
        let mut o = RunOptions::new(300, seed);
        o.record_path = true;
        o.mode = EstimatorMode::ForcedZero;
        let sega = run_sega(&problem, &bound, &StepsizePolicy::Manual { alpha, sigma: 0.0 }, &Regularizer::Zero, &o).unwrap();
        let cd = run_cd(&problem, &bound, alpha, &Regularizer::Zero, &o).unwrap();
        prop_assert_eq!(sega.path.len(), 301);
        prop_assert_eq!(sega.path.len(), cd.path.len());
        for (a, b) in sega.path.iter().zip(&cd.path) {
            prop_assert_eq!(a.0, b.0);
            prop_assert!(a.1.iter().zip(&b.1).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}
