mod common;

use common::{positive_vector, random_overlapping, random_partition, rel, rng_for, wnorm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use sega::estimator::{optimal_subspace_setup, range_projector, sketch_and_project, subspace_update, unbiased_estimate};
use sega::linalg::{self, Metric};
use sega::sketch::{projector_z, Sketch, SketchDistribution};
use sega::verify::{b_orthogonal_vectors, gaussian_matrix, gaussian_vector, random_probabilities, random_spd};

fn random_sketch(n: usize, rng: &mut sega::rng::SegaRng) -> Sketch<f64> {
    if rng.random_bool(0.5) {
        Sketch::Dense(gaussian_matrix(n, rng.random_range(1..=n.min(3)), rng))
    } else {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        Sketch::Coords(if rng.random_bool(0.5) { vec![i] } else { vec![i.min(j), i.max(j)] })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_satisfies_constraint(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let s = random_sketch(n, &mut rng);
        let h = gaussian_vector(n, &mut rng);
        let lam = gaussian_vector(s.width(), &mut rng);
        let hp = sketch_and_project(&h, &s, &lam, &b).unwrap();
        prop_assert!((s.transpose_mul(&hp) - &lam).norm() <= 1e-10 * (1.0 + lam.norm()));
    }

    #[test]
    fn update_is_closest_feasible_point(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let s = random_sketch(n, &mut rng);
        let sm = s.materialize(n);
        let h = gaussian_vector(n, &mut rng);
        let lam = gaussian_vector(s.width(), &mut rng);
        let hp = sketch_and_project(&h, &s, &lam, &b).unwrap();
        let best = b.norm_sq(&(&hp - &h));
        let proj_null = DMatrix::identity(n, n) - &sm * linalg::pseudo_inverse(&sm.tr_mul(&sm), linalg::rel_cutoff()).unwrap() * sm.transpose();
        for _ in 0..20 {
            let y = &hp + &proj_null * gaussian_vector(n, &mut rng);
            prop_assert!(b.norm_sq(&(&y - &h)) >= best - 1e-10 * (1.0 + best));
        }
    }

    #[test]
    fn estimate_is_unbiased(seed in any::<u64>(), n in 2usize..=8, kind in 0u8..4) {
        let mut rng = rng_for(seed);
        let diag = Metric::diagonal(positive_vector(n, &mut rng)).unwrap();
        let (dist, b) = match kind {
            0 => (SketchDistribution::coordinate(random_probabilities(n, &mut rng)).unwrap(), diag),
            1 => (SketchDistribution::tau_nice(n, rng.random_range(1..=n)).unwrap(), diag),
            2 => (random_partition(n, &mut rng), diag),
            _ => {
                let m = random_spd(n, &mut rng);
                let vecs = b_orthogonal_vectors(&m, &mut rng);
                (SketchDistribution::fixed_vectors(vecs, random_probabilities(n, &mut rng)).unwrap(), Metric::dense(m).unwrap())
            }
        };
        let bound = dist.bind(&b).unwrap();
        let (h, grad) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let mut mean = DVector::zeros(n);
        for (p, s) in bound.support().unwrap() {
            let hp = sketch_and_project(&h, &s.sketch, &s.sketch.transpose_mul(&grad), &b).unwrap();
            mean += unbiased_estimate(&h, &hp, s.theta) * p;
        }
        prop_assert!((&mean - &grad).norm() <= 1e-10 * (1.0 + grad.norm()));
    }

    #[test]
    fn projected_distance_identity(seed in any::<u64>(), n in 2usize..=7, overlapping in any::<bool>()) {
        let mut rng = rng_for(seed);
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let dist = if overlapping {
            random_overlapping(n, &mut rng)
        } else {
            SketchDistribution::coordinate(random_probabilities(n, &mut rng)).unwrap()
        };
        let (h, grad, v) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let mut lhs = 0.0;
        let mut ez = DMatrix::zeros(n, n);
        for (p, s) in dist.atoms().unwrap() {
            let hp = sketch_and_project(&h, &s, &s.transpose_mul(&grad), &b).unwrap();
            lhs += p * b.norm_sq(&(&hp - &v));
            ez += projector_z(&s, &b, n).unwrap() * p;
        }
        let rhs = wnorm(&(&h - &v), &(b.matrix() - &ez)) + wnorm(&(&grad - &v), &ez);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn estimate_variance_bound(seed in any::<u64>(), n in 2usize..=7, kind in 0u8..3) {
        let mut rng = rng_for(seed);
        let (b, dist) = match kind {
            0 => (Metric::diagonal(positive_vector(n, &mut rng)).unwrap(), SketchDistribution::coordinate(random_probabilities(n, &mut rng)).unwrap()),
            1 => (Metric::identity(n), SketchDistribution::tau_nice(n, rng.random_range(1..=n)).unwrap()),
            _ => {
                let m = random_spd(n, &mut rng);
                let vecs = b_orthogonal_vectors(&m, &mut rng);
                (Metric::dense(m).unwrap(), SketchDistribution::fixed_vectors(vecs, random_probabilities(n, &mut rng)).unwrap())
            }
        };
        let bound = dist.bind(&b).unwrap();
        let (h, grad, v) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let mut lhs = 0.0;
        for (p, s) in bound.support().unwrap() {
            let hp = sketch_and_project(&h, &s.sketch, &s.sketch.transpose_mul(&grad), &b).unwrap();
            lhs += p * b.norm_sq(&(unbiased_estimate(&h, &hp, s.theta) - &v));
        }
        let c = bound.expected_c().unwrap();
        let rhs = 2.0 * wnorm(&(&grad - &v), &c) + 2.0 * wnorm(&(&h - &v), &(&c - b.matrix()));
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn estimate_second_moment_bound(seed in any::<u64>(), n in 2usize..=7, serial in any::<bool>()) {
        let mut rng = rng_for(seed);
        let id = Metric::identity(n);
        let dist = if serial {
            SketchDistribution::coordinate(random_probabilities(n, &mut rng)).unwrap()
        } else {
            SketchDistribution::tau_nice(n, rng.random_range(1..=n)).unwrap()
        };
        let bound = dist.bind(&id).unwrap();
        let q = DMatrix::from_diagonal(&positive_vector(n, &mut rng));
        let (h, grad) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let mut lhs = 0.0;
        for (p, s) in bound.support().unwrap() {
            let hp = sketch_and_project(&h, &s.sketch, &s.sketch.transpose_mul(&grad), &id).unwrap();
            lhs += 0.5 * p * wnorm(&unbiased_estimate(&h, &hp, s.theta), &q);
        }
        let pinv = DMatrix::from_diagonal(&dist.probability_vector().unwrap().map(|v| 1.0 / v));
        let w = &pinv * dist.probability_matrix().unwrap().component_mul(&q) * &pinv;
        let rhs = wnorm(&h, &(&w - &q)) + wnorm(&grad, &w);
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn coordinate_set_weighted_identity(seed in any::<u64>(), n in 2usize..=7, kind in 0u8..3) {
        let mut rng = rng_for(seed);
        let id = Metric::identity(n);
        let dist = match kind {
            0 => SketchDistribution::coordinate(random_probabilities(n, &mut rng)).unwrap(),
            1 => SketchDistribution::tau_nice(n, rng.random_range(1..=n)).unwrap(),
            _ => random_overlapping(n, &mut rng),
        };
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0));
        let (h, grad) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let mut lhs = 0.0;
        for (p, s) in dist.atoms().unwrap() {
            let hp = sketch_and_project(&h, &s, &s.transpose_mul(&grad), &id).unwrap();
            lhs += p * linalg::diag_norm_sq(&hp, &d);
        }
        let pd = dist.probability_vector().unwrap().component_mul(&d);
        let rhs = linalg::diag_norm_sq(&h, &(&d - &pd)) + linalg::diag_norm_sq(&grad, &pd);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn subspace_projector_identities(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = rng_for(seed);
        let d = rng.random_range(1..=n);
        let a = gaussian_matrix(d, n, &mut rng);
        let gram = &a * a.transpose();
        prop_assume!(linalg::lambda_max(&gram).unwrap() <= 1e4 * linalg::lambda_min(&gram).unwrap());
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let proj = range_projector(&a, &b).unwrap();
        let h = proj.h();
        prop_assert!(rel(&(h * h), h) <= 1e-9);
        prop_assert!(rel(&(h * b.inverse_matrix()), &(b.inverse_matrix() * h.transpose())) <= 1e-9);
        let z = proj.projector_z(&random_sketch(n, &mut rng)).unwrap();
        prop_assert!(rel(&z.transpose(), &z) <= 1e-12);
        prop_assert!(rel(&(&z * proj.h_binv() * &z), &z) <= 1e-8);
    }

    #[test]
    fn subspace_iterates_stay_in_range(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = rng_for(seed);
        let d = rng.random_range(1..=n);
        let a = gaussian_matrix(d, n, &mut rng);
        let setup = optimal_subspace_setup(&a).unwrap();
        let proj = range_projector(&a, &setup.metric).unwrap();
        let bound = setup.distribution.bind(&setup.metric).unwrap();
        let mut h = a.tr_mul(&gaussian_vector(d, &mut rng));
        let grad = a.tr_mul(&gaussian_vector(d, &mut rng));
        for _ in 0..20 {
            let s = bound.sample(&mut rng);
            let up = subspace_update(&h, &s.sketch, &s.sketch.transpose_mul(&grad), proj.sample_theta(&s), &proj).unwrap();
            prop_assert!(proj.range_residual(&up.g) <= 1e-9 * (1.0 + up.g.norm()));
            prop_assert!(proj.range_residual(&up.h_next) <= 1e-9 * (1.0 + up.h_next.norm()));
            h = up.h_next;
        }
    }

    #[test]
    fn subspace_variance_bound(seed in any::<u64>(), n in 3usize..=7) {
        let mut rng = rng_for(seed);
        let d = rng.random_range(1..n);
        let a = gaussian_matrix(d, n, &mut rng);
        let setup = optimal_subspace_setup(&a).unwrap();
        let b = setup.metric.clone();
        let proj = range_projector(&a, &b).unwrap();
        let bound = setup.distribution.bind(&b).unwrap();
        let (_, _, c) = proj.moments(&bound).unwrap();
        let h = a.tr_mul(&gaussian_vector(d, &mut rng));
        let grad = a.tr_mul(&gaussian_vector(d, &mut rng));
        let v = a.tr_mul(&gaussian_vector(d, &mut rng));
        let mut lhs = 0.0;
        for (p, s) in bound.support().unwrap() {
            let up = subspace_update(&h, &s.sketch, &s.sketch.transpose_mul(&grad), proj.sample_theta(&s), &proj).unwrap();
            lhs += p * b.norm_sq(&(&up.g - &v));
        }
        let rhs = 2.0 * wnorm(&(&h - &v), &(&c - b.matrix())) + 2.0 * wnorm(&(&grad - &v), &c);
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }
}

/// Without the factor 2 the subspace variance bound fails: A = I, B = I, uniform coordinates,
/// h − v and ∇f − v pointing in opposite directions.
#[test]
fn subspace_variance_bound_needs_factor_two() {
    let n = 2;
    let a = DMatrix::<f64>::identity(n, n);
    let setup = optimal_subspace_setup(&a).unwrap();
    assert!(setup.metric.is_identity());
    let proj = range_projector(&a, &setup.metric).unwrap();
    let bound = setup.distribution.bind(&setup.metric).unwrap();
    let (_, _, c) = proj.moments(&bound).unwrap();
    let (h, grad, v) = (DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0]), DVector::zeros(n));
    let mut lhs = 0.0;
    for (p, s) in bound.support().unwrap() {
        let up = subspace_update(&h, &s.sketch, &s.sketch.transpose_mul(&grad), proj.sample_theta(&s), &proj).unwrap();
        lhs += p * up.g.norm_squared();
    }
    let single = wnorm(&(&h - &v), &(&c - DMatrix::identity(n, n))) + wnorm(&(&grad - &v), &c);
    assert!((lhs - 5.0).abs() <= 1e-12, "E|g|^2 = {lhs}");
    assert!((single - 3.0).abs() <= 1e-12, "single bound = {single}");
    assert!(lhs > single && lhs <= 2.0 * single);
}
