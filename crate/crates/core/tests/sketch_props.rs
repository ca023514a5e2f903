mod common;

use common::{positive_vector, random_overlapping, random_partition, rel, rng_for};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use sega::linalg::Metric;
use sega::sketch::{projector_z, Sketch, SketchDistribution};
use sega::verify::{b_orthogonal_vectors, gaussian_matrix, random_probabilities, random_spd};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finite_supports_are_unbiased(seed in any::<u64>(), n in 2usize..=10, kind in 0u8..4) {
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
        let etz = dist.bind(&b).unwrap().expected_theta_z().unwrap();
        prop_assert!(rel(&etz, &b.matrix()) <= 1e-10);
    }

    #[test]
    fn projector_is_b_inverse_idempotent(seed in any::<u64>(), n in 1usize..=10, w in 1usize..=3) {
        let mut rng = rng_for(seed);
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let s = Sketch::Dense(gaussian_matrix(n, w, &mut rng));
        let z = projector_z(&s, &b, n).unwrap();
        prop_assert!(rel(&(z.transpose() * b.inverse_matrix() * &z), &z) <= 1e-10);
    }

    #[test]
    fn projector_ignores_column_mixing(seed in any::<u64>(), n in 2usize..=10, w in 1usize..=3) {
        let mut rng = rng_for(seed);
        let b = Metric::dense(random_spd(n, &mut rng)).unwrap();
        let s = gaussian_matrix(n, w, &mut rng);
        let r = gaussian_matrix(w, w, &mut rng) + DMatrix::identity(w, w) * 3.0;
        prop_assume!(r.determinant().abs() > 1e-3);
        let z = projector_z(&Sketch::Dense(s.clone()), &b, n).unwrap();
        let zr = projector_z(&Sketch::Dense(s * r), &b, n).unwrap();
        prop_assert!(rel(&zr, &z) <= 1e-9);
    }

    #[test]
    fn probability_matrix_diagonal_is_inclusion_probability(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = rng_for(seed);
        let dist = random_overlapping(n, &mut rng);
        let pm = dist.probability_matrix().unwrap();
        let mut incl = vec![0.0; n];
        for (p, s) in dist.atoms().unwrap() {
            let Sketch::Coords(idx) = s else { unreachable!() };
            for i in idx {
                incl[i] += p;
            }
        }
        for i in 0..n {
            prop_assert_eq!(pm[(i, i)], incl[i]);
            prop_assert_eq!(dist.probability_vector().unwrap()[i], pm[(i, i)]);
        }
        prop_assert_eq!(&pm, &pm.transpose());
    }
}

#[test]
fn tau_nice_inclusion_probability() {
    for n in 2..=8 {
        for tau in 1..=n {
            let p = SketchDistribution::<f64>::tau_nice(n, tau).unwrap().probability_vector().unwrap();
            for &pi in p.iter() {
                assert!((pi - tau as f64 / n as f64).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn gaussian_monte_carlo_matches_identity() {
    let n = 5;
    let bound = SketchDistribution::<f64>::gaussian(n, 1).unwrap().bind(&Metric::identity(n)).unwrap();
    let mc = bound.monte_carlo_moment(1, 1_000_000, &mut rng_for(11)).unwrap();
    let id = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let dev = (mc.mean[(i, j)] - id[(i, j)]).abs();
            assert!(dev <= 5.0 * mc.stderr[(i, j)], "entry ({i},{j}) off by {dev} with stderr {}", mc.stderr[(i, j)]);
        }
    }
}
