#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sega::rng::{self, SegaRng};
use sega::sketch::SketchDistribution;
use sega::verify::random_probabilities;

pub fn rng_for(seed: u64) -> SegaRng {
    rng::stream(seed, rng::STREAM_DATA)
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn wnorm(x: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    (x.transpose() * w * x)[(0, 0)]
}

pub fn positive_vector(n: usize, rng: &mut SegaRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0))
}

/// Random partition of 0..n into consecutive blocks with random probabilities.
pub fn random_partition(n: usize, rng: &mut SegaRng) -> SketchDistribution<f64> {
    let mut support: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match support.last_mut() {
            Some(last) if rng.random_bool(0.5) => last.push(i),
            _ => support.push(vec![i]),
        }
    }
    let probs = random_probabilities(support.len(), rng);
    SketchDistribution::block(n, support, probs.iter().copied().collect()).unwrap()
}

/// Singletons plus a few random overlapping pairs.
pub fn random_overlapping(n: usize, rng: &mut SegaRng) -> SketchDistribution<f64> {
    let mut support: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for _ in 0..rng.random_range(1..=3) {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        support.push(vec![i.min(j), i.max(j)]);
    }
    let probs = random_probabilities(support.len(), rng);
    SketchDistribution::block(n, support, probs.iter().copied().collect()).unwrap()
}
