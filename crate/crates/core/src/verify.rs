//! Runtime invariant suite: exact-enumeration checks of the estimator identities,
//! one-step contraction, the coordinate-descent reduction and trace determinism.
//!
//! Used by `sega verify`. Each check draws small random instances from a seeded stream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baselines::cd_step;
use crate::error::Result;
use crate::estimator::{range_projector, sketch_and_project};
use crate::harness::trace::Trace;
use crate::linalg::{self, Metric};
use crate::problems::{make_synthetic, Objective};
use crate::prox::Regularizer;
use crate::rng::{self, SegaRng};
use crate::sketch::{projector_z, Sketch, SketchDistribution};
use crate::solvers::contraction::expected_one_step_contraction;
use crate::solvers::{
    estimate, run_sega, sega_step_with_mode, EstimatorMode, RunOptions, SegaState, StepsizePolicy,
};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed violation or a short failure description.
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn gaussian_vector(n: usize, rng: &mut SegaRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_matrix(r: usize, c: usize, rng: &mut SegaRng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// GGᵀ/n + I/2 for Gaussian G.
pub fn random_spd(n: usize, rng: &mut SegaRng) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5
}

/// Random probability vector with entries bounded away from zero.
pub fn random_probabilities(n: usize, rng: &mut SegaRng) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.0));
    let s = v.sum();
    v / s
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check { name, passed: worst <= tol, detail: format!("worst {worst:.3e} (tolerance {tol:.0e})") }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    Check { name, passed: false, detail: e.to_string() }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Sketches s_i = Lv_i with B = LLᵀ and V orthogonal; these admit θ_i = 1/p_i for dense B.
pub fn b_orthogonal_vectors(b: &DMatrix<f64>, rng: &mut SegaRng) -> Vec<DVector<f64>> {
    let n = b.nrows();
    let l = b.clone().cholesky().expect("B is positive definite").l();
    let v = gaussian_matrix(n, n, rng).qr().q();
    (0..n).map(|i| &l * v.column(i)).collect()
}

fn unbiasedness(rng: &mut SegaRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..30 {
        let n = rng.random_range(2..=8);
        let (b, dist) = if t % 2 == 0 {
            let b = Metric::diagonal(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)))?;
            let dist = match t % 3 {
                0 => SketchDistribution::coordinate(random_probabilities(n, rng))?,
                1 => SketchDistribution::tau_nice(n, 2)?,
                _ => SketchDistribution::fixed_vectors(b_orthogonal_vectors(&b.matrix(), rng), random_probabilities(n, rng))?,
            };
            (b, dist)
        } else {
            let m = random_spd(n, rng);
            let dist = SketchDistribution::fixed_vectors(b_orthogonal_vectors(&m, rng), random_probabilities(n, rng))?;
            (Metric::dense(m)?, dist)
        };
        let bound = dist.bind(&b)?;
        worst = worst.max(rel(&bound.expected_theta_z()?, &b.matrix()));
    }
    Ok(worst)
}

fn z_identity(rng: &mut SegaRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..=8);
        let w = rng.random_range(1..=3);
        let b = Metric::dense(random_spd(n, rng))?;
        let s = Sketch::Dense(gaussian_matrix(n, w, rng));
        let z = projector_z(&s, &b, n)?;
        worst = worst.max(rel(&(z.transpose() * b.inverse_matrix() * &z), &z));
    }
    Ok(worst)
}

/// E‖h⁺ − v‖²_B against ‖h − v‖²_{B−E[Z]} + ‖∇f − v‖²_{E[Z]} on coordinate samplings.
fn h_decomposition(rng: &mut SegaRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=7);
        let b = Metric::diagonal(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)))?;
        let bound = SketchDistribution::coordinate(random_probabilities(n, rng))?.bind(&b)?;
        let (h, grad, v) = (gaussian_vector(n, rng), gaussian_vector(n, rng), gaussian_vector(n, rng));
        let mut lhs = 0.0;
        for (p, s) in bound.support()? {
            let hp = sketch_and_project(&h, &s.sketch, &s.sketch.transpose_mul(&grad), &b)?;
            lhs += p * b.norm_sq(&(&hp - &v));
        }
        let ez = bound.expected_z()?;
        let rhs = linalg::weighted_norm_sq(&(&h - &v), &(b.matrix() - &ez))? + linalg::weighted_norm_sq(&(&grad - &v), &ez)?;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    Ok(worst)
}

/// Projector H properties for random A and diagonal B.
fn projector_properties(rng: &mut SegaRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(3..=8);
        let d = rng.random_range(1..n);
        let a = gaussian_matrix(d, n, rng);
        let b = Metric::diagonal(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)))?;
        let p = range_projector(&a, &b)?;
        let h = p.h();
        let binv = b.inverse_matrix();
        worst = worst.max(rel(&(h * h), h)).max(rel(&(h * &binv), &(&binv * h.transpose())));
    }
    Ok(worst)
}

/// max(E[Φ⁺] − (1 − αμ)Φ, 0) relative to Φ on type-3 quadratics.
fn contraction(rng: &mut SegaRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..20 {
        let n = 5;
        let problem = make_synthetic::<f64>(3, n, t)?;
        let b = Metric::identity(n);
        let bound = SketchDistribution::uniform_coordinate(n)?.bind(&b)?;
        let step = StepsizePolicy::General { sigma: None }.resolve(problem.smoothness(), &bound)?;
        let sol = problem.solve(&Regularizer::Zero)?;
        let state = SegaState::new(gaussian_vector(n, rng), gaussian_vector(n, rng))?;
        let one = expected_one_step_contraction(
            &problem,
            &state,
            &bound,
            step.alpha,
            step.sigma,
            &Regularizer::Zero,
            &EstimatorMode::Standard,
            &sol,
        )?;
        worst = worst.max((one.lhs - one.rhs) / one.rhs.max(1e-300));
    }
    Ok(worst.max(0.0))
}

/// Number of coordinates where SEGA with h ≡ 0 and coordinate descent disagree over 200 steps.
fn cd_reduction(rng: &mut SegaRng) -> Result<f64> {
    let n = 6;
    let problem = make_synthetic::<f64>(2, n, 3)?;
    let p = random_probabilities(n, rng);
    let bound = SketchDistribution::coordinate(p.clone())?.bind(&Metric::identity(n))?;
    let alpha = 0.05;
    let mut state = SegaState::new(gaussian_vector(n, rng), DVector::zeros(n))?;
    let mut x = state.x.clone();
    let mut mismatches = 0usize;
    for _ in 0..200 {
        let s = bound.sample(rng);
        let lam = problem.sketched_gradient(&s.sketch, &state.x);
        state = sega_step_with_mode(&state, &s, &lam, alpha, &Regularizer::Zero, bound.metric(), None, &EstimatorMode::ForcedZero)?;
        let Sketch::Coords(idx) = &s.sketch else { unreachable!("coordinate sampling") };
        let i = idx[0];
        x = cd_step(&x, i, problem.sketched_gradient(&s.sketch, &x)[0], alpha, p[i]);
        mismatches += x.iter().zip(state.x.iter()).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    }
    Ok(mismatches as f64)
}

/// Whether g stays in Range(Aᵀ) along a subspace run (largest relative residual).
fn subspace_range(rng: &mut SegaRng) -> Result<f64> {
    let (n, d) = (8, 3);
    let a = gaussian_matrix(d, n, rng);
    let b = Metric::identity(n);
    let p = range_projector(&a, &b)?;
    let bound = SketchDistribution::uniform_coordinate(n)?.bind(&b)?;
    let grad_src = a.transpose() * gaussian_vector(d, rng);
    let mut h = p.project(&gaussian_vector(n, rng));
    let mut worst = 0.0f64;
    let mode = EstimatorMode::Subspace(p.clone());
    for _ in 0..100 {
        let s = bound.sample(rng);
        let up = estimate(&h, &s, &s.sketch.transpose_mul(&grad_src), &b, &mode)?;
        worst = worst.max(p.range_residual(&up.g) / up.g.norm().max(1e-300));
        worst = worst.max(p.range_residual(&up.h_next) / up.h_next.norm().max(1e-300));
        h = up.h_next;
    }
    Ok(worst)
}

fn determinism() -> Result<f64> {
    let problem = make_synthetic::<f64>(1, 8, 4)?;
    let bound = SketchDistribution::uniform_coordinate(8)?.bind(&Metric::identity(8))?;
    let run = || -> Result<Trace> {
        run_sega(&problem, &bound, &StepsizePolicy::SimpleUniform, &Regularizer::Zero, &RunOptions::new(300, 11))
    };
    let (a, b) = (run()?, run()?);
    Ok(if a.csv_body() == b.csv_body() { 0.0 } else { 1.0 })
}

/// Runs every check with instances drawn from `seed`.
pub fn run_suite(seed: u64) -> Report {
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    type CheckFn = fn(&mut SegaRng) -> Result<f64>;
    let suite: [(&'static str, CheckFn, f64); 8] = [
        ("unbiasedness E[theta Z] = B", unbiasedness, 1e-10),
        ("Z^T B^-1 Z = Z", z_identity, 1e-10),
        ("E||h+ - v||_B^2 decomposition", h_decomposition, 1e-9),
        ("range projector H^2 = H, H B^-1 = B^-1 H^T", projector_properties, 1e-10),
        ("one-step contraction of Phi", contraction, 1e-9),
        ("forced-zero SEGA equals coordinate descent", cd_reduction, 0.0),
        ("subspace iterates stay in Range(A^T)", subspace_range, 1e-8),
        ("same seed gives identical CSV body", |_| determinism(), 0.0),
    ];
    let checks = suite
        .into_iter()
        .map(|(name, f, tol)| match f(&mut rng) {
            Ok(w) => check(name, w, tol),
            Err(e) => failed(name, e),
        })
        .collect();
    Report { checks }
}
