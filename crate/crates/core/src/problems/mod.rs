//! Objectives, oracles, synthetic generators and dataset ingestion.

mod least_squares;
pub mod libsvm;
mod logistic;
mod quadratic;
mod zeroth;

use nalgebra::DVector;

pub use least_squares::{make_least_squares_subspace, LeastSquaresProblem};
pub use logistic::{make_logistic, LogisticProblem};
pub use quadratic::{make_synthetic, make_synthetic_spec, QuadraticProblem, SpectrumType, SyntheticSpec};
pub use zeroth::{default_fd_epsilon, zeroth_order_sketch};

use crate::error::{Result, SegaError};
use crate::linalg::{Metric, SmoothnessData};
use crate::prox::{self, Regularizer};
use crate::scalar::Real;
use crate::sketch::Sketch;

/// Minimizer x* of F = f + R with f(x*) (R excluded) and ∇f(x*).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T: Real> {
    pub x: DVector<T>,
    pub f: T,
    pub grad: DVector<T>,
}

/// Smooth objective f with full, sketched and value oracles.
///
/// Solvers only call [`Objective::sketched_gradient`] (or [`Objective::value`]
/// for zeroth-order methods); full gradients serve baselines and verification.
pub trait Objective<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<T>) -> T;

    fn gradient(&self, x: &DVector<T>) -> DVector<T>;

    /// Sᵀ∇f(x).
    fn sketched_gradient(&self, s: &Sketch<T>, x: &DVector<T>) -> DVector<T> {
        s.transpose_mul(&self.gradient(x))
    }

    fn smoothness(&self) -> &SmoothnessData<T>;

    /// Minimizer of f + R; the default runs accelerated proximal gradient to machine precision.
    fn solve(&self, r: &Regularizer<T>) -> Result<Solution<T>> {
        reference_solve(self, r)
    }
}

/// Accelerated proximal gradient with adaptive restart, run to stagnation.
pub fn reference_solve<T: Real, P: Objective<T> + ?Sized>(problem: &P, r: &Regularizer<T>) -> Result<Solution<T>> {
    let n = problem.dim();
    let l = problem.smoothness().l_or_lambda_max()?;
    let alpha = T::one() / l;
    let id = Metric::identity(n);
    let mut x = prox::prox(r, &id, alpha, &DVector::zeros(n))?;
    let mut y = x.clone();
    let mut t = T::one();
    let tol = T::eps() * T::lit(4.0);
    for _ in 0..2_000_000 {
        let g = problem.gradient(&y);
        let x_next = prox::prox(r, &id, alpha, &(&y - g * alpha))?;
        let step = (&x_next - &x).norm();
        let restart = (&y - &x_next).dot(&(&x_next - &x)) > T::zero();
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        if restart {
            y = x_next.clone();
            t = T::one();
        } else {
            y = &x_next + (&x_next - &x) * ((t - T::one()) / t_next);
            t = t_next;
        }
        x = x_next;
        if step <= tol * (T::one() + x.norm()) {
            break;
        }
    }
    let grad = problem.gradient(&x);
    Ok(Solution { f: problem.value(&x), x, grad })
}

/// Central finite-difference gradient.
pub fn finite_difference_gradient<T: Real>(f: impl Fn(&DVector<T>) -> T, x: &DVector<T>, h: T) -> DVector<T> {
    let mut out = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        out[i] = (fp - fm) / (h + h);
    }
    out
}

pub(crate) fn check_dim<T: Real>(x: &DVector<T>, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(SegaError::DimensionMismatch(format!("expected length {n}, got {}", x.len())));
    }
    Ok(())
}
