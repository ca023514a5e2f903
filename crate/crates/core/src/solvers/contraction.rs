//! Exact conditional expectations of Lyapunov functions after one step,
//! obtained by enumerating a finite sketch support.

use nalgebra::DVector;

use super::lyapunov::{lyapunov_coordinate, lyapunov_general, lyapunov_metric_g};
use super::{sega_step_with_mode, EstimatorMode, SegaState};
use crate::error::{Result, SegaError};
use crate::problems::{Objective, Solution};
use crate::prox::Regularizer;
use crate::scalar::Real;
use crate::sketch::{BoundSketch, SketchKind};

/// E[V⁺ | state] and the bound rate·V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStep<T: Real> {
    pub lhs: T,
    pub rhs: T,
}

impl<T: Real> OneStep<T> {
    /// lhs ≤ rhs + tol.
    pub fn holds(&self, tol: T) -> bool {
        self.lhs <= self.rhs + tol
    }
}

fn each_step<T: Real>(
    problem: &dyn Objective<T>,
    state: &SegaState<T>,
    bound: &BoundSketch<T>,
    alpha: T,
    r: &Regularizer<T>,
    precond: Option<&DVector<T>>,
    mode: &EstimatorMode<T>,
    mut visit: impl FnMut(T, &SegaState<T>),
) -> Result<()> {
    for (p, sample) in bound.support()? {
        let lam = problem.sketched_gradient(&sample.sketch, &state.x);
        let next = sega_step_with_mode(state, &sample, &lam, alpha, r, bound.metric(), precond, mode)?;
        visit(p, &next);
    }
    Ok(())
}

/// E[Φ⁺] against (1 − αμ)Φ for Φ = ‖x − x*‖²_B + σα‖h − ∇f(x*)‖²_B.
#[allow(clippy::too_many_arguments)]
pub fn expected_one_step_contraction<T: Real>(
    problem: &dyn Objective<T>,
    state: &SegaState<T>,
    bound: &BoundSketch<T>,
    alpha: T,
    sigma: T,
    r: &Regularizer<T>,
    mode: &EstimatorMode<T>,
    sol: &Solution<T>,
) -> Result<OneStep<T>> {
    let b = bound.metric();
    let phi = |s: &SegaState<T>| lyapunov_general(&s.x, &s.h, &sol.x, &sol.grad, b, sigma, alpha);
    let mut lhs = T::zero();
    each_step(problem, state, bound, alpha, r, None, mode, |p, s| lhs += p * phi(s))?;
    Ok(OneStep { lhs, rhs: (T::one() - alpha * problem.smoothness().mu) * phi(state) })
}

fn coordinate_probs<T: Real>(bound: &BoundSketch<T>) -> Result<DVector<T>> {
    match bound.distribution().kind() {
        SketchKind::Coordinate { p } => Ok(p.clone()),
        _ => Err(SegaError::Unsupported("needs serial coordinate sampling".into())),
    }
}

/// E[Ψ⁺] against (1 − γμ)Ψ for Ψ = f(x) − f* + σ‖h‖²_{P̂⁻¹}, with R = 0 and B = I.
#[allow(clippy::too_many_arguments)]
pub fn expected_one_step_coordinate<T: Real>(
    problem: &dyn Objective<T>,
    state: &SegaState<T>,
    bound: &BoundSketch<T>,
    alpha: T,
    sigma: T,
    gamma: T,
    fstar: T,
) -> Result<OneStep<T>> {
    let p = coordinate_probs(bound)?;
    let psi = |s: &SegaState<T>| lyapunov_coordinate(problem.value(&s.x), fstar, &s.h, &p, sigma);
    let mut lhs = T::zero();
    each_step(problem, state, bound, alpha, &Regularizer::Zero, None, &EstimatorMode::Standard, |q, s| {
        lhs += q * psi(s)
    })?;
    Ok(OneStep { lhs, rhs: (T::one() - gamma * problem.smoothness().mu) * psi(state) })
}

/// E[Φ_G⁺] against (1 − αμ·2L/(μ + L))Φ_G for the step x⁺ = x − αG⁻¹g.
#[allow(clippy::too_many_arguments)]
pub fn expected_one_step_metric_g<T: Real>(
    problem: &dyn Objective<T>,
    state: &SegaState<T>,
    bound: &BoundSketch<T>,
    g: &DVector<T>,
    alpha: T,
    sigma: T,
    l: T,
    mu: T,
    sol: &Solution<T>,
) -> Result<OneStep<T>> {
    let p = coordinate_probs(bound)?;
    let phi = |s: &SegaState<T>| lyapunov_metric_g(&s.x, &s.h, &sol.x, &sol.grad, g, &p, sigma, alpha);
    let mut lhs = T::zero();
    each_step(problem, state, bound, alpha, &Regularizer::Zero, Some(g), &EstimatorMode::Standard, |q, s| {
        lhs += q * phi(s)
    })?;
    let rate = T::one() - alpha * mu * T::lit(2.0) * l / (mu + l);
    Ok(OneStep { lhs, rhs: rate * phi(state) })
}
