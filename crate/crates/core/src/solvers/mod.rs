//! SEGA, accelerated SEGA and subspace SEGA: step functions, runners,
//! stepsize policies and Lyapunov monitors.

pub mod contraction;
pub mod lyapunov;
pub(crate) mod run;
pub mod stepsize;

use nalgebra::DVector;

pub use lyapunov::{lyapunov_accelerated, lyapunov_coordinate, lyapunov_general, lyapunov_metric_g};
pub use run::{default_start, run_asega, run_sega, run_sega_resolved, LyapunovMonitor, OracleKind, RunOptions, StopMetric, StopRule};
pub use stepsize::{asega_params, resolve_subspace, AsegaParams, ResolvedStep, StepsizePolicy};

use crate::error::{Result, SegaError};
use crate::estimator::{self, RangeProjector};
use crate::linalg::Metric;
use crate::prox::{self, Regularizer};
use crate::scalar::Real;
use crate::sketch::{Sketch, SketchSample};

/// Iterate of SEGA.
#[derive(Debug, Clone, PartialEq)]
pub struct SegaState<T: Real> {
    pub x: DVector<T>,
    pub h: DVector<T>,
    pub k: usize,
}

impl<T: Real> SegaState<T> {
    pub fn new(x: DVector<T>, h: DVector<T>) -> Result<Self> {
        if x.len() != h.len() {
            return Err(SegaError::DimensionMismatch("x and h differ in length".into()));
        }
        Ok(Self { x, h, k: 0 })
    }

    pub fn with_zero_h(x: DVector<T>) -> Self {
        let n = x.len();
        Self { x, h: DVector::zeros(n), k: 0 }
    }
}

/// How g and h⁺ are formed from a sketch.
#[derive(Debug, Clone)]
pub enum EstimatorMode<T: Real> {
    /// g = (1 − θ)h + θh⁺.
    Standard,
    /// g = h⁺ (biased; no convergence guarantee).
    Bias,
    /// h is forced to zero before every step, which turns SEGA into coordinate descent.
    ForcedZero,
    /// h and g are kept in Range(Aᵀ).
    Subspace(RangeProjector<T>),
}

impl<T: Real> EstimatorMode<T> {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::Standard => "sega",
            EstimatorMode::Bias => "bias_sega",
            EstimatorMode::ForcedZero => "sega_forced_zero",
            EstimatorMode::Subspace(_) => "subspace_sega",
        }
    }
}

/// One SEGA iteration in the standard estimator mode.
pub fn sega_step<T: Real>(
    state: &SegaState<T>,
    sample: &SketchSample<T>,
    lam: &DVector<T>,
    alpha: T,
    r: &Regularizer<T>,
    b: &Metric<T>,
    precond_g: Option<&DVector<T>>,
) -> Result<SegaState<T>> {
    sega_step_with_mode(state, sample, lam, alpha, r, b, precond_g, &EstimatorMode::Standard)
}

/// g and h⁺ for the given estimator mode.
pub fn estimate<T: Real>(
    h: &DVector<T>,
    sample: &SketchSample<T>,
    lam: &DVector<T>,
    b: &Metric<T>,
    mode: &EstimatorMode<T>,
) -> Result<estimator::EstimatorUpdate<T>> {
    match mode {
        EstimatorMode::Standard => {
            let h_next = estimator::sketch_and_project(h, &sample.sketch, lam, b)?;
            let g = estimator::unbiased_estimate(h, &h_next, sample.theta);
            Ok(estimator::EstimatorUpdate { h_next, g })
        }
        EstimatorMode::Bias => {
            let h_next = estimator::sketch_and_project(h, &sample.sketch, lam, b)?;
            Ok(estimator::EstimatorUpdate { g: h_next.clone(), h_next })
        }
        EstimatorMode::ForcedZero => {
            let zero = DVector::zeros(h.len());
            let hp = estimator::sketch_and_project(&zero, &sample.sketch, lam, b)?;
            let g = estimator::unbiased_estimate(&zero, &hp, sample.theta);
            Ok(estimator::EstimatorUpdate { h_next: zero, g })
        }
        EstimatorMode::Subspace(p) => estimator::subspace_update(h, &sample.sketch, lam, p.sample_theta(sample), p),
    }
}

/// One SEGA iteration: g from the estimator, x⁺ = prox_{αR}(x − αg), or
/// x⁺ = x − αG⁻¹g when a diagonal preconditioner G is supplied (R must be zero).
#[allow(clippy::too_many_arguments)]
pub fn sega_step_with_mode<T: Real>(
    state: &SegaState<T>,
    sample: &SketchSample<T>,
    lam: &DVector<T>,
    alpha: T,
    r: &Regularizer<T>,
    b: &Metric<T>,
    precond_g: Option<&DVector<T>>,
    mode: &EstimatorMode<T>,
) -> Result<SegaState<T>> {
    let up = estimate(&state.h, sample, lam, b, mode)?;
    let x = match precond_g {
        Some(gdiag) => {
            if !r.is_zero() {
                return Err(SegaError::Unsupported("the G-preconditioned step requires R = 0".into()));
            }
            if gdiag.len() != state.x.len() {
                return Err(SegaError::DimensionMismatch("preconditioner length differs from x".into()));
            }
            &state.x - up.g.component_div(gdiag) * alpha
        }
        None => {
            let mut v = up.g;
            v *= alpha;
            let moved = &state.x - v;
            if r.is_zero() {
                moved
            } else {
                prox::prox(r, b, alpha, &moved)?
            }
        }
    };
    Ok(SegaState { x, h: up.h_next, k: state.k + 1 })
}

/// Iterate of accelerated SEGA.
#[derive(Debug, Clone, PartialEq)]
pub struct AsegaState<T: Real> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub z: DVector<T>,
    pub h: DVector<T>,
    pub k: usize,
}

impl<T: Real> AsegaState<T> {
    /// x = y = z = x⁰, h = 0.
    pub fn new(x0: DVector<T>) -> Self {
        let n = x0.len();
        Self { y: x0.clone(), z: x0.clone(), x: x0, h: DVector::zeros(n), k: 0 }
    }
}

/// xᵏ = (1 − τ)yᵏ⁻¹ + τzᵏ⁻¹, the point at which the sketch is taken.
pub fn asega_point<T: Real>(state: &AsegaState<T>, tau: T) -> DVector<T> {
    &state.y * (T::one() - tau) + &state.z * tau
}

/// One accelerated SEGA iteration with coordinate sketches and B = I.
///
/// `x` must be [`asega_point`] of `state` and `lam` the sketched gradient at `x`.
/// Uses g = h + P̂⁻¹(h⁺ − h), y = x − αP̂⁻¹g and
/// z = (z + βμx − βg)/(1 + βμ).
pub fn asega_step<T: Real>(
    state: &AsegaState<T>,
    x: &DVector<T>,
    sketch: &Sketch<T>,
    lam: &DVector<T>,
    params: &AsegaParams<T>,
    p: &DVector<T>,
) -> Result<AsegaState<T>> {
    let idx = match sketch {
        Sketch::Coords(idx) => idx,
        Sketch::Dense(_) => return Err(SegaError::Unsupported("accelerated SEGA needs coordinate sketches".into())),
    };
    if lam.len() != idx.len() || p.len() != x.len() {
        return Err(SegaError::DimensionMismatch("sketch, gradient and probabilities disagree".into()));
    }
    let mut g = state.h.clone();
    let mut h_next = state.h.clone();
    for (c, &i) in idx.iter().enumerate() {
        g[i] += (lam[c] - state.h[i]) / p[i];
        h_next[i] = lam[c];
    }
    let y = x - g.component_div(p) * params.alpha;
    let bm = params.beta * params.mu;
    let z = (&state.z + x * bm - &g * params.beta) / (T::one() + bm);
    Ok(AsegaState { x: x.clone(), y, z, h: h_next, k: state.k + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn coord(i: usize, theta: f64) -> SketchSample<f64> {
        SketchSample { sketch: Sketch::coordinate(i), theta, atom: Some(i) }
    }

    #[test]
    fn hand_step() {
        let st = SegaState::new(dvector![0.0, 0.0], dvector![1.0, 2.0]).unwrap();
        let next = sega_step(&st, &coord(0, 2.0), &dvector![3.0], 0.1, &Regularizer::Zero, &Metric::identity(2), None).unwrap();
        assert_relative_eq!(next.x, dvector![-0.5, -0.2], epsilon = 1e-15);
        assert_eq!(next.h, dvector![3.0, 2.0]);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn exact_h_gives_gradient_step() {
        let grad = dvector![0.3, -0.7];
        let st = SegaState::new(dvector![1.0, 1.0], grad.clone()).unwrap();
        let next = sega_step(&st, &coord(1, 2.0), &dvector![-0.7], 0.5, &Regularizer::Zero, &Metric::identity(2), None).unwrap();
        assert_relative_eq!(next.x, dvector![1.0, 1.0] - grad * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ball_step_lands_on_sphere() {
        let st = SegaState::new(dvector![30.0, 40.0], dvector![0.0, 0.0]).unwrap();
        let next = sega_step(&st, &coord(0, 2.0), &dvector![1.0], 0.1, &Regularizer::unit_ball(), &Metric::identity(2), None).unwrap();
        assert_relative_eq!(next.x.norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn preconditioner_requires_zero_regularizer() {
        let st = SegaState::with_zero_h(dvector![1.0, 1.0]);
        let g = dvector![1.0, 2.0];
        let r = sega_step(&st, &coord(0, 2.0), &dvector![1.0], 0.1, &Regularizer::unit_ball(), &Metric::identity(2), Some(&g));
        assert!(matches!(r, Err(SegaError::Unsupported(_))));
    }

    #[test]
    fn asega_interpolation_endpoints() {
        let st = AsegaState { x: dvector![0.0], y: dvector![1.0], z: dvector![3.0], h: dvector![0.0], k: 0 };
        assert_eq!(asega_point(&st, 1.0), dvector![3.0]);
        assert_eq!(asega_point(&st, 0.0), dvector![1.0]);
    }

    #[test]
    fn asega_scalar_step() {
        let params = asega_params(&dvector![1.0], &dvector![1.0], 1.0).unwrap();
        let st = AsegaState::new(dvector![1.0]);
        let x = asega_point(&st, params.tau);
        assert_eq!(x, dvector![1.0]);
        let next = asega_step(&st, &x, &Sketch::coordinate(0), &dvector![1.0], &params, &dvector![1.0]).unwrap();
        assert_relative_eq!(next.y[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(next.z[0], 1.0 / (1.0 + params.beta), epsilon = 1e-15);
        assert_eq!(next.h, dvector![1.0]);
    }
}
