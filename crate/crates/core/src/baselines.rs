//! Comparison methods: proximal gradient descent, coordinate descent and
//! random direct search.

use nalgebra::DVector;

use crate::error::{Result, SegaError};
use crate::harness::trace::Trace;
use crate::linalg::Metric;
use crate::problems::Objective;
use crate::prox::{self, Regularizer};
use crate::rng;
use crate::scalar::Real;
use crate::sketch::{BoundSketch, Sketch};
use crate::solvers::run::{resolve_solution, resolve_start, Recorder};
use crate::solvers::RunOptions;

/// x⁺ = prox_{αR}(x − α∇f(x)).
pub fn pgd_step<T: Real>(x: &DVector<T>, grad: &DVector<T>, alpha: T, r: &Regularizer<T>, b: &Metric<T>) -> Result<DVector<T>> {
    if grad.len() != x.len() {
        return Err(SegaError::DimensionMismatch("gradient and x differ in length".into()));
    }
    let moved = x - grad * alpha;
    if r.is_zero() {
        Ok(moved)
    } else {
        prox::prox(r, b, alpha, &moved)
    }
}

/// x⁺ = x − (α/p_i)∂_i f(x) e_i.
///
/// Evaluated as x_i − ((1/p_i)·∂_i f)·α, the same floating-point operations that
/// SEGA performs when its gradient estimate is held at zero.
pub fn cd_step<T: Real>(x: &DVector<T>, i: usize, partial: T, alpha: T, p_i: T) -> DVector<T> {
    let theta = T::one() / p_i;
    let mut out = x.clone();
    out[i] -= (theta * partial) * alpha;
    out
}

/// Coordinate step followed by the one-dimensional prox of a separable R.
pub fn prox_cd_step<T: Real>(
    x: &DVector<T>,
    i: usize,
    partial: T,
    alpha: T,
    p_i: T,
    r: &Regularizer<T>,
) -> Result<DVector<T>> {
    if !r.is_separable() {
        return Err(SegaError::Unsupported("coordinate descent needs a separable regularizer".into()));
    }
    let mut out = cd_step(x, i, partial, alpha, p_i);
    out[i] = r.prox_coordinate(i, T::one(), alpha / p_i, out[i])?;
    Ok(out)
}

/// Coordinate step followed by the full prox of R (projected CD for constraint sets).
pub fn projected_cd_step<T: Real>(
    x: &DVector<T>,
    i: usize,
    partial: T,
    alpha: T,
    p_i: T,
    r: &Regularizer<T>,
) -> Result<DVector<T>> {
    let moved = cd_step(x, i, partial, alpha, p_i);
    if r.is_zero() {
        Ok(moved)
    } else {
        prox::prox(r, &Metric::identity(x.len()), alpha / p_i, &moved)
    }
}

/// Best of x + αs, x − αs and x, ties staying at x.
pub fn rds_step<T: Real>(f: impl Fn(&DVector<T>) -> T, x: &DVector<T>, s: &DVector<T>, alpha: T) -> DVector<T> {
    rds_step_cached(&f, x, f(x), s, alpha).0
}

/// [`rds_step`] with f(x) already known; two value calls. Returns (x⁺, f(x⁺)).
pub fn rds_step_cached<T: Real>(
    f: impl Fn(&DVector<T>) -> T,
    x: &DVector<T>,
    fx: T,
    s: &DVector<T>,
    alpha: T,
) -> (DVector<T>, T) {
    let plus = x + s * alpha;
    let minus = x - s * alpha;
    let fp = f(&plus);
    let fm = f(&minus);
    if fp < fx && fp <= fm {
        (plus, fp)
    } else if fm < fx {
        (minus, fm)
    } else {
        (x.clone(), fx)
    }
}

/// Proximal gradient descent with B = I.
///
/// Each iteration charges n oracle calls and n + X·n cost units, modelling a
/// gradient assembled from n sketches followed by a linear solve.
pub fn run_pgd<T: Real>(
    problem: &dyn Objective<T>,
    alpha: T,
    r: &Regularizer<T>,
    x_factor: f64,
    opts: &RunOptions<T>,
) -> Result<Trace> {
    let n = problem.dim();
    let b = Metric::identity(n);
    r.validate()?;
    let sol = resolve_solution(problem, r, &opts.solution)?;
    let mut x = resolve_start(n, opts.seed, &opts.x0, r, &b)?;
    let mut rec = Recorder::new("pgd", opts.seed, opts.record_every, opts.checkpoint_every, opts.record_path, opts.stop);
    let per_calls = n as u64;
    let per_cost = n as f64 + x_factor * n as f64;
    let zero = DVector::zeros(n);
    let observe = |rec: &mut Recorder, x: &DVector<T>, k: usize, last: bool| -> Result<bool> {
        let gap = problem.value(x) + r.value(x) - sol.f - r.penalty(&sol.x);
        let dist = (x - &sol.x).norm_squared();
        rec.observe(k, last, per_calls * k as u64, per_cost * k as f64, gap, dist, Some(dist), x, &zero, &[])
    };
    if observe(&mut rec, &x, 0, opts.iterations == 0)? {
        return Ok(rec.trace);
    }
    for k in 1..=opts.iterations {
        let g = problem.gradient(&x);
        x = pgd_step(&x, &g, alpha, r, &b)?;
        if observe(&mut rec, &x, k, k == opts.iterations)? {
            break;
        }
    }
    rec.trace.push_meta("x_factor", x_factor.to_string());
    Ok(rec.trace)
}

/// Coordinate descent with serial sampling `p`; one oracle call per iteration.
///
/// Separable R uses the coordinate prox; the ball indicator uses the full projection.
pub fn run_cd<T: Real>(
    problem: &dyn Objective<T>,
    bound: &BoundSketch<T>,
    alpha: T,
    r: &Regularizer<T>,
    opts: &RunOptions<T>,
) -> Result<Trace> {
    let n = problem.dim();
    let p = bound.distribution().probability_vector()?;
    if !matches!(bound.distribution().kind(), crate::sketch::SketchKind::Coordinate { .. }) {
        return Err(SegaError::Unsupported("coordinate descent needs serial coordinate sampling".into()));
    }
    let id = Metric::identity(n);
    r.validate()?;
    let sol = resolve_solution(problem, r, &opts.solution)?;
    let mut x = resolve_start(n, opts.seed, &opts.x0, r, &id)?;
    let mut alg = rng::stream(opts.seed, rng::STREAM_ALGORITHM);
    let mut rec = Recorder::new("cd", opts.seed, opts.record_every, opts.checkpoint_every, opts.record_path, opts.stop);
    let zero = DVector::zeros(n);
    let observe = |rec: &mut Recorder, x: &DVector<T>, k: usize, last: bool| -> Result<bool> {
        let gap = problem.value(x) + r.value(x) - sol.f - r.penalty(&sol.x);
        let dist = (x - &sol.x).norm_squared();
        rec.observe(k, last, k as u64, k as f64, gap, dist, None, x, &zero, &[])
    };
    if observe(&mut rec, &x, 0, opts.iterations == 0)? {
        return Ok(rec.trace);
    }
    for k in 1..=opts.iterations {
        let sample = bound.sample(&mut alg);
        let i = match &sample.sketch {
            Sketch::Coords(idx) if idx.len() == 1 => idx[0],
            _ => unreachable!("serial coordinate sampling"),
        };
        let partial = problem.sketched_gradient(&sample.sketch, &x)[0];
        x = if r.is_zero() {
            cd_step(&x, i, partial, alpha, p[i])
        } else if r.is_separable() {
            prox_cd_step(&x, i, partial, alpha, p[i], r)?
        } else {
            projected_cd_step(&x, i, partial, alpha, p[i], r)?
        };
        if observe(&mut rec, &x, k, k == opts.iterations)? {
            break;
        }
    }
    Ok(rec.trace)
}

/// Random direct search along directions drawn from `directions` (normalized to unit length).
///
/// Charges one value call for f(x⁰) and two per iteration.
pub fn run_rds<T: Real>(problem: &dyn Objective<T>, directions: &BoundSketch<T>, alpha: T, opts: &RunOptions<T>) -> Result<Trace> {
    let n = problem.dim();
    let r = Regularizer::Zero;
    let id = Metric::identity(n);
    let sol = resolve_solution(problem, &r, &opts.solution)?;
    let mut x = resolve_start(n, opts.seed, &opts.x0, &r, &id)?;
    let mut fx = problem.value(&x);
    let mut calls = 1u64;
    let mut alg = rng::stream(opts.seed, rng::STREAM_ALGORITHM);
    let mut rec = Recorder::new("rds", opts.seed, opts.record_every, opts.checkpoint_every, opts.record_path, opts.stop);
    let zero = DVector::zeros(n);
    let mut observe = |x: &DVector<T>, fx: T, k: usize, calls: u64, last: bool| -> Result<bool> {
        let dist = (x - &sol.x).norm_squared();
        rec.observe(k, last, calls, calls as f64, fx - sol.f, dist, None, x, &zero, &[])
    };
    if observe(&x, fx, 0, calls, opts.iterations == 0)? {
        return Ok(rec.trace);
    }
    for k in 1..=opts.iterations {
        let sample = directions.sample(&mut alg);
        let s = sample.sketch.materialize(n).column(0).into_owned();
        let s = &s / s.norm();
        let (xn, fxn) = rds_step_cached(|y| problem.value(y), &x, fx, &s, alpha);
        assert!(fxn <= fx, "direct search increased the objective");
        x = xn;
        fx = fxn;
        calls += 2;
        if observe(&x, fx, k, calls, k == opts.iterations)? {
            break;
        }
    }
    let mut trace = rec.trace;
    trace.push_meta("rds_stepsize", alpha.to_string());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn pgd_examples() {
        let x = dvector![1.0, -2.0];
        let id = Metric::identity(2);
        assert_eq!(pgd_step(&x, &x, 1.0, &Regularizer::Zero, &id).unwrap(), dvector![0.0, 0.0]);
        let y = pgd_step(&dvector![3.0, 4.0], &dvector![-3.0, -4.0], 1.0, &Regularizer::unit_ball(), &id).unwrap();
        assert_relative_eq!(y, dvector![0.6, 0.8], epsilon = 1e-15);
    }

    #[test]
    fn cd_examples() {
        assert_eq!(cd_step(&dvector![1.0, 2.0], 0, 0.0, 0.1, 0.5), dvector![1.0, 2.0]);
        assert_relative_eq!(cd_step(&dvector![0.0, 0.0], 0, 3.0, 0.1, 0.5), dvector![-0.6, 0.0], epsilon = 1e-15);
        assert!(prox_cd_step(&dvector![0.0], 0, 1.0, 0.1, 1.0, &Regularizer::unit_ball()).is_err());
    }

    #[test]
    fn rds_examples() {
        let f = |x: &DVector<f64>| x[0] * x[0];
        let x1 = rds_step(f, &dvector![1.0], &dvector![1.0], 0.6);
        assert_relative_eq!(x1[0], 0.4, epsilon = 1e-15);
        assert_eq!(rds_step(f, &dvector![1.0], &dvector![1.0], 0.0), dvector![1.0]);
        assert_eq!(rds_step(f, &dvector![0.0], &dvector![1.0], 1e-3), dvector![0.0]);
    }
}
