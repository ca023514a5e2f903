use std::time::Instant;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use super::lyapunov::{lyapunov_accelerated, lyapunov_coordinate, lyapunov_general, lyapunov_metric_g};
use super::stepsize::{AsegaParams, ResolvedStep, StepsizePolicy};
use super::{asega_point, asega_step, sega_step_with_mode, AsegaState, EstimatorMode, SegaState};
use crate::error::{Result, SegaError};
use crate::harness::trace::{Checkpoint, Trace, TraceRow};
use crate::linalg::Metric;
use crate::problems::{default_fd_epsilon, zeroth_order_sketch, Objective, Solution};
use crate::prox::{self, Regularizer};
use crate::rng::{self, SegaRng};
use crate::scalar::Real;
use crate::sketch::{BoundSketch, Sketch, SketchDistribution, SketchKind};

/// Source of the sketched gradient λ = Sᵀ∇f(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind<T: Real> {
    Exact,
    /// Forward differences of function values; ε defaults to 1e-6(1 + ‖x‖).
    FiniteDifference { eps: Option<T> },
}

/// Which Lyapunov function the trace records.
#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovMonitor<T: Real> {
    None,
    /// Φ with the resolved (α, σ) and metric B, or Φ_G under a preconditioner.
    General,
    /// Ψ with serial probabilities of the distribution.
    Coordinate,
    /// Explicit Φ parameters, independent of the stepsize actually used.
    GeneralWith { sigma: T, alpha: T },
}

/// Quantity compared against a [`StopRule`] threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMetric {
    FGap,
    DistSq,
    /// Lyapunov value relative to its initial value.
    RelativeLyapunov,
    /// ‖x − x*‖²_B relative to its initial value.
    RelativeDistSq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub metric: StopMetric,
    pub threshold: f64,
}

/// Options shared by the solver runners.
#[derive(Debug, Clone)]
pub struct RunOptions<T: Real> {
    pub iterations: usize,
    pub seed: u64,
    pub mode: EstimatorMode<T>,
    pub precond: Option<DVector<T>>,
    pub oracle: OracleKind<T>,
    /// Starting point; Gaussian from the seed's start stream when absent.
    pub x0: Option<DVector<T>>,
    /// Initial gradient estimate; zero when absent.
    pub h0: Option<DVector<T>>,
    pub record_every: usize,
    pub checkpoint_every: Option<usize>,
    pub record_path: bool,
    pub stop: Option<StopRule>,
    /// Known minimizer; computed with [`Objective::solve`] when absent.
    pub solution: Option<Solution<T>>,
    pub lyapunov: LyapunovMonitor<T>,
}

impl<T: Real> Default for RunOptions<T> {
    fn default() -> Self {
        Self {
            iterations: 0,
            seed: 0,
            mode: EstimatorMode::Standard,
            precond: None,
            oracle: OracleKind::Exact,
            x0: None,
            h0: None,
            record_every: 1,
            checkpoint_every: None,
            record_path: false,
            stop: None,
            solution: None,
            lyapunov: LyapunovMonitor::General,
        }
    }
}

impl<T: Real> RunOptions<T> {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self { iterations, seed, ..Default::default() }
    }
}

/// Gaussian starting point drawn from the start stream of `seed`.
pub fn default_start<T: Real>(n: usize, seed: u64) -> DVector<T> {
    let mut r = rng::stream(seed, rng::STREAM_START);
    DVector::from_fn(n, |_, _| T::lit(StandardNormal.sample(&mut r)))
}

pub(crate) fn resolve_solution<T: Real>(
    problem: &dyn Objective<T>,
    r: &Regularizer<T>,
    given: &Option<Solution<T>>,
) -> Result<Solution<T>> {
    match given {
        Some(s) => Ok(s.clone()),
        None => problem.solve(r),
    }
}

pub(crate) fn resolve_start<T: Real>(
    n: usize,
    seed: u64,
    x0: &Option<DVector<T>>,
    r: &Regularizer<T>,
    b: &Metric<T>,
) -> Result<DVector<T>> {
    let x = x0.clone().unwrap_or_else(|| default_start(n, seed));
    if x.len() != n {
        return Err(SegaError::DimensionMismatch("x0 has the wrong length".into()));
    }
    if r.is_zero() {
        Ok(x)
    } else {
        prox::prox(r, b, T::one(), &x)
    }
}

pub(crate) fn to_vec<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Records rows, checkpoints and the stop rule for a run.
pub(crate) struct Recorder {
    pub trace: Trace,
    start: Instant,
    record_every: usize,
    checkpoint_every: Option<usize>,
    record_path: bool,
    stop: Option<StopRule>,
    initial_lyapunov: Option<f64>,
    initial_dist: Option<f64>,
}

impl Recorder {
    pub fn new(
        method: &str,
        seed: u64,
        record_every: usize,
        checkpoint_every: Option<usize>,
        record_path: bool,
        stop: Option<StopRule>,
    ) -> Self {
        Self {
            trace: Trace::new(method, seed),
            start: Instant::now(),
            record_every: record_every.max(1),
            checkpoint_every,
            record_path,
            stop,
            initial_lyapunov: None,
            initial_dist: None,
        }
    }

    /// Logs iteration `k`; returns true when the stop rule fires.
    #[allow(clippy::too_many_arguments)]
    pub fn observe<T: Real>(
        &mut self,
        k: usize,
        last: bool,
        oracle_calls: u64,
        cost_units: f64,
        f_gap: T,
        dist_sq: T,
        lyapunov: Option<T>,
        x: &DVector<T>,
        h: &DVector<T>,
        extra: &[&DVector<T>],
    ) -> Result<bool> {
        let f_gap = f_gap.to_f64_lossy();
        let dist = dist_sq.to_f64_lossy();
        let lyap = lyapunov.map(|v| v.to_f64_lossy());
        if !f_gap.is_finite() || !dist.is_finite() || lyap.is_some_and(|v| !v.is_finite()) {
            return Err(SegaError::NonFinite { iteration: k });
        }
        if k == 0 {
            self.initial_lyapunov = lyap;
            self.initial_dist = Some(dist);
        }
        let stop = match self.stop {
            None => false,
            Some(rule) => {
                let v = match rule.metric {
                    StopMetric::FGap => Some(f_gap),
                    StopMetric::DistSq => Some(dist),
                    StopMetric::RelativeLyapunov => lyap.zip(self.initial_lyapunov).map(|(a, b)| a / b),
                    StopMetric::RelativeDistSq => self.initial_dist.map(|b| dist / b),
                };
                v.is_some_and(|v| v <= rule.threshold)
            }
        };
        if k % self.record_every == 0 || last || stop {
            self.trace.rows.push(TraceRow {
                k,
                oracle_calls,
                cost_units,
                f_gap,
                dist_sq_b: dist,
                lyapunov: lyap,
                wall_ns: self.start.elapsed().as_nanos() as u64,
            });
        }
        if self.checkpoint_every.is_some_and(|c| c > 0 && k % c == 0) {
            self.trace.checkpoints.push(Checkpoint {
                k,
                x: to_vec(x),
                h: to_vec(h),
                extra: extra.iter().map(|v| to_vec(v)).collect(),
            });
        }
        if self.record_path {
            self.trace.path.push((k, to_vec(x)));
        }
        Ok(stop)
    }
}

fn sketched<T: Real>(
    problem: &dyn Objective<T>,
    oracle: &OracleKind<T>,
    s: &Sketch<T>,
    x: &DVector<T>,
    calls: &mut u64,
) -> DVector<T> {
    match oracle {
        OracleKind::Exact => {
            *calls += s.width() as u64;
            problem.sketched_gradient(s, x)
        }
        OracleKind::FiniteDifference { eps } => {
            let eps = eps.unwrap_or_else(|| default_fd_epsilon(x));
            zeroth_order_sketch(|y| problem.value(y), x, s, eps, calls)
        }
    }
}

/// Runs SEGA (or one of its estimator variants) for `opts.iterations` steps.
///
/// Oracle calls grow by the sketch width per step (width + 1 value calls with finite
/// differences); one cost unit is charged per oracle call.
pub fn run_sega<T: Real>(
    problem: &dyn Objective<T>,
    bound: &BoundSketch<T>,
    policy: &StepsizePolicy<T>,
    r: &Regularizer<T>,
    opts: &RunOptions<T>,
) -> Result<Trace> {
    let step = policy.resolve(problem.smoothness(), bound)?;
    run_sega_resolved(problem, bound, &step, r, opts)
}

/// [`run_sega`] with an already resolved stepsize.
pub fn run_sega_resolved<T: Real>(
    problem: &dyn Objective<T>,
    bound: &BoundSketch<T>,
    step: &ResolvedStep<T>,
    r: &Regularizer<T>,
    opts: &RunOptions<T>,
) -> Result<Trace> {
    let n = problem.dim();
    if bound.dim() != n {
        return Err(SegaError::DimensionMismatch("sketch and problem dimensions differ".into()));
    }
    r.validate()?;
    let b = bound.metric();
    let sol = resolve_solution(problem, r, &opts.solution)?;
    let x0 = resolve_start(n, opts.seed, &opts.x0, r, b)?;
    let mut h0 = opts.h0.clone().unwrap_or_else(|| DVector::zeros(n));
    if let EstimatorMode::Subspace(p) = &opts.mode {
        h0 = p.project(&h0);
    }
    let mut state = SegaState::new(x0, h0)?;
    let probs = match bound.distribution().kind() {
        SketchKind::Coordinate { p } => Some(p.clone()),
        _ => None,
    };
    let lyap = |s: &SegaState<T>, fx: T| -> Result<Option<T>> {
        Ok(match (&opts.lyapunov, &opts.precond) {
            (LyapunovMonitor::None, _) => None,
            (LyapunovMonitor::General, Some(g)) => {
                let p = probs.as_ref().ok_or_else(|| SegaError::Unsupported("Phi_G needs coordinate sampling".into()))?;
                Some(lyapunov_metric_g(&s.x, &s.h, &sol.x, &sol.grad, g, p, step.sigma, step.alpha))
            }
            (LyapunovMonitor::General, None) => {
                Some(lyapunov_general(&s.x, &s.h, &sol.x, &sol.grad, b, step.sigma, step.alpha))
            }
            (LyapunovMonitor::GeneralWith { sigma, alpha }, _) => {
                Some(lyapunov_general(&s.x, &s.h, &sol.x, &sol.grad, b, *sigma, *alpha))
            }
            (LyapunovMonitor::Coordinate, _) => {
                let p = probs.as_ref().ok_or_else(|| SegaError::Unsupported("Psi needs coordinate sampling".into()))?;
                Some(lyapunov_coordinate(fx, sol.f, &s.h, p, step.sigma))
            }
        })
    };
    let mut rec = Recorder::new(
        opts.mode.name(),
        opts.seed,
        opts.record_every,
        opts.checkpoint_every,
        opts.record_path,
        opts.stop,
    );
    let mut calls = 0u64;
    let mut alg = rng::stream(opts.seed, rng::STREAM_ALGORITHM);
    let observe = |rec: &mut Recorder, s: &SegaState<T>, calls: u64, last: bool| -> Result<bool> {
        let fx = problem.value(&s.x);
        let gap = fx + r.value(&s.x) - sol.f - r.penalty(&sol.x);
        let dist = b.norm_sq(&(&s.x - &sol.x));
        rec.observe(s.k, last, calls, calls as f64, gap, dist, lyap(s, fx)?, &s.x, &s.h, &[])
    };
    if observe(&mut rec, &state, calls, opts.iterations == 0)? {
        return Ok(rec.trace);
    }
    for k in 1..=opts.iterations {
        let sample = bound.sample(&mut alg);
        let lam = sketched(problem, &opts.oracle, &sample.sketch, &state.x, &mut calls);
        state = sega_step_with_mode(&state, &sample, &lam, step.alpha, r, b, opts.precond.as_ref(), &opts.mode)?;
        if observe(&mut rec, &state, calls, k == opts.iterations)? {
            break;
        }
    }
    Ok(rec.trace)
}

/// Runs accelerated SEGA with serial coordinate sampling `p` and B = I.
///
/// Rows report f(y) − f*, ‖y − x*‖² and Υ.
pub fn run_asega<T: Real>(
    problem: &dyn Objective<T>,
    p: &DVector<T>,
    params: &AsegaParams<T>,
    opts: &RunOptions<T>,
) -> Result<Trace> {
    let n = problem.dim();
    let id = Metric::identity(n);
    let bound = SketchDistribution::coordinate(p.clone())?.bind(&id)?;
    let r = Regularizer::Zero;
    let sol = resolve_solution(problem, &r, &opts.solution)?;
    let x0 = resolve_start(n, opts.seed, &opts.x0, &r, &id)?;
    let mut state = AsegaState::new(x0);
    if let Some(h0) = &opts.h0 {
        state.h = h0.clone();
    }
    let mut rec = Recorder::new("asega", opts.seed, opts.record_every, opts.checkpoint_every, opts.record_path, opts.stop);
    let mut alg: SegaRng = rng::stream(opts.seed, rng::STREAM_ALGORITHM);
    let mut calls = 0u64;
    let observe = |rec: &mut Recorder, s: &AsegaState<T>, calls: u64, last: bool| -> Result<bool> {
        let fy = problem.value(&s.y);
        let lyap = match opts.lyapunov {
            LyapunovMonitor::None => None,
            _ => Some(lyapunov_accelerated(fy, sol.f, &s.z, &sol.x, &s.h, p, params)),
        };
        let dist = (&s.y - &sol.x).norm_squared();
        rec.observe(s.k, last, calls, calls as f64, fy - sol.f, dist, lyap, &s.y, &s.h, &[&s.x, &s.z])
    };
    if observe(&mut rec, &state, calls, opts.iterations == 0)? {
        return Ok(rec.trace);
    }
    for k in 1..=opts.iterations {
        let x = asega_point(&state, params.tau);
        let sample = bound.sample(&mut alg);
        let lam = sketched(problem, &opts.oracle, &sample.sketch, &x, &mut calls);
        state = asega_step(&state, &x, &sample.sketch, &lam, params, p)?;
        if observe(&mut rec, &state, calls, k == opts.iterations)? {
            break;
        }
    }
    Ok(rec.trace)
}
