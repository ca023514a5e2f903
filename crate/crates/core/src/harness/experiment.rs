//! Builds problems and methods from a [`RunConfig`] and runs them.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use super::config::{
    H0Config, MetricConfig, OracleConfig, Precision, ProblemConfig, RegularizerConfig, RunConfig, SketchConfig, Solver,
    StepsizeConfig, StopMetricConfig,
};
use super::trace::Trace;
use crate::baselines;
use crate::error::{Result, SegaError};
use crate::estimator::{optimal_subspace_setup, range_projector};
use crate::linalg::Metric;
use crate::problems::libsvm::{parse_libsvm, ParseOptions};
use crate::problems::{
    make_least_squares_subspace, make_logistic, make_synthetic_spec, LeastSquaresProblem, LogisticProblem, Objective,
    QuadraticProblem, SpectrumType, SyntheticSpec,
};
use crate::prox::{self, Regularizer};
use crate::scalar::Real;
use crate::sketch::{serial_eso_vector, SketchDistribution, SketchKind};
use crate::solvers::stepsize::resolve_subspace;
use crate::solvers::{
    asega_params, default_start, run_asega, run_sega_resolved, EstimatorMode, LyapunovMonitor, OracleKind, ResolvedStep,
    RunOptions, StepsizePolicy, StopMetric, StopRule,
};

/// A problem instance built from config.
#[derive(Debug, Clone)]
pub enum BuiltProblem<T: Real> {
    Quadratic(QuadraticProblem<T>),
    LeastSquares(LeastSquaresProblem<T>),
    Logistic(LogisticProblem<T>),
}

impl<T: Real> BuiltProblem<T> {
    pub fn objective(&self) -> &dyn Objective<T> {
        match self {
            BuiltProblem::Quadratic(p) => p,
            BuiltProblem::LeastSquares(p) => p,
            BuiltProblem::Logistic(p) => p,
        }
    }

    fn describe(&self) -> String {
        match self {
            BuiltProblem::Quadratic(_) => "quadratic",
            BuiltProblem::LeastSquares(_) => "least_squares",
            BuiltProblem::Logistic(_) => "logistic",
        }
        .to_string()
    }
}

fn cfg_err(msg: impl Into<String>) -> SegaError {
    SegaError::Config(msg.into())
}

/// Tags a construction error with the config section it came from.
fn at(section: &'static str) -> impl Fn(SegaError) -> SegaError {
    move |e| match e {
        SegaError::Config(_) => e,
        other => SegaError::Config(format!("{section}: {other}")),
    }
}

fn vec_t<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)))
}

fn mat_t<T: Real>(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<T>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(cfg_err(format!("{what}: expected a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| T::lit(rows[i][j])))
}

fn check_len(len: usize, n: usize, what: &str) -> Result<()> {
    if len != n {
        return Err(cfg_err(format!("{what}: expected {n} entries, got {len}")));
    }
    Ok(())
}

/// Instantiates the problem; `run_seed` is used when the config gives no problem seed.
pub fn build_problem<T: Real>(cfg: &ProblemConfig, run_seed: u64) -> Result<BuiltProblem<T>> {
    Ok(match cfg {
        ProblemConfig::Synthetic { spectrum, n, top, seed } => {
            let spec = SyntheticSpec { spectrum: SpectrumType::from_index(*spectrum)?, n: *n, seed: seed.unwrap_or(run_seed), top: *top };
            BuiltProblem::Quadratic(make_synthetic_spec(&spec)?)
        }
        ProblemConfig::Quadratic { m, b } => {
            let m = mat_t(m, "problem.m")?;
            check_len(b.len(), m.nrows(), "problem.b")?;
            BuiltProblem::Quadratic(QuadraticProblem::from_matrix(m, vec_t(b))?)
        }
        ProblemConfig::LeastSquaresSubspace { n, d, seed } => {
            BuiltProblem::LeastSquares(make_least_squares_subspace(*n, *d, seed.unwrap_or(run_seed))?)
        }
        ProblemConfig::Logistic { path, mu, max_rows, subsample_seed } => {
            let file = std::fs::File::open(path).map_err(|e| cfg_err(format!("problem.path: {}: {e}", path.display())))?;
            let opts = ParseOptions { n: None, max_rows: *max_rows, subsample_seed: *subsample_seed, binarize: true };
            let data = parse_libsvm::<T, _>(std::io::BufReader::new(file), &opts)?;
            BuiltProblem::Logistic(make_logistic(data.features, data.labels, T::lit(*mu))?)
        }
    })
}

pub fn build_regularizer<T: Real>(cfg: &RegularizerConfig, n: usize) -> Result<Regularizer<T>> {
    match cfg {
        RegularizerConfig::Zero => Ok(Regularizer::Zero),
        RegularizerConfig::L1 { lambda } => Regularizer::l1(T::lit(*lambda)),
        RegularizerConfig::Ball { radius } => Regularizer::ball(T::lit(*radius)),
        RegularizerConfig::Box { lo, hi } => {
            check_len(lo.len(), n, "method.regularizer.lo")?;
            check_len(hi.len(), n, "method.regularizer.hi")?;
            Regularizer::boxed(vec_t(lo), vec_t(hi))
        }
    }
}

pub fn build_metric<T: Real>(cfg: &MetricConfig, n: usize) -> Result<Metric<T>> {
    match cfg {
        MetricConfig::Identity => Ok(Metric::identity(n)),
        MetricConfig::Diagonal { diag } => {
            check_len(diag.len(), n, "method.metric.diag")?;
            Metric::diagonal(vec_t(diag))
        }
        MetricConfig::Dense { b } => {
            let b = mat_t(b, "method.metric.b")?;
            check_len(b.nrows(), n, "method.metric.b")?;
            Metric::dense(b)
        }
    }
}

pub fn build_sketch<T: Real>(cfg: &SketchConfig, problem: &dyn Objective<T>) -> Result<SketchDistribution<T>> {
    let n = problem.dim();
    match cfg {
        SketchConfig::UniformCoordinate => SketchDistribution::uniform_coordinate(n),
        SketchConfig::Coordinate { p } => {
            check_len(p.len(), n, "method.sketch.p")?;
            SketchDistribution::coordinate(vec_t(p))
        }
        SketchConfig::Importance { power } => {
            let m = problem.smoothness().m.as_ref().ok_or_else(|| cfg_err("method.sketch: importance sampling needs M"))?;
            SketchDistribution::importance(m, T::lit(*power))
        }
        SketchConfig::TauNice { tau } => SketchDistribution::tau_nice(n, *tau),
        SketchConfig::Block { support, probs } => SketchDistribution::block(n, support.clone(), probs.iter().map(|p| T::lit(*p)).collect()),
        SketchConfig::Gaussian { b } => SketchDistribution::gaussian(n, *b),
        SketchConfig::OptimalSubspace => Err(cfg_err("method.sketch: optimal_subspace is built with the subspace solver")),
    }
}

fn sega_policy<T: Real>(cfg: &StepsizeConfig) -> StepsizePolicy<T> {
    match cfg {
        StepsizeConfig::Default => StepsizePolicy::General { sigma: None },
        StepsizeConfig::General { sigma } => StepsizePolicy::General { sigma: sigma.map(T::lit) },
        StepsizeConfig::SimpleUniform => StepsizePolicy::SimpleUniform,
        StepsizeConfig::CoordinateNonacc { alpha, sigma } => StepsizePolicy::CoordinateNonacc { alpha: T::lit(*alpha), sigma: T::lit(*sigma) },
        StepsizeConfig::ImportanceTrace => StepsizePolicy::ImportanceTrace,
        StepsizeConfig::MetricG { sigma } => StepsizePolicy::MetricG { sigma: sigma.map(T::lit) },
        StepsizeConfig::Manual { alpha, sigma } => StepsizePolicy::Manual { alpha: T::lit(*alpha), sigma: T::lit(*sigma) },
    }
}

fn baseline_alpha<T: Real>(cfg: &StepsizeConfig, default: impl FnOnce() -> Result<T>) -> Result<T> {
    match cfg {
        StepsizeConfig::Default => default(),
        StepsizeConfig::Manual { alpha, .. } if *alpha > 0.0 => Ok(T::lit(*alpha)),
        _ => Err(cfg_err("method.stepsize: baselines accept policy = default or manual with alpha > 0")),
    }
}

fn run_options<T: Real>(cfg: &RunConfig, seed: u64, problem: &dyn Objective<T>, r: &Regularizer<T>) -> Result<RunOptions<T>> {
    let n = problem.dim();
    let m = &cfg.method;
    let mut o = RunOptions::new(cfg.iterations, seed);
    o.record_every = cfg.record_every;
    o.checkpoint_every = cfg.output.checkpoint_every;
    o.oracle = match m.oracle {
        OracleConfig::Exact => OracleKind::Exact,
        OracleConfig::FiniteDifference { epsilon } => OracleKind::FiniteDifference { eps: epsilon.map(T::lit) },
    };
    o.stop = cfg.stop.map(|s| StopRule {
        metric: match s.metric {
            StopMetricConfig::FGap => StopMetric::FGap,
            StopMetricConfig::DistSq => StopMetric::DistSq,
            StopMetricConfig::RelativeLyapunov => StopMetric::RelativeLyapunov,
            StopMetricConfig::RelativeDistSq => StopMetric::RelativeDistSq,
        },
        threshold: s.threshold,
    });
    if let Some(x0) = &m.start {
        check_len(x0.len(), n, "method.start")?;
        o.x0 = Some(vec_t(x0));
    }
    if let Some(g) = &m.precond {
        check_len(g.len(), n, "method.precond")?;
        o.precond = Some(vec_t(g));
    }
    if m.h0 == H0Config::Gradient {
        let x0 = o.x0.clone().unwrap_or_else(|| default_start(n, seed));
        let x0 = if r.is_zero() { x0 } else { prox::prox(r, &Metric::identity(n), T::one(), &x0)? };
        o.h0 = Some(problem.gradient(&x0));
    }
    if matches!(m.stepsize, StepsizeConfig::ImportanceTrace | StepsizeConfig::CoordinateNonacc { .. }) {
        o.lyapunov = LyapunovMonitor::Coordinate;
    }
    Ok(o)
}

fn step_meta(trace: &mut Trace, step: &ResolvedStep<impl Real>) {
    trace.push_meta("alpha", step.alpha.to_string());
    trace.push_meta("sigma", step.sigma.to_string());
    if let Some(g) = step.gamma {
        trace.push_meta("gamma", g.to_string());
    }
    if let Some(r) = step.rate {
        trace.push_meta("rate", r.to_string());
    }
}

/// Runs one seed of the configured method. Metadata records the resolved constants.
pub fn run_single<T: Real>(cfg: &RunConfig, seed: u64) -> Result<Trace> {
    run_inner::<T>(cfg, seed, false)
}

fn run_inner<T: Real>(cfg: &RunConfig, seed: u64, record_path: bool) -> Result<Trace> {
    cfg.validate()?;
    let built = build_problem::<T>(&cfg.problem, seed).map_err(at("problem"))?;
    let problem = built.objective();
    let n = problem.dim();
    let m = &cfg.method;
    let r = build_regularizer::<T>(&m.regularizer, n).map_err(at("method.regularizer"))?;
    let mut opts = run_options(cfg, seed, problem, &r)?;
    opts.record_path = record_path;
    let smooth = problem.smoothness();
    let mut trace = match m.solver {
        Solver::Sega | Solver::BiasSega | Solver::SegaForcedZero => {
            let metric = build_metric::<T>(&m.metric, n).map_err(at("method.metric"))?;
            let bound = build_sketch(&m.sketch, problem).map_err(at("method.sketch"))?.bind(&metric)?;
            let step = sega_policy::<T>(&m.stepsize).resolve(smooth, &bound)?;
            let mut o = opts;
            o.mode = match m.solver {
                Solver::BiasSega => EstimatorMode::Bias,
                Solver::SegaForcedZero => EstimatorMode::ForcedZero,
                _ => EstimatorMode::Standard,
            };
            let mut t = run_sega_resolved(problem, &bound, &step, &r, &o)?;
            step_meta(&mut t, &step);
            t
        }
        Solver::SubspaceSega => {
            let BuiltProblem::LeastSquares(ls) = &built else {
                return Err(cfg_err("problem.kind: subspace_sega needs a least_squares_subspace problem"));
            };
            if m.metric != MetricConfig::Identity {
                return Err(cfg_err("method.metric: subspace_sega derives its metric from A"));
            }
            let setup = optimal_subspace_setup(ls.a())?;
            let proj = range_projector(ls.a(), &setup.metric)?;
            let bound = setup.distribution.bind(&setup.metric)?;
            let step = match &m.stepsize {
                StepsizeConfig::Default => resolve_subspace(smooth, &bound, &proj, None)?,
                StepsizeConfig::General { sigma } => resolve_subspace(smooth, &bound, &proj, sigma.map(T::lit))?,
                StepsizeConfig::Manual { alpha, sigma } => {
                    StepsizePolicy::Manual { alpha: T::lit(*alpha), sigma: T::lit(*sigma) }.resolve(smooth, &bound)?
                }
                _ => return Err(cfg_err("method.stepsize: subspace_sega accepts default, general or manual")),
            };
            let mut o = opts;
            o.mode = EstimatorMode::Subspace(proj);
            let mut t = run_sega_resolved(problem, &bound, &step, &r, &o)?;
            step_meta(&mut t, &step);
            t.push_meta("subspace_rank", setup.rank.to_string());
            t
        }
        Solver::Asega => {
            if m.stepsize != StepsizeConfig::Default {
                return Err(cfg_err("method.stepsize: asega uses its theory parameters (policy = default)"));
            }
            let dist = build_sketch(&m.sketch, problem).map_err(at("method.sketch"))?;
            let SketchKind::Coordinate { p } = dist.kind() else {
                return Err(cfg_err("method.sketch: asega needs serial coordinate sampling"));
            };
            let mm = smooth.m.as_ref().ok_or_else(|| cfg_err("problem: asega needs the smoothness matrix M"))?;
            let params = asega_params(&serial_eso_vector(mm), p, smooth.mu)?;
            let mut t = run_asega(problem, p, &params, &opts)?;
            for (k, v) in [("alpha", params.alpha), ("beta", params.beta), ("tau", params.tau), ("sigma", params.sigma), ("rate", params.rate())] {
                t.push_meta(k, v.to_string());
            }
            t
        }
        Solver::Pgd => {
            let l = smooth.l_or_lambda_max()?;
            let alpha = baseline_alpha(&m.stepsize, || Ok(T::one() / l))?;
            let mut t = baselines::run_pgd(problem, alpha, &r, cfg.cost.linear_solve_factor, &opts)?;
            t.push_meta("alpha", alpha.to_string());
            t
        }
        Solver::Cd => {
            let bound = build_sketch(&m.sketch, problem).map_err(at("method.sketch"))?.bind(&Metric::identity(n))?;
            let p = bound.distribution().probability_vector()?;
            let alpha = baseline_alpha(&m.stepsize, || {
                let diag = match &smooth.m {
                    Some(mm) => mm.diagonal(),
                    None => DVector::from_element(n, smooth.l_or_lambda_max()?),
                };
                Ok(p.iter().zip(diag.iter()).fold(T::max_value().unwrap_or_else(T::one), |a, (pi, mi)| a.min(*pi / *mi)))
            })?;
            let mut t = baselines::run_cd(problem, &bound, alpha, &r, &opts)?;
            t.push_meta("alpha", alpha.to_string());
            t
        }
        Solver::Rds => {
            let l = smooth.l_or_lambda_max()?;
            let dirs = build_sketch(&m.sketch, problem).map_err(at("method.sketch"))?.bind(&Metric::identity(n))?;
            let alpha = baseline_alpha(&m.stepsize, || Ok(T::one() / (l * T::from_usize_lossy(n))))?;
            baselines::run_rds(problem, &dirs, alpha, &opts)?
        }
    };
    trace.method = m.solver.name().to_string();
    trace.push_meta("config", cfg.name.clone());
    trace.push_meta("config_hash", cfg.hash());
    trace.push_meta("git_describe", super::git_describe());
    trace.push_meta("problem", built.describe());
    trace.push_meta("n", n.to_string());
    trace.push_meta("mu", smooth.mu.to_string());
    if let Ok(l) = smooth.l_or_lambda_max() {
        trace.push_meta("l", l.to_string());
    }
    trace.push_meta("precision", format!("{:?}", cfg.precision).to_lowercase());
    Ok(trace)
}

fn run_seed(cfg: &RunConfig, seed: u64) -> Result<Trace> {
    match cfg.precision {
        Precision::F64 => run_single::<f64>(cfg, seed),
        Precision::F32 => run_single::<f32>(cfg, seed),
    }
}

/// CSV path of one seed: `<dir>/<name>_seed<seed>.csv`.
pub fn trace_path(cfg: &RunConfig, seed: u64) -> Option<PathBuf> {
    cfg.output.dir.as_ref().map(|d| d.join(format!("{}_seed{seed}.csv", cfg.name)))
}

/// Runs every seed (in parallel) and writes one CSV per seed when an output directory is set.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<Trace>> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(cfg.seeds.len());
    let mut results: Vec<Option<Result<Trace>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in results.chunks_mut(cfg.seeds.len().div_ceil(workers)).enumerate() {
            let start = w * cfg.seeds.len().div_ceil(workers);
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_seed(cfg, cfg.seeds[start + i]));
                }
            });
        }
    });
    let traces: Vec<Trace> = results.into_iter().map(|r| r.expect("every seed ran")).collect::<Result<_>>()?;
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir)?;
        for t in &traces {
            std::fs::write(trace_path(cfg, t.seed).expect("dir set"), t.to_csv())?;
        }
    }
    Ok(traces)
}

/// Iterate paths of SEGA, CD and biasSEGA on a two-dimensional problem, first seed only.
///
/// With a constraint the methods are the projected variants. Paths are written to
/// `<dir>/<name>_paths.csv` when an output directory is set.
pub fn trajectory_2d(cfg: &RunConfig) -> Result<Vec<Trace>> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let built = build_problem::<f64>(&cfg.problem, seed)?;
    let problem = built.objective();
    if problem.dim() != 2 {
        return Err(cfg_err(format!("problem: trajectory_2d needs n = 2, got {}", problem.dim())));
    }
    let r = build_regularizer::<f64>(&cfg.method.regularizer, 2)?;
    let prefix = if r.is_zero() { "" } else { "projected_" };
    let mut out = Vec::new();
    for solver in [Solver::Sega, Solver::Cd, Solver::BiasSega] {
        let mut c = cfg.clone();
        c.method.solver = solver;
        if solver == Solver::Cd {
            c.method.stepsize = match cfg.method.stepsize {
                StepsizeConfig::Manual { alpha, sigma } => StepsizeConfig::Manual { alpha, sigma },
                _ => StepsizeConfig::Default,
            };
            c.method.sketch = SketchConfig::UniformCoordinate;
        }
        c.stop = None;
        let mut t = run_inner::<f64>(&c, seed, true)?;
        t.method = format!("{prefix}{}", solver.name());
        out.push(t);
    }
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}_paths.csv", cfg.name)), paths_csv(&out))?;
    }
    Ok(out)
}

/// `method,k,x1,x2` rows for every recorded iterate.
pub fn paths_csv(traces: &[Trace]) -> String {
    let mut s = String::from("method,k,x1,x2\n");
    for t in traces {
        for (k, x) in &t.path {
            let _ = writeln!(s, "{},{k},{:.16e},{:.16e}", t.method, x[0], x[1]);
        }
    }
    s
}
