//! Stepsize and parameter rules derived from the convergence theory.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SegaError};
use crate::estimator::RangeProjector;
use crate::linalg::{self, Metric, SmoothnessData};
use crate::scalar::Real;
use crate::sketch::{BoundSketch, SketchKind};

/// Eigenvalue slack used when validating matrix inequalities.
pub const MATRIX_TOL: f64 = 1e-10;

/// α = min{λ_min(E[Z]) / λ_max(2σ⁻¹(C − B) + μB), λ_min(Q − σE[Z]) / (2λ_max(C))}.
///
/// Requires σ < λ_min(Q)/λ_max(E[Z]).
pub fn stepsize_general<T: Real>(
    q: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    ez: &DMatrix<T>,
    mu: T,
    sigma: T,
) -> Result<T> {
    let limit = sigma_limit(q, ez)?;
    if !(sigma > T::zero()) || sigma >= limit {
        return Err(SegaError::StepsizeCondition(format!(
            "sigma={sigma} must lie in (0, {limit}) = (0, lambda_min(Q)/lambda_max(E[Z]))"
        )));
    }
    let two = T::lit(2.0);
    let first_den = linalg::lambda_max(&((c - b) * (two / sigma) + b * mu))?;
    let ez_min = linalg::lambda_min(ez)?;
    let first = if first_den > T::zero() { ez_min / first_den } else { T::max_value().unwrap_or_else(T::one) };
    let second = linalg::lambda_min(&(q - ez * sigma))? / (two * linalg::lambda_max(c)?);
    let alpha = first.min(second);
    if !(alpha > T::zero()) {
        return Err(SegaError::StepsizeCondition(format!("no positive stepsize (bound {alpha})")));
    }
    Ok(alpha)
}

/// λ_min(Q)/λ_max(E[Z]), the supremum of admissible σ.
pub fn sigma_limit<T: Real>(q: &DMatrix<T>, ez: &DMatrix<T>) -> Result<T> {
    Ok(linalg::lambda_min(q)? / linalg::lambda_max(ez)?)
}

/// Same as [`stepsize_general`] with every eigenvalue taken on the subspace spanned by
/// the orthonormal columns of `basis`.
///
/// Used for subspace SEGA, where E[Z] and C vanish off Range(Aᵀ) and the matrix
/// inequalities are only ever applied to vectors in that range.
pub fn stepsize_general_on_range<T: Real>(
    q: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    ez: &DMatrix<T>,
    mu: T,
    sigma: T,
    basis: &DMatrix<T>,
) -> Result<T> {
    let r = |m: &DMatrix<T>| {
        let x = basis.tr_mul(&(m * basis));
        (&x + x.transpose()) * T::lit(0.5)
    };
    stepsize_general(&r(q), &r(b), &r(c), &r(ez), mu, sigma)
}

/// Largest α ≥ 0 with αX ⪯ Y, found by bisection on λ_min(Y − αX).
///
/// Returns 0 when Y itself is not PSD (within tolerance).
pub fn max_feasible_alpha<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<T> {
    let scale = y.norm().max(x.norm()).max(T::eps());
    let tol = T::lit(MATRIX_TOL) * scale;
    let ok = |a: T| -> Result<bool> { Ok(linalg::lambda_min(&(y - x * a))? >= -tol) };
    if !ok(T::zero())? {
        return Ok(T::zero());
    }
    let mut hi = T::one();
    let mut grow = 0;
    while ok(hi)? {
        hi *= T::lit(2.0);
        grow += 1;
        if grow > 200 {
            return Ok(T::max_value().unwrap_or(hi));
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::lit(1e-14) * hi {
            break;
        }
    }
    Ok(lo)
}

/// σ = n/(2L), α = 1/((4L + μ)n) for uniform coordinate sketches, B = I.
pub fn stepsize_simple_uniform<T: Real>(n: usize, l: T, mu: T) -> Result<(T, T)> {
    if !(l > T::zero()) || !(mu > T::zero()) || n == 0 {
        return Err(SegaError::InvalidParameter("need n > 0, L > 0 and mu > 0".into()));
    }
    let nf = T::from_usize_lossy(n);
    let sigma = nf / (T::lit(2.0) * l);
    let alpha = T::one() / ((T::lit(4.0) * l + mu) * nf);
    Ok((alpha, sigma))
}

/// min{(1 − Lσ/n)/(2Ln), 1/(n(μ + 2(n − 1)/σ))}.
pub fn simple_uniform_bound<T: Real>(n: usize, l: T, mu: T, sigma: T) -> T {
    let nf = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let a = (T::one() - l * sigma / nf) / (two * l * nf);
    let b = T::one() / (nf * (mu + two * (nf - T::one()) / sigma));
    a.min(b)
}

/// γ = α − α² max(v_i/p_i) − σ, after checking σI − α²(V̂P̂⁻¹ − M) ⪰ γμσP̂⁻¹.
pub fn stepsize_coordinate_nonacc<T: Real>(
    m: &DMatrix<T>,
    p: &DVector<T>,
    v: &DVector<T>,
    mu: T,
    alpha: T,
    sigma: T,
) -> Result<T> {
    let n = p.len();
    if m.shape() != (n, n) || v.len() != n {
        return Err(SegaError::DimensionMismatch("M, p and v disagree in size".into()));
    }
    let ratio = v.iter().zip(p.iter()).fold(T::zero(), |acc, (vi, pi)| acc.max(*vi / *pi));
    let gamma = alpha - alpha * alpha * ratio - sigma;
    if !(gamma > T::zero()) {
        return Err(SegaError::StepsizeCondition(format!("gamma = {gamma} is not positive")));
    }
    let vp = DMatrix::from_diagonal(&v.component_div(p));
    let pinv = DMatrix::from_diagonal(&p.map(|x| T::one() / x));
    let lhs = DMatrix::identity(n, n) * sigma - (vp - m) * (alpha * alpha) - pinv * (gamma * mu * sigma);
    let lmin = linalg::lambda_min(&lhs)?;
    let tol = T::lit(MATRIX_TOL) * lhs.norm().max(T::one());
    if lmin < -tol {
        return Err(SegaError::StepsizeCondition(format!(
            "sigma I - alpha^2 (V P^-1 - M) - gamma mu sigma P^-1 has eigenvalue {lmin}"
        )));
    }
    Ok(gamma)
}

/// p_i ∝ M_ii, α = 0.232/tr(M), σ = 0.061/tr(M).
pub fn importance_trace<T: Real>(m: &DMatrix<T>) -> Result<(DVector<T>, T, T)> {
    let tr = m.trace();
    if !(tr > T::zero()) {
        return Err(SegaError::InvalidParameter("trace of M must be positive".into()));
    }
    let p = m.diagonal() / tr;
    Ok((p, T::lit(0.232) / tr, T::lit(0.061) / tr))
}

/// α ≤ min_i {p_i(1/(μ+L) − σ/2), p_i / ((2/σ)(1 − p_i) + 2Lμ/(μ+L))} for x⁺ = x − αG⁻¹g,
/// with L and μ measured in the G norm.
pub fn stepsize_metric_g<T: Real>(p: &DVector<T>, l: T, mu: T, sigma: T) -> Result<T> {
    let two = T::lit(2.0);
    let mut alpha = T::max_value().unwrap_or_else(T::one);
    for &pi in p.iter() {
        let a = pi * (T::one() / (mu + l) - sigma / two);
        let b = pi / ((two / sigma) * (T::one() - pi) + two * l * mu / (mu + l));
        alpha = alpha.min(a).min(b);
    }
    if !(alpha > T::zero()) {
        return Err(SegaError::StepsizeCondition(format!("sigma={sigma} leaves no positive stepsize")));
    }
    Ok(alpha)
}

/// Parameters of accelerated SEGA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsegaParams<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub tau: T,
    pub mu: T,
    pub sigma: T,
    pub c1: T,
    /// max_i √v_i / p_i.
    pub td: T,
}

impl<T: Real> AsegaParams<T> {
    /// Per-iteration contraction factor 1 − τ/c₁ of Υ.
    pub fn rate(&self) -> T {
        T::one() - self.tau / self.c1
    }

    /// √((c₃ − 1)/c₂²) · √μ/TD / √(1 + 1/c₂) with c₂ = 1/5, c₃ = 5.
    pub fn tau_bound(&self) -> T {
        let c2 = T::lit(0.2);
        let c3 = T::lit(5.0);
        ((c3 - T::one()) / (c2 * c2)).sqrt() * self.mu.sqrt() / self.td / (T::one() + T::one() / c2).sqrt()
    }
}

/// Accelerated SEGA parameters for ESO vector `v`, probabilities `p` and strong convexity μ.
pub fn asega_params<T: Real>(v: &DVector<T>, p: &DVector<T>, mu: T) -> Result<AsegaParams<T>> {
    if v.len() != p.len() || v.is_empty() {
        return Err(SegaError::DimensionMismatch("v and p must be nonempty and equally long".into()));
    }
    if !(mu > T::zero()) {
        return Err(SegaError::InvalidParameter("accelerated SEGA needs mu > 0".into()));
    }
    if v.iter().any(|x| !(*x > T::zero())) || p.iter().any(|x| !(*x > T::zero())) {
        return Err(SegaError::InvalidParameter("v and p must be positive".into()));
    }
    let td = v.iter().zip(p.iter()).fold(T::zero(), |acc, (vi, pi)| acc.max(vi.sqrt() / *pi));
    let pmin = p.iter().fold(T::max_value().unwrap_or_else(T::one), |acc, x| acc.min(*x));
    let c1 = T::one().max(mu.sqrt() / (td * pmin));
    let td2 = td * td;
    let a = T::lit(2.0 / 75.0) / td2;
    let tau = ((a * a * mu * mu + T::lit(4.0) * a * mu).sqrt() - a * mu) / T::lit(2.0);
    let alpha = T::one() / (T::lit(5.0) * td2);
    let beta = T::lit(2.0 / 75.0) / (tau * td2);
    let sigma = T::lit(5.0) * beta * beta;
    if !(tau > T::zero() && tau < T::one()) {
        return Err(SegaError::StepsizeCondition(format!("tau = {tau} outside (0, 1)")));
    }
    Ok(AsegaParams { alpha, beta, tau, mu, sigma, c1, td })
}

/// Stepsize rule selected in a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepsizePolicy<T: Real> {
    /// General bound over (α, σ); σ defaults to half of λ_min(Q)/λ_max(E[Z]).
    General { sigma: Option<T> },
    /// σ = n/(2L), α = 1/((4L + μ)n).
    SimpleUniform,
    /// Validated (α, σ) for serial coordinate sampling.
    CoordinateNonacc { alpha: T, sigma: T },
    /// p_i ∝ M_ii, α = 0.232/tr M, σ = 0.061/tr M.
    ImportanceTrace,
    /// Diagonal-metric rule; σ defaults to 1/(2L).
    MetricG { sigma: Option<T> },
    Manual { alpha: T, sigma: T },
}

/// Outcome of resolving a policy for a concrete problem and sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedStep<T: Real> {
    pub alpha: T,
    pub sigma: T,
    pub gamma: Option<T>,
    /// Guaranteed per-iteration contraction factor, when the theory provides one.
    pub rate: Option<T>,
}

/// Q from the smoothness data: explicit Q, else M⁻¹ (I/λ_max(M) for singular M) or I/L
/// when B = I.
pub fn q_matrix<T: Real>(smooth: &SmoothnessData<T>, b: &Metric<T>) -> Result<DMatrix<T>> {
    if let Some(q) = &smooth.q {
        return Ok(q.clone());
    }
    if !b.is_identity() {
        return Err(SegaError::Unsupported("Q must be supplied explicitly when B is not the identity".into()));
    }
    let n = b.dim();
    if let Some(m) = &smooth.m {
        let ev = linalg::sym_eigenvalues(m)?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo > hi * linalg::rel_cutoff() {
            return linalg::pseudo_inverse(m, linalg::rel_cutoff());
        }
        return Ok(DMatrix::identity(n, n) / smooth.l.unwrap_or(hi));
    }
    match smooth.l {
        Some(l) => Ok(DMatrix::identity(n, n) / l),
        None => Err(SegaError::InvalidParameter("need Q, M or L".into())),
    }
}

/// Stepsize for subspace SEGA: the general rule restricted to Range(Aᵀ), with
/// E[Z] and C built from the range-projected sketch Z = S(SᵀHB⁻¹S)†Sᵀ.
///
/// σ defaults to half of λ_min(Q)/λ_max(E[Z]) on the range.
pub fn resolve_subspace<T: Real>(
    smooth: &SmoothnessData<T>,
    bound: &BoundSketch<T>,
    proj: &RangeProjector<T>,
    sigma: Option<T>,
) -> Result<ResolvedStep<T>> {
    let q = q_matrix(smooth, bound.metric())?;
    let (ez, _, c) = proj.moments(bound)?;
    let a = proj.a();
    let basis = linalg::range_basis(&a.tr_mul(a))?;
    if basis.ncols() == 0 {
        return Err(SegaError::InvalidParameter("A has empty row space".into()));
    }
    let r = |m: &DMatrix<T>| {
        let x = basis.tr_mul(&(m * &basis));
        (&x + x.transpose()) * T::lit(0.5)
    };
    let sigma = match sigma {
        Some(s) => s,
        None => sigma_limit(&r(&q), &r(&ez))? * T::lit(0.5),
    };
    let mu = smooth.mu;
    let alpha = stepsize_general_on_range(&q, &bound.metric().matrix(), &c, &ez, mu, sigma, &basis)?;
    Ok(ResolvedStep { alpha, sigma, gamma: None, rate: Some(T::one() - alpha * mu) })
}

fn serial_probabilities<T: Real>(bound: &BoundSketch<T>) -> Result<DVector<T>> {
    match bound.distribution().kind() {
        SketchKind::Coordinate { p } => Ok(p.clone()),
        _ => Err(SegaError::Unsupported("this policy needs serial coordinate sampling".into())),
    }
}

impl<T: Real> StepsizePolicy<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::General { .. } => "general",
            Self::SimpleUniform => "simple_uniform",
            Self::CoordinateNonacc { .. } => "coordinate_nonacc",
            Self::ImportanceTrace => "importance_trace",
            Self::MetricG { .. } => "metric_g",
            Self::Manual { .. } => "manual",
        }
    }

    pub fn resolve(&self, smooth: &SmoothnessData<T>, bound: &BoundSketch<T>) -> Result<ResolvedStep<T>> {
        let mu = smooth.mu;
        let n = bound.dim();
        match self {
            Self::General { sigma } => {
                let b = bound.metric().matrix();
                let q = q_matrix(smooth, bound.metric())?;
                let ez = bound.expected_z()?;
                let c = bound.expected_c()?;
                let sigma = match sigma {
                    Some(s) => *s,
                    None => sigma_limit(&q, &ez)? * T::lit(0.5),
                };
                let alpha = stepsize_general(&q, &b, &c, &ez, mu, sigma)?;
                Ok(ResolvedStep { alpha, sigma, gamma: None, rate: Some(T::one() - alpha * mu) })
            }
            Self::SimpleUniform => {
                let p = serial_probabilities(bound)?;
                let uniform = T::one() / T::from_usize_lossy(n);
                if !bound.metric().is_identity() || p.iter().any(|pi| (*pi - uniform).abs() > T::lit(1e-12)) {
                    return Err(SegaError::Unsupported("simple_uniform needs B = I and uniform coordinates".into()));
                }
                let (alpha, sigma) = stepsize_simple_uniform(n, smooth.l_or_lambda_max()?, mu)?;
                Ok(ResolvedStep { alpha, sigma, gamma: None, rate: Some(T::one() - alpha * mu) })
            }
            Self::CoordinateNonacc { alpha, sigma } => {
                let p = serial_probabilities(bound)?;
                let m = smooth.m.as_ref().ok_or_else(|| SegaError::InvalidParameter("policy needs M".into()))?;
                let gamma = stepsize_coordinate_nonacc(m, &p, &m.diagonal(), mu, *alpha, *sigma)?;
                Ok(ResolvedStep { alpha: *alpha, sigma: *sigma, gamma: Some(gamma), rate: Some(T::one() - gamma * mu) })
            }
            Self::ImportanceTrace => {
                let p = serial_probabilities(bound)?;
                let m = smooth.m.as_ref().ok_or_else(|| SegaError::InvalidParameter("policy needs M".into()))?;
                let (want, alpha, sigma) = importance_trace(m)?;
                if (&p - &want).amax() > T::lit(1e-10) {
                    return Err(SegaError::Unsupported("importance_trace needs p proportional to diag(M)".into()));
                }
                let gamma = stepsize_coordinate_nonacc(m, &p, &m.diagonal(), mu, alpha, sigma)?;
                Ok(ResolvedStep { alpha, sigma, gamma: Some(gamma), rate: Some(T::one() - gamma * mu) })
            }
            Self::MetricG { sigma } => {
                let p = serial_probabilities(bound)?;
                let l = smooth.l_or_lambda_max()?;
                let sigma = sigma.unwrap_or(T::one() / (T::lit(2.0) * l));
                let alpha = stepsize_metric_g(&p, l, mu, sigma)?;
                let rate = T::one() - alpha * mu * T::lit(2.0) * l / (mu + l);
                Ok(ResolvedStep { alpha, sigma, gamma: None, rate: Some(rate) })
            }
            Self::Manual { alpha, sigma } => {
                if !(*alpha > T::zero()) {
                    return Err(SegaError::InvalidParameter("manual stepsize must be positive".into()));
                }
                Ok(ResolvedStep { alpha: *alpha, sigma: *sigma, gamma: None, rate: None })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::SketchDistribution;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn general_two_dimensional_example() {
        let n = 2;
        let bound = SketchDistribution::<f64>::uniform_coordinate(n).unwrap().bind(&Metric::identity(n)).unwrap();
        let q = DMatrix::identity(n, n);
        let alpha = stepsize_general(&q, &DMatrix::identity(n, n), &bound.expected_c().unwrap(), &bound.expected_z().unwrap(), 0.1, 0.5)
            .unwrap();
        assert_relative_eq!(alpha, 1.0 / 8.2, epsilon = 1e-14);
        assert_relative_eq!(simple_uniform_bound(2, 1.0, 0.1, 0.5), 1.0 / 8.2, epsilon = 1e-14);
    }

    #[test]
    fn general_matches_uniform_bound() {
        for &(n, l, mu, sigma) in &[(5usize, 2.0, 0.3, 1.0), (10, 1.0, 0.01, 5.0), (3, 4.0, 1.0, 0.2)] {
            let bound = SketchDistribution::<f64>::uniform_coordinate(n).unwrap().bind(&Metric::identity(n)).unwrap();
            let q = DMatrix::identity(n, n) / l;
            let alpha =
                stepsize_general(&q, &DMatrix::identity(n, n), &bound.expected_c().unwrap(), &bound.expected_z().unwrap(), mu, sigma)
                    .unwrap();
            assert_relative_eq!(alpha, simple_uniform_bound(n, l, mu, sigma), epsilon = 1e-12);
        }
    }

    #[test]
    fn general_single_coordinate() {
        let q = DMatrix::from_element(1, 1, 0.5);
        let one = DMatrix::from_element(1, 1, 1.0);
        let alpha = stepsize_general(&q, &one, &one, &one, 0.2, 0.25).unwrap();
        assert_relative_eq!(alpha, (1.0 / (0.2f64)).min((0.5 - 0.25) / 2.0), epsilon = 1e-15);
    }

    #[test]
    fn general_rejects_large_sigma() {
        let i = DMatrix::<f64>::identity(2, 2);
        let ez = &i * 0.5;
        assert!(matches!(stepsize_general(&i, &i, &(&i * 2.0), &ez, 0.1, 2.0), Err(SegaError::StepsizeCondition(_))));
    }

    #[test]
    fn simple_uniform_examples() {
        let (a, s) = stepsize_simple_uniform(10, 1.0, 0.1).unwrap();
        assert_relative_eq!(s, 5.0);
        assert_relative_eq!(a, 1.0 / 41.0, epsilon = 1e-15);
        let (a, s) = stepsize_simple_uniform(1, 2.0, 2.0).unwrap();
        assert_relative_eq!(s, 0.25);
        assert_relative_eq!(a, 0.1, epsilon = 1e-15);
        for &(n, l, mu) in &[(10usize, 1.0, 0.1), (50, 3.0, 0.001), (2, 1.0, 1.0)] {
            let (a, s) = stepsize_simple_uniform(n, l, mu).unwrap();
            assert!(a <= simple_uniform_bound(n, l, mu, s) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn coordinate_nonacc_examples() {
        let m = DMatrix::<f64>::identity(2, 2);
        let p = dvector![0.5, 0.5];
        let (alpha, sigma) = (0.232 / 2.0, 0.061 / 2.0);
        let gamma = stepsize_coordinate_nonacc(&m, &p, &m.diagonal(), 1.0, alpha, sigma).unwrap();
        assert_relative_eq!(gamma, alpha - 2.0 * alpha * alpha - sigma, epsilon = 1e-15);
        assert!(stepsize_coordinate_nonacc(&m, &p, &m.diagonal(), 1.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn asega_scalar_params() {
        let prm = asega_params(&dvector![1.0], &dvector![1.0], 1.0).unwrap();
        assert_relative_eq!(prm.td, 1.0);
        assert_relative_eq!(prm.alpha, 0.2, epsilon = 1e-15);
        let expected = ((4.0 / (9.0 * 625.0) + 8.0 / 75.0f64).sqrt() - 2.0 / 75.0) / 2.0;
        assert_relative_eq!(prm.tau, expected, epsilon = 1e-15);
        assert!((prm.tau - 0.1505).abs() < 1e-4);
        assert_relative_eq!(prm.sigma, 5.0 * prm.beta * prm.beta, epsilon = 1e-15);
        assert!(prm.tau <= prm.tau_bound());
    }

    #[test]
    fn metric_g_example() {
        let (n, l, mu) = (4usize, 2.0, 0.5);
        let p = DVector::from_element(n, 1.0 / n as f64);
        let sigma = 1.0 / (2.0 * l);
        let alpha = stepsize_metric_g(&p, l, mu, sigma).unwrap();
        let first = (3.0 * l - mu) / (4.0 * l * n as f64 * (l + mu));
        assert_relative_eq!(p[0] * (1.0 / (mu + l) - sigma / 2.0), first, epsilon = 1e-15);
        let second = p[0] / ((2.0 / sigma) * (1.0 - p[0]) + 2.0 * l * mu / (mu + l));
        assert_relative_eq!(alpha, first.min(second), epsilon = 1e-15);
    }

    #[test]
    fn max_feasible_alpha_scalar() {
        let x = DMatrix::from_element(1, 1, 4.0);
        let y = DMatrix::from_element(1, 1, 2.0);
        assert_relative_eq!(max_feasible_alpha(&x, &y).unwrap(), 0.5, epsilon = 1e-9);
    }
}
