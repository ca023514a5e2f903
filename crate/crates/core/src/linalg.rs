//! Metrics, weighted norms, PSD checks and the pseudo-inverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SegaError};
use crate::scalar::Real;

/// Relative Frobenius asymmetry tolerated for "symmetric" input.
pub fn sym_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::eps() * T::lit(100.0))
}

/// Relative eigenvalue cutoff used by [`pseudo_inverse`] and positivity checks.
pub fn rel_cutoff<T: Real>() -> T {
    T::lit(1e-12).max(T::eps() * T::lit(10.0))
}

fn check_square<T: Real>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(SegaError::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Relative Frobenius asymmetry ‖A − Aᵀ‖ / ‖A‖.
pub fn asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let norm = a.norm();
    if norm == T::zero() {
        return T::zero();
    }
    (a - a.transpose()).norm() / norm
}

pub fn ensure_symmetric<T: Real>(a: &DMatrix<T>) -> Result<()> {
    check_square(a, "matrix")?;
    let asym = asymmetry(a);
    if asym > sym_tol() {
        return Err(SegaError::NotSymmetric { asymmetry: asym.to_f64_lossy() });
    }
    Ok(())
}

fn symmetrized<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * T::lit(0.5)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    ensure_symmetric(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev: Vec<T> = SymmetricEigen::new(symmetrized(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ev)
}

pub fn lambda_min<T: Real>(a: &DMatrix<T>) -> Result<T> {
    sym_eigenvalues(a)?
        .first()
        .copied()
        .ok_or_else(|| SegaError::DimensionMismatch("empty matrix".into()))
}

pub fn lambda_max<T: Real>(a: &DMatrix<T>) -> Result<T> {
    sym_eigenvalues(a)?
        .last()
        .copied()
        .ok_or_else(|| SegaError::DimensionMismatch("empty matrix".into()))
}

/// ‖x‖²_W = xᵀWx.
pub fn weighted_norm_sq<T: Real>(x: &DVector<T>, w: &DMatrix<T>) -> Result<T> {
    if w.nrows() != x.len() || w.ncols() != x.len() {
        return Err(SegaError::DimensionMismatch(format!(
            "vector of length {} against {}x{} weight",
            x.len(),
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(x.dot(&(w * x)))
}

/// Σ d_i x_i².
pub fn diag_norm_sq<T: Real>(x: &DVector<T>, d: &DVector<T>) -> T {
    x.iter().zip(d.iter()).fold(T::zero(), |acc, (&xi, &di)| acc + di * xi * xi)
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
///
/// Eigenvalues with magnitude below `tol · |λ|_max` are treated as zero.
pub fn pseudo_inverse<T: Real>(a: &DMatrix<T>, tol: T) -> Result<DMatrix<T>> {
    pseudo_inverse_with_floor(a, tol, T::zero())
}

/// Like [`pseudo_inverse`], with an additional absolute cutoff `floor`.
///
/// The absolute floor matters for 1×1 or otherwise tiny systems where a purely
/// relative cutoff cannot tell a round-off-level eigenvalue from a real one.
pub fn pseudo_inverse_with_floor<T: Real>(a: &DMatrix<T>, tol: T, floor: T) -> Result<DMatrix<T>> {
    ensure_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if n == 1 {
        let v = a[(0, 0)];
        let keep = v.abs() > floor && v != T::zero();
        return Ok(DMatrix::from_element(1, 1, if keep { T::one() / v } else { T::zero() }));
    }
    let eig = SymmetricEigen::new(symmetrized(a));
    let scale = eig.eigenvalues.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let cut = (tol * scale).max(floor);
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() <= cut || lam == T::zero() {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        out += (&u * u.transpose()) * (T::one() / lam);
    }
    Ok(symmetrized(&out))
}

/// Outcome of [`check_spd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpdCheck<T> {
    Ok,
    Fail(T),
}

impl<T> SpdCheck<T> {
    pub fn is_ok(&self) -> bool {
        matches!(self, SpdCheck::Ok)
    }
}

/// `Ok` iff λ_min(W) > tol.
pub fn check_spd<T: Real>(w: &DMatrix<T>, tol: T) -> Result<SpdCheck<T>> {
    let lmin = lambda_min(w)?;
    Ok(if lmin > tol { SpdCheck::Ok } else { SpdCheck::Fail(lmin) })
}

/// Orthonormal basis of the column space of a symmetric PSD matrix.
pub fn range_basis<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    ensure_symmetric(a)?;
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrized(a));
    let scale = eig.eigenvalues.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let cut = T::lit(1e-9).max(T::eps() * T::lit(1e3)) * scale;
    let cols: Vec<DVector<T>> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() > cut)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind<T: Real> {
    Identity,
    Diagonal(DVector<T>),
    Dense { b: DMatrix<T>, inv: DMatrix<T> },
}

/// Positive definite weight matrix B defining ⟨x, y⟩_B = xᵀBy.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric<T: Real> {
    n: usize,
    kind: MetricKind<T>,
}

impl<T: Real> Metric<T> {
    pub fn identity(n: usize) -> Self {
        Self { n, kind: MetricKind::Identity }
    }

    pub fn diagonal(d: DVector<T>) -> Result<Self> {
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(SegaError::InvalidParameter(format!(
                "diagonal metric entry {i} is {v}, must be positive"
            )));
        }
        Ok(Self { n: d.len(), kind: MetricKind::Diagonal(d) })
    }

    pub fn dense(b: DMatrix<T>) -> Result<Self> {
        ensure_symmetric(&b)?;
        let lmax = lambda_max(&b)?;
        let pd_tol = rel_cutoff::<T>() * lmax.abs();
        if let SpdCheck::Fail(m) = check_spd(&b, pd_tol)? {
            return Err(SegaError::NotPositiveDefinite { min_eigenvalue: m.to_f64_lossy() });
        }
        let b = symmetrized(&b);
        let inv = b
            .clone()
            .cholesky()
            .ok_or(SegaError::NotPositiveDefinite { min_eigenvalue: 0.0 })?
            .inverse();
        Ok(Self { n: b.nrows(), kind: MetricKind::Dense { inv: symmetrized(&inv), b } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &MetricKind<T> {
        &self.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, MetricKind::Identity)
    }

    /// True for identity and diagonal metrics.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self.kind, MetricKind::Dense { .. })
    }

    /// `Some(c)` when B = c·I.
    pub fn scaled_identity(&self) -> Option<T> {
        match &self.kind {
            MetricKind::Identity => Some(T::one()),
            MetricKind::Diagonal(d) => {
                let c = d[0];
                d.iter().all(|&v| v == c).then_some(c)
            }
            MetricKind::Dense { b, .. } => {
                let c = b[(0, 0)];
                let tol = sym_tol::<T>() * c.abs();
                let ok = (0..self.n).all(|i| {
                    (0..self.n).all(|j| {
                        let target = if i == j { c } else { T::zero() };
                        (b[(i, j)] - target).abs() <= tol
                    })
                });
                ok.then_some(c)
            }
        }
    }

    /// B_ii.
    pub fn diag_entry(&self, i: usize) -> T {
        match &self.kind {
            MetricKind::Identity => T::one(),
            MetricKind::Diagonal(d) => d[i],
            MetricKind::Dense { b, .. } => b[(i, i)],
        }
    }

    /// (B⁻¹)_ii.
    pub fn inv_diag_entry(&self, i: usize) -> T {
        match &self.kind {
            MetricKind::Identity => T::one(),
            MetricKind::Diagonal(d) => T::one() / d[i],
            MetricKind::Dense { inv, .. } => inv[(i, i)],
        }
    }

    /// Bx.
    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        match &self.kind {
            MetricKind::Identity => x.clone(),
            MetricKind::Diagonal(d) => x.component_mul(d),
            MetricKind::Dense { b, .. } => b * x,
        }
    }

    /// B⁻¹x.
    pub fn apply_inv(&self, x: &DVector<T>) -> DVector<T> {
        match &self.kind {
            MetricKind::Identity => x.clone(),
            MetricKind::Diagonal(d) => x.component_div(d),
            MetricKind::Dense { inv, .. } => inv * x,
        }
    }

    /// B⁻¹X for a matrix X.
    pub fn apply_inv_mat(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match &self.kind {
            MetricKind::Identity => x.clone(),
            MetricKind::Diagonal(d) => {
                let mut out = x.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            MetricKind::Dense { inv, .. } => inv * x,
        }
    }

    pub fn matrix(&self) -> DMatrix<T> {
        match &self.kind {
            MetricKind::Identity => DMatrix::identity(self.n, self.n),
            MetricKind::Diagonal(d) => DMatrix::from_diagonal(d),
            MetricKind::Dense { b, .. } => b.clone(),
        }
    }

    pub fn inverse_matrix(&self) -> DMatrix<T> {
        match &self.kind {
            MetricKind::Identity => DMatrix::identity(self.n, self.n),
            MetricKind::Diagonal(d) => DMatrix::from_diagonal(&d.map(|v| T::one() / v)),
            MetricKind::Dense { inv, .. } => inv.clone(),
        }
    }

    /// ‖x‖²_B.
    pub fn norm_sq(&self, x: &DVector<T>) -> T {
        match &self.kind {
            MetricKind::Identity => x.norm_squared(),
            MetricKind::Diagonal(d) => diag_norm_sq(x, d),
            MetricKind::Dense { b, .. } => x.dot(&(b * x)),
        }
    }
}

/// Smoothness and convexity constants of an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessData<T: Real> {
    pub m: Option<DMatrix<T>>,
    pub q: Option<DMatrix<T>>,
    pub l: Option<T>,
    pub mu: T,
    pub g: Option<DVector<T>>,
}

impl<T: Real> SmoothnessData<T> {
    pub fn new(mu: T) -> Result<Self> {
        if !(mu > T::zero()) {
            return Err(SegaError::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { m: None, q: None, l: None, mu, g: None })
    }

    /// Constants for a merely convex f (μ = 0); strongly convex policies reject it.
    pub fn convex() -> Self {
        Self { m: None, q: None, l: None, mu: T::zero(), g: None }
    }

    pub fn with_m(mut self, m: DMatrix<T>) -> Result<Self> {
        ensure_symmetric(&m)?;
        self.m = Some(m);
        Ok(self)
    }

    pub fn with_q(mut self, q: DMatrix<T>) -> Result<Self> {
        ensure_symmetric(&q)?;
        self.q = Some(q);
        Ok(self)
    }

    pub fn with_l(mut self, l: T) -> Result<Self> {
        if !(l > T::zero()) {
            return Err(SegaError::InvalidParameter(format!("L must be positive, got {l}")));
        }
        self.l = Some(l);
        Ok(self)
    }

    pub fn with_g(mut self, g: DVector<T>) -> Result<Self> {
        if g.iter().any(|v| !(*v > T::zero())) {
            return Err(SegaError::InvalidParameter("G must be positive".into()));
        }
        self.g = Some(g);
        Ok(self)
    }

    /// Checks Q = M⁻¹ when both are present (meaningful for B = I).
    pub fn check_q_is_m_inverse(&self, tol: T) -> Result<bool> {
        match (&self.m, &self.q) {
            (Some(m), Some(q)) => {
                let prod = m * q;
                let id = DMatrix::identity(m.nrows(), m.ncols());
                Ok((prod - id).norm() <= tol * T::from_usize_lossy(m.nrows()).sqrt())
            }
            _ => Ok(true),
        }
    }

    pub fn l_or_lambda_max(&self) -> Result<T> {
        match (&self.l, &self.m) {
            (Some(l), _) => Ok(*l),
            (None, Some(m)) => lambda_max(m),
            _ => Err(SegaError::InvalidParameter("neither L nor M available".into())),
        }
    }
}

/// Slack of Q-smoothness at (x, y) with respect to B:
/// f(x) − f(y) − ⟨∇f(y), x − y⟩_B − ½‖∇f(x) − ∇f(y)‖²_Q.
///
/// Nonnegative iff the inequality holds at this pair. `grad` must return the
/// gradient in the B geometry.
pub fn q_smoothness_slack<T: Real>(
    f: impl Fn(&DVector<T>) -> T,
    grad: impl Fn(&DVector<T>) -> DVector<T>,
    q: &DMatrix<T>,
    b: &Metric<T>,
    x: &DVector<T>,
    y: &DVector<T>,
) -> T {
    let gx = grad(x);
    let gy = grad(y);
    let diff = x - y;
    let dg = &gx - &gy;
    f(x) - f(y) - gy.dot(&b.apply(&diff)) - T::lit(0.5) * dg.dot(&(q * &dg))
}

/// Slack of M-smoothness at (x, y):
/// f(y) + ⟨∇f(y), x − y⟩ + ½‖x − y‖²_M − f(x).
pub fn m_smoothness_slack<T: Real>(
    f: impl Fn(&DVector<T>) -> T,
    grad: impl Fn(&DVector<T>) -> DVector<T>,
    m: &DMatrix<T>,
    x: &DVector<T>,
    y: &DVector<T>,
) -> T {
    let diff = x - y;
    f(y) + grad(y).dot(&diff) + T::lit(0.5) * diff.dot(&(m * &diff)) - f(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(weighted_norm_sq(&dvector![1.0, 0.0], &DMatrix::identity(2, 2)).unwrap(), 1.0);
        let w = DMatrix::from_diagonal(&dvector![2.0, 3.0]);
        assert_eq!(weighted_norm_sq(&dvector![1.0, 1.0], &w).unwrap(), 5.0);
        let w = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert_eq!(weighted_norm_sq(&dvector![1.0, 2.0], &w).unwrap(), 14.0);
    }

    #[test]
    fn weighted_norm_dimension_mismatch() {
        let err = weighted_norm_sq(&dvector![1.0, 0.0, 0.0], &DMatrix::<f64>::identity(2, 2));
        assert!(matches!(err, Err(SegaError::DimensionMismatch(_))));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let p = pseudo_inverse(&dmatrix![2.0], 1e-12).unwrap();
        assert_eq!(p[(0, 0)], 0.5);
        let p = pseudo_inverse(&DMatrix::from_diagonal(&dvector![1.0, 0.0]), 1e-12).unwrap();
        assert_relative_eq!(p, DMatrix::from_diagonal(&dvector![1.0, 0.0]), epsilon = 1e-14);
        let a = dmatrix![0.5, 0.5; 0.5, 0.5];
        let p = pseudo_inverse(&a, 1e-12).unwrap();
        assert_relative_eq!(p, dmatrix![0.5, 0.5; 0.5, 0.5], epsilon = 1e-14);
    }

    #[test]
    fn pseudo_inverse_rejects_asymmetric() {
        let a = dmatrix![1.0, 2.0; 0.0, 1.0];
        assert!(matches!(pseudo_inverse(&a, 1e-12), Err(SegaError::NotSymmetric { .. })));
    }

    #[test]
    fn check_spd_examples() {
        assert!(check_spd(&DMatrix::<f64>::identity(3, 3), 0.0).unwrap().is_ok());
        let r = check_spd(&DMatrix::from_diagonal(&dvector![1.0, -1.0]), 0.0).unwrap();
        assert_eq!(r, SpdCheck::Fail(-1.0));
        match check_spd(&dmatrix![1.0, 2.0; 2.0, 1.0], 0.0).unwrap() {
            SpdCheck::Fail(m) => assert_relative_eq!(m, -1.0, epsilon = 1e-12),
            SpdCheck::Ok => panic!("indefinite matrix accepted"),
        }
    }

    #[test]
    fn metric_rejects_bad_input() {
        assert!(Metric::diagonal(dvector![1.0, 0.0]).is_err());
        assert!(Metric::dense(dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
        assert!(Metric::dense(dmatrix![1.0, 0.5; 0.0, 1.0]).is_err());
    }

    #[test]
    fn metric_fast_paths_agree_with_dense() {
        let d = dvector![1.0, 2.0, 4.0];
        let diag = Metric::diagonal(d.clone()).unwrap();
        let dense = Metric::dense(DMatrix::from_diagonal(&d)).unwrap();
        let x = dvector![0.3, -1.0, 2.0];
        assert_relative_eq!(diag.apply_inv(&x), dense.apply_inv(&x), epsilon = 1e-14);
        assert_relative_eq!(diag.norm_sq(&x), dense.norm_sq(&x), epsilon = 1e-14);
        assert_eq!(Metric::<f64>::identity(3).norm_sq(&x), x.norm_squared());
    }

    #[test]
    fn smoothness_requires_positive_mu() {
        assert!(SmoothnessData::new(0.0).is_err());
        assert!(SmoothnessData::new(-1.0f64).is_err());
        assert!(SmoothnessData::new(1e-3f64).is_ok());
    }

    #[test]
    fn generic_over_f32() {
        let p = pseudo_inverse(&nalgebra::dmatrix![4.0f32], 1e-6).unwrap();
        assert_eq!(p[(0, 0)], 0.25f32);
    }
}
