use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::quadratic::random_orthogonal;
use super::{Objective, Solution};
use crate::error::{Result, SegaError};
use crate::linalg::{self, SmoothnessData};
use crate::prox::Regularizer;
use crate::rng;
use crate::scalar::Real;
use crate::sketch::Sketch;

/// f(x) = ‖Ax − b‖².
///
/// The gradient 2Aᵀ(Ax − b) always lies in Range(Aᵀ). The μ stored in the
/// smoothness data is the strong convexity constant of f restricted to that
/// range, 2λ_min⁺(AAᵀ).
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem<T: Real> {
    a: DMatrix<T>,
    b: DVector<T>,
    orthonormal_rows: bool,
    smooth: SmoothnessData<T>,
}

impl<T: Real> LeastSquaresProblem<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(SegaError::DimensionMismatch(format!("A has {} rows, b has {}", a.nrows(), b.len())));
        }
        let gram = &a * a.transpose();
        let gram = (&gram + gram.transpose()) * T::lit(0.5);
        let ev = linalg::sym_eigenvalues(&gram)?;
        let top = ev.last().copied().unwrap_or_else(T::zero);
        let cut = T::lit(1e-10) * top;
        let low = ev.iter().copied().find(|v| *v > cut).ok_or_else(|| SegaError::InvalidParameter("A is zero".into()))?;
        let two = T::lit(2.0);
        let m = a.transpose() * &a * two;
        let smooth = SmoothnessData::new(two * low)?.with_l(two * top)?;
        let smooth = SmoothnessData { m: Some((&m + m.transpose()) * T::lit(0.5)), ..smooth };
        let id = DMatrix::identity(a.nrows(), a.nrows());
        let orthonormal_rows = (&gram - id).norm() <= T::lit(1e-10).max(T::eps() * T::lit(1e3));
        Ok(Self { a, b, orthonormal_rows, smooth })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DVector<T> {
        &self.b
    }

    fn residual(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x - &self.b
    }
}

impl<T: Real> Objective<T> for LeastSquaresProblem<T> {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<T>) -> T {
        self.residual(x).norm_squared()
    }

    fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        self.a.tr_mul(&self.residual(x)) * T::lit(2.0)
    }

    fn sketched_gradient(&self, s: &Sketch<T>, x: &DVector<T>) -> DVector<T> {
        let r = self.residual(x) * T::lit(2.0);
        match s {
            Sketch::Coords(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.a.column(i).dot(&r))),
            Sketch::Dense(sm) => (&self.a * sm).tr_mul(&r),
        }
    }

    fn smoothness(&self) -> &SmoothnessData<T> {
        &self.smooth
    }

    /// With orthonormal rows and a centered ball, x* = Aᵀb / max(1, ‖b‖/r) (the
    /// minimum-norm minimizer when ‖b‖ ≤ r).
    fn solve(&self, r: &Regularizer<T>) -> Result<Solution<T>> {
        let radius = match r {
            Regularizer::Zero => None,
            Regularizer::Ball { radius, center: None } => Some(*radius),
            _ => return super::reference_solve(self, r),
        };
        if !self.orthonormal_rows {
            return super::reference_solve(self, r);
        }
        let scale = match radius {
            Some(rad) => T::one().max(self.b.norm() / rad),
            None => T::one(),
        };
        let x = self.a.tr_mul(&self.b) / scale;
        Ok(Solution { f: self.value(&x), grad: self.gradient(&x), x })
    }
}

/// A is d×n with orthonormal rows (QR of a Gaussian matrix), b ~ N(0, I_d).
pub fn make_least_squares_subspace<T: Real>(n: usize, d: usize, seed: u64) -> Result<LeastSquaresProblem<T>> {
    if d == 0 || d > n {
        return Err(SegaError::InvalidParameter(format!("need 1 <= d <= n, got d={d}, n={n}")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_PROBLEM);
    let q = random_orthogonal::<T>(n, &mut rng);
    let a = q.columns(0, d).transpose();
    let b = DVector::from_fn(d, |_, _| T::lit(StandardNormal.sample(&mut rng)));
    LeastSquaresProblem::new(a, b)
}
