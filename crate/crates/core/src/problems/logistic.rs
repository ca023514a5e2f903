use nalgebra::{DMatrix, DVector};

use super::{Objective, Solution};
use crate::error::{Result, SegaError};
use crate::linalg::{self, SmoothnessData};
use crate::prox::Regularizer;
use crate::scalar::Real;
use crate::sketch::Sketch;

/// f(x) = (1/m) Σ log(1 + exp(−b_i a_iᵀx)) + (μ/2)‖x‖².
#[derive(Debug, Clone)]
pub struct LogisticProblem<T: Real> {
    a: DMatrix<T>,
    labels: DVector<T>,
    mu: T,
    smooth: SmoothnessData<T>,
}

fn softplus<T: Real>(t: T) -> T {
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> LogisticProblem<T> {
    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn labels(&self) -> &DVector<T> {
        &self.labels
    }

    fn m_count(&self) -> T {
        T::from_usize_lossy(self.a.nrows())
    }

    /// Per-sample weights −b_i σ(−b_i a_iᵀx) / m.
    fn weights(&self, x: &DVector<T>) -> DVector<T> {
        let margins = &self.a * x;
        let m = self.m_count();
        DVector::from_iterator(
            margins.len(),
            margins.iter().zip(self.labels.iter()).map(|(z, b)| -*b * sigmoid(-*b * *z) / m),
        )
    }

    fn hessian(&self, x: &DVector<T>) -> DMatrix<T> {
        let margins = &self.a * x;
        let m = self.m_count();
        let d = margins.map(|z| {
            let s = sigmoid(z);
            s * (T::one() - s) / m
        });
        let mut weighted = self.a.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= d[i];
        }
        self.a.tr_mul(&weighted) + DMatrix::identity(self.a.ncols(), self.a.ncols()) * self.mu
    }
}

impl<T: Real> Objective<T> for LogisticProblem<T> {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<T>) -> T {
        let margins = &self.a * x;
        let loss = margins.iter().zip(self.labels.iter()).fold(T::zero(), |acc, (z, b)| acc + softplus(-*b * *z));
        loss / self.m_count() + self.mu * T::lit(0.5) * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        self.a.tr_mul(&self.weights(x)) + x * self.mu
    }

    fn sketched_gradient(&self, s: &Sketch<T>, x: &DVector<T>) -> DVector<T> {
        match s {
            Sketch::Coords(idx) => {
                let w = self.weights(x);
                DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.a.column(i).dot(&w) + self.mu * x[i]))
            }
            Sketch::Dense(sm) => sm.tr_mul(&self.gradient(x)),
        }
    }

    fn smoothness(&self) -> &SmoothnessData<T> {
        &self.smooth
    }

    /// Damped Newton for the unregularized case; accelerated proximal gradient otherwise.
    fn solve(&self, r: &Regularizer<T>) -> Result<Solution<T>> {
        if !r.is_zero() || self.mu <= T::zero() {
            return super::reference_solve(self, r);
        }
        let n = self.dim();
        let mut x = DVector::zeros(n);
        for _ in 0..100 {
            let g = self.gradient(&x);
            if g.norm() <= T::eps() * T::lit(16.0) {
                break;
            }
            let step = match self.hessian(&x).cholesky() {
                Some(ch) => ch.solve(&g),
                None => return super::reference_solve(self, r),
            };
            let f0 = self.value(&x);
            let slope = g.dot(&step);
            let mut t = T::one();
            while t > T::lit(1e-10) && self.value(&(&x - &step * t)) > f0 - T::lit(1e-4) * t * slope {
                t *= T::lit(0.5);
            }
            let next = &x - &step * t;
            let moved = (&next - &x).norm();
            x = next;
            if moved <= T::eps() * (T::one() + x.norm()) {
                break;
            }
        }
        Ok(Solution { f: self.value(&x), grad: self.gradient(&x), x })
    }
}

/// Logistic regression with ℓ2 penalty μ ≥ 0; labels must be ±1.
pub fn make_logistic<T: Real>(a: DMatrix<T>, labels: DVector<T>, mu: T) -> Result<LogisticProblem<T>> {
    if a.nrows() != labels.len() {
        return Err(SegaError::DimensionMismatch(format!("{} rows but {} labels", a.nrows(), labels.len())));
    }
    if a.nrows() == 0 {
        return Err(SegaError::InvalidParameter("no samples".into()));
    }
    if labels.iter().any(|b| *b != T::one() && *b != -T::one()) {
        return Err(SegaError::InvalidParameter("labels must be -1 or +1".into()));
    }
    if !(mu >= T::zero()) {
        return Err(SegaError::InvalidParameter(format!("mu must be nonnegative, got {mu}")));
    }
    let n = a.ncols();
    let m = T::from_usize_lossy(a.nrows());
    let mm = a.tr_mul(&a) / (m * T::lit(4.0)) + DMatrix::identity(n, n) * mu;
    let mm = (&mm + mm.transpose()) * T::lit(0.5);
    let l = linalg::lambda_max(&mm)?.max(T::eps());
    let base = if mu > T::zero() { SmoothnessData::new(mu)? } else { SmoothnessData::convex() };
    let smooth = base.with_l(l)?.with_m(mm)?;
    Ok(LogisticProblem { a, labels, mu, smooth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn value_at_zero_is_log_two() {
        let p = make_logistic(dmatrix![1.0, 2.0; -1.0, 0.5], dvector![1.0, -1.0], 0.3).unwrap();
        assert_relative_eq!(p.value(&dvector![0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn single_sample_gradient() {
        let p = make_logistic(dmatrix![1.0, 0.0], dvector![1.0], 0.0).unwrap();
        assert_eq!(p.gradient(&dvector![0.0, 0.0]), dvector![-0.5, 0.0]);
    }

    #[test]
    fn rejects_non_binary_labels() {
        assert!(make_logistic(dmatrix![1.0], dvector![0.0], 0.1).is_err());
    }

    #[test]
    fn newton_reaches_stationarity() {
        let a = dmatrix![1.0, 0.2; -0.3, 1.0; 0.5, 0.5; -1.0, -0.1];
        let p = make_logistic(a, dvector![1.0, -1.0, 1.0, -1.0], 0.1).unwrap();
        let sol = p.solve(&Regularizer::Zero).unwrap();
        assert!(sol.grad.norm() < 1e-12);
    }
}
