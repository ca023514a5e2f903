use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::{check_dim, Objective, Solution};
use crate::error::{Result, SegaError};
use crate::linalg::SmoothnessData;
use crate::prox::Regularizer;
use crate::rng::{self, SegaRng};
use crate::scalar::Real;
use crate::sketch::Sketch;

/// Spectrum families for synthetic quadratics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumType {
    /// n/2 ones, then n.
    HalfFlat,
    /// n − 1 ones, then n.
    OneLarge,
    /// i-th eigenvalue equal to i.
    Linear,
    /// Uniform on [0, 1], floored at 1e-6.
    Uniform,
}

impl SpectrumType {
    pub fn from_index(t: u8) -> Result<Self> {
        match t {
            1 => Ok(Self::HalfFlat),
            2 => Ok(Self::OneLarge),
            3 => Ok(Self::Linear),
            4 => Ok(Self::Uniform),
            _ => Err(SegaError::InvalidParameter(format!("spectrum type must be 1..=4, got {t}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::HalfFlat => 1,
            Self::OneLarge => 2,
            Self::Linear => 3,
            Self::Uniform => 4,
        }
    }
}

/// Synthetic quadratic description.
///
/// `top` replaces the value used for the large eigenvalues of types 1 and 2
/// (default n), which lets the condition number vary independently of n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub spectrum: SpectrumType,
    pub n: usize,
    pub seed: u64,
    pub top: Option<f64>,
}

pub const TYPE4_FLOOR: f64 = 1e-6;

fn spectrum<T: Real>(spec: &SyntheticSpec, rng: &mut SegaRng) -> Result<Vec<T>> {
    let n = spec.n;
    let top = spec.top.unwrap_or(n as f64);
    if spec.top.is_some() && !matches!(spec.spectrum, SpectrumType::HalfFlat | SpectrumType::OneLarge) {
        return Err(SegaError::InvalidParameter("top eigenvalue override applies to types 1 and 2".into()));
    }
    if !(top > 0.0) {
        return Err(SegaError::InvalidParameter("top eigenvalue must be positive".into()));
    }
    let vals: Vec<f64> = match spec.spectrum {
        SpectrumType::HalfFlat => (0..n).map(|i| if i < n / 2 { 1.0 } else { top }).collect(),
        SpectrumType::OneLarge => (0..n).map(|i| if i + 1 < n { 1.0 } else { top }).collect(),
        SpectrumType::Linear => (1..=n).map(|i| i as f64).collect(),
        SpectrumType::Uniform => {
            let u = Uniform::new(0.0f64, 1.0).expect("valid range");
            (0..n).map(|_| u.sample(rng).max(TYPE4_FLOOR)).collect()
        }
    };
    Ok(vals.into_iter().map(T::lit).collect())
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal<T: Real>(n: usize, rng: &mut SegaRng) -> DMatrix<T> {
    let g = DMatrix::from_fn(n, n, |_, _| T::lit(StandardNormal.sample(rng)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < T::zero() {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// f(x) = ½xᵀMx − bᵀx with M = UΣUᵀ.
#[derive(Debug, Clone)]
pub struct QuadraticProblem<T: Real> {
    u: DMatrix<T>,
    sigma: DVector<T>,
    m: DMatrix<T>,
    b: DVector<T>,
    smooth: SmoothnessData<T>,
}

impl<T: Real> QuadraticProblem<T> {
    /// Builds the problem from an eigendecomposition; Σ must be positive.
    pub fn from_factors(u: DMatrix<T>, sigma: DVector<T>, b: DVector<T>) -> Result<Self> {
        let n = sigma.len();
        if u.shape() != (n, n) || b.len() != n {
            return Err(SegaError::DimensionMismatch("factors and b disagree in size".into()));
        }
        let mu = sigma.iter().fold(T::max_value().unwrap_or_else(T::one), |m, v| m.min(*v));
        let l = sigma.iter().fold(T::zero(), |m, v| m.max(*v));
        let m = &u * DMatrix::from_diagonal(&sigma) * u.transpose();
        let m = (&m + m.transpose()) * T::lit(0.5);
        let q = &u * DMatrix::from_diagonal(&sigma.map(|s| T::one() / s)) * u.transpose();
        let q = (&q + q.transpose()) * T::lit(0.5);
        let smooth = SmoothnessData::new(mu)?.with_l(l)?.with_m(m.clone())?.with_q(q)?;
        Ok(Self { u, sigma, m, b, smooth })
    }

    /// Builds the problem from a symmetric positive definite M.
    pub fn from_matrix(m: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        crate::linalg::ensure_symmetric(&m)?;
        let eig = nalgebra::SymmetricEigen::new((&m + m.transpose()) * T::lit(0.5));
        if eig.eigenvalues.iter().any(|v| !(*v > T::zero())) {
            let min = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.min(*v));
            return Err(SegaError::NotPositiveDefinite { min_eigenvalue: min.to_f64_lossy() });
        }
        Self::from_factors(eig.eigenvectors, eig.eigenvalues, b)
    }

    pub fn m(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn b(&self) -> &DVector<T> {
        &self.b
    }

    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn spectrum(&self) -> &DVector<T> {
        &self.sigma
    }

    pub fn trace(&self) -> T {
        self.sigma.iter().fold(T::zero(), |a, v| a + *v)
    }

    /// Unconstrained minimizer M⁻¹b.
    pub fn x_star(&self) -> DVector<T> {
        let c = self.u.tr_mul(&self.b).component_div(&self.sigma);
        &self.u * c
    }

    /// Minimizer over {‖x‖ ≤ r}: x(ν) = (M + νI)⁻¹b with ‖x(ν)‖ = r, found by bisection on ν.
    pub fn ball_solution(&self, radius: T) -> DVector<T> {
        let c = self.u.tr_mul(&self.b);
        let norm_at = |nu: T| c.iter().zip(self.sigma.iter()).fold(T::zero(), |a, (ci, si)| a + (*ci / (*si + nu)).powi(2)).sqrt();
        if norm_at(T::zero()) <= radius {
            return self.x_star();
        }
        let mut lo = T::zero();
        let mut hi = c.norm() / radius;
        for _ in 0..400 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm_at(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let nu = (lo + hi) * T::lit(0.5);
        let y = DVector::from_iterator(c.len(), c.iter().zip(self.sigma.iter()).map(|(ci, si)| *ci / (*si + nu)));
        &self.u * y
    }
}

impl<T: Real> Objective<T> for QuadraticProblem<T> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<T>) -> T {
        T::lit(0.5) * x.dot(&(&self.m * x)) - self.b.dot(x)
    }

    fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        &self.m * x - &self.b
    }

    fn sketched_gradient(&self, s: &Sketch<T>, x: &DVector<T>) -> DVector<T> {
        match s {
            Sketch::Coords(idx) => DVector::from_iterator(
                idx.len(),
                idx.iter().map(|&i| self.m.column(i).dot(x) - self.b[i]),
            ),
            Sketch::Dense(sm) => sm.tr_mul(&self.gradient(x)),
        }
    }

    fn smoothness(&self) -> &SmoothnessData<T> {
        &self.smooth
    }

    fn solve(&self, r: &Regularizer<T>) -> Result<Solution<T>> {
        let x = match r {
            Regularizer::Zero => self.x_star(),
            Regularizer::Ball { radius, center: None } => self.ball_solution(*radius),
            _ => return super::reference_solve(self, r),
        };
        check_dim(&x, self.dim())?;
        Ok(Solution { f: self.value(&x), grad: self.gradient(&x), x })
    }
}

/// Synthetic quadratic of the given spectrum type (1..=4).
pub fn make_synthetic<T: Real>(spectrum_type: u8, n: usize, seed: u64) -> Result<QuadraticProblem<T>> {
    make_synthetic_spec(&SyntheticSpec { spectrum: SpectrumType::from_index(spectrum_type)?, n, seed, top: None })
}

pub fn make_synthetic_spec<T: Real>(spec: &SyntheticSpec) -> Result<QuadraticProblem<T>> {
    if spec.n < 2 {
        return Err(SegaError::InvalidParameter("synthetic problems need n >= 2".into()));
    }
    let mut rng = rng::stream(spec.seed, rng::STREAM_PROBLEM);
    let sigma = DVector::from_vec(spectrum::<T>(spec, &mut rng)?);
    let u = random_orthogonal(spec.n, &mut rng);
    let b = DVector::from_fn(spec.n, |_, _| T::lit(StandardNormal.sample(&mut rng)));
    QuadraticProblem::from_factors(u, sigma, b)
}
