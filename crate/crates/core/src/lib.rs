//! Sketched gradient methods for composite convex optimization.
//!
//! The SEGA family keeps a running gradient estimate `h` that is refined by
//! sketch-and-project against a sketched gradient oracle, then turned into an
//! unbiased estimate `g` that drives a proximal step. The crate provides the
//! estimator, the solvers (SEGA, accelerated SEGA, subspace SEGA), baselines,
//! problem generators, and a config-driven experiment harness.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `f64`
//! aliases at the crate root cover the common case.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod prox;
pub mod rng;
pub mod scalar;
pub mod sketch;
pub mod solvers;
pub mod verify;

pub use error::{Result, SegaError};
pub use linalg::{Metric, SmoothnessData};
pub use problems::Objective;
pub use prox::Regularizer;
pub use scalar::Real;
pub use sketch::{Sketch, SketchDistribution, SketchSample};

/// Dense column vector.
pub type Vector<T> = nalgebra::DVector<T>;
/// Dense matrix.
pub type Matrix<T> = nalgebra::DMatrix<T>;

pub type VectorF64 = Vector<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type MetricF64 = Metric<f64>;
pub type SketchDistributionF64 = SketchDistribution<f64>;
pub type RegularizerF64 = Regularizer<f64>;
pub type QuadraticF64 = problems::QuadraticProblem<f64>;
