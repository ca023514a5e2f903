//! Proximal operators in the B-weighted geometry.

use nalgebra::DVector;

use crate::error::{Result, SegaError};
use crate::linalg::Metric;
use crate::scalar::Real;

/// Closed convex regularizer R.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer<T: Real> {
    Zero,
    /// Indicator of {y : ‖y − center‖₂ ≤ radius}; `None` center means the origin.
    Ball { radius: T, center: Option<DVector<T>> },
    L1 { lambda: T },
    Box { lo: DVector<T>, hi: DVector<T> },
}

impl<T: Real> Regularizer<T> {
    pub fn unit_ball() -> Self {
        Regularizer::Ball { radius: T::one(), center: None }
    }

    pub fn ball(radius: T) -> Result<Self> {
        let r = Regularizer::Ball { radius, center: None };
        r.validate()?;
        Ok(r)
    }

    pub fn l1(lambda: T) -> Result<Self> {
        let r = Regularizer::L1 { lambda };
        r.validate()?;
        Ok(r)
    }

    pub fn boxed(lo: DVector<T>, hi: DVector<T>) -> Result<Self> {
        let r = Regularizer::Box { lo, hi };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::Ball { radius, .. } if !(*radius > T::zero()) => {
                Err(SegaError::InvalidParameter(format!("ball radius must be positive, got {radius}")))
            }
            Regularizer::L1 { lambda } if !(*lambda >= T::zero()) => {
                Err(SegaError::InvalidParameter(format!("l1 weight must be nonnegative, got {lambda}")))
            }
            Regularizer::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(SegaError::DimensionMismatch("box bounds differ in length".into()));
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                    return Err(SegaError::InvalidParameter("box requires lo <= hi".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero)
    }

    /// True when R is a sum of one-dimensional terms.
    pub fn is_separable(&self) -> bool {
        !matches!(self, Regularizer::Ball { .. })
    }

    /// R(x), with `+∞` outside an indicator's domain (up to a small tolerance).
    pub fn value(&self, x: &DVector<T>) -> T {
        let slack = T::lit(1e-9);
        match self {
            Regularizer::Zero => T::zero(),
            Regularizer::Ball { radius, center } => {
                let d = match center {
                    Some(c) => (x - c).norm(),
                    None => x.norm(),
                };
                if d <= *radius * (T::one() + slack) {
                    T::zero()
                } else {
                    T::max_value().unwrap_or_else(T::one)
                }
            }
            Regularizer::L1 { lambda } => *lambda * x.lp_norm(1),
            Regularizer::Box { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *v >= *l - slack && *v <= *h + slack);
                if inside {
                    T::zero()
                } else {
                    T::max_value().unwrap_or_else(T::one)
                }
            }
        }
    }

    /// R(x) without the indicator terms: λ‖x‖₁ for l1, zero otherwise.
    pub fn penalty(&self, x: &DVector<T>) -> T {
        match self {
            Regularizer::L1 { lambda } => *lambda * x.lp_norm(1),
            _ => T::zero(),
        }
    }

    /// One-dimensional prox of a separable R at coordinate i with weight b_i.
    pub fn prox_coordinate(&self, i: usize, b_i: T, alpha: T, v: T) -> Result<T> {
        match self {
            Regularizer::Zero => Ok(v),
            Regularizer::L1 { lambda } => Ok(soft_threshold(v, alpha * *lambda / b_i)),
            Regularizer::Box { lo, hi } => Ok(v.max(lo[i]).min(hi[i])),
            Regularizer::Ball { .. } => {
                Err(SegaError::Unsupported("the ball indicator is not separable".into()))
            }
        }
    }
}

fn soft_threshold<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// argmin_y R(y) + (1/2α)‖y − x‖²_B.
pub fn prox<T: Real>(r: &Regularizer<T>, b: &Metric<T>, alpha: T, x: &DVector<T>) -> Result<DVector<T>> {
    if !(alpha > T::zero()) {
        return Err(SegaError::InvalidParameter(format!("prox stepsize must be positive, got {alpha}")));
    }
    if x.len() != b.dim() {
        return Err(SegaError::DimensionMismatch(format!("x has length {}, metric {}", x.len(), b.dim())));
    }
    match r {
        Regularizer::Zero => Ok(x.clone()),
        Regularizer::L1 { .. } | Regularizer::Box { .. } => {
            if let Regularizer::Box { lo, .. } = r {
                if lo.len() != x.len() {
                    return Err(SegaError::DimensionMismatch("box bounds and x differ in length".into()));
                }
            }
            if !b.is_diagonal() {
                return Err(SegaError::Unsupported("l1 and box prox need a diagonal metric".into()));
            }
            let mut out = x.clone();
            for i in 0..x.len() {
                out[i] = r.prox_coordinate(i, b.diag_entry(i), alpha, x[i])?;
            }
            Ok(out)
        }
        Regularizer::Ball { radius, center } => {
            let shifted = match center {
                Some(c) => x - c,
                None => x.clone(),
            };
            let y = if b.scaled_identity().is_some() {
                radial(&shifted, *radius)
            } else if b.is_diagonal() {
                let d = DVector::from_fn(x.len(), |i, _| b.diag_entry(i));
                weighted_ball(&shifted, &d, *radius)
            } else {
                return Err(SegaError::Unsupported("ball prox needs a diagonal metric".into()));
            };
            Ok(match center {
                Some(c) => y + c,
                None => y,
            })
        }
    }
}

fn radial<T: Real>(x: &DVector<T>, radius: T) -> DVector<T> {
    let nrm = x.norm();
    if nrm <= radius {
        x.clone()
    } else {
        x * (radius / nrm)
    }
}

/// Projection onto the Euclidean ball in the ‖·‖_diag(d) geometry.
///
/// KKT gives y_i = d_i x_i / (d_i + ν); ν ≥ 0 is found by bisection on ‖y(ν)‖ = r.
fn weighted_ball<T: Real>(x: &DVector<T>, d: &DVector<T>, radius: T) -> DVector<T> {
    if x.norm() <= radius {
        return x.clone();
    }
    let y_of = |nu: T| DVector::from_fn(x.len(), |i, _| d[i] * x[i] / (d[i] + nu));
    let mut lo = T::zero();
    let dmax = d.iter().fold(T::zero(), |m, v| m.max(*v));
    let mut hi = dmax * (x.norm() / radius);
    while y_of(hi).norm() > radius {
        hi *= T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if y_of(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::lit(1e-12) * (T::one() + hi) {
            break;
        }
    }
    let y = y_of(hi);
    radial(&y, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn examples() {
        let id = Metric::<f64>::identity(2);
        let x = dvector![3.0, 4.0];
        assert_eq!(prox(&Regularizer::Zero, &id, 0.1, &x).unwrap(), x);
        assert_relative_eq!(prox(&Regularizer::unit_ball(), &id, 0.1, &x).unwrap(), dvector![0.6, 0.8], epsilon = 1e-15);
        let l1 = Regularizer::l1(2.0).unwrap();
        assert_eq!(prox(&l1, &id, 0.5, &dvector![2.0, -0.5]).unwrap(), dvector![1.0, 0.0]);
    }

    #[test]
    fn box_clamps() {
        let r = Regularizer::boxed(dvector![0.0, -1.0], dvector![1.0, 1.0]).unwrap();
        let b = Metric::diagonal(dvector![3.0, 0.5]).unwrap();
        assert_eq!(prox(&r, &b, 1.0, &dvector![2.0, -3.0]).unwrap(), dvector![1.0, -1.0]);
    }

    #[test]
    fn invalid_regularizers() {
        assert!(Regularizer::ball(0.0f64).is_err());
        assert!(Regularizer::l1(-1.0f64).is_err());
        assert!(Regularizer::boxed(dvector![1.0], dvector![0.0]).is_err());
    }

    #[test]
    fn weighted_ball_is_feasible_and_optimal() {
        let b = Metric::diagonal(dvector![1.0, 4.0, 0.5]).unwrap();
        let x = dvector![2.0, -1.0, 3.0];
        let y = prox(&Regularizer::unit_ball(), &b, 1.0, &x).unwrap();
        assert_relative_eq!(y.norm(), 1.0, epsilon = 1e-10);
        let g = b.apply(&(&x - &y));
        let nu = g.dot(&y);
        assert!(nu > 0.0);
        assert_relative_eq!(g, &y * nu, epsilon = 1e-8);
    }

    #[test]
    fn dense_metric_unsupported() {
        let b = Metric::dense(nalgebra::dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap();
        assert!(matches!(prox(&Regularizer::l1(1.0).unwrap(), &b, 1.0, &dvector![1.0, 1.0]), Err(SegaError::Unsupported(_))));
        assert_eq!(prox(&Regularizer::Zero, &b, 1.0, &dvector![1.0, 1.0]).unwrap(), dvector![1.0, 1.0]);
    }
}
