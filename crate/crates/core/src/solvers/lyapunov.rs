//! Lyapunov functions whose expectations contract geometrically.

use nalgebra::DVector;

use super::stepsize::AsegaParams;
use crate::linalg::Metric;
use crate::scalar::Real;

/// Φ = ‖x − x*‖²_B + σα‖h − ∇f(x*)‖²_B.
pub fn lyapunov_general<T: Real>(
    x: &DVector<T>,
    h: &DVector<T>,
    x_star: &DVector<T>,
    grad_star: &DVector<T>,
    b: &Metric<T>,
    sigma: T,
    alpha: T,
) -> T {
    b.norm_sq(&(x - x_star)) + sigma * alpha * b.norm_sq(&(h - grad_star))
}

/// Ψ = f(x) − f* + σ‖h‖²_{P̂⁻¹}.
pub fn lyapunov_coordinate<T: Real>(fx: T, fstar: T, h: &DVector<T>, p: &DVector<T>, sigma: T) -> T {
    let weighted = h.iter().zip(p.iter()).fold(T::zero(), |acc, (hi, pi)| acc + *hi * *hi / *pi);
    fx - fstar + sigma * weighted
}

/// Υ = (2/75)TD⁻²/τ² (f(y) − f*) + (1 + βμ)/2 ‖z − x*‖² + σ‖h‖²_{P̂⁻²}.
pub fn lyapunov_accelerated<T: Real>(
    fy: T,
    fstar: T,
    z: &DVector<T>,
    x_star: &DVector<T>,
    h: &DVector<T>,
    p: &DVector<T>,
    params: &AsegaParams<T>,
) -> T {
    let lead = T::lit(2.0 / 75.0) / (params.td * params.td * params.tau * params.tau);
    let weighted = h.iter().zip(p.iter()).fold(T::zero(), |acc, (hi, pi)| acc + *hi * *hi / (*pi * *pi));
    lead * (fy - fstar)
        + (T::one() + params.beta * params.mu) * T::lit(0.5) * (z - x_star).norm_squared()
        + params.sigma * weighted
}

/// Φ_G = ‖x − x*‖²_G + σα‖h − ∇f(x*)‖²_{diag(1/(g_i p_i))}.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_metric_g<T: Real>(
    x: &DVector<T>,
    h: &DVector<T>,
    x_star: &DVector<T>,
    grad_star: &DVector<T>,
    g: &DVector<T>,
    p: &DVector<T>,
    sigma: T,
    alpha: T,
) -> T {
    let dx = x - x_star;
    let dh = h - grad_star;
    let mut a = T::zero();
    let mut b = T::zero();
    for i in 0..x.len() {
        a += g[i] * dx[i] * dx[i];
        b += dh[i] * dh[i] / (g[i] * p[i]);
    }
    a + sigma * alpha * b
}
