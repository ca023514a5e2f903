use nalgebra::DVector;

use crate::scalar::Real;
use crate::sketch::Sketch;

/// ε = 1e-6 (1 + ‖x‖).
pub fn default_fd_epsilon<T: Real>(x: &DVector<T>) -> T {
    T::lit(1e-6) * (T::one() + x.norm())
}

/// Forward differences (f(x + εs_j) − f(x))/ε for each column s_j of S.
///
/// Adds b + 1 to `calls`.
pub fn zeroth_order_sketch<T: Real>(
    f: impl Fn(&DVector<T>) -> T,
    x: &DVector<T>,
    s: &Sketch<T>,
    eps: T,
    calls: &mut u64,
) -> DVector<T> {
    let n = x.len();
    let b = s.width();
    let f0 = f(x);
    let mut out = DVector::zeros(b);
    match s {
        Sketch::Coords(idx) => {
            let mut xp = x.clone();
            for (c, &i) in idx.iter().enumerate() {
                let xi = xp[i];
                xp[i] = xi + eps;
                out[c] = (f(&xp) - f0) / eps;
                xp[i] = xi;
            }
        }
        Sketch::Dense(sm) => {
            for c in 0..b {
                let xp = x + sm.column(c) * eps;
                out[c] = (f(&xp) - f0) / eps;
            }
        }
    }
    debug_assert_eq!(n, x.len());
    *calls += b as u64 + 1;
    out
}
