//! Sketch-and-project gradient learning and the unbiased estimate g.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SegaError};
use crate::linalg::{self, Metric};
use crate::scalar::Real;
use crate::sketch::{BoundSketch, Sketch, SketchDistribution, SketchSample};

/// Output of one estimator update.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorUpdate<T: Real> {
    pub h_next: DVector<T>,
    pub g: DVector<T>,
}

fn check_lambda<T: Real>(s: &Sketch<T>, lam: &DVector<T>, h: &DVector<T>, n: usize) -> Result<()> {
    if h.len() != n {
        return Err(SegaError::DimensionMismatch(format!("h has length {}, expected {n}", h.len())));
    }
    if lam.len() != s.width() {
        return Err(SegaError::DimensionMismatch(format!(
            "sketched gradient has length {}, sketch has {} columns",
            lam.len(),
            s.width()
        )));
    }
    if let Sketch::Dense(m) = s {
        if m.nrows() != n {
            return Err(SegaError::DimensionMismatch(format!("sketch has {} rows, expected {n}", m.nrows())));
        }
    }
    Ok(())
}

/// h⁺ = h − B⁻¹S(SᵀB⁻¹S)†(Sᵀh − λ).
pub fn sketch_and_project<T: Real>(h: &DVector<T>, s: &Sketch<T>, lam: &DVector<T>, b: &Metric<T>) -> Result<DVector<T>> {
    let n = b.dim();
    check_lambda(s, lam, h, n)?;
    if let Sketch::Coords(idx) = s {
        if b.is_diagonal() {
            let mut out = h.clone();
            for (c, &i) in idx.iter().enumerate() {
                out[i] = lam[c];
            }
            return Ok(out);
        }
    }
    let sm = s.materialize(n);
    let binv_s = b.apply_inv_mat(&sm);
    let inner = sm.tr_mul(&binv_s);
    let inner = (&inner + inner.transpose()) * T::lit(0.5);
    let resid = sm.tr_mul(h) - lam;
    let y = linalg::pseudo_inverse(&inner, linalg::rel_cutoff())? * resid;
    Ok(h - binv_s * y)
}

/// g = h + θ(h⁺ − h), i.e. (1 − θ)h + θh⁺.
pub fn unbiased_estimate<T: Real>(h: &DVector<T>, h_plus: &DVector<T>, theta: T) -> DVector<T> {
    let mut g = h_plus - h;
    g *= theta;
    g += h;
    g
}

/// B-orthogonal projector H = Aᵀ(ABAᵀ)†AB onto Range(Aᵀ).
#[derive(Debug, Clone)]
pub struct RangeProjector<T: Real> {
    h: DMatrix<T>,
    h_binv: DMatrix<T>,
    a: DMatrix<T>,
    metric: Metric<T>,
}

/// Builds the range projector for `a` (m×n) under metric `b`.
pub fn range_projector<T: Real>(a: &DMatrix<T>, b: &Metric<T>) -> Result<RangeProjector<T>> {
    if a.ncols() != b.dim() {
        return Err(SegaError::DimensionMismatch(format!(
            "A has {} columns, metric dimension is {}",
            a.ncols(),
            b.dim()
        )));
    }
    if a.iter().all(|v| *v == T::zero()) {
        return Err(SegaError::InvalidParameter("A must be nonzero".into()));
    }
    let bm = b.matrix();
    let aba = a * &bm * a.transpose();
    let aba = (&aba + aba.transpose()) * T::lit(0.5);
    let h = a.transpose() * linalg::pseudo_inverse(&aba, linalg::rel_cutoff())? * a * &bm;
    let h_binv = b.apply_inv_mat(&h.transpose()).transpose();
    let h_binv = (&h_binv + h_binv.transpose()) * T::lit(0.5);
    Ok(RangeProjector { h, h_binv, a: a.clone(), metric: b.clone() })
}

impl<T: Real> RangeProjector<T> {
    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }

    /// HB⁻¹ (symmetric).
    pub fn h_binv(&self) -> &DMatrix<T> {
        &self.h_binv
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn metric(&self) -> &Metric<T> {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn project(&self, v: &DVector<T>) -> DVector<T> {
        &self.h * v
    }

    /// ‖v − Hv‖, zero iff v ∈ Range(Aᵀ).
    pub fn range_residual(&self, v: &DVector<T>) -> T {
        (v - self.project(v)).norm()
    }

    /// w_i = e_iᵀHe_i.
    pub fn coordinate_weight(&self, i: usize) -> T {
        self.h[(i, i)]
    }

    /// θ = b_i (HB⁻¹)_ii / p_i for a coordinate sketch under diagonal B; w_i/p_i when B = I.
    pub fn coordinate_theta(&self, i: usize, p_i: T) -> T {
        self.metric.diag_entry(i) * self.h_binv[(i, i)] / p_i
    }

    /// Subspace Z = S(SᵀHB⁻¹S)†Sᵀ; zero when the sketch only sees the orthogonal complement.
    pub fn projector_z(&self, s: &Sketch<T>) -> Result<DMatrix<T>> {
        let n = self.dim();
        let sm = s.materialize(n);
        if sm.nrows() != n {
            return Err(SegaError::DimensionMismatch("sketch and projector dimensions differ".into()));
        }
        let inner = sm.tr_mul(&(&self.h_binv * &sm));
        let inner = (&inner + inner.transpose()) * T::lit(0.5);
        let floor = self.skip_floor(&sm);
        let z = &sm * linalg::pseudo_inverse_with_floor(&inner, linalg::rel_cutoff(), floor)? * sm.transpose();
        Ok((&z + z.transpose()) * T::lit(0.5))
    }

    /// θ used by the subspace estimator: single-coordinate sketches are rescaled by
    /// b_i (HB⁻¹)_ii, other sketches keep the sample's θ.
    pub fn sample_theta(&self, sample: &SketchSample<T>) -> T {
        match &sample.sketch {
            Sketch::Coords(idx) if idx.len() == 1 => {
                let i = idx[0];
                self.metric.diag_entry(i) * self.h_binv[(i, i)] * sample.theta
            }
            _ => sample.theta,
        }
    }

    /// (E[Z], E[θZ], E[θ²Z]) of the subspace estimator over a finite support.
    pub fn moments(&self, bound: &BoundSketch<T>) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
        let n = self.dim();
        let (mut ez, mut etz, mut c) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n));
        for (p, sample) in bound.support()? {
            let z = self.projector_z(&sample.sketch)?;
            let theta = self.sample_theta(&sample);
            ez += &z * p;
            etz += &z * (p * theta);
            c += z * (p * theta * theta);
        }
        Ok((ez, etz, c))
    }

    fn skip_floor(&self, sm: &DMatrix<T>) -> T {
        let scale = self.h_binv.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        linalg::rel_cutoff::<T>() * T::lit(1e3) * scale * sm.norm_squared()
    }
}

/// h⁺ = Hh − HB⁻¹S(SᵀHB⁻¹S)†(SᵀHh − λ).
///
/// Equals h − HB⁻¹S(SᵀHB⁻¹S)†(Sᵀh − λ) for h ∈ Range(Aᵀ). When SᵀHB⁻¹S
/// vanishes (the sketch only sees directions orthogonal to the range) h is
/// returned unchanged.
pub fn subspace_sketch_and_project<T: Real>(
    h: &DVector<T>,
    s: &Sketch<T>,
    lam: &DVector<T>,
    p: &RangeProjector<T>,
) -> Result<DVector<T>> {
    Ok(subspace_update(h, s, lam, T::one(), p)?.h_next)
}

/// g = Hh + θ(h⁺ − Hh), which lies in Range(Aᵀ).
pub fn subspace_unbiased_estimate<T: Real>(
    h: &DVector<T>,
    s: &Sketch<T>,
    lam: &DVector<T>,
    theta: T,
    p: &RangeProjector<T>,
) -> Result<DVector<T>> {
    Ok(subspace_update(h, s, lam, theta, p)?.g)
}

/// Both h⁺ and g of the subspace estimator.
pub fn subspace_update<T: Real>(
    h: &DVector<T>,
    s: &Sketch<T>,
    lam: &DVector<T>,
    theta: T,
    p: &RangeProjector<T>,
) -> Result<EstimatorUpdate<T>> {
    let n = p.dim();
    check_lambda(s, lam, h, n)?;
    let sm = s.materialize(n);
    let hb_s = p.h_binv() * &sm;
    let inner = sm.tr_mul(&hb_s);
    let inner = (&inner + inner.transpose()) * T::lit(0.5);
    let floor = p.skip_floor(&sm);
    if inner.iter().all(|v| v.abs() <= floor) {
        return Ok(EstimatorUpdate { h_next: h.clone(), g: h.clone() });
    }
    let hh = p.project(h);
    let resid = sm.tr_mul(&hh) - lam;
    let y = linalg::pseudo_inverse_with_floor(&inner, linalg::rel_cutoff(), floor)? * resid;
    let h_next = &hh - hb_s * y;
    let g = unbiased_estimate(&hh, &h_next, theta);
    Ok(EstimatorUpdate { h_next, g })
}

/// Metric, fixed-vector sketch distribution and rank for subspace SEGA.
#[derive(Debug, Clone)]
pub struct SubspaceSetup<T: Real> {
    pub metric: Metric<T>,
    pub distribution: SketchDistribution<T>,
    pub rank: usize,
}

/// Builds B with B-orthogonal rows of A and sketches ξ_i = Ba_i/‖a_i‖_B, uniform over d rows.
///
/// Linearly dependent rows are dropped greedily. If the kept rows are already
/// orthogonal, B = I.
pub fn optimal_subspace_setup<T: Real>(a: &DMatrix<T>) -> Result<SubspaceSetup<T>> {
    let n = a.ncols();
    let max_norm = a.row_iter().fold(T::zero(), |m, r| m.max(r.norm()));
    if !(max_norm > T::zero()) {
        return Err(SegaError::InvalidParameter("A must be nonzero".into()));
    }
    let tol = T::lit(1e-10).max(T::eps() * T::lit(1e3)) * max_norm;
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut kept: Vec<DVector<T>> = Vec::new();
    for row in a.row_iter() {
        let r: DVector<T> = row.transpose();
        let mut q = r.clone();
        for u in &basis {
            let c = u.dot(&q);
            q -= u * c;
        }
        let qn = q.norm();
        if qn > tol {
            basis.push(q / qn);
            kept.push(r);
        }
    }
    let d = kept.len();
    let ad = DMatrix::from_rows(&kept.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    let gram = &ad * ad.transpose();
    let gscale = gram.diagonal().iter().fold(T::zero(), |m, v| m.max(*v));
    let orthogonal = (0..d).all(|i| (0..d).all(|j| i == j || gram[(i, j)].abs() <= tol * gscale.sqrt()));
    let metric = if orthogonal {
        Metric::identity(n)
    } else {
        let gram_inv = linalg::pseudo_inverse(&((&gram + gram.transpose()) * T::lit(0.5)), linalg::rel_cutoff())?;
        let pinv = ad.transpose() * gram_inv;
        let b = pinv.clone() * pinv.transpose() + DMatrix::identity(n, n) - &pinv * &ad;
        Metric::dense((&b + b.transpose()) * T::lit(0.5))?
    };
    let vectors: Vec<DVector<T>> = kept
        .iter()
        .map(|r| {
            let br = metric.apply(r);
            let nb = r.dot(&br).sqrt();
            br / nb
        })
        .collect();
    let p = DVector::from_element(d, T::one() / T::from_usize_lossy(d));
    let distribution = SketchDistribution::fixed_vectors(vectors, p)?;
    Ok(SubspaceSetup { metric, distribution, rank: d })
}
