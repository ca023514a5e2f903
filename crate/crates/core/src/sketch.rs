//! Sketch distributions, sampling, the projector Z and its moments.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SegaError};
use crate::linalg::{self, Metric};
use crate::scalar::Real;

/// A drawn sketch matrix S (n×b).
#[derive(Debug, Clone, PartialEq)]
pub enum Sketch<T: Real> {
    /// Columns are the unit vectors e_i for the listed indices.
    Coords(Vec<usize>),
    /// Explicit n×b matrix.
    Dense(DMatrix<T>),
}

impl<T: Real> Sketch<T> {
    pub fn coordinate(i: usize) -> Self {
        Sketch::Coords(vec![i])
    }

    /// Number of columns b.
    pub fn width(&self) -> usize {
        match self {
            Sketch::Coords(idx) => idx.len(),
            Sketch::Dense(s) => s.ncols(),
        }
    }

    pub fn materialize(&self, n: usize) -> DMatrix<T> {
        match self {
            Sketch::Coords(idx) => {
                let mut s = DMatrix::zeros(n, idx.len());
                for (c, &i) in idx.iter().enumerate() {
                    s[(i, c)] = T::one();
                }
                s
            }
            Sketch::Dense(s) => s.clone(),
        }
    }

    /// Sᵀv.
    pub fn transpose_mul(&self, v: &DVector<T>) -> DVector<T> {
        match self {
            Sketch::Coords(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])),
            Sketch::Dense(s) => s.tr_mul(v),
        }
    }

    /// Sy for y of length b.
    pub fn mul(&self, y: &DVector<T>, n: usize) -> DVector<T> {
        match self {
            Sketch::Coords(idx) => {
                let mut out = DVector::zeros(n);
                for (c, &i) in idx.iter().enumerate() {
                    out[i] += y[c];
                }
                out
            }
            Sketch::Dense(s) => s * y,
        }
    }
}

/// A draw from a [`SketchDistribution`] together with its bias-correcting θ.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSample<T: Real> {
    pub sketch: Sketch<T>,
    pub theta: T,
    /// Index of the atom in a finite support, if any.
    pub atom: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchKind<T: Real> {
    Coordinate { p: DVector<T> },
    Block { support: Vec<Vec<usize>>, probs: Vec<T> },
    Gaussian { b: usize },
    FixedVectors { vectors: Vec<DVector<T>>, p: DVector<T> },
}

/// Distribution D over sketch matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchDistribution<T: Real> {
    n: usize,
    kind: SketchKind<T>,
}

fn prob_tol<T: Real>(len: usize) -> T {
    T::lit(1e-12).max(T::eps() * T::from_usize_lossy(len.max(1)) * T::lit(4.0))
}

fn validate_probs<T: Real>(p: &[T]) -> Result<()> {
    if p.is_empty() {
        return Err(SegaError::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite_value()) {
        return Err(SegaError::InvalidProbabilities(format!(
            "entry {i} is {v}; the sampling must be proper (all probabilities positive)"
        )));
    }
    let sum = p.iter().fold(T::zero(), |a, &b| a + b);
    if (sum - T::one()).abs() > prob_tol::<T>(p.len()) {
        return Err(SegaError::InvalidProbabilities(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

fn normalized<T: Real>(w: impl Iterator<Item = T>) -> Result<DVector<T>> {
    let w: Vec<T> = w.collect();
    let total = w.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) {
        return Err(SegaError::InvalidProbabilities("weights sum to zero".into()));
    }
    Ok(DVector::from_iterator(w.len(), w.into_iter().map(|v| v / total)))
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

const MAX_ENUMERATED_SUPPORT: usize = 200_000;

impl<T: Real> SketchDistribution<T> {
    pub fn coordinate(p: DVector<T>) -> Result<Self> {
        validate_probs(p.as_slice())?;
        Ok(Self { n: p.len(), kind: SketchKind::Coordinate { p } })
    }

    pub fn uniform_coordinate(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SegaError::InvalidParameter("dimension must be positive".into()));
        }
        let p = DVector::from_element(n, T::one() / T::from_usize_lossy(n));
        Ok(Self { n, kind: SketchKind::Coordinate { p } })
    }

    /// Serial sampling with p_i ∝ M_ii^power (power 1 or ½ are the usual choices).
    pub fn importance(m: &DMatrix<T>, power: T) -> Result<Self> {
        if m.diagonal().iter().any(|v| !(*v > T::zero())) {
            return Err(SegaError::InvalidParameter("importance sampling needs a positive diagonal".into()));
        }
        let p = normalized(m.diagonal().iter().map(|&v| v.powf(power)))?;
        Self::coordinate(p)
    }

    pub fn block(n: usize, support: Vec<Vec<usize>>, probs: Vec<T>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(SegaError::DimensionMismatch(format!(
                "{} support sets but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        validate_probs(&probs)?;
        let mut covered = vec![false; n];
        for set in &support {
            if set.is_empty() {
                return Err(SegaError::InvalidParameter("empty support set".into()));
            }
            let mut seen = set.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != set.len() {
                return Err(SegaError::InvalidParameter(format!("repeated index in support set {set:?}")));
            }
            for &i in set {
                if i >= n {
                    return Err(SegaError::DimensionMismatch(format!("index {i} out of range for n={n}")));
                }
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(SegaError::InvalidProbabilities(format!(
                "coordinate {i} is never sampled; the sampling must be proper"
            )));
        }
        Ok(Self { n, kind: SketchKind::Block { support, probs } })
    }

    /// Uniform distribution over all subsets of size τ.
    pub fn tau_nice(n: usize, tau: usize) -> Result<Self> {
        if tau == 0 || tau > n {
            return Err(SegaError::InvalidParameter(format!("tau={tau} must lie in 1..={n}")));
        }
        let count = binomial(n, tau).filter(|&c| c <= MAX_ENUMERATED_SUPPORT).ok_or_else(|| {
            SegaError::Unsupported(format!("tau-nice support C({n},{tau}) too large to enumerate"))
        })?;
        let mut support = Vec::with_capacity(count);
        let mut cur: Vec<usize> = (0..tau).collect();
        loop {
            support.push(cur.clone());
            let mut k = tau;
            while k > 0 && cur[k - 1] == n - tau + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            cur[k - 1] += 1;
            for j in k..tau {
                cur[j] = cur[j - 1] + 1;
            }
        }
        let p = T::one() / T::from_usize_lossy(support.len());
        let probs = vec![p; support.len()];
        Ok(Self { n, kind: SketchKind::Block { support, probs } })
    }

    pub fn gaussian(n: usize, b: usize) -> Result<Self> {
        if n == 0 || b == 0 {
            return Err(SegaError::InvalidParameter("gaussian sketch needs n > 0 and b > 0".into()));
        }
        Ok(Self { n, kind: SketchKind::Gaussian { b } })
    }

    pub fn fixed_vectors(vectors: Vec<DVector<T>>, p: DVector<T>) -> Result<Self> {
        if vectors.len() != p.len() {
            return Err(SegaError::DimensionMismatch(format!(
                "{} vectors but {} probabilities",
                vectors.len(),
                p.len()
            )));
        }
        validate_probs(p.as_slice())?;
        let n = vectors.first().map(|v| v.len()).unwrap_or(0);
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(SegaError::DimensionMismatch(format!("vector {i} has length {}", v.len())));
            }
            if v.iter().all(|x| *x == T::zero()) {
                return Err(SegaError::InvalidParameter(format!("vector {i} is zero")));
            }
        }
        Ok(Self { n, kind: SketchKind::FixedVectors { vectors, p } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &SketchKind<T> {
        &self.kind
    }

    pub fn has_finite_support(&self) -> bool {
        !matches!(self.kind, SketchKind::Gaussian { .. })
    }

    /// Atoms of a finite support with their probabilities.
    pub fn atoms(&self) -> Result<Vec<(T, Sketch<T>)>> {
        Ok(match &self.kind {
            SketchKind::Coordinate { p } => p.iter().enumerate().map(|(i, &pi)| (pi, Sketch::coordinate(i))).collect(),
            SketchKind::Block { support, probs } => probs
                .iter()
                .zip(support)
                .map(|(&pi, s)| (pi, Sketch::Coords(s.clone())))
                .collect(),
            SketchKind::FixedVectors { vectors, p } => p
                .iter()
                .zip(vectors)
                .map(|(&pi, v)| (pi, Sketch::Dense(DMatrix::from_column_slice(v.len(), 1, v.as_slice()))))
                .collect(),
            SketchKind::Gaussian { .. } => {
                return Err(SegaError::Unsupported("gaussian sketches have no finite support".into()))
            }
        })
    }

    /// p_i = P(i ∈ S) for coordinate and block kinds.
    pub fn probability_vector(&self) -> Result<DVector<T>> {
        Ok(self.probability_matrix()?.diagonal())
    }

    /// P_ij = P({i, j} ⊆ S).
    pub fn probability_matrix(&self) -> Result<DMatrix<T>> {
        match &self.kind {
            SketchKind::Coordinate { p } => Ok(DMatrix::from_diagonal(p)),
            SketchKind::Block { support, probs } => {
                let mut pm = DMatrix::zeros(self.n, self.n);
                for (set, &ps) in support.iter().zip(probs) {
                    for &i in set {
                        for &j in set {
                            pm[(i, j)] += ps;
                        }
                    }
                }
                Ok(pm)
            }
            _ => Err(SegaError::Unsupported(
                "probability matrix is defined for coordinate and block samplings only".into(),
            )),
        }
    }

    /// Precomputes θ for every atom under metric `b`.
    pub fn bind(&self, b: &Metric<T>) -> Result<BoundSketch<T>> {
        if b.dim() != self.n {
            return Err(SegaError::DimensionMismatch(format!(
                "distribution dimension {} vs metric dimension {}",
                self.n,
                b.dim()
            )));
        }
        let thetas = match &self.kind {
            SketchKind::Gaussian { b: cols } => {
                gaussian_theta(self.n, *cols, b)?;
                Vec::new()
            }
            _ => finite_thetas(self, b)?,
        };
        let weights: Option<WeightedIndex<f64>> = match &self.kind {
            SketchKind::Gaussian { .. } => None,
            _ => {
                let w: Vec<f64> = self.atoms()?.iter().map(|(p, _)| p.to_f64_lossy()).collect();
                Some(WeightedIndex::new(w).map_err(|e| SegaError::InvalidProbabilities(e.to_string()))?)
            }
        };
        Ok(BoundSketch { dist: self.clone(), metric: b.clone(), thetas, weights })
    }
}

fn gaussian_theta<T: Real>(n: usize, cols: usize, b: &Metric<T>) -> Result<T> {
    if b.scaled_identity().is_none() {
        return Err(SegaError::Unsupported(
            "gaussian sketches need B proportional to the identity; no valid theta is known otherwise".into(),
        ));
    }
    Ok(T::from_usize_lossy(n) / T::from_usize_lossy(cols.min(n)))
}

/// θ per atom such that Σ p_s θ_s Z_s = B.
fn finite_thetas<T: Real>(dist: &SketchDistribution<T>, b: &Metric<T>) -> Result<Vec<T>> {
    match &dist.kind {
        SketchKind::Coordinate { p } if b.is_diagonal() => Ok(p.iter().map(|&pi| T::one() / pi).collect()),
        SketchKind::FixedVectors { p, .. } => Ok(p.iter().map(|&pi| T::one() / pi).collect()),
        _ => solve_thetas(dist, b),
    }
}

fn solve_thetas<T: Real>(dist: &SketchDistribution<T>, b: &Metric<T>) -> Result<Vec<T>> {
    let n = dist.n;
    let atoms = dist.atoms()?;
    let bm = b.matrix();
    let zs: Vec<DMatrix<T>> = atoms.iter().map(|(_, s)| projector_z(s, b, n)).collect::<Result<_>>()?;
    let mut ez = DMatrix::zeros(n, n);
    for ((p, _), z) in atoms.iter().zip(&zs) {
        ez += z * *p;
    }
    let tol = T::lit(1e-9).max(T::eps() * T::lit(1e4)) * bm.norm();
    let ez_tr = ez.trace();
    if ez_tr > T::zero() {
        let c = bm.trace() / ez_tr;
        if (&ez * c - &bm).norm() <= tol {
            return Ok(vec![c; atoms.len()]);
        }
    }
    let k = atoms.len();
    let cols: Vec<DVector<T>> = atoms
        .iter()
        .zip(&zs)
        .map(|((p, _), z)| DVector::from_column_slice(z.as_slice()) * *p)
        .collect();
    let a = DMatrix::from_columns(&cols);
    let rhs = DVector::from_column_slice(bm.as_slice());
    let gram = a.tr_mul(&a);
    if k > 2000 {
        return Err(SegaError::Unsupported("support too large for a general theta solve".into()));
    }
    let theta = linalg::pseudo_inverse(&gram, linalg::rel_cutoff())? * a.tr_mul(&rhs);
    let residual = (&a * &theta - &rhs).norm();
    if residual > tol || theta.iter().any(|t| !(*t > T::zero())) {
        return Err(SegaError::Unsupported(
            "no positive bias-correcting theta satisfies E[theta Z] = B for this sampling and metric".into(),
        ));
    }
    Ok(theta.iter().copied().collect())
}

/// Z = S(SᵀB⁻¹S)†Sᵀ.
pub fn projector_z<T: Real>(s: &Sketch<T>, b: &Metric<T>, n: usize) -> Result<DMatrix<T>> {
    if let Sketch::Coords(idx) = s {
        if b.is_diagonal() {
            let mut z = DMatrix::zeros(n, n);
            for &i in idx {
                z[(i, i)] = b.diag_entry(i);
            }
            return Ok(z);
        }
    }
    let sm = s.materialize(n);
    if sm.nrows() != n || b.dim() != n {
        return Err(SegaError::DimensionMismatch("sketch and metric dimensions differ".into()));
    }
    let inner = sm.tr_mul(&b.apply_inv_mat(&sm));
    let inner = (&inner + inner.transpose()) * T::lit(0.5);
    let pinv = linalg::pseudo_inverse(&inner, linalg::rel_cutoff())?;
    let z = &sm * pinv * sm.transpose();
    Ok((&z + z.transpose()) * T::lit(0.5))
}

/// θ for sketch `s` drawn from `dist` under metric `b`.
pub fn theta_for<T: Real>(dist: &SketchDistribution<T>, s: &Sketch<T>, b: &Metric<T>) -> Result<T> {
    if let SketchKind::Gaussian { b: cols } = dist.kind {
        return gaussian_theta(dist.n, cols, b);
    }
    let atom = dist
        .atoms()?
        .iter()
        .position(|(_, a)| a == s)
        .ok_or_else(|| SegaError::InvalidParameter("sketch is not in the support".into()))?;
    Ok(finite_thetas(dist, b)?[atom])
}

/// A distribution bound to a metric, ready for sampling.
#[derive(Debug, Clone)]
pub struct BoundSketch<T: Real> {
    dist: SketchDistribution<T>,
    metric: Metric<T>,
    thetas: Vec<T>,
    weights: Option<WeightedIndex<f64>>,
}

impl<T: Real> BoundSketch<T> {
    pub fn distribution(&self) -> &SketchDistribution<T> {
        &self.dist
    }

    pub fn metric(&self) -> &Metric<T> {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.dist.n
    }

    /// θ of atom `i` (finite supports only).
    pub fn theta(&self, atom: usize) -> T {
        self.thetas[atom]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SketchSample<T> {
        match &self.dist.kind {
            SketchKind::Gaussian { b } => {
                let n = self.dist.n;
                let s = DMatrix::from_fn(n, *b, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
                let theta = T::from_usize_lossy(n) / T::from_usize_lossy((*b).min(n));
                SketchSample { sketch: Sketch::Dense(s), theta, atom: None }
            }
            kind => {
                let i = self.weights.as_ref().expect("finite support has weights").sample(rng);
                let sketch = match kind {
                    SketchKind::Coordinate { .. } => Sketch::coordinate(i),
                    SketchKind::Block { support, .. } => Sketch::Coords(support[i].clone()),
                    SketchKind::FixedVectors { vectors, .. } => {
                        Sketch::Dense(DMatrix::from_column_slice(self.dist.n, 1, vectors[i].as_slice()))
                    }
                    SketchKind::Gaussian { .. } => unreachable!(),
                };
                SketchSample { sketch, theta: self.thetas[i], atom: Some(i) }
            }
        }
    }

    /// Every atom as (probability, sample).
    pub fn support(&self) -> Result<Vec<(T, SketchSample<T>)>> {
        Ok(self
            .dist
            .atoms()?
            .into_iter()
            .enumerate()
            .map(|(i, (p, sketch))| (p, SketchSample { sketch, theta: self.thetas[i], atom: Some(i) }))
            .collect())
    }

    fn moment(&self, power: i32) -> Result<DMatrix<T>> {
        let n = self.dist.n;
        if let SketchKind::Gaussian { b } = self.dist.kind {
            let c = self.metric.scaled_identity().expect("checked at bind");
            let frac = T::from_usize_lossy(b.min(n)) / T::from_usize_lossy(n);
            let theta = T::one() / frac;
            return Ok(DMatrix::identity(n, n) * (c * frac * theta.powi(power)));
        }
        let mut out = DMatrix::zeros(n, n);
        for (p, s) in self.support()? {
            out += projector_z(&s.sketch, &self.metric, n)? * (p * s.theta.powi(power));
        }
        Ok(out)
    }

    /// E[Z].
    pub fn expected_z(&self) -> Result<DMatrix<T>> {
        self.moment(0)
    }

    /// E[θZ]; equals B for every supported combination.
    pub fn expected_theta_z(&self) -> Result<DMatrix<T>> {
        self.moment(1)
    }

    /// C = E[θ²Z].
    pub fn expected_c(&self) -> Result<DMatrix<T>> {
        self.moment(2)
    }

    /// Monte-Carlo estimate of E[θ^power Z] with entrywise standard errors.
    pub fn monte_carlo_moment<R: Rng + ?Sized>(&self, power: i32, draws: usize, rng: &mut R) -> Result<MonteCarloMoment<T>> {
        if draws < 2 {
            return Err(SegaError::InvalidParameter("need at least two draws".into()));
        }
        let n = self.dist.n;
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut sum_sq = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            let s = self.sample(rng);
            let z = projector_z(&s.sketch, &self.metric, n)? * s.theta.powi(power);
            let z = z.map(|v| v.to_f64_lossy());
            sum_sq += z.component_mul(&z);
            sum += z;
        }
        let d = draws as f64;
        let mean = &sum / d;
        let var = (&sum_sq / d - mean.component_mul(&mean)).map(|v| v.max(0.0) * d / (d - 1.0));
        Ok(MonteCarloMoment {
            mean: mean.map(T::lit),
            stderr: var.map(|v| T::lit((v / d).sqrt())),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloMoment<T: Real> {
    pub mean: DMatrix<T>,
    pub stderr: DMatrix<T>,
}

/// `Ok` iff λ_min(diag(p)diag(v) − P∘M) ≥ −tol.
pub fn validate_eso<T: Real>(
    p_mat: &DMatrix<T>,
    m: &DMatrix<T>,
    p: &DVector<T>,
    v: &DVector<T>,
    tol: T,
) -> Result<linalg::SpdCheck<T>> {
    let n = p.len();
    if p_mat.shape() != (n, n) || m.shape() != (n, n) || v.len() != n {
        return Err(SegaError::DimensionMismatch("ESO inputs have inconsistent sizes".into()));
    }
    let lhs = DMatrix::from_diagonal(&p.component_mul(v)) - p_mat.component_mul(m);
    let lmin = linalg::lambda_min(&lhs)?;
    Ok(if lmin >= -tol { linalg::SpdCheck::Ok } else { linalg::SpdCheck::Fail(lmin) })
}

/// ESO vector for serial samplings: v = diag(M).
pub fn serial_eso_vector<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    m.diagonal()
}
