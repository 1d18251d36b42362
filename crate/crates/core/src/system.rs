//! Ground-truth linear dynamics, bounded noise, strong-stability certificates
//! and the stabilizing-controller reduction.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::costs::CostOracle;
use crate::error::dim_check;
use crate::linalg::{is_psd, op_norm, sym_sqrt};
use crate::rng::RandomStream;
use crate::{Error, Matrix, Result, Vector};

/// Eigenvector matrices with condition number above this are treated as defective.
pub const CONDITION_TOLERANCE: f64 = 1e12;

/// Distribution family of the process noise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Gaussian `N(0, cov)` zeroed out whenever `|cov^{-1/2} w|^2 > threshold`.
    TruncatedGaussian { cov: Matrix, cov_sqrt: Matrix, threshold: f64 },
    /// Uniform on the ball of radius `W`.
    UniformBall,
    /// Each coordinate independently `±W/sqrt(d)`.
    Rademacher,
}

/// Zero-mean noise with an almost-sure norm bound `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub bound: f64,
    pub dim: usize,
}

impl NoiseModel {
    /// Truncated Gaussian with the Mahalanobis threshold `5 d log(2T/δ)`.
    pub fn truncated_gaussian(cov: Matrix, horizon: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) || horizon == 0 {
            return Err(Error::Config("truncated gaussian needs T >= 1 and δ in (0,1)".into()));
        }
        let d = cov.nrows();
        let threshold = 5.0 * d as f64 * (2.0 * horizon as f64 / delta).ln();
        Self::truncated_gaussian_with_threshold(cov, threshold)
    }

    /// Truncated Gaussian with an explicit threshold; `f64::INFINITY` disables truncation.
    pub fn truncated_gaussian_with_threshold(cov: Matrix, threshold: f64) -> Result<Self> {
        if !cov.is_square() || !is_psd(&cov) {
            return Err(Error::Config("noise covariance must be symmetric PSD".into()));
        }
        let dim = cov.nrows();
        let cov_sqrt = sym_sqrt(&cov)?;
        let bound = (op_norm(&cov) * threshold).sqrt();
        let bound = if bound.is_nan() { 0.0 } else { bound };
        Ok(Self { kind: NoiseKind::TruncatedGaussian { cov, cov_sqrt, threshold }, bound, dim })
    }

    pub fn uniform_ball(dim: usize, bound: f64) -> Self {
        Self { kind: NoiseKind::UniformBall, bound, dim }
    }

    pub fn rademacher(dim: usize, bound: f64) -> Self {
        Self { kind: NoiseKind::Rademacher, bound, dim }
    }

    /// Covariance of the samples actually produced.
    pub fn covariance(&self) -> Matrix {
        let d = self.dim;
        let w2 = self.bound * self.bound;
        match &self.kind {
            NoiseKind::TruncatedGaussian { cov, threshold, .. } => {
                // E[z z^T 1{|z|^2 <= c}] = P(chi2_{d+2} <= c) I
                let mass = if threshold.is_infinite() {
                    1.0
                } else {
                    ChiSquared::new(d as f64 + 2.0).map(|c| c.cdf(*threshold)).unwrap_or(1.0)
                };
                cov * mass
            }
            NoiseKind::UniformBall => Matrix::identity(d, d) * (w2 / (d as f64 + 2.0)),
            NoiseKind::Rademacher => Matrix::identity(d, d) * (w2 / d as f64),
        }
    }

    /// Covariance used in the optimism bonus. For the truncated Gaussian this
    /// is the untruncated covariance, which sits between the truncated one and
    /// twice it.
    pub fn bonus_covariance(&self) -> Matrix {
        match &self.kind {
            NoiseKind::TruncatedGaussian { cov, .. } => cov.clone(),
            _ => self.covariance(),
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Vector {
        let d = self.dim;
        match &self.kind {
            NoiseKind::TruncatedGaussian { cov_sqrt, threshold, .. } => {
                let z = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
                if z.norm_squared() <= *threshold {
                    cov_sqrt * z
                } else {
                    Vector::zeros(d)
                }
            }
            NoiseKind::UniformBall => {
                if d == 0 {
                    return Vector::zeros(0);
                }
                let z = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
                let n = z.norm();
                let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
                if n == 0.0 {
                    Vector::zeros(d)
                } else {
                    z * (self.bound * r / n)
                }
            }
            NoiseKind::Rademacher => {
                let s = self.bound / (d as f64).sqrt();
                Vector::from_fn(d, |_, _| if rng.random::<bool>() { s } else { -s })
            }
        }
    }
}

/// Free function form of [`NoiseModel::sample`].
pub fn sample_noise(model: &NoiseModel, rng: &mut RandomStream) -> Vector {
    model.sample(rng)
}

/// `x_{t+1} = A x_t + B u_t + w_t`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub noise: NoiseModel,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, noise: NoiseModel) -> Result<Self> {
        dim_check(a.is_square(), || format!("A is {}x{}", a.nrows(), a.ncols()))?;
        dim_check(b.nrows() == a.nrows(), || format!("B has {} rows, A has {}", b.nrows(), a.nrows()))?;
        dim_check(noise.dim == a.nrows(), || format!("noise dim {} vs d_x {}", noise.dim, a.nrows()))?;
        Ok(Self { a, b, noise })
    }

    pub fn dx(&self) -> usize {
        self.a.nrows()
    }

    pub fn du(&self) -> usize {
        self.b.ncols()
    }

    /// One transition with a fresh noise draw; the draw is returned for test oracles only.
    pub fn step(&self, x: &Vector, u: &Vector, rng: &mut RandomStream) -> Result<(Vector, Vector)> {
        let w = self.noise.sample(rng);
        let next = self.step_with_noise(x, u, &w)?;
        Ok((next, w))
    }

    /// Deterministic transition with a given disturbance.
    pub fn step_with_noise(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        dim_check(x.len() == self.dx(), || format!("x has {} entries, expected {}", x.len(), self.dx()))?;
        dim_check(u.len() == self.du(), || format!("u has {} entries, expected {}", u.len(), self.du()))?;
        dim_check(w.len() == self.dx(), || format!("w has {} entries, expected {}", w.len(), self.dx()))?;
        Ok(&self.a * x + &self.b * u + w)
    }

    /// The system seen by a learner whose actions are offset by `u = K0 x + ũ`.
    pub fn closed_loop(&self, k0: &Matrix) -> Result<Self> {
        dim_check(k0.shape() == (self.du(), self.dx()), || format!("K0 is {:?}", k0.shape()))?;
        Ok(Self { a: &self.a + &self.b * k0, b: self.b.clone(), noise: self.noise.clone() })
    }
}

/// Witness of `(κ, γ)` strong stability: `A + B K = Q L Q^{-1}` with `L` diagonal.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub q: DMatrix<Complex64>,
    pub l: DMatrix<Complex64>,
    pub kappa: f64,
    pub gamma: f64,
}

impl StabilityCertificate {
    /// Frobenius norm of `M - Q L Q^{-1}`.
    pub fn reconstruction_error(&self, m: &Matrix) -> f64 {
        let qinv = self.q.clone().try_inverse().expect("certificate Q is invertible");
        let rec = &self.q * &self.l * qinv;
        let mc = m.map(|v| Complex64::new(v, 0.0));
        (mc - rec).norm()
    }
}

fn complex_svals(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Certify `A + B K` through its eigendecomposition.
///
/// Eigenvectors are normalized to unit length; `κ = max(1, ‖K‖, cond(Q))`
/// and `γ = 1 − spectral radius`.
pub fn certify_strong_stability(k: &Matrix, sys: &LinearSystem) -> Result<StabilityCertificate> {
    certify_closed_loop(k, &sys.a, &sys.b)
}

pub fn certify_closed_loop(k: &Matrix, a: &Matrix, b: &Matrix) -> Result<StabilityCertificate> {
    dim_check(k.shape() == (b.ncols(), a.nrows()), || format!("K is {:?}", k.shape()))?;
    let m = a + b * k;
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("closed-loop matrix".into()));
    }
    if n == 0 {
        return Err(Error::Dimension("empty system".into()));
    }
    let eig: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    let radius = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::Unstable(radius));
    }
    let scale = m.norm().max(1.0);
    let mc = m.map(|v| Complex64::new(v, 0.0));

    // Cluster numerically equal eigenvalues so repeated semisimple ones get a
    // full eigenspace.
    let tol = 1e-9 * scale;
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for &l in &eig {
        if let Some(c) = clusters.iter_mut().find(|(c, _)| (c - l).norm() <= tol) {
            c.1 += 1;
        } else {
            clusters.push((l, 1));
        }
    }
    let mut q = DMatrix::<Complex64>::zeros(n, n);
    let mut diag = Vec::with_capacity(n);
    let mut col = 0;
    for &(lambda, mult) in &clusters {
        let shifted = &mc - DMatrix::<Complex64>::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V^H");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
        for &idx in order.iter().take(mult) {
            let v = v_t.row(idx).transpose().map(|c| c.conj());
            let nv = v.norm();
            q.set_column(col, &(v / Complex64::new(nv, 0.0)));
            diag.push(lambda);
            col += 1;
        }
    }
    let sv = complex_svals(&q);
    let cond = sv[0] / sv[n - 1];
    if !cond.is_finite() || cond > CONDITION_TOLERANCE {
        return Err(Error::Uncertifiable(cond));
    }
    let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    let cert = StabilityCertificate { q, l, kappa: cond.max(op_norm(k)).max(1.0), gamma: (1.0 - radius).min(1.0) };
    if cert.reconstruction_error(&m) > 1e-8 * m.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Uncertifiable(cond));
    }
    Ok(cert)
}

/// An online control algorithm: it sees states and revealed costs only.
pub trait Learner {
    /// Choose `u_t` after observing `x_t`.
    fn act(&mut self, x: &Vector) -> Result<Vector>;
    /// Receive `c_t` and `x_{t+1}`.
    fn observe(&mut self, cost: &dyn CostOracle, x_next: &Vector) -> Result<()>;
}

/// `c̃(x, u) = c(x, u + K0 x) / (2κ)`.
pub struct StabilizedCost<'a> {
    pub inner: &'a dyn CostOracle,
    pub k0: &'a Matrix,
    pub scale: f64,
}

impl<'a> StabilizedCost<'a> {
    pub fn new(inner: &'a dyn CostOracle, k0: &'a Matrix, kappa: f64) -> Self {
        Self { inner, k0, scale: 1.0 / (2.0 * kappa) }
    }

    /// `c(x, u + K0 x) · scale`.
    pub fn with_scale(inner: &'a dyn CostOracle, k0: &'a Matrix, scale: f64) -> Self {
        Self { inner, k0, scale }
    }
}

impl CostOracle for StabilizedCost<'_> {
    fn evaluate(&self, x: &Vector, u: &Vector) -> f64 {
        let shifted = u + self.k0 * x;
        self.inner.evaluate(x, &shifted) * self.scale
    }

    fn subgradient(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let shifted = u + self.k0 * x;
        let (gx, gu) = self.inner.subgradient(x, &shifted);
        ((gx + self.k0.transpose() * &gu) * self.scale, gu * self.scale)
    }
}

/// Learner wrapper that plays `u_t = K0 x_t + ũ_t` and forwards scaled costs.
pub struct Stabilized<L> {
    pub inner: L,
    pub k0: Matrix,
    pub kappa: f64,
}

/// Wrap a learner designed for stable systems around a stabilizing gain `K0`.
pub fn wrap_stabilize<L: Learner>(inner: L, k0: Matrix, kappa: f64) -> Stabilized<L> {
    Stabilized { inner, k0, kappa }
}

impl<L: Learner> Stabilized<L> {
    /// Returns `(u_t, ũ_t)`: the played control and the inner learner's part.
    pub fn act_split(&mut self, x: &Vector) -> Result<(Vector, Vector)> {
        let inner_u = self.inner.act(x)?;
        dim_check(inner_u.len() == self.k0.nrows(), || "inner action vs K0 rows".into())?;
        Ok((&self.k0 * x + &inner_u, inner_u))
    }
}

impl<L: Learner> Learner for Stabilized<L> {
    fn act(&mut self, x: &Vector) -> Result<Vector> {
        Ok(self.act_split(x)?.0)
    }

    fn observe(&mut self, cost: &dyn CostOracle, x_next: &Vector) -> Result<()> {
        let wrapped = StabilizedCost::new(cost, &self.k0, self.kappa);
        self.inner.observe(&wrapped, x_next)
    }
}
