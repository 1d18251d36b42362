//! Cost oracles, oblivious cost schedules and the quadratic-cost reduction.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{matrix_from_rows, op_norm};
use crate::rng::{self, RandomStream};
use crate::{Error, Matrix, Result, Vector};

/// A convex cost `c(x, u)` revealed after the learner acts.
///
/// Implementations are expected to be convex and 1-Lipschitz in `(x, u)`.
/// At non-differentiable points `subgradient` may return any subgradient.
pub trait CostOracle: Send + Sync {
    fn evaluate(&self, x: &Vector, u: &Vector) -> f64;
    fn subgradient(&self, x: &Vector, u: &Vector) -> (Vector, Vector);
}

/// A convex loss on a single vector, used by the hidden-linear-transform learner.
pub trait VectorLoss: Send + Sync {
    fn value(&self, y: &Vector) -> f64;
    fn gradient(&self, y: &Vector) -> Vector;
}

/// Views `c(y, 0)` as a loss on states only.
pub struct StateLoss<'a> {
    pub cost: &'a dyn CostOracle,
    pub du: usize,
}

impl VectorLoss for StateLoss<'_> {
    fn value(&self, y: &Vector) -> f64 {
        self.cost.evaluate(y, &Vector::zeros(self.du))
    }

    fn gradient(&self, y: &Vector) -> Vector {
        self.cost.subgradient(y, &Vector::zeros(self.du)).0
    }
}

/// Noise radius `sqrt(5 d ‖Σ‖ log(2T/δ))` for the truncated Gaussian reduction.
pub fn truncation_bound_w(cov: &Matrix, dim: usize, horizon: usize, delta: f64) -> f64 {
    (5.0 * dim as f64 * op_norm(cov) * (2.0 * horizon as f64 / delta).ln()).sqrt()
}

/// `(xᵀQx + uᵀRu) / (2 R_max)` on the ball `‖(x,u)‖ ≤ R_max`, extended outside
/// by the supremum of its tangent planes at ball points. The extension is
/// convex and 1-Lipschitz whenever `‖Q‖, ‖R‖ ≤ 1`.
#[derive(Debug, Clone)]
pub struct QuadraticClipped {
    dx: usize,
    // eigendecomposition of blockdiag(Q, R)
    basis: Matrix,
    eigs: Vector,
    r_max: f64,
}

pub fn quadratic_clipped_oracle(q: &Matrix, r: &Matrix, r_max: f64) -> Result<QuadraticClipped> {
    if !(r_max > 0.0) {
        return Err(Error::Config("R_max must be positive".into()));
    }
    if !q.is_square() || !r.is_square() {
        return Err(Error::Dimension("Q and R must be square".into()));
    }
    for (name, m) in [("Q", q), ("R", r)] {
        if !crate::linalg::is_psd(m) {
            return Err(Error::Config(format!("{name} must be symmetric PSD")));
        }
        if op_norm(m) > 1.0 + 1e-12 {
            return Err(Error::Config(format!("‖{name}‖ exceeds 1")));
        }
    }
    let (dx, du) = (q.nrows(), r.nrows());
    let mut c = Matrix::zeros(dx + du, dx + du);
    c.view_mut((0, 0), (dx, dx)).copy_from(&((q + q.transpose()) * 0.5));
    c.view_mut((dx, dx), (du, du)).copy_from(&((r + r.transpose()) * 0.5));
    let e = SymmetricEigen::new(c);
    Ok(QuadraticClipped { dx, basis: e.eigenvectors, eigs: e.eigenvalues.map(|l| l.max(0.0)), r_max })
}

impl QuadraticClipped {
    fn stack(&self, x: &Vector, u: &Vector) -> Vector {
        let mut z = Vector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        z
    }

    /// Raw quadratic `zᵀCz / (2 R_max)` with no extension.
    pub fn raw(&self, x: &Vector, u: &Vector) -> f64 {
        let y = self.basis.transpose() * self.stack(x, u);
        y.iter().zip(self.eigs.iter()).map(|(y, c)| c * y * y).sum::<f64>() / (2.0 * self.r_max)
    }

    /// Tangent point `z'` (eigen-coordinates) attaining the envelope at `y`.
    fn anchor(&self, y: &Vector) -> Vector {
        let r = self.r_max;
        let active: f64 = y.iter().zip(self.eigs.iter()).filter(|(_, &c)| c > 0.0).map(|(v, _)| v * v).sum();
        if active.sqrt() <= r {
            return Vector::from_fn(y.len(), |i, _| if self.eigs[i] > 0.0 { y[i] } else { 0.0 });
        }
        let norm_at = |mu: f64| -> f64 {
            y.iter()
                .zip(self.eigs.iter())
                .map(|(v, &c)| if c > 0.0 { (c * v / (c + mu)).powi(2) } else { 0.0 })
                .sum::<f64>()
                .sqrt()
        };
        let cmax = self.eigs.max();
        let (mut lo, mut hi) = (0.0, cmax * y.norm() / r + 1e-300);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = hi;
        Vector::from_fn(y.len(), |i, _| {
            let c = self.eigs[i];
            if c > 0.0 { c * y[i] / (c + mu) } else { 0.0 }
        })
    }
}

impl CostOracle for QuadraticClipped {
    fn evaluate(&self, x: &Vector, u: &Vector) -> f64 {
        let y = self.basis.transpose() * self.stack(x, u);
        let a = self.anchor(&y);
        let v: f64 = (0..y.len()).map(|i| self.eigs[i] * (2.0 * a[i] * y[i] - a[i] * a[i])).sum();
        v / (2.0 * self.r_max)
    }

    fn subgradient(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let y = self.basis.transpose() * self.stack(x, u);
        let a = self.anchor(&y);
        let g = &self.basis * a.component_mul(&self.eigs) * (1.0 / self.r_max);
        (g.rows(0, self.dx).into_owned(), g.rows(self.dx, g.len() - self.dx).into_owned())
    }
}

/// Concrete oracles produced by [`CostSchedule`].
#[derive(Debug, Clone)]
pub enum Cost {
    Constant(f64),
    Quadratic(QuadraticClipped),
    /// `(‖x − θ‖ + ‖u‖) / √2`
    Target { theta: Vector },
    /// `⟨g_x, x⟩ + ⟨g_u, u⟩` with `‖(g_x, g_u)‖ ≤ 1`
    Linear { gx: Vector, gu: Vector },
}

fn unit_or_zero(v: &Vector) -> Vector {
    let n = v.norm();
    if n > 0.0 { v / n } else { Vector::zeros(v.len()) }
}

impl CostOracle for Cost {
    fn evaluate(&self, x: &Vector, u: &Vector) -> f64 {
        match self {
            Cost::Constant(c) => *c,
            Cost::Quadratic(q) => q.evaluate(x, u),
            Cost::Target { theta } => ((x - theta).norm() + u.norm()) / SQRT_2,
            Cost::Linear { gx, gu } => gx.dot(x) + gu.dot(u),
        }
    }

    fn subgradient(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        match self {
            Cost::Constant(_) => (Vector::zeros(x.len()), Vector::zeros(u.len())),
            Cost::Quadratic(q) => q.subgradient(x, u),
            // at the kinks the zero vector is a valid subgradient
            Cost::Target { theta } => (unit_or_zero(&(x - theta)) / SQRT_2, unit_or_zero(u) / SQRT_2),
            Cost::Linear { gx, gu } => (gx.clone(), gu.clone()),
        }
    }
}

/// Oblivious cost sequences, keyed by `kind` in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    Constant {
        value: f64,
    },
    /// Same clipped quadratic every round.
    FixedQuadratic {
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        r_max: f64,
    },
    /// Target `θ_t = center + amplitude · sin(2πt/period + φ_i)` per coordinate.
    DriftingTargetL1 {
        #[serde(default)]
        center: Option<Vec<f64>>,
        amplitude: f64,
        period: f64,
    },
    /// Target `θ_t = center + spread · N(0, I)`, drawn independently per round.
    RandomTargetL1 {
        #[serde(default)]
        center: Option<Vec<f64>>,
        spread: f64,
    },
    /// Linear cost with a random direction that repeats with the given period.
    SwitchingLinear {
        period: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A deterministic map `t ↦ c_t`, independent of the learner's actions.
#[derive(Debug, Clone)]
pub struct CostSchedule {
    pub kind: CostKind,
    pub seed: u64,
    pub dx: usize,
    pub du: usize,
    fixed: Option<Cost>,
}

const COST_STREAM_BASE: u64 = 1 << 32;

impl CostSchedule {
    pub fn new(kind: CostKind, seed: u64, dx: usize, du: usize) -> Result<Self> {
        let center_ok = |c: &Option<Vec<f64>>| c.as_ref().is_none_or(|v| v.len() == dx);
        let fixed = match &kind {
            CostKind::Constant { value } => Some(Cost::Constant(*value)),
            CostKind::FixedQuadratic { q, r, r_max } => {
                let (q, r) = (matrix_from_rows(q)?, matrix_from_rows(r)?);
                if q.nrows() != dx || r.nrows() != du {
                    return Err(Error::Config("fixed_quadratic Q/R dimensions".into()));
                }
                Some(Cost::Quadratic(quadratic_clipped_oracle(&q, &r, *r_max)?))
            }
            CostKind::DriftingTargetL1 { center, period, .. } => {
                if !center_ok(center) || !(*period > 0.0) {
                    return Err(Error::Config("drifting_target_l1 needs period > 0 and center of length d_x".into()));
                }
                None
            }
            CostKind::RandomTargetL1 { center, spread } => {
                if !center_ok(center) || *spread < 0.0 {
                    return Err(Error::Config("random_target_l1 needs spread >= 0 and center of length d_x".into()));
                }
                None
            }
            CostKind::SwitchingLinear { period, scale } => {
                if *period == 0 || !(0.0..=1.0).contains(scale) {
                    return Err(Error::Config("switching_linear needs period >= 1 and scale in [0,1]".into()));
                }
                None
            }
        };
        Ok(Self { kind, seed, dx, du, fixed })
    }

    fn round_rng(&self, key: u64) -> RandomStream {
        rng::stream(self.seed, COST_STREAM_BASE + key)
    }

    fn center(&self, c: &Option<Vec<f64>>) -> Vector {
        c.as_ref().map_or_else(|| Vector::zeros(self.dx), |v| Vector::from_column_slice(v))
    }

    /// The oracle for round `t` (1-based).
    pub fn at(&self, t: usize) -> Cost {
        if let Some(c) = &self.fixed {
            return c.clone();
        }
        match &self.kind {
            CostKind::DriftingTargetL1 { center, amplitude, period } => {
                let mut r = self.round_rng(0);
                let phases: Vec<f64> = (0..self.dx).map(|_| r.random::<f64>() * 2.0 * PI).collect();
                let base = self.center(center);
                let theta = Vector::from_fn(self.dx, |i, _| {
                    base[i] + amplitude * (2.0 * PI * t as f64 / period + phases[i]).sin()
                });
                Cost::Target { theta }
            }
            CostKind::RandomTargetL1 { center, spread } => {
                let mut r = self.round_rng(t as u64);
                let z = Vector::from_fn(self.dx, |_, _| StandardNormal.sample(&mut r));
                Cost::Target { theta: self.center(center) + z * *spread }
            }
            CostKind::SwitchingLinear { period, scale } => {
                let mut r = self.round_rng((t % period) as u64);
                let g = Vector::from_fn(self.dx + self.du, |_, _| StandardNormal.sample(&mut r));
                let g = unit_or_zero(&g) * *scale;
                Cost::Linear { gx: g.rows(0, self.dx).into_owned(), gu: g.rows(self.dx, self.du).into_owned() }
            }
            _ => unreachable!("fixed kinds are cached"),
        }
    }
}

/// One oracle from a schedule description.
pub fn cost_generator(kind: &CostKind, seed: u64, dx: usize, du: usize, t: usize) -> Result<Cost> {
    Ok(CostSchedule::new(kind.clone(), seed, dx, du)?.at(t))
}
