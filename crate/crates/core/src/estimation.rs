//! Regularized least squares for the system matrices and the unrolled model,
//! disturbance recovery, and the determinant-doubling epoch rule.

use std::f64::consts::LN_2;

use crate::error::dim_check;
use crate::linalg::{logdet_spd, project_ball, ridge_right_solve};
use crate::{Error, Matrix, Result, Vector};

/// Full refactorization cadence for the maintained log-determinant.
pub const REFRESH_EVERY: usize = 256;

/// `V_t = λ I + Σ ρ_s ρ_sᵀ` with its log-determinant and inverse maintained
/// under rank-one updates.
#[derive(Debug, Clone)]
pub struct GramState {
    v: Matrix,
    v_inv: Matrix,
    logdet: f64,
    anchor_logdet: f64,
    lambda: f64,
    since_refresh: usize,
}

impl GramState {
    pub fn new(dim: usize, lambda: f64) -> Self {
        assert!(lambda > 0.0, "Gram regularizer must be positive");
        let logdet = dim as f64 * lambda.ln();
        Self {
            v: Matrix::identity(dim, dim) * lambda,
            v_inv: Matrix::identity(dim, dim) / lambda,
            logdet,
            anchor_logdet: logdet,
            lambda,
            since_refresh: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.v
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn anchor_logdet(&self) -> f64 {
        self.anchor_logdet
    }

    /// `V ← V + ρρᵀ`, `log det` advanced by `log(1 + ρᵀV⁻¹ρ)`.
    pub fn update(&mut self, rho: &Vector) -> Result<()> {
        dim_check(rho.len() == self.dim(), || format!("ρ has {} entries, Gram is {}", rho.len(), self.dim()))?;
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ρ".into()));
        }
        let vr = &self.v_inv * rho;
        let q = rho.dot(&vr);
        self.v.ger(1.0, rho, rho, 1.0);
        self.v_inv.ger(-1.0 / (1.0 + q), &vr, &vr, 1.0);
        self.logdet += q.ln_1p();
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recompute the inverse and log-determinant from scratch.
    pub fn refresh(&mut self) -> Result<()> {
        let c = crate::linalg::cholesky(&self.v)?;
        self.logdet = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        self.v_inv = c.inverse();
        self.since_refresh = 0;
        Ok(())
    }

    /// `log det V` from a fresh factorization.
    pub fn fresh_logdet(&self) -> Result<f64> {
        logdet_spd(&self.v)
    }

    /// `det V > 2 det V_anchor`, strictly.
    pub fn epoch_should_advance(&self) -> bool {
        self.logdet - self.anchor_logdet > LN_2
    }

    /// Make the current determinant the new epoch anchor.
    pub fn start_epoch(&mut self) {
        self.anchor_logdet = self.logdet;
    }

    #[cfg(test)]
    pub(crate) fn set_logdet_for_test(&mut self, logdet: f64, anchor: f64) {
        self.logdet = logdet;
        self.anchor_logdet = anchor;
    }
}

/// Free function form of [`GramState::update`].
pub fn gram_update(g: &mut GramState, rho: &Vector) -> Result<()> {
    g.update(rho)
}

/// Free function form of [`GramState::epoch_should_advance`].
pub fn epoch_should_advance(g: &GramState) -> bool {
    g.epoch_should_advance()
}

/// Ridge estimate of `(A B)` from transitions `z_s = (x_s, u_s) ↦ x_{s+1}`.
#[derive(Debug, Clone)]
pub struct AbEstimate {
    pub moment_zz: Matrix,
    pub moment_xz: Matrix,
    pub lambda_w: f64,
    pub current: Matrix,
    dx: usize,
}

impl AbEstimate {
    pub fn new(dx: usize, du: usize, lambda_w: f64) -> Self {
        let n = dx + du;
        Self {
            moment_zz: Matrix::zeros(n, n),
            moment_xz: Matrix::zeros(dx, n),
            lambda_w,
            current: Matrix::zeros(dx, n),
            dx,
        }
    }

    /// Accumulate one transition and re-solve.
    pub fn update_and_solve(&mut self, z: &Vector, x_next: &Vector) -> Result<()> {
        dim_check(z.len() == self.moment_zz.nrows(), || "z dimension".into())?;
        dim_check(x_next.len() == self.dx, || "x_next dimension".into())?;
        self.moment_zz.ger(1.0, z, z, 1.0);
        self.moment_xz.ger(1.0, x_next, z, 1.0);
        self.current = ridge_right_solve(&self.moment_xz, &self.moment_zz, self.lambda_w)?;
        Ok(())
    }

    pub fn a(&self) -> Matrix {
        self.current.columns(0, self.dx).into_owned()
    }

    pub fn b(&self) -> Matrix {
        self.current.columns(self.dx, self.current.ncols() - self.dx).into_owned()
    }

    /// Relative residual of the normal equations for `current`.
    pub fn residual(&self) -> f64 {
        let n = self.moment_zz.nrows();
        let lhs = &self.current * (&self.moment_zz + Matrix::identity(n, n) * self.lambda_w);
        (lhs - &self.moment_xz).norm() / self.moment_xz.norm().max(f64::MIN_POSITIVE)
    }
}

/// Free function form of [`AbEstimate::update_and_solve`].
pub fn ab_update_and_solve(est: &mut AbEstimate, z: &Vector, x_next: &Vector) -> Result<()> {
    est.update_and_solve(z, x_next)
}

/// `Π_{‖w‖ ≤ W}[x_{t+1} − A x_t − B u_t]`.
pub fn estimate_noise(x_next: &Vector, a: &Matrix, b: &Matrix, x: &Vector, u: &Vector, bound: f64) -> Vector {
    project_ball(&(x_next - a * x - b * u), bound)
}

/// Ridge estimate of the unrolled model `Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiEstimate {
    pub psi: Matrix,
    pub solved_at: usize,
}

/// Running moments of `(ρ_s, x_{s+1})` pairs for re-solving `Ψ` at epoch starts.
#[derive(Debug, Clone)]
pub struct PsiRegression {
    pub moment_rr: Matrix,
    pub moment_xr: Matrix,
    pub lambda: f64,
}

impl PsiRegression {
    pub fn new(dx: usize, d_psi: usize, lambda: f64) -> Self {
        Self { moment_rr: Matrix::zeros(d_psi, d_psi), moment_xr: Matrix::zeros(dx, d_psi), lambda }
    }

    pub fn add(&mut self, rho: &Vector, x_next: &Vector) {
        self.moment_rr.ger(1.0, rho, rho, 1.0);
        self.moment_xr.ger(1.0, x_next, rho, 1.0);
    }

    pub fn solve(&self, epoch: usize) -> Result<PsiEstimate> {
        Ok(PsiEstimate { psi: ridge_right_solve(&self.moment_xr, &self.moment_rr, self.lambda)?, solved_at: epoch })
    }

    pub fn residual(&self, psi: &Matrix) -> f64 {
        let n = self.moment_rr.nrows();
        let lhs = psi * (&self.moment_rr + Matrix::identity(n, n) * self.lambda);
        (lhs - &self.moment_xr).norm() / self.moment_xr.norm().max(f64::MIN_POSITIVE)
    }
}

/// `argmin_Ψ Σ_s ‖Ψ ρ_s − x_{s+1}‖² + λ ‖Ψ‖_F²` over an explicit history.
pub fn solve_psi(history: &[(Vector, Vector)], dx: usize, d_psi: usize, lambda: f64) -> Result<PsiEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::Config("λ_Ψ must be positive".into()));
    }
    let mut reg = PsiRegression::new(dx, d_psi, lambda);
    for (rho, x_next) in history {
        dim_check(rho.len() == d_psi && x_next.len() == dx, || "history entry dimensions".into())?;
        reg.add(rho, x_next);
    }
    reg.solve(0)
}
