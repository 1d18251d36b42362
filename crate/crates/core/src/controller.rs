//! The adaptive controller: a bank of optimistic DAP experts run by online
//! gradient descent, with batched FPL choosing which expert to follow.
//!
//! The learner estimates the unrolled model `Ψ` once per determinant-doubling
//! epoch and builds, for every entry `k` of `V^{-1/2} P(M) Σ^{1/2}` and sign
//! `χ`, the convex surrogate
//!
//! `f̃(M; k, χ) = c(x(M; Ψ̂, w̃), u(M; w̃)) − α χ [V^{-1/2} P(M) Σ^{1/2}]_k`
//!
//! on simulated noise `w̃`. The min over `(k, χ)` of these is a lower
//! confidence bound on the true cost of the policy `M`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::CostOracle;
use crate::dap::{control_action, x_trunc, DapDims, DapParams, NoiseWindow};
use crate::error::dim_check;
use crate::estimation::{estimate_noise, AbEstimate, GramState, PsiEstimate, PsiRegression};
use crate::linalg::{block_diag_repeat, sym_inv_sqrt, sym_sqrt};
use crate::oco::{BfplState, OgdState};
use crate::rng::{stream, streams, RandomStream};
use crate::system::{Learner, NoiseModel};
use crate::{Error, Matrix, Result, Vector};

/// Tuning of the controller. Built by [`default_params`] and then adjusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgParams {
    pub dx: usize,
    pub du: usize,
    /// Memory `H`.
    pub memory: usize,
    pub lambda_w: f64,
    pub lambda_psi: f64,
    pub eta_g: f64,
    /// Optimism weight actually used (theoretical value times `alpha_scale`).
    pub alpha: f64,
    pub alpha_scale: f64,
    pub w_bound: f64,
    pub r_m: f64,
    pub r_b: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub horizon: usize,
}

fn check_range(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

/// Parameters from the regret theorem. `H = ⌈γ⁻¹ ln T⌉`.
#[allow(clippy::too_many_arguments)]
pub fn default_params(
    kappa: f64,
    gamma: f64,
    w_bound: f64,
    r_m: f64,
    r_b: f64,
    dx: usize,
    du: usize,
    horizon: usize,
    delta: f64,
) -> Result<AlgParams> {
    check_range(horizon >= 8, "horizon T must be at least 8")?;
    check_range(delta > 0.0 && delta < 1.0, "δ must lie in (0, 1)")?;
    check_range(gamma > 0.0 && gamma <= 1.0, "γ must lie in (0, 1]")?;
    check_range(kappa >= 1.0, "κ must be at least 1")?;
    check_range(w_bound >= 1.0 && r_m >= 1.0 && r_b >= 1.0, "W, R_M, R_B must be at least 1")?;
    check_range(dx > 0 && du > 0, "state and control dimensions must be positive")?;
    let memory = ((horizon as f64).ln() / gamma).ceil().max(1.0) as usize;
    let mut p = AlgParams {
        dx,
        du,
        memory,
        lambda_w: 0.0,
        lambda_psi: 0.0,
        eta_g: 0.0,
        alpha: 0.0,
        alpha_scale: 1.0,
        w_bound,
        r_m,
        r_b,
        kappa,
        gamma,
        delta,
        horizon,
    };
    p.recompute();
    Ok(p)
}

impl AlgParams {
    pub fn dims(&self) -> DapDims {
        DapDims::new(self.dx, self.du, self.memory)
    }

    /// The theorem's `α` before scaling.
    pub fn theoretical_alpha(&self) -> f64 {
        let (dx, du) = (self.dx as f64, self.du as f64);
        let h = self.memory as f64;
        let t = self.horizon as f64;
        let inner = h.powi(3)
            * self.gamma.powi(-3)
            * (dx * dx * self.kappa * self.kappa + du * self.r_b * self.r_b)
            * (24.0 * t * t / self.delta).ln();
        21.0 * self.w_bound * self.r_m * self.r_b * self.kappa * self.kappa * (dx + du) * inner.sqrt()
    }

    /// Recompute every quantity derived from `H`, the bounds and `alpha_scale`.
    ///
    /// `η_G` uses the scaled `α`; when that is zero the unscaled value is used.
    pub fn recompute(&mut self) {
        let h = self.memory as f64;
        let (w, rm, rb, k) = (self.w_bound, self.r_m, self.r_b, self.kappa);
        self.lambda_w = 5.0 * k * k * w * w * rm * rm * rb * rb * h / self.gamma;
        self.lambda_psi = 2.0 * w * w * rm * rm * h * h;
        let theory = self.theoretical_alpha();
        self.alpha = theory * self.alpha_scale;
        let alpha_eta = if self.alpha > 0.0 { self.alpha } else { theory };
        self.eta_g = rm * rm / alpha_eta * (2.0 * h / self.horizon as f64).sqrt();
    }

    pub fn with_alpha_scale(mut self, scale: f64) -> Self {
        self.alpha_scale = scale;
        self.recompute();
        self
    }

    pub fn with_memory(mut self, memory: usize) -> Self {
        self.memory = memory.max(1);
        self.recompute();
        self
    }

    /// Number of experts `2 d_Ψ (2H−1) d_x`.
    pub fn expert_count(&self) -> usize {
        let d = self.dims();
        2 * d.d_psi() * d.noise_span()
    }
}

/// `C_M(Ψ) = √8 W R_M H ‖Ψ‖_F + α √(2/H) (2 + √d_x / R_M)`.
pub fn loss_scale(psi: &Matrix, p: &AlgParams) -> f64 {
    let h = p.memory as f64;
    8f64.sqrt() * p.w_bound * p.r_m * h * psi.norm()
        + p.alpha * (2.0 / h).sqrt() * (2.0 + (p.dx as f64).sqrt() / p.r_m)
}

/// Expert index `((row, col), χ)` into `V^{-1/2} P(M) Σ^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpertKey {
    pub row: usize,
    pub col: usize,
    pub chi: i8,
}

impl ExpertKey {
    /// Keys in index order: row-major over `(row, col)`, `χ = +1` before `−1`.
    pub fn all(dims: DapDims) -> Vec<ExpertKey> {
        let mut out = Vec::with_capacity(2 * dims.d_psi() * dims.noise_span());
        for row in 0..dims.d_psi() {
            for col in 0..dims.noise_span() {
                for chi in [1, -1] {
                    out.push(ExpertKey { row, col, chi });
                }
            }
        }
        out
    }

    pub fn index(&self, dims: DapDims) -> usize {
        2 * (self.row * dims.noise_span() + self.col) + usize::from(self.chi < 0)
    }
}

impl std::fmt::Display for ExpertKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.row, self.col, if self.chi > 0 { "+" } else { "-" })
    }
}

/// Entries of `V^{-1/2} P(M) Σ^{1/2}` as affine functions `⟨G_k, M⟩ + c_k`.
#[derive(Debug, Clone)]
pub struct OptimismTerms {
    pub dims: DapDims,
    pub v_inv_sqrt: Matrix,
    pub sigma_sqrt_block: Matrix,
    grads: Vec<Matrix>,
    consts: Vec<f64>,
}

impl OptimismTerms {
    /// `v_inv_sqrt` is `d_Ψ × d_Ψ`; `sigma_sqrt` is the per-step `d_x × d_x` root.
    pub fn new(dims: DapDims, v_inv_sqrt: Matrix, sigma_sqrt: &Matrix) -> Result<Self> {
        let DapDims { dx, du, memory } = dims;
        dim_check(v_inv_sqrt.shape() == (dims.d_psi(), dims.d_psi()), || "V^{-1/2} shape".into())?;
        dim_check(sigma_sqrt.shape() == (dx, dx), || "Σ^{1/2} shape".into())?;
        let s_block = block_diag_repeat(sigma_sqrt, 2 * memory - 1);
        let (rows, cols) = (dims.d_psi(), dims.noise_span());
        let mut grads = Vec::with_capacity(rows * cols);
        let mut consts = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let v = v_inv_sqrt.row(r).transpose();
            for c in 0..cols {
                let s = s_block.column(c);
                let mut g = Matrix::zeros(du, memory * dx);
                for h in 1..=memory {
                    let mut blk = g.view_mut((0, (h - 1) * dx), (du, dx));
                    for j in 0..memory {
                        let m = j + memory - h;
                        blk.ger(1.0, &v.rows(j * du, du), &s.rows(m * dx, dx), 1.0);
                    }
                }
                let mut k = 0.0;
                for i in 0..memory - 1 {
                    k += v.rows(memory * du + i * dx, dx).dot(&s.rows((memory + i) * dx, dx));
                }
                grads.push(g);
                consts.push(k);
            }
        }
        Ok(Self { dims, v_inv_sqrt, sigma_sqrt_block: s_block, grads, consts })
    }

    /// From the Gram matrix `V` and noise covariance `Σ`.
    pub fn from_gram(dims: DapDims, v: &Matrix, sigma: &Matrix) -> Result<Self> {
        Self::new(dims, sym_inv_sqrt(v)?, &sym_sqrt(sigma)?)
    }

    /// `[V^{-1/2} P(M) Σ^{1/2}]_{row,col}`.
    pub fn entry(&self, m: &DapParams, row: usize, col: usize) -> f64 {
        let i = row * self.dims.noise_span() + col;
        self.grads[i].dot(&m.m) + self.consts[i]
    }

    /// Gradient of the entry with respect to `M`; it does not depend on `M`.
    pub fn entry_gradient(&self, row: usize, col: usize) -> &Matrix {
        &self.grads[row * self.dims.noise_span() + col]
    }
}

/// Value and gradient of the surrogate cost `c(x(M; Ψ, w), u(M; w))`
/// (lag 1 of `win` is `w_{t−1}`).
pub fn surrogate_loss_and_grad(m: &DapParams, cost: &dyn CostOracle, psi: &Matrix, win: &NoiseWindow) -> Result<(f64, Matrix)> {
    let DapDims { dx, du, memory } = m.dims;
    let x = x_trunc(m, psi, win);
    let u = control_action(m, win);
    let value = cost.evaluate(&x, &u);
    let (gx, gu) = cost.subgradient(&x, &u);
    dim_check(gx.len() == dx && gu.len() == du, || "cost subgradient shape".into())?;
    let mut grad = Matrix::zeros(du, memory * dx);
    // Ψ_jᵀ g_x for each control block of Ψ
    let pulled: Vec<Vector> = (0..memory).map(|j| psi.view((0, j * du), (dx, du)).transpose() * &gx).collect();
    for h in 1..=memory {
        let mut blk = grad.view_mut((0, (h - 1) * dx), (du, dx));
        blk.ger(1.0, &gu, win.lag(h), 1.0);
        for (j, pj) in pulled.iter().enumerate() {
            blk.ger(1.0, pj, win.lag(memory - j + h), 1.0);
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("surrogate loss".into()));
    }
    Ok((value, grad))
}

/// Value and gradient of `f̃(M; k, χ)` on the simulated window `sim`
/// (whose lag 1 is `w̃_{t−1}`).
pub fn expert_loss_and_grad(
    m: &DapParams,
    key: &ExpertKey,
    cost: &dyn CostOracle,
    psi: &Matrix,
    optimism: &OptimismTerms,
    sim: &NoiseWindow,
    alpha: f64,
) -> Result<(f64, Matrix)> {
    let (value, mut grad) = surrogate_loss_and_grad(m, cost, psi, sim)?;
    if alpha == 0.0 {
        return Ok((value, grad));
    }
    let chi = f64::from(key.chi);
    let bonus = optimism.entry(m, key.row, key.col);
    grad -= optimism.entry_gradient(key.row, key.col) * (alpha * chi);
    Ok((value - alpha * chi * bonus, grad))
}

/// Per-step diagnostics of the controller.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub t: usize,
    pub epoch: usize,
    pub key: Option<ExpertKey>,
    pub switched: bool,
    pub new_epoch: bool,
    pub m_norm: f64,
    pub logdet_v: f64,
    /// Scaled loss of the chosen expert before the shift.
    pub chosen_loss: Option<f64>,
}

/// Optimistic adaptive controller.
pub struct Controller {
    pub params: AlgParams,
    noise: NoiseModel,
    seed: u64,
    dims: DapDims,
    keys: Vec<ExpertKey>,
    /// Step index of the next `act`, starting at 1.
    pub t: usize,
    pub epoch: usize,
    /// First step of the current epoch.
    pub tau: usize,
    pub gram: GramState,
    pub ab: AbEstimate,
    psi_reg: PsiRegression,
    pub psi: PsiEstimate,
    optimism: OptimismTerms,
    w_hat: NoiseWindow,
    w_sim: NoiseWindow,
    /// `u_{t-1}, …, u_{t-H}` most recent first.
    u_hist: Vec<Vector>,
    bank: Vec<OgdState<Matrix>>,
    meta: BfplState,
    chosen: usize,
    pub current: DapParams,
    last_x: Option<Vector>,
    last_u: Option<Vector>,
    sim_rng: RandomStream,
    pub total_switches: usize,
    pub clip_count: usize,
    pub last_info: StepInfo,
}

impl Controller {
    pub fn new(params: AlgParams, noise: NoiseModel, seed: u64) -> Result<Self> {
        let dims = params.dims();
        dim_check(noise.dim == dims.dx, || "noise dimension vs d_x".into())?;
        check_range(params.horizon >= 8, "horizon T must be at least 8")?;
        check_range(params.lambda_psi > 0.0 && params.lambda_w > 0.0, "regularizers must be positive")?;
        check_range(params.eta_g.is_finite() && params.eta_g > 0.0, "η_G must be positive and finite")?;
        let gram = GramState::new(dims.d_psi(), params.lambda_psi);
        let psi = PsiEstimate { psi: Matrix::zeros(dims.dx, dims.d_psi()), solved_at: 0 };
        let optimism = OptimismTerms::from_gram(dims, gram.matrix(), &noise.bonus_covariance())?;
        let keys = ExpertKey::all(dims);
        let bank = Self::fresh_bank(&params, keys.len());
        let meta = BfplState::new(keys.len(), params.horizon, params.delta, stream(seed, meta_stream(1)))?;
        let chosen = meta.current_leader;
        Ok(Self {
            noise,
            seed,
            dims,
            t: 1,
            epoch: 1,
            tau: 1,
            ab: AbEstimate::new(dims.dx, dims.du, params.lambda_w),
            psi_reg: PsiRegression::new(dims.dx, dims.d_psi(), params.lambda_psi),
            gram,
            psi,
            optimism,
            w_hat: NoiseWindow::new(dims.dx, dims.memory),
            w_sim: NoiseWindow::new(dims.dx, dims.memory),
            u_hist: vec![Vector::zeros(dims.du); dims.memory],
            bank,
            meta,
            chosen,
            current: DapParams::zeros(dims, params.r_m),
            last_x: None,
            last_u: None,
            sim_rng: stream(seed, streams::SIMULATED_NOISE),
            total_switches: 0,
            clip_count: 0,
            last_info: StepInfo::default(),
            keys,
            params,
        })
    }

    fn fresh_bank(p: &AlgParams, n: usize) -> Vec<OgdState<Matrix>> {
        let d = p.dims();
        (0..n).map(|_| OgdState::new(Matrix::zeros(d.du, d.memory * d.dx), p.eta_g, p.r_m)).collect()
    }

    pub fn dims(&self) -> DapDims {
        self.dims
    }

    pub fn keys(&self) -> &[ExpertKey] {
        &self.keys
    }

    pub fn optimism(&self) -> &OptimismTerms {
        &self.optimism
    }

    /// Current point of every expert, in key order.
    pub fn bank(&self) -> impl Iterator<Item = &Matrix> {
        self.bank.iter().map(|s| &s.point)
    }

    /// The estimated-noise window; lag `h` is `ŵ_{t−h}`.
    pub fn estimated_noise(&self) -> &NoiseWindow {
        &self.w_hat
    }

    /// `ρ_t` from the played controls and estimated disturbances.
    fn observed_rho(&self, u_t: &Vector) -> Vector {
        let DapDims { dx, du, memory } = self.dims;
        let mut rho = Vector::zeros(self.dims.d_psi());
        // u_{t+1-H}, …, u_t with u_t the control just played
        for j in 0..memory {
            let back = memory - 1 - j;
            let u = if back == 0 { u_t } else { &self.u_hist[back - 1] };
            rho.rows_mut(j * du, du).copy_from(u);
        }
        for j in 0..memory - 1 {
            rho.rows_mut(memory * du + j * dx, dx).copy_from(self.w_hat.lag(memory - 1 - j));
        }
        rho
    }

    fn start_epoch(&mut self) -> Result<()> {
        self.epoch += 1;
        self.tau = self.t + 1;
        self.gram.refresh()?;
        self.gram.start_epoch();
        self.psi = self.psi_reg.solve(self.epoch)?;
        self.optimism = OptimismTerms::from_gram(self.dims, self.gram.matrix(), &self.noise.bonus_covariance())?;
        self.meta = BfplState::new(
            self.keys.len(),
            self.params.horizon,
            self.params.delta,
            stream(self.seed, meta_stream(self.epoch)),
        )?;
        self.chosen = self.meta.current_leader;
        self.bank = Self::fresh_bank(&self.params, self.keys.len());
        self.current = DapParams::zeros(self.dims, self.params.r_m);
        Ok(())
    }

    fn expert_round(&mut self, cost: &dyn CostOracle) -> Result<(bool, f64)> {
        let psi = &self.psi.psi;
        let optimism = &self.optimism;
        let sim = &self.w_sim;
        let alpha = self.params.alpha;
        let dims = self.dims;
        let keys = &self.keys;
        let results: Vec<Result<f64>> = self
            .bank
            .par_iter_mut()
            .zip(keys.par_iter())
            .map(|(state, key)| {
                let m = DapParams { m: state.point.clone(), dims, radius: state.radius };
                let (value, grad) = expert_loss_and_grad(&m, key, cost, psi, optimism, sim, alpha)?;
                state.step(&grad)?;
                Ok(value)
            })
            .collect();
        let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
        let scale = loss_scale(psi, &self.params);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let scaled: Vec<f64> = values.iter().map(|v| v / scale).collect();
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let shifted = Vector::from_iterator(scaled.len(), scaled.iter().map(|v| v - min));
        let before = self.meta.clip_count;
        let leader = self.meta.step(&shifted)?;
        self.clip_count += self.meta.clip_count - before;
        let switched = leader != self.chosen;
        let chosen_loss = scaled[self.chosen];
        self.chosen = leader;
        self.current = DapParams { m: self.bank[leader].point.clone(), dims, radius: self.params.r_m };
        Ok((switched, chosen_loss))
    }
}

fn meta_stream(epoch: usize) -> u64 {
    (streams::META << 32) | epoch as u64
}

impl Learner for Controller {
    fn act(&mut self, x: &Vector) -> Result<Vector> {
        dim_check(x.len() == self.dims.dx, || "state dimension".into())?;
        let u = control_action(&self.current, &self.w_hat);
        self.last_x = Some(x.clone());
        self.last_u = Some(u.clone());
        Ok(u)
    }

    fn observe(&mut self, cost: &dyn CostOracle, x_next: &Vector) -> Result<()> {
        dim_check(x_next.len() == self.dims.dx, || "next state dimension".into())?;
        let (x, u) = match (self.last_x.take(), self.last_u.take()) {
            (Some(x), Some(u)) => (x, u),
            _ => return Err(Error::Config("observe called before act".into())),
        };
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state".into()));
        }
        let rho = self.observed_rho(&u);
        self.gram.update(&rho)?;
        self.psi_reg.add(&rho, x_next);
        let mut z = Vector::zeros(self.dims.dx + self.dims.du);
        z.rows_mut(0, self.dims.dx).copy_from(&x);
        z.rows_mut(self.dims.dx, self.dims.du).copy_from(&u);
        self.ab.update_and_solve(&z, x_next)?;
        let w_hat = estimate_noise(x_next, &self.ab.a(), &self.ab.b(), &x, &u, self.noise.bound);
        let w_sim = self.noise.sample(&mut self.sim_rng);

        let mut info = StepInfo { t: self.t, ..StepInfo::default() };
        if self.gram.epoch_should_advance() {
            self.start_epoch()?;
            info.new_epoch = true;
        } else if self.t >= self.tau + 2 * self.dims.memory {
            let key = self.keys[self.chosen];
            let (switched, loss) = self.expert_round(cost)?;
            if switched {
                self.total_switches += 1;
            }
            info.switched = switched;
            info.chosen_loss = Some(loss);
            info.key = Some(key);
        }
        info.epoch = self.epoch;
        info.m_norm = self.current.frobenius();
        info.logdet_v = self.gram.logdet();
        self.last_info = info;

        self.w_hat.push(w_hat);
        self.w_sim.push(w_sim);
        self.u_hist.pop();
        self.u_hist.insert(0, u);
        self.t += 1;
        Ok(())
    }
}
