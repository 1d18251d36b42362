//! Online convex optimization when the loss is seen through an unknown linear
//! map: the learner plays `a_t`, observes `y_{t+1} = Q★ a_t + w_t` and pays
//! `ℓ_t(Q★ a_t)`.
//!
//! `2 d_a` OGD experts each minimize one optimistic piece
//! `ℓ_t(Q̂ a) − α χ [V^{-1/2} a]_k`, and multiplicative weights picks among
//! them. `Q̂` and `V^{-1/2}` are refreshed only when `det V` doubles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costs::VectorLoss;
use crate::error::dim_check;
use crate::estimation::GramState;
use crate::linalg::{ridge_right_solve, sym_inv_sqrt};
use crate::oco::{MwState, OgdState};
use crate::rng::{stream, streams, RandomStream};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HltParams {
    pub eta_g: f64,
    pub eta_m: f64,
    pub lambda: f64,
    /// Optimism weight actually used (theoretical value times `alpha_scale`).
    pub alpha: f64,
    pub alpha_scale: f64,
    pub r_a: f64,
    pub r_q: f64,
    pub w_bound: f64,
    pub da: usize,
    pub dy: usize,
    pub horizon: usize,
    pub delta: f64,
}

/// Parameters of the regret theorem for the hidden-transform learner.
pub fn hlt_params(r_a: f64, r_q: f64, w_bound: f64, da: usize, dy: usize, horizon: usize, delta: f64) -> Result<HltParams> {
    if horizon < 8 {
        return Err(Error::Config("horizon T must be at least 8".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("δ must lie in (0, 1)".into()));
    }
    if !(r_a > 0.0) || r_q < 0.0 || w_bound < 0.0 || da == 0 || dy == 0 {
        return Err(Error::Config("need R_a > 0, R_Q, W ≥ 0 and positive dimensions".into()));
    }
    let mut p = HltParams {
        eta_g: 0.0,
        eta_m: 0.0,
        lambda: r_a * r_a,
        alpha: 0.0,
        alpha_scale: 1.0,
        r_a,
        r_q,
        w_bound,
        da,
        dy,
        horizon,
        delta,
    };
    p.recompute();
    Ok(p)
}

impl HltParams {
    pub fn theoretical_alpha(&self) -> f64 {
        let t = self.horizon as f64;
        (self.da as f64).sqrt()
            * (self.w_bound * self.dy as f64 * (8.0 * (2.0 * t / self.delta).ln()).sqrt()
                + 2f64.sqrt() * self.r_a * self.r_q)
    }

    /// Recompute `α`, `η_G`, `η_M` from the bounds and `alpha_scale`.
    pub fn recompute(&mut self) {
        let st = (self.horizon as f64).sqrt();
        self.alpha = self.theoretical_alpha() * self.alpha_scale;
        let a = self.alpha;
        self.eta_g = self.r_a / ((2.0 * a / self.r_a + self.r_q) * st);
        self.eta_m = (2.0 * self.da as f64).ln().sqrt() / (2.0 * (2.0 * a + self.r_a * self.r_q) * st);
    }

    pub fn with_alpha_scale(mut self, scale: f64) -> Self {
        self.alpha_scale = scale;
        self.recompute();
        self
    }

    pub fn expert_count(&self) -> usize {
        2 * self.da
    }
}

/// `ℓ(Q̂ a) − α χ [V^{-1/2} a]_k` and its gradient in `a`.
pub fn optimistic_expert_loss(
    a: &Vector,
    k: usize,
    chi: i8,
    loss: &dyn VectorLoss,
    qhat: &Matrix,
    v_inv_sqrt: &Matrix,
    alpha: f64,
) -> Result<(f64, Vector)> {
    dim_check(qhat.ncols() == a.len() && v_inv_sqrt.shape() == (a.len(), a.len()), || "Q̂ / V shapes".into())?;
    let y = qhat * a;
    let chi = f64::from(chi);
    let row = v_inv_sqrt.row(k);
    let value = loss.value(&y) - alpha * chi * row.dot(&a.transpose());
    let g = loss.gradient(&y);
    dim_check(g.len() == qhat.nrows(), || "loss gradient length".into())?;
    let grad = qhat.transpose() * g - row.transpose() * (alpha * chi);
    if !value.is_finite() {
        return Err(Error::NonFinite("expert loss".into()));
    }
    Ok((value, grad))
}

/// Expert `(k, χ)` for index `i`: `k = i / 2`, `χ = +1` for even `i`.
pub fn expert_key(i: usize) -> (usize, i8) {
    (i / 2, if i % 2 == 0 { 1 } else { -1 })
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HltStep {
    pub t: usize,
    pub epoch: usize,
    pub key: usize,
    pub new_epoch: bool,
    pub logdet_v: f64,
}

pub struct HltLearner {
    pub params: HltParams,
    pub t: usize,
    pub epoch: usize,
    pub gram: GramState,
    moment_ya: Matrix,
    pub qhat: Matrix,
    pub v_inv_sqrt: Matrix,
    experts: Vec<OgdState<Vector>>,
    pub mw: MwState,
    rng: RandomStream,
    last: Option<(Vector, usize)>,
    pub last_step: HltStep,
}

impl HltLearner {
    pub fn new(params: HltParams, seed: u64) -> Result<Self> {
        let (da, dy) = (params.da, params.dy);
        if !(params.eta_g.is_finite() && params.eta_g > 0.0 && params.eta_m.is_finite() && params.eta_m > 0.0) {
            return Err(Error::Config("learning rates must be positive and finite".into()));
        }
        let gram = GramState::new(da, params.lambda);
        let v_inv_sqrt = sym_inv_sqrt(gram.matrix())?;
        let experts = (0..2 * da).map(|_| OgdState::new(Vector::zeros(da), params.eta_g, params.r_a / 2.0)).collect();
        Ok(Self {
            t: 1,
            epoch: 1,
            gram,
            moment_ya: Matrix::zeros(dy, da),
            qhat: Matrix::zeros(dy, da),
            v_inv_sqrt,
            experts,
            mw: MwState::uniform(2 * da, params.eta_m),
            rng: stream(seed, streams::SAMPLING),
            last: None,
            last_step: HltStep::default(),
            params,
        })
    }

    /// Current actions of all experts.
    pub fn actions(&self) -> impl Iterator<Item = &Vector> {
        self.experts.iter().map(|e| &e.point)
    }

    /// Overwrite an expert's action (projected onto the feasible ball).
    pub fn set_action(&mut self, i: usize, a: Vector) {
        let s = &mut self.experts[i];
        *s = OgdState::new(a, s.eta, s.radius);
    }

    /// Draw a key from the weights and play that expert's action.
    pub fn act(&mut self) -> (Vector, usize) {
        let i = self.mw.sample(&mut self.rng);
        let a = self.experts[i].point.clone();
        self.last = Some((a.clone(), i));
        (a, i)
    }

    /// Ridge estimate from all data so far (not the frozen epoch estimate).
    pub fn running_estimate(&self) -> Result<Matrix> {
        let gram = self.gram.matrix() - Matrix::identity(self.params.da, self.params.da) * self.params.lambda;
        ridge_right_solve(&self.moment_ya, &gram, self.params.lambda)
    }

    pub fn observe(&mut self, y_next: &Vector, loss: &dyn VectorLoss) -> Result<()> {
        dim_check(y_next.len() == self.params.dy, || "observation dimension".into())?;
        if y_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        let (a, key) = self.last.take().ok_or_else(|| Error::Config("observe called before act".into()))?;
        self.gram.update(&a)?;
        self.moment_ya.ger(1.0, y_next, &a, 1.0);
        let mut step = HltStep { t: self.t, key, ..HltStep::default() };
        if self.gram.epoch_should_advance() {
            self.epoch += 1;
            self.gram.refresh()?;
            self.gram.start_epoch();
            self.mw.reset_uniform();
            self.qhat = self.running_estimate()?;
            self.v_inv_sqrt = sym_inv_sqrt(self.gram.matrix())?;
            step.new_epoch = true;
        } else {
            let mut losses = Vector::zeros(self.experts.len());
            for (i, e) in self.experts.iter_mut().enumerate() {
                let (k, chi) = expert_key(i);
                let (v, g) = optimistic_expert_loss(&e.point, k, chi, loss, &self.qhat, &self.v_inv_sqrt, self.params.alpha)?;
                losses[i] = v;
                e.step(&g)?;
            }
            self.mw.update(&losses)?;
        }
        step.epoch = self.epoch;
        step.logdet_v = self.gram.logdet();
        self.last_step = step;
        self.t += 1;
        Ok(())
    }

    /// `‖Δ‖_V = ‖Δ V^{1/2}‖₂` for the current `V`.
    pub fn v_norm(&self, delta: &Matrix) -> Result<f64> {
        v_weighted_norm(delta, self.gram.matrix())
    }

    /// Draws an index uniformly; used for probing in tests and diagnostics.
    pub fn rng_mut(&mut self) -> &mut RandomStream {
        &mut self.rng
    }
}

/// `‖Δ‖_V = sqrt(λ_max(Δ V Δᵀ))`.
pub fn v_weighted_norm(delta: &Matrix, v: &Matrix) -> Result<f64> {
    let m = delta * v * delta.transpose();
    let e = nalgebra::SymmetricEigen::new((&m + m.transpose()) * 0.5);
    Ok(e.eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt())
}

/// Uniform point in the ball of radius `r`, handy for probes.
pub fn ball_probe(rng: &mut RandomStream, dim: usize, r: f64) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        if v.norm() <= 1.0 {
            return v * r;
        }
    }
}
