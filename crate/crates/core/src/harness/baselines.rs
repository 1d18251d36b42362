//! Non-adaptive learners used as baselines.

use rand_distr::{Distribution, StandardNormal};

use crate::controller::{surrogate_loss_and_grad, AlgParams};
use crate::costs::CostOracle;
use crate::dap::{control_action, DapParams, NoiseWindow};
use crate::error::dim_check;
use crate::estimation::{estimate_noise, AbEstimate, PsiRegression};
use crate::oco::OgdState;
use crate::rng::RandomStream;
use crate::system::Learner;
use crate::{Error, Matrix, Result, Vector};

/// `u = K x`.
pub struct FixedGain {
    pub k: Matrix,
}

impl Learner for FixedGain {
    fn act(&mut self, x: &Vector) -> Result<Vector> {
        dim_check(x.len() == self.k.ncols(), || "state dimension".into())?;
        Ok(&self.k * x)
    }

    fn observe(&mut self, _: &dyn CostOracle, _: &Vector) -> Result<()> {
        Ok(())
    }
}

/// Length of the exploration phase, `⌈T^{2/3}⌉`.
pub fn exploration_length(horizon: usize) -> usize {
    let t = horizon as f64;
    let n = t.powf(2.0 / 3.0);
    // guard against 8^(2/3) = 3.9999999999999996
    let r = n.round();
    if (n - r).abs() < 1e-9 { r as usize } else { n.ceil() as usize }
}

/// Explore-then-exploit: isotropic Gaussian controls for `⌈T^{2/3}⌉` steps,
/// one ridge fit of `Ψ`, then plain OGD on the surrogate cost over the
/// estimated disturbances with `Ψ̂` frozen.
pub struct ExploreExploit {
    pub params: AlgParams,
    pub explore_len: usize,
    pub scale: f64,
    noise_bound: f64,
    pub t: usize,
    ab: AbEstimate,
    psi_reg: PsiRegression,
    pub psi: Option<Matrix>,
    w_hat: NoiseWindow,
    u_hist: Vec<Vector>,
    pub ogd: OgdState<Matrix>,
    rng: RandomStream,
    last: Option<(Vector, Vector)>,
}

impl ExploreExploit {
    pub fn new(params: AlgParams, noise_bound: f64, scale: f64, rng: RandomStream) -> Self {
        let d = params.dims();
        Self {
            explore_len: exploration_length(params.horizon),
            scale,
            noise_bound,
            t: 1,
            ab: AbEstimate::new(d.dx, d.du, params.lambda_w),
            psi_reg: PsiRegression::new(d.dx, d.d_psi(), params.lambda_psi),
            psi: None,
            w_hat: NoiseWindow::new(d.dx, d.memory),
            u_hist: vec![Vector::zeros(d.du); d.memory],
            ogd: OgdState::new(Matrix::zeros(d.du, d.memory * d.dx), params.eta_g, params.r_m),
            rng,
            last: None,
            params,
        }
    }

    pub fn exploring(&self) -> bool {
        self.t <= self.explore_len
    }

    fn policy(&self) -> DapParams {
        DapParams { m: self.ogd.point.clone(), dims: self.params.dims(), radius: self.params.r_m }
    }

    fn observed_rho(&self, u_t: &Vector) -> Vector {
        let d = self.params.dims();
        let mut rho = Vector::zeros(d.d_psi());
        for j in 0..d.memory {
            let back = d.memory - 1 - j;
            let u = if back == 0 { u_t } else { &self.u_hist[back - 1] };
            rho.rows_mut(j * d.du, d.du).copy_from(u);
        }
        for j in 0..d.memory - 1 {
            rho.rows_mut(d.memory * d.du + j * d.dx, d.dx).copy_from(self.w_hat.lag(d.memory - 1 - j));
        }
        rho
    }
}

impl Learner for ExploreExploit {
    fn act(&mut self, x: &Vector) -> Result<Vector> {
        let d = self.params.dims();
        dim_check(x.len() == d.dx, || "state dimension".into())?;
        let u = if self.exploring() {
            let rng = &mut self.rng;
            Vector::from_fn(d.du, |_, _| StandardNormal.sample(rng)) * self.scale
        } else {
            control_action(&self.policy(), &self.w_hat)
        };
        self.last = Some((x.clone(), u.clone()));
        Ok(u)
    }

    fn observe(&mut self, cost: &dyn CostOracle, x_next: &Vector) -> Result<()> {
        let d = self.params.dims();
        let (x, u) = self.last.take().ok_or_else(|| Error::Config("observe called before act".into()))?;
        if self.exploring() {
            let rho = self.observed_rho(&u);
            self.psi_reg.add(&rho, x_next);
            if self.t == self.explore_len {
                self.psi = Some(self.psi_reg.solve(1)?.psi);
            }
        } else {
            let psi = self.psi.as_ref().expect("Ψ̂ is solved when exploration ends");
            let (_, g) = surrogate_loss_and_grad(&self.policy(), cost, psi, &self.w_hat)?;
            self.ogd.step(&g)?;
        }
        let mut z = Vector::zeros(d.dx + d.du);
        z.rows_mut(0, d.dx).copy_from(&x);
        z.rows_mut(d.dx, d.du).copy_from(&u);
        self.ab.update_and_solve(&z, x_next)?;
        let w = estimate_noise(x_next, &self.ab.a(), &self.ab.b(), &x, &u, self.noise_bound);
        self.w_hat.push(w);
        self.u_hist.pop();
        self.u_hist.insert(0, u);
        self.t += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_lengths() {
        assert_eq!(exploration_length(8), 4);
        assert_eq!(exploration_length(27), 9);
        assert_eq!(exploration_length(10), 5);
        assert_eq!(exploration_length(2000), 159);
    }
}
