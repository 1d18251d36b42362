//! Policies evaluated in hindsight on the same noise tape as the learner.

use rand::Rng;
use rayon::prelude::*;

use crate::controller::surrogate_loss_and_grad;
use crate::costs::{CostOracle, StateLoss, VectorLoss};
use crate::dap::{control_action, DapDims, DapParams, NoiseWindow};
use crate::harness::CostProvider;
use crate::linalg::project_ball;
use crate::rng::RandomStream;
use crate::system::StabilizedCost;
use crate::{Matrix, Result, Vector};

/// Number of projected-gradient restarts for the best-DAP search.
pub const RESTARTS: usize = 5;

/// Window at time `t` (1-based): lag `h` is `w_{t-h}`, zero before the start.
pub fn window_at(tape: &[Vector], t: usize, memory: usize) -> NoiseWindow {
    let dim = tape.first().map_or(0, |w| w.len());
    let lags = (1..=2 * memory)
        .map(|h| if t > h { tape[t - h - 1].clone() } else { Vector::zeros(dim) })
        .collect();
    NoiseWindow::from_lags(lags)
}

/// Sum of `c_t(x_t(M; Ψ, w), K0 x_t + u_t(M; w))` over the tape and its gradient.
fn truncated_objective(
    m: &DapParams,
    windows: &[NoiseWindow],
    costs: &dyn CostProvider,
    psi: &Matrix,
    k0: &Matrix,
) -> Result<(f64, Matrix)> {
    let mut total = 0.0;
    let mut grad = Matrix::zeros(m.m.nrows(), m.m.ncols());
    for (i, win) in windows.iter().enumerate() {
        let c = costs.cost_at(i + 1);
        let shifted = StabilizedCost::with_scale(c.as_ref(), k0, 1.0);
        let (v, g) = surrogate_loss_and_grad(m, &shifted, psi, win)?;
        total += v;
        grad += g;
    }
    Ok((total, grad))
}

fn random_in_ball(rng: &mut RandomStream, rows: usize, cols: usize, radius: f64) -> Matrix {
    let m = Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let scale: f64 = rng.random::<f64>().powf(1.0 / (rows * cols) as f64) * radius / m.norm().max(1e-300);
    m * scale
}

/// Best DAP policy for the truncated model `Ψ`, by projected gradient with
/// `budget` iterations from `0` and from `RESTARTS − 1` random starts.
///
/// `k0` (possibly zero) is added to the DAP control, matching a wrapped
/// learner. Returns the minimizer and its truncated objective.
pub fn best_dap_in_hindsight(
    tape: &[Vector],
    costs: &dyn CostProvider,
    psi: &Matrix,
    k0: &Matrix,
    dims: DapDims,
    r_m: f64,
    budget: usize,
    rng: &mut RandomStream,
) -> Result<(DapParams, f64)> {
    let windows: Vec<NoiseWindow> = (1..=tape.len()).map(|t| window_at(tape, t, dims.memory)).collect();
    let mut starts = vec![Matrix::zeros(dims.du, dims.memory * dims.dx)];
    for _ in 1..RESTARTS {
        starts.push(random_in_ball(rng, dims.du, dims.memory * dims.dx, r_m));
    }
    let w_max = tape.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let h = dims.memory as f64;
    let lip = (w_max * (h * h * psi.norm_squared() + h).sqrt() * (1.0 + k0.norm())).max(1e-12);
    let runs: Vec<Result<(DapParams, f64)>> = starts
        .into_par_iter()
        .map(|m0| {
            let mut m = DapParams::from_matrix(m0, dims, r_m)?;
            let n = windows.len().max(1) as f64;
            let mut best = (m.clone(), f64::INFINITY);
            for k in 0..=budget {
                let (v, g) = truncated_objective(&m, &windows, costs, psi, k0)?;
                if v < best.1 {
                    best = (m.clone(), v);
                }
                if k == budget {
                    break;
                }
                let eta = r_m / (lip * ((k + 1) as f64).sqrt());
                m.m -= g * (eta / n);
                let norm = m.m.norm();
                if norm > r_m {
                    m.m *= r_m / norm;
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(DapParams, f64)> = None;
    for r in runs {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.1 < b.1) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Realized per-step costs of the DAP `M` on the true plant `(A, B)`,
/// playing `u_t = K0 x_t + Σ_h M^[h] w_{t-h}` with the true disturbances.
pub fn simulate_dap(a: &Matrix, b: &Matrix, k0: &Matrix, m: &DapParams, tape: &[Vector], costs: &dyn CostProvider) -> Vec<f64> {
    let mut win = NoiseWindow::new(a.nrows(), m.dims.memory);
    let mut x = Vector::zeros(a.nrows());
    let mut out = Vec::with_capacity(tape.len());
    for (i, w) in tape.iter().enumerate() {
        let u = k0 * &x + control_action(m, &win);
        out.push(costs.cost_at(i + 1).evaluate(&x, &u));
        x = a * &x + b * &u + w;
        win.push(w.clone());
    }
    out
}

/// Realized per-step costs of `u = K x` on the true plant.
pub fn simulate_linear(a: &Matrix, b: &Matrix, k: &Matrix, tape: &[Vector], costs: &dyn CostProvider) -> Vec<f64> {
    let mut x = Vector::zeros(a.nrows());
    let mut out = Vec::with_capacity(tape.len());
    for (i, w) in tape.iter().enumerate() {
        let u = k * &x;
        out.push(costs.cost_at(i + 1).evaluate(&x, &u));
        x = a * &x + b * &u + w;
    }
    out
}

/// Best fixed action `a`, `‖a‖ ≤ radius`, for the losses `ℓ_t(Q a) = c_t(Q a, 0)`,
/// by projected gradient. Returns the action and its per-step losses.
pub fn best_fixed_action(
    q: &Matrix,
    costs: &dyn CostProvider,
    horizon: usize,
    radius: f64,
    budget: usize,
    rng: &mut RandomStream,
) -> (Vector, Vec<f64>) {
    let da = q.ncols();
    let du = costs.du();
    let oracles: Vec<Box<dyn CostOracle>> = (1..=horizon).map(|t| costs.cost_at(t)).collect();
    let objective = |a: &Vector| -> (f64, Vector) {
        let y = q * a;
        let mut v = 0.0;
        let mut g = Vector::zeros(da);
        for c in &oracles {
            let l = StateLoss { cost: c.as_ref(), du };
            v += l.value(&y);
            g += q.transpose() * l.gradient(&y);
        }
        (v, g)
    };
    let lip = crate::linalg::op_norm(q).max(1e-12);
    let mut starts = vec![Vector::zeros(da)];
    for _ in 1..RESTARTS {
        let v = Vector::from_fn(da, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        starts.push(project_ball(&v, radius));
    }
    let n = horizon.max(1) as f64;
    let mut best = (Vector::zeros(da), f64::INFINITY);
    for mut a in starts {
        for k in 0..=budget {
            let (v, g) = objective(&a);
            if v < best.1 {
                best = (a.clone(), v);
            }
            if k == budget {
                break;
            }
            let eta = radius / (lip * ((k + 1) as f64).sqrt());
            a = project_ball(&(a - g * (eta / n)), radius);
        }
    }
    let y = q * &best.0;
    let losses = oracles.iter().map(|c| StateLoss { cost: c.as_ref(), du }.value(&y)).collect();
    (best.0, losses)
}
