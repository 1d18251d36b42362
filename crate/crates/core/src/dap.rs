//! Disturbance-action policies and their bounded-memory representations.
//!
//! A DAP with memory `H` plays `u_t = Σ_{h=1}^{H} M^[h] w_{t-h}`. The blocks
//! are stored side by side in one `d_u × H d_x` matrix `M = (M^[1] … M^[H])`.
//!
//! With that policy held fixed, the observation vector
//! `ρ_t = (u_{t+1-H}, …, u_t, w_{t+1-H}, …, w_{t-1})` is linear in the last
//! `2H − 1` disturbances, `ρ_t = P(M) w_{t+1-2H:t-1}`, and the truncated state
//! is `x_t(M; Ψ, w) = Ψ ρ_{t-1} + w_{t-1}`.

use std::collections::VecDeque;

use crate::error::dim_check;
use crate::system::{certify_strong_stability, LinearSystem};
use crate::{Matrix, Result, Vector};

/// Shape bookkeeping shared by everything that works with DAPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DapDims {
    pub dx: usize,
    pub du: usize,
    pub memory: usize,
}

impl DapDims {
    pub fn new(dx: usize, du: usize, memory: usize) -> Self {
        assert!(memory >= 1, "DAP memory must be at least 1");
        Self { dx, du, memory }
    }

    /// `d_Ψ = H d_u + (H − 1) d_x`.
    pub fn d_psi(&self) -> usize {
        self.memory * self.du + (self.memory - 1) * self.dx
    }

    /// Width of `P(M)`: `(2H − 1) d_x`.
    pub fn noise_span(&self) -> usize {
        (2 * self.memory - 1) * self.dx
    }
}

/// The concatenated DAP matrix together with its feasible radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DapParams {
    pub m: Matrix,
    pub dims: DapDims,
    pub radius: f64,
}

impl DapParams {
    pub fn zeros(dims: DapDims, radius: f64) -> Self {
        Self { m: Matrix::zeros(dims.du, dims.memory * dims.dx), dims, radius }
    }

    pub fn from_blocks(blocks: &[Matrix], radius: f64) -> Result<Self> {
        dim_check(!blocks.is_empty(), || "at least one DAP block".into())?;
        let (du, dx) = blocks[0].shape();
        dim_check(blocks.iter().all(|b| b.shape() == (du, dx)), || "DAP blocks differ in shape".into())?;
        let dims = DapDims::new(dx, du, blocks.len());
        let mut p = Self::zeros(dims, radius);
        for (h, b) in blocks.iter().enumerate() {
            p.m.view_mut((0, h * dx), (du, dx)).copy_from(b);
        }
        Ok(p)
    }

    pub fn from_matrix(m: Matrix, dims: DapDims, radius: f64) -> Result<Self> {
        dim_check(m.shape() == (dims.du, dims.memory * dims.dx), || format!("M is {:?}", m.shape()))?;
        Ok(Self { m, dims, radius })
    }

    /// Block `M^[h]`, `h` in `1..=H`.
    pub fn block(&self, h: usize) -> Matrix {
        let dx = self.dims.dx;
        self.m.view((0, (h - 1) * dx), (self.dims.du, dx)).into_owned()
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }
}

/// The last `2H` disturbances; entries before the first push are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseWindow {
    buf: VecDeque<Vector>,
    capacity: usize,
    dim: usize,
}

impl NoiseWindow {
    pub fn new(dim: usize, memory: usize) -> Self {
        let capacity = 2 * memory;
        Self { buf: (0..capacity).map(|_| Vector::zeros(dim)).collect(), capacity, dim }
    }

    pub fn push(&mut self, w: Vector) {
        debug_assert_eq!(w.len(), self.dim);
        self.buf.pop_back();
        self.buf.push_front(w);
    }

    /// `w_{t-h}` relative to the current time, `1 ≤ h ≤ 2H`.
    pub fn lag(&self, h: usize) -> &Vector {
        &self.buf[h - 1]
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Window whose lags are taken from `entries[h-1]`.
    pub fn from_lags(entries: Vec<Vector>) -> Self {
        let dim = entries.first().map_or(0, |v| v.len());
        assert!(entries.len() % 2 == 0 && !entries.is_empty(), "window length must be 2H");
        Self { capacity: entries.len(), buf: entries.into(), dim }
    }

    /// Concatenation `(w_{t+1-2H}, …, w_{t-1})`, oldest first, shifted back by `shift` steps.
    pub fn stacked(&self, memory: usize, shift: usize) -> Vector {
        let n = 2 * memory - 1;
        let mut out = Vector::zeros(n * self.dim);
        for i in 0..n {
            let lag = n - i + shift;
            out.rows_mut(i * self.dim, self.dim).copy_from(self.lag(lag));
        }
        out
    }
}

fn check_window(m: &DapParams, win: &NoiseWindow) {
    assert_eq!(win.dim(), m.dims.dx, "window dimension");
    assert!(win.capacity() >= 2 * m.dims.memory, "window shorter than 2H");
}

/// `u_{t-offset}(M; w) = Σ_h M^[h] w_{t-offset-h}`.
pub fn control_action_shifted(m: &DapParams, win: &NoiseWindow, offset: usize) -> Vector {
    let DapDims { dx, du, memory } = m.dims;
    let mut u = Vector::zeros(du);
    for h in 1..=memory {
        u.gemv(1.0, &m.m.view((0, (h - 1) * dx), (du, dx)), win.lag(h + offset), 1.0);
    }
    u
}

/// `u_t(M; w)`.
pub fn control_action(m: &DapParams, win: &NoiseWindow) -> Vector {
    check_window(m, win);
    control_action_shifted(m, win, 0)
}

/// The block-banded operator `P(M)` of shape `d_Ψ × (2H − 1) d_x`.
pub fn build_p(m: &DapParams) -> Matrix {
    let dims = m.dims;
    let DapDims { dx, du, memory } = dims;
    let mut p = Matrix::zeros(dims.d_psi(), dims.noise_span());
    for j in 0..memory {
        for h in 1..=memory {
            let col = j + memory - h;
            p.view_mut((j * du, col * dx), (du, dx)).copy_from(&m.m.view((0, (h - 1) * dx), (du, dx)));
        }
    }
    for i in 0..memory - 1 {
        p.view_mut((memory * du + i * dx, (memory + i) * dx), (dx, dx)).fill_with_identity();
    }
    p
}

/// `ρ_{t-shift}(M; w)` assembled directly from the window.
pub fn rho_shifted(m: &DapParams, win: &NoiseWindow, shift: usize) -> Vector {
    let dims = m.dims;
    let DapDims { dx, du, memory } = dims;
    let mut out = Vector::zeros(dims.d_psi());
    for j in 0..memory {
        // u_{t+1-H+j}
        let u = control_action_shifted(m, win, memory - 1 - j + shift);
        out.rows_mut(j * du, du).copy_from(&u);
    }
    for j in 0..memory - 1 {
        // w_{t+1-H+j}
        out.rows_mut(memory * du + j * dx, dx).copy_from(win.lag(memory - 1 - j + shift));
    }
    out
}

/// `ρ_t(M; w) = (u_{t+1-H}, …, u_t, w_{t+1-H}, …, w_{t-1})`.
pub fn rho(m: &DapParams, win: &NoiseWindow) -> Vector {
    check_window(m, win);
    rho_shifted(m, win, 0)
}

/// `x_t(M; Ψ, w) = Ψ ρ_{t-1}(M; w) + w_{t-1}`.
pub fn x_trunc(m: &DapParams, psi: &Matrix, win: &NoiseWindow) -> Vector {
    check_window(m, win);
    assert_eq!(psi.shape(), (m.dims.dx, m.dims.d_psi()), "Ψ shape");
    psi * rho_shifted(m, win, 1) + win.lag(1)
}

/// Radial projection onto `{‖M‖_F ≤ radius}`.
pub fn project_frobenius(m: &DapParams, radius: f64) -> DapParams {
    let n = m.frobenius();
    let mut out = m.clone();
    if n > radius {
        out.m *= radius / n;
    }
    out
}

/// `M^[h] = K (A + B K)^{h-1}`, the DAP that imitates the linear policy `u = K x`.
pub fn dap_from_linear(k: &Matrix, sys: &LinearSystem, memory: usize, radius: f64) -> Result<DapParams> {
    certify_strong_stability(k, sys)?;
    let closed = &sys.a + &sys.b * k;
    let mut power = Matrix::identity(sys.dx(), sys.dx());
    let mut blocks = Vec::with_capacity(memory);
    for _ in 0..memory {
        blocks.push(k * &power);
        power = &closed * power;
    }
    DapParams::from_blocks(&blocks, radius)
}

/// The true unrolled model `Ψ★ = [A^{H-1}B, …, AB, B, A^{H-1}, …, A]`.
pub fn unrolled_model(a: &Matrix, b: &Matrix, memory: usize) -> Matrix {
    let (dx, du) = (a.nrows(), b.ncols());
    let dims = DapDims::new(dx, du, memory);
    let mut psi = Matrix::zeros(dx, dims.d_psi());
    let mut powers = vec![Matrix::identity(dx, dx)];
    for i in 1..memory {
        powers.push(a * &powers[i - 1]);
    }
    for j in 0..memory {
        // column block j multiplies u_{t+1-H+j}: A^{H-1-j} B
        psi.view_mut((0, j * du), (dx, du)).copy_from(&(&powers[memory - 1 - j] * b));
    }
    for j in 0..memory - 1 {
        psi.view_mut((0, memory * du + j * dx), (dx, dx)).copy_from(&powers[memory - 1 - j]);
    }
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::NoiseModel;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn window(vals: &[f64]) -> NoiseWindow {
        NoiseWindow::from_lags(vals.iter().map(|&v| Vector::from_element(1, v)).collect())
    }

    #[test]
    fn zero_policy_acts_zero() {
        let m = DapParams::zeros(DapDims::new(2, 3, 3), 1.0);
        let mut win = NoiseWindow::new(2, 3);
        win.push(Vector::from_element(2, 1.0));
        assert_eq!(control_action(&m, &win), Vector::zeros(3));
    }

    #[test]
    fn single_term_action() {
        let m = DapParams::from_blocks(&[s(0.5)], 1.0).unwrap();
        assert_eq!(control_action(&m, &window(&[2.0, 0.0]))[0], 1.0);
    }

    #[test]
    fn p_matrix_h2_scalar() {
        let m = DapParams::from_blocks(&[s(0.5), s(0.25)], 1.0).unwrap();
        let expected = Matrix::from_row_slice(3, 3, &[0.25, 0.5, 0.0, 0.0, 0.25, 0.5, 0.0, 0.0, 1.0]);
        assert_eq!(build_p(&m), expected);
    }

    #[test]
    fn p_matrix_zero_and_shape() {
        let dims = DapDims::new(3, 2, 2);
        let p = build_p(&DapParams::zeros(dims, 1.0));
        assert_eq!(p.shape(), (7, 9));
        assert!(p.view((0, 0), (4, 9)).iter().all(|&v| v == 0.0));
        assert_eq!(p.view((4, 6), (3, 3)).into_owned(), Matrix::identity(3, 3));
    }

    #[test]
    fn rho_of_zero_window() {
        let m = DapParams::from_blocks(&[s(0.5), s(-1.0)], 2.0).unwrap();
        assert_eq!(rho(&m, &NoiseWindow::new(1, 2)), Vector::zeros(3));
    }

    #[test]
    fn rho_memory_one_is_action() {
        let m = DapParams::from_blocks(&[Matrix::from_row_slice(2, 1, &[1.0, -2.0])], 3.0).unwrap();
        let win = window(&[1.5, 7.0]);
        assert_eq!(m.dims.d_psi(), 2);
        assert_eq!(rho(&m, &win), control_action(&m, &win));
    }

    #[test]
    fn x_trunc_examples() {
        let m = DapParams::from_blocks(&[s(0.5)], 1.0).unwrap();
        let win = window(&[3.0, 2.0]);
        assert_eq!(x_trunc(&m, &Matrix::zeros(1, 1), &win)[0], 3.0);
        // ρ_{t-1} = u_{t-1} = 0.5 · w_{t-2} = 1.0
        assert_eq!(x_trunc(&m, &s(0.7), &win)[0], 0.7 * 1.0 + 3.0);
    }

    #[test]
    fn x_trunc_zero_policy_is_unrolled_noise() {
        let a = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let h = 3;
        let psi = unrolled_model(&a, &b, h);
        let lags: Vec<Vector> = (0..2 * h).map(|i| Vector::from_column_slice(&[i as f64 + 1.0, -(i as f64)])).collect();
        let win = NoiseWindow::from_lags(lags);
        let m = DapParams::zeros(DapDims::new(2, 1, h), 1.0);
        let got = x_trunc(&m, &psi, &win);
        let mut expected = Vector::zeros(2);
        let mut p = Matrix::identity(2, 2);
        for i in 1..=h {
            expected += &p * win.lag(i);
            p = &a * p;
        }
        assert!((got - expected).amax() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let m = DapParams::from_blocks(&[s(0.3), s(0.4)], 1.0).unwrap();
        assert_eq!(project_frobenius(&m, 1.0), m);
        let p = project_frobenius(&m, 0.25);
        assert!((p.m[(0, 0)] - 0.15).abs() < 1e-15 && (p.m[(0, 1)] - 0.2).abs() < 1e-15);
        let z = DapParams::zeros(m.dims, 1.0);
        assert_eq!(project_frobenius(&z, 1.0), z);
    }

    #[test]
    fn dap_from_zero_gain() {
        let sys = LinearSystem::new(s(0.5), s(1.0), NoiseModel::uniform_ball(1, 1.0)).unwrap();
        let m = dap_from_linear(&s(0.0), &sys, 4, 1.0).unwrap();
        assert_eq!(m.m, Matrix::zeros(1, 4));
    }

    #[test]
    fn dap_from_nilpotent_gain_matches_linear_policy() {
        let sys = LinearSystem::new(s(0.5), s(1.0), NoiseModel::uniform_ball(1, 1.0)).unwrap();
        let k = s(-0.5);
        let m = dap_from_linear(&k, &sys, 3, 1.0).unwrap();
        assert_eq!(m.m, Matrix::from_row_slice(1, 3, &[-0.5, 0.0, 0.0]));
        let mut rng = crate::rng::stream(5, 0);
        let mut x = Vector::zeros(1);
        let mut win = NoiseWindow::new(1, 3);
        for t in 1..50 {
            let u_lin = &k * &x;
            let u_dap = control_action(&m, &win);
            if t >= 2 {
                assert_eq!(u_lin, u_dap);
            }
            let (next, w) = sys.step(&x, &u_lin, &mut rng).unwrap();
            win.push(w);
            x = next;
        }
    }

    #[test]
    fn dap_from_unstable_gain_fails() {
        let sys = LinearSystem::new(s(0.5), s(1.0), NoiseModel::uniform_ball(1, 1.0)).unwrap();
        assert!(dap_from_linear(&s(0.7), &sys, 3, 1.0).is_err());
    }
}
