//! Online convex optimization primitives: projected online gradient descent,
//! multiplicative weights (Hedge), and a batched follow-the-perturbed-leader
//! experts algorithm with few leader switches.

use rand::Rng;

use crate::rng::RandomStream;
use crate::{Error, Matrix, Result, Vector};

/// Points that OGD can move around a centered Euclidean ball.
pub trait BallPoint: Clone {
    fn norm2(&self) -> f64;
    fn scaled(&mut self, s: f64);
    fn add_scaled(&mut self, s: f64, other: &Self);
    fn is_finite(&self) -> bool;
}

impl BallPoint for Vector {
    fn norm2(&self) -> f64 {
        self.norm()
    }
    fn scaled(&mut self, s: f64) {
        *self *= s;
    }
    fn add_scaled(&mut self, s: f64, other: &Self) {
        self.axpy(s, other, 1.0);
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl BallPoint for Matrix {
    fn norm2(&self) -> f64 {
        self.norm()
    }
    fn scaled(&mut self, s: f64) {
        *self *= s;
    }
    fn add_scaled(&mut self, s: f64, other: &Self) {
        self.zip_apply(other, |a, b| *a += s * b);
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Projected OGD over the ball of the given radius (Frobenius for matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct OgdState<P> {
    pub point: P,
    pub eta: f64,
    pub radius: f64,
}

impl<P: BallPoint> OgdState<P> {
    pub fn new(point: P, eta: f64, radius: f64) -> Self {
        let mut s = Self { point, eta, radius };
        s.project();
        s
    }

    fn project(&mut self) {
        let n = self.point.norm2();
        if n > self.radius {
            self.point.scaled(self.radius / n);
        }
    }

    /// `x ← Π[x − η g]`.
    pub fn step(&mut self, gradient: &P) -> Result<()> {
        if !gradient.is_finite() {
            return Err(Error::NonFinite("OGD gradient".into()));
        }
        self.point.add_scaled(-self.eta, gradient);
        self.project();
        Ok(())
    }
}

/// Free function form of [`OgdState::step`].
pub fn ogd_step<P: BallPoint>(s: &mut OgdState<P>, gradient: &P) -> Result<()> {
    s.step(gradient)
}

/// Hedge with log-domain weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MwState {
    log_weights: Vector,
    pub eta: f64,
}

impl MwState {
    pub fn uniform(n: usize, eta: f64) -> Self {
        assert!(n > 0, "Hedge needs at least one expert");
        Self { log_weights: Vector::from_element(n, -(n as f64).ln()), eta }
    }

    /// Learning rate `sqrt(log n / (4 T C̄²))`.
    pub fn default_eta(n: usize, horizon: usize, loss_scale: f64) -> f64 {
        ((n as f64).ln() / (4.0 * horizon as f64 * loss_scale * loss_scale)).sqrt()
    }

    pub fn from_probabilities(p: &[f64], eta: f64) -> Self {
        Self { log_weights: Vector::from_iterator(p.len(), p.iter().map(|v| v.ln())), eta }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &Vector {
        &self.log_weights
    }

    pub fn probabilities(&self) -> Vector {
        let m = self.log_weights.max();
        let e = self.log_weights.map(|l| (l - m).exp());
        let s = e.sum();
        e / s
    }

    /// `p_{t+1} ∝ p_t exp(−η ℓ_t)`.
    pub fn update(&mut self, losses: &Vector) -> Result<()> {
        if losses.len() != self.len() {
            return Err(Error::Dimension(format!("{} losses for {} experts", losses.len(), self.len())));
        }
        if losses.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Hedge loss".into()));
        }
        self.log_weights.axpy(-self.eta, losses, 1.0);
        let m = self.log_weights.max();
        let lse = m + self.log_weights.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        self.log_weights.add_scalar_mut(-lse);
        Ok(())
    }

    pub fn reset_uniform(&mut self) {
        let n = self.len();
        self.log_weights.fill(-(n as f64).ln());
    }

    /// Draw an index from the current distribution.
    pub fn sample(&self, rng: &mut RandomStream) -> usize {
        let p = self.probabilities();
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if r < acc {
                return i;
            }
        }
        // rounding left r just above the total mass
        p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
    }
}

pub fn mw_update(s: &mut MwState, losses: &Vector) -> Result<()> {
    s.update(losses)
}

pub fn mw_sample(s: &MwState, rng: &mut RandomStream) -> usize {
    s.sample(rng)
}

/// Batched follow-the-perturbed-leader.
///
/// Each coordinate carries an exponential perturbation (mean `scale`) that is
/// held fixed for a batch; the leader is the lowest-index argmin of
/// `cumulative − perturbation`. After `switch_budget` leader changes in a
/// batch, the perturbation is redrawn.
#[derive(Debug, Clone)]
pub struct BfplState {
    pub n: usize,
    pub cumulative: Vector,
    pub perturbation: Vector,
    pub current_leader: usize,
    pub batch_switches: usize,
    pub switch_budget: usize,
    pub total_switches: usize,
    pub batches: usize,
    pub delta: f64,
    pub scale: f64,
    /// Loss entries outside `[0, 1]` that were clipped.
    pub clip_count: usize,
    rng: RandomStream,
}

fn log_n(n: usize) -> f64 {
    (n.max(2) as f64).ln()
}

/// Perturbation mean `sqrt(T / log n)`.
pub fn bfpl_scale(n: usize, horizon: usize) -> f64 {
    (horizon as f64 / log_n(n)).sqrt()
}

/// Switches per batch `⌈sqrt(T log n / log(2/δ))⌉`.
pub fn bfpl_switch_budget(n: usize, horizon: usize, delta: f64) -> usize {
    ((horizon as f64 * log_n(n) / (2.0 / delta).ln()).sqrt().ceil() as usize).max(1)
}

impl BfplState {
    pub fn new(n: usize, horizon: usize, delta: f64, rng: RandomStream) -> Result<Self> {
        Self::with_parameters(n, bfpl_switch_budget(n, horizon, delta), bfpl_scale(n, horizon), delta, rng)
    }

    /// Explicit budget and perturbation scale; `scale = 0` gives a plain leader.
    pub fn with_parameters(n: usize, switch_budget: usize, scale: f64, delta: f64, rng: RandomStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("BFPL needs at least one expert".into()));
        }
        let mut s = Self {
            n,
            cumulative: Vector::zeros(n),
            perturbation: Vector::zeros(n),
            current_leader: 0,
            batch_switches: 0,
            switch_budget: switch_budget.max(1),
            total_switches: 0,
            batches: 1,
            delta,
            scale,
            clip_count: 0,
            rng,
        };
        s.redraw();
        s.current_leader = s.argmin();
        Ok(s)
    }

    fn redraw(&mut self) {
        let scale = self.scale;
        let rng = &mut self.rng;
        self.perturbation = Vector::from_fn(self.n, |_, _| {
            let u: f64 = rng.random();
            -scale * (1.0 - u).ln()
        });
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for i in 0..self.n {
            let v = self.cumulative[i] - self.perturbation[i];
            if v < best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    /// Feed one loss vector, return the leader for the next round.
    pub fn step(&mut self, losses: &Vector) -> Result<usize> {
        if losses.len() != self.n {
            return Err(Error::Dimension(format!("{} losses for {} experts", losses.len(), self.n)));
        }
        for (c, &l) in self.cumulative.iter_mut().zip(losses.iter()) {
            if !l.is_finite() {
                return Err(Error::NonFinite("BFPL loss".into()));
            }
            if !(0.0..=1.0).contains(&l) {
                self.clip_count += 1;
            }
            *c += l.clamp(0.0, 1.0);
        }
        let leader = self.argmin();
        if leader != self.current_leader {
            self.current_leader = leader;
            self.batch_switches += 1;
            self.total_switches += 1;
            if self.batch_switches >= self.switch_budget {
                self.redraw();
                self.batches += 1;
                self.batch_switches = 0;
                let fresh = self.argmin();
                if fresh != self.current_leader {
                    self.current_leader = fresh;
                    self.batch_switches = 1;
                    self.total_switches += 1;
                }
            }
        }
        Ok(self.current_leader)
    }
}

pub fn bfpl_step(s: &mut BfplState, losses: &Vector) -> Result<usize> {
    s.step(losses)
}
