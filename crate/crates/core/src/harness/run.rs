//! The interaction loop and the experiment driver.

use std::collections::BTreeMap;
use std::path::Path;

use crate::controller::{default_params, AlgParams, Controller};
use crate::costs::{Cost, CostOracle, CostSchedule, StateLoss};
use crate::dap::unrolled_model;
use crate::harness::baselines::{ExploreExploit, FixedGain};
use crate::harness::comparators::{best_dap_in_hindsight, best_fixed_action, simulate_dap, simulate_linear};
use crate::harness::config::{Algorithm, ComparatorKind, ExperimentConfig};
use crate::harness::trace::{compute_regret, regret_csv, write_file, Summary, Trace, TraceRecord};
use crate::hlt::{hlt_params, v_weighted_norm, HltLearner, HltParams};
use crate::linalg::op_norm;
use crate::rng::{stream, streams};
use crate::system::{certify_closed_loop, wrap_stabilize, Learner, NoiseModel, StabilizedCost, Stabilized};
use crate::{Error, Matrix, Result, Vector};

/// A source of the oblivious cost sequence `t ↦ c_t`.
pub trait CostProvider: Sync {
    fn cost_at(&self, t: usize) -> Box<dyn CostOracle>;
    /// Control dimension the costs expect.
    fn du(&self) -> usize;
}

impl CostProvider for CostSchedule {
    fn cost_at(&self, t: usize) -> Box<dyn CostOracle> {
        Box::new(self.at(t))
    }

    fn du(&self) -> usize {
        self.du
    }
}

/// `c̃_t(x, ũ) = c_t(x, ũ + K0 x) / (2κ)`: the costs a wrapped learner sees.
pub struct StabilizedSchedule<'a> {
    pub inner: &'a CostSchedule,
    pub k0: Matrix,
    pub kappa: f64,
}

struct OwnedStabilized {
    cost: Cost,
    k0: Matrix,
    kappa: f64,
}

impl CostOracle for OwnedStabilized {
    fn evaluate(&self, x: &Vector, u: &Vector) -> f64 {
        StabilizedCost::new(&self.cost, &self.k0, self.kappa).evaluate(x, u)
    }

    fn subgradient(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        StabilizedCost::new(&self.cost, &self.k0, self.kappa).subgradient(x, u)
    }
}

impl CostProvider for StabilizedSchedule<'_> {
    fn cost_at(&self, t: usize) -> Box<dyn CostOracle> {
        Box::new(OwnedStabilized { cost: self.inner.at(t), k0: self.k0.clone(), kappa: self.kappa })
    }

    fn du(&self) -> usize {
        self.inner.du
    }
}

/// Per-step fields a learner contributes to the trace.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub epoch: Option<usize>,
    pub expert_key: Option<String>,
    pub switch: bool,
    pub logdet_v: Option<f64>,
    pub psi: Option<Matrix>,
}

/// Learners that can describe their last step.
pub trait Reporting: Learner {
    fn report(&self) -> StepReport {
        StepReport::default()
    }
}

impl Reporting for Controller {
    fn report(&self) -> StepReport {
        let info = &self.last_info;
        StepReport {
            epoch: Some(info.epoch),
            expert_key: info.key.map(|k| k.to_string()),
            switch: info.switched,
            logdet_v: Some(info.logdet_v),
            psi: Some(self.psi.psi.clone()),
        }
    }
}

impl Reporting for FixedGain {}

impl Reporting for ExploreExploit {
    fn report(&self) -> StepReport {
        StepReport { psi: self.psi.clone(), ..StepReport::default() }
    }
}

impl<L: Reporting> Reporting for Stabilized<L> {
    fn report(&self) -> StepReport {
        self.inner.report()
    }
}

/// The plant as the learner sees it: `x' = A_eff x + B ũ + w`, where
/// `A_eff = A + B K0` for wrapped runs and the played control is `K0 x + ũ`.
pub struct Plant {
    pub a_eff: Matrix,
    pub b: Matrix,
    pub k0: Option<(Matrix, f64)>,
}

impl Plant {
    pub fn direct(a: Matrix, b: Matrix) -> Self {
        Self { a_eff: a, b, k0: None }
    }

    pub fn stabilized(a: &Matrix, b: Matrix, k0: Matrix, kappa: f64) -> Self {
        Self { a_eff: a + &b * &k0, b, k0: Some((k0, kappa)) }
    }

    pub fn step(&self, x: &Vector, inner_u: &Vector, w: &Vector) -> Vector {
        &self.a_eff * x + &self.b * inner_u + w
    }
}

/// Materialize `w_1, …, w_T` from the run seed.
pub fn noise_tape(noise: &NoiseModel, horizon: usize, seed: u64) -> Vec<Vector> {
    let mut rng = stream(seed, streams::NOISE_TAPE);
    (0..horizon).map(|_| noise.sample(&mut rng)).collect()
}

/// Run the protocol loop. For wrapped plants the learner must already be
/// wrapped with the same `K0`; `costs` are the original (unscaled) costs.
///
/// `psi_star` (for `‖Ψ̂ − Ψ★‖_F`) is the unrolled model of the learner-side plant.
pub fn simulate<L: Reporting>(
    plant: &Plant,
    learner: &mut L,
    costs: &dyn CostProvider,
    tape: &[Vector],
    psi_star: Option<&Matrix>,
    split: impl Fn(&mut L, &Vector) -> Result<(Vector, Vector)>,
) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut x = Vector::zeros(plant.a_eff.nrows());
    for (i, w) in tape.iter().enumerate() {
        let t = i + 1;
        let (u, inner_u) = split(learner, &x)?;
        let cost = costs.cost_at(t);
        let c = cost.evaluate(&x, &u);
        let inner_cost = match &plant.k0 {
            Some((k0, kappa)) => StabilizedCost::new(cost.as_ref(), k0, *kappa).evaluate(&x, &inner_u),
            None => c,
        };
        let x_next = plant.step(&x, &inner_u, w);
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at t = {t}")));
        }
        learner.observe(cost.as_ref(), &x_next)?;
        let rep = learner.report();
        let psi_err = match (&rep.psi, psi_star) {
            (Some(p), Some(s)) if p.shape() == s.shape() => Some((p - s).norm()),
            _ => None,
        };
        trace.push(TraceRecord {
            t,
            epoch: rep.epoch,
            expert_key: rep.expert_key,
            switch: rep.switch,
            cost: c,
            cumulative_cost: 0.0,
            logdet_v: rep.logdet_v,
            psi_err,
            x: x.clone(),
            u,
            inner_u,
            inner_cost,
        });
        x = x_next;
    }
    Ok(trace)
}

fn same(l: &mut impl Learner, x: &Vector) -> Result<(Vector, Vector)> {
    let u = l.act(x)?;
    Ok((u.clone(), u))
}

fn split_wrapped<L: Learner>(l: &mut Stabilized<L>, x: &Vector) -> Result<(Vector, Vector)> {
    l.act_split(x)
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
    pub regret_curves: BTreeMap<String, Vec<f64>>,
}

impl RunOutput {
    /// Write `trace.csv`, `regret.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("trace.csv"), &self.trace.to_csv())?;
        write_file(&dir.join("regret.csv"), &regret_csv(&self.regret_curves))?;
        write_file(&dir.join("summary.json"), &self.summary.to_json()?)?;
        Ok(())
    }
}

/// Controller parameters for a config: `(κ, γ)` from the certificate of `K0`
/// when given, else of the open-loop plant, else of `k`. Overrides apply last.
pub fn alg_params(cfg: &ExperimentConfig) -> Result<AlgParams> {
    let sys = cfg.system()?;
    let (dx, du) = (sys.dx(), sys.du());
    let o = &cfg.params;
    let cert = match (cfg.k0_matrix(du, dx)?, cfg.k_matrix(du, dx)?) {
        (Some(k0), _) => certify_closed_loop(&k0, &sys.a, &sys.b)?,
        (None, k) => match certify_closed_loop(&Matrix::zeros(du, dx), &sys.a, &sys.b) {
            Ok(c) => c,
            Err(e) => match k {
                Some(k) if cfg.algorithm == Algorithm::FixedK => certify_closed_loop(&k, &sys.a, &sys.b)?,
                _ => return Err(e),
            },
        },
    };
    let kappa = o.kappa.unwrap_or(cert.kappa);
    let gamma = o.gamma.unwrap_or(cert.gamma).min(1.0);
    let w = o.w_bound.unwrap_or(sys.noise.bound.max(1.0));
    let r_m = o.r_m.unwrap_or(1.0);
    let r_b = o.r_b.unwrap_or(op_norm(&sys.b).max(1.0));
    let mut p = default_params(kappa, gamma, w, r_m, r_b, dx, du, cfg.horizon, cfg.delta)?;
    if let Some(h) = o.memory {
        if h == 0 {
            return Err(Error::Config("memory must be at least 1".into()));
        }
        p = p.with_memory(h);
    }
    if let Some(s) = o.alpha_scale {
        if !(s >= 0.0) {
            return Err(Error::Config("alpha_scale must be nonnegative".into()));
        }
        p = p.with_alpha_scale(s);
    }
    if let Some(eta) = o.eta_g {
        p.eta_g = eta;
    }
    Ok(p)
}

/// Parameters for the hidden-transform learner on a memoryless plant.
pub fn hlt_params_for(cfg: &ExperimentConfig) -> Result<HltParams> {
    let sys = cfg.system()?;
    let o = &cfg.params;
    let r_a = o.r_a.unwrap_or(2.0);
    let r_q = o.r_q.unwrap_or(op_norm(&sys.b));
    let w = o.w_bound.unwrap_or(sys.noise.bound);
    let mut p = hlt_params(r_a, r_q, w, sys.du(), sys.dx(), cfg.horizon, cfg.delta)?;
    if let Some(s) = o.alpha_scale {
        if !(s >= 0.0) {
            return Err(Error::Config("alpha_scale must be nonnegative".into()));
        }
        p = p.with_alpha_scale(s);
    }
    if let Some(eta) = o.eta_g {
        p.eta_g = eta;
    }
    if let Some(eta) = o.eta_m {
        p.eta_m = eta;
    }
    Ok(p)
}

fn run_control<L: Reporting>(
    cfg: &ExperimentConfig,
    learner: L,
    params: &AlgParams,
    tape: &[Vector],
    schedule: &CostSchedule,
) -> Result<Trace> {
    let sys = cfg.system()?;
    match cfg.k0_matrix(sys.du(), sys.dx())? {
        Some(k0) => {
            let plant = Plant::stabilized(&sys.a, sys.b.clone(), k0.clone(), params.kappa);
            let psi_star = unrolled_model(&plant.a_eff, &plant.b, params.memory);
            let mut wrapped = wrap_stabilize(learner, k0, params.kappa);
            simulate(&plant, &mut wrapped, schedule, tape, Some(&psi_star), split_wrapped)
        }
        None => {
            let plant = Plant::direct(sys.a.clone(), sys.b.clone());
            let psi_star = unrolled_model(&plant.a_eff, &plant.b, params.memory);
            let mut learner = learner;
            simulate(&plant, &mut learner, schedule, tape, Some(&psi_star), same)
        }
    }
}

/// Run the hidden-transform learner: `y_{t+1} = B a_t + w_t`, loss `ℓ_t(y) = c_t(y, 0)`.
/// The recorded cost is the noiseless `ℓ_t(B a_t)`.
pub fn run_hlt(params: &HltParams, q_star: &Matrix, tape: &[Vector], schedule: &dyn CostProvider, seed: u64) -> Result<Trace> {
    let mut learner = HltLearner::new(params.clone(), seed)?;
    let du = schedule.du();
    let mut trace = Trace::default();
    let mut prev_key = None;
    for (i, w) in tape.iter().enumerate() {
        let t = i + 1;
        let (a, key) = learner.act();
        let cost = schedule.cost_at(t);
        let loss = StateLoss { cost: cost.as_ref(), du };
        let clean = q_star * &a;
        let c = cost.evaluate(&clean, &Vector::zeros(du));
        let y = clean + w;
        learner.observe(&y, &loss)?;
        let est = learner.running_estimate()?;
        let err = v_weighted_norm(&(est - q_star), learner.gram.matrix())?;
        let switch = prev_key.is_some_and(|p| p != key);
        prev_key = Some(key);
        trace.push(TraceRecord {
            t,
            epoch: Some(learner.epoch),
            expert_key: Some(key.to_string()),
            switch,
            cost: c,
            cumulative_cost: 0.0,
            logdet_v: Some(learner.gram.logdet()),
            psi_err: Some(err),
            x: y,
            u: a.clone(),
            inner_u: a,
            inner_cost: c,
        });
    }
    Ok(trace)
}

/// Execute a config end to end: learner run, comparators and summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let (dx, du) = (sys.dx(), sys.du());
    let tape = noise_tape(&sys.noise, cfg.horizon, cfg.seed);
    let schedule = CostSchedule::new(cfg.cost.clone(), cfg.seed, dx, du)?;
    let mut comparator_rng = stream(cfg.seed, streams::COMPARATOR);
    let mut curves = BTreeMap::new();

    if cfg.algorithm == Algorithm::Alg2 {
        let params = hlt_params_for(cfg)?;
        let trace = run_hlt(&params, &sys.b, &tape, &schedule, cfg.seed)?;
        let kinds = cfg.comparators.clone().unwrap_or_else(|| vec![ComparatorKind::BestFixedAction]);
        for kind in kinds {
            if kind != ComparatorKind::BestFixedAction {
                return Err(Error::Config(format!("comparator {kind:?} does not apply to alg2")));
            }
            let (_, losses) =
                best_fixed_action(&sys.b, &schedule, cfg.horizon, params.r_a / 2.0, cfg.comparator_budget, &mut comparator_rng);
            curves.insert("best_fixed_action".to_string(), compute_regret(&trace.costs(), &losses)?);
        }
        let summary = summarize(&trace, &curves, serde_json::to_value(&params)?, cfg.seed);
        return Ok(RunOutput { trace, summary, regret_curves: curves });
    }

    let params = alg_params(cfg)?;
    let trace = match cfg.algorithm {
        Algorithm::Alg1 => {
            let c = Controller::new(params.clone(), sys.noise.clone(), cfg.seed)?;
            run_control(cfg, c, &params, &tape, &schedule)?
        }
        Algorithm::FixedK => {
            let k = cfg.k_matrix(du, dx)?.expect("validated");
            let plant = Plant::direct(sys.a.clone(), sys.b.clone());
            simulate(&plant, &mut FixedGain { k }, &schedule, &tape, None, same)?
        }
        Algorithm::ExploreExploit => {
            let scale = cfg.params.exploration_scale.unwrap_or(1.0);
            let l = ExploreExploit::new(params.clone(), sys.noise.bound, scale, stream(cfg.seed, streams::EXPLORATION));
            run_control(cfg, l, &params, &tape, &schedule)?
        }
        Algorithm::Alg2 => unreachable!(),
    };

    let default_kinds = {
        let mut v = vec![ComparatorKind::BestDap];
        if cfg.k.is_some() && cfg.algorithm != Algorithm::FixedK {
            v.push(ComparatorKind::FixedK);
        }
        v
    };
    let k0 = cfg.k0_matrix(du, dx)?.unwrap_or_else(|| Matrix::zeros(du, dx));
    for kind in cfg.comparators.clone().unwrap_or(default_kinds) {
        match kind {
            ComparatorKind::BestDap => {
                let a_eff = &sys.a + &sys.b * &k0;
                let psi_star = unrolled_model(&a_eff, &sys.b, params.memory);
                let (m, _) = best_dap_in_hindsight(
                    &tape,
                    &schedule,
                    &psi_star,
                    &k0,
                    params.dims(),
                    params.r_m,
                    cfg.comparator_budget,
                    &mut comparator_rng,
                )?;
                let costs = simulate_dap(&sys.a, &sys.b, &k0, &m, &tape, &schedule);
                curves.insert("best_dap".to_string(), compute_regret(&trace.costs(), &costs)?);
            }
            ComparatorKind::FixedK => {
                let k = cfg.k_matrix(du, dx)?.ok_or_else(|| Error::Config("fixed_k comparator needs `k`".into()))?;
                let costs = simulate_linear(&sys.a, &sys.b, &k, &tape, &schedule);
                curves.insert("fixed_k".to_string(), compute_regret(&trace.costs(), &costs)?);
            }
            ComparatorKind::BestFixedAction => {
                return Err(Error::Config("best_fixed_action only applies to alg2".into()));
            }
        }
    }
    let summary = summarize(&trace, &curves, serde_json::to_value(&params)?, cfg.seed);
    Ok(RunOutput { trace, summary, regret_curves: curves })
}

fn summarize(trace: &Trace, curves: &BTreeMap<String, Vec<f64>>, params: serde_json::Value, seed: u64) -> Summary {
    Summary {
        total_cost: trace.total_cost(),
        regret: curves.iter().map(|(k, v)| (k.clone(), v.last().copied().unwrap_or(0.0))).collect(),
        epochs: trace.epochs(),
        switches: trace.switches(),
        params_used: params,
        seed,
    }
}
