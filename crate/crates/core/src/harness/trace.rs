//! Per-step trace rows, regret curves and the run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// Column order of `trace.csv`.
pub const TRACE_COLUMNS: [&str; 10] =
    ["t", "epoch", "expert_key", "switch", "cost", "cumulative_cost", "logdet_v", "psi_err", "x", "u"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub epoch: Option<usize>,
    pub expert_key: Option<String>,
    pub switch: bool,
    /// Cost actually incurred, `c_t(x_t, u_t)`.
    pub cost: f64,
    pub cumulative_cost: f64,
    pub logdet_v: Option<f64>,
    /// `‖Ψ̂ − Ψ★‖_F` for the controller, `‖Q̂ − Q★‖_V` for the hidden-transform learner.
    pub psi_err: Option<f64>,
    pub x: Vector,
    pub u: Vector,
    /// Control chosen by a wrapped learner (equals `u` when unwrapped).
    pub inner_u: Vector,
    /// Cost revealed to a wrapped learner (equals `cost` when unwrapped).
    pub inner_cost: f64,
}

/// Float formatting shared by every emitted file: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: &Vector) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

fn opt<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map(f).unwrap_or_default()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, mut r: TraceRecord) {
        r.cumulative_cost = self.rows.last().map_or(0.0, |p| p.cumulative_cost) + r.cost;
        self.rows.push(r);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cost).collect()
    }

    pub fn total_cost(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_cost)
    }

    pub fn switches(&self) -> usize {
        self.rows.iter().filter(|r| r.switch).count()
    }

    pub fn epochs(&self) -> usize {
        self.rows.iter().filter_map(|r| r.epoch).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                opt(&r.epoch, |e| e.to_string()),
                opt(&r.expert_key, |k| k.clone()),
                u8::from(r.switch),
                fmt_f64(r.cost),
                fmt_f64(r.cumulative_cost),
                opt(&r.logdet_v, |v| fmt_f64(*v)),
                opt(&r.psi_err, |v| fmt_f64(*v)),
                fmt_vec(&r.x),
                fmt_vec(&r.u),
            );
        }
        out
    }

    /// What the (possibly wrapped) learner saw and did: the state, its own
    /// control and the cost revealed to it.
    pub fn learner_view_csv(&self) -> String {
        let mut out = String::from("t,epoch,expert_key,switch,cost,logdet_v,x,u\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t,
                opt(&r.epoch, |e| e.to_string()),
                opt(&r.expert_key, |k| k.clone()),
                u8::from(r.switch),
                fmt_f64(r.inner_cost),
                opt(&r.logdet_v, |v| fmt_f64(*v)),
                fmt_vec(&r.x),
                fmt_vec(&r.inner_u),
            );
        }
        out
    }
}

/// Cumulative `Σ_{s≤t} (learner_s − comparator_s)` for every `t`.
pub fn compute_regret(learner: &[f64], comparator: &[f64]) -> Result<Vec<f64>> {
    if learner.len() != comparator.len() {
        return Err(Error::HorizonMismatch(learner.len(), comparator.len()));
    }
    let mut acc = 0.0;
    Ok(learner
        .iter()
        .zip(comparator)
        .map(|(a, b)| {
            acc += a - b;
            acc
        })
        .collect())
}

/// `regret.csv`: one column of cumulative regret per comparator.
pub fn regret_csv(curves: &BTreeMap<String, Vec<f64>>) -> String {
    let mut out = String::from("t");
    for name in curves.keys() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let len = curves.values().map(|c| c.len()).max().unwrap_or(0);
    for t in 0..len {
        out.push_str(&(t + 1).to_string());
        for c in curves.values() {
            out.push(',');
            out.push_str(&fmt_f64(c[t]));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_cost: f64,
    pub regret: BTreeMap<String, f64>,
    pub epochs: usize,
    pub switches: usize,
    pub params_used: serde_json::Value,
    pub seed: u64,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, cost: f64) -> TraceRecord {
        TraceRecord {
            t,
            epoch: Some(1),
            expert_key: None,
            switch: t == 2,
            cost,
            cumulative_cost: 0.0,
            logdet_v: None,
            psi_err: None,
            x: Vector::from_vec(vec![0.5, -1.0]),
            u: Vector::from_vec(vec![0.25]),
            inner_u: Vector::from_vec(vec![0.25]),
            inner_cost: cost,
        }
    }

    #[test]
    fn regret_examples() {
        let a = [1.0, 2.0, 0.5];
        assert_eq!(compute_regret(&a, &a).unwrap(), vec![0.0; 3]);
        assert_eq!(compute_regret(&[1.0, 2.0, 0.5], &[0.5, 2.5, 0.0]).unwrap(), vec![0.5, 0.0, 0.5]);
        assert!(matches!(compute_regret(&a, &a[..2]), Err(Error::HorizonMismatch(3, 2))));
    }

    #[test]
    fn csv_layout() {
        let mut t = Trace::default();
        t.push(row(1, 1.0));
        t.push(row(2, 0.5));
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,epoch,expert_key,switch,cost,cumulative_cost,logdet_v,psi_err,x,u");
        assert_eq!(
            lines[2],
            "2,1,,1,5.0000000000000000e-1,1.5000000000000000e0,,,5.0000000000000000e-1;-1.0000000000000000e0,2.5000000000000000e-1"
        );
        assert_eq!(t.switches(), 1);
        assert_eq!(t.epochs(), 1);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
