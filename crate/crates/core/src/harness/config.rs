//! Experiment configuration: a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::costs::CostKind;
use crate::linalg::matrix_from_rows;
use crate::system::{LinearSystem, NoiseModel};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Alg1,
    Alg2,
    FixedK,
    ExploreExploit,
}

/// Plant dynamics: either a named preset or explicit matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset { preset: String },
    Matrices { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

/// Known presets: `(A, B)` as row lists.
pub fn preset(name: &str) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = match name {
        "scalar_stable" => (vec![vec![0.5]], vec![vec![1.0]]),
        "scalar_unstable" => (vec![vec![1.2]], vec![vec![1.0]]),
        "planar_stable" => (vec![vec![0.6, 0.2], vec![0.0, 0.5]], vec![vec![0.0], vec![1.0]]),
        "planar_unstable" => (vec![vec![1.1, 0.3], vec![0.0, 0.9]], vec![vec![0.0], vec![1.0]]),
        // memoryless plant for the hidden-transform learner: y = Q★ a + w
        "hidden_transform" => (vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![vec![0.8, 0.3], vec![-0.2, 0.6]]),
        _ => return None,
    };
    Some(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `N(0, cov)` truncated at `threshold` (default `5 d log(2T/δ)`).
    TruncatedGaussian {
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        threshold: Option<f64>,
    },
    UniformBall {
        bound: f64,
    },
    Rademacher {
        bound: f64,
    },
}

/// Optional overrides of the theoretical parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub alpha_scale: Option<f64>,
    pub memory: Option<usize>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub r_m: Option<f64>,
    pub r_b: Option<f64>,
    pub w_bound: Option<f64>,
    pub eta_g: Option<f64>,
    pub eta_m: Option<f64>,
    pub r_a: Option<f64>,
    pub r_q: Option<f64>,
    /// Standard deviation of the explore-then-exploit excitation.
    pub exploration_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    BestDap,
    FixedK,
    BestFixedAction,
}

fn default_delta() -> f64 {
    0.05
}

fn default_budget() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub noise: NoiseSpec,
    pub horizon: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub cost: CostKind,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: ParamOverrides,
    /// Stabilizing gain; when present the learner is wrapped.
    #[serde(default)]
    pub k0: Option<Vec<Vec<f64>>>,
    /// Gain for `fixed_k` runs and the fixed-gain comparator.
    #[serde(default)]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub comparators: Option<Vec<ComparatorKind>>,
    /// Projected-gradient iterations per restart for the best-DAP comparator.
    #[serde(default = "default_budget")]
    pub comparator_budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Load, apply `key=value` overrides on the raw JSON (dotted paths), then parse.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn matrices(&self) -> Result<(Matrix, Matrix)> {
        let (a, b) = match &self.system {
            SystemSpec::Preset { preset: name } => {
                preset(name).ok_or_else(|| Error::Config(format!("unknown system preset `{name}`")))?
            }
            SystemSpec::Matrices { a, b } => (a.clone(), b.clone()),
        };
        let (a, b) = (matrix_from_rows(&a)?, matrix_from_rows(&b)?);
        if !a.is_square() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Config(format!("A is {:?} and B is {:?}", a.shape(), b.shape())));
        }
        Ok((a, b))
    }

    pub fn noise_model(&self, dim: usize) -> Result<NoiseModel> {
        let model = match &self.noise {
            NoiseSpec::TruncatedGaussian { cov, threshold } => {
                let cov = matrix_from_rows(cov)?;
                match threshold {
                    Some(c) => NoiseModel::truncated_gaussian_with_threshold(cov, *c)?,
                    None => NoiseModel::truncated_gaussian(cov, self.horizon, self.delta)?,
                }
            }
            NoiseSpec::UniformBall { bound } => NoiseModel::uniform_ball(dim, *bound),
            NoiseSpec::Rademacher { bound } => NoiseModel::rademacher(dim, *bound),
        };
        if model.dim != dim {
            return Err(Error::Config(format!("noise dimension {} vs d_x = {dim}", model.dim)));
        }
        if !(model.bound >= 0.0) || !model.bound.is_finite() {
            return Err(Error::Config("noise bound must be finite and nonnegative".into()));
        }
        Ok(model)
    }

    pub fn system(&self) -> Result<LinearSystem> {
        let (a, b) = self.matrices()?;
        let noise = self.noise_model(a.nrows())?;
        LinearSystem::new(a, b, noise)
    }

    fn gain(rows: &Option<Vec<Vec<f64>>>, what: &str, du: usize, dx: usize) -> Result<Option<Matrix>> {
        match rows {
            None => Ok(None),
            Some(r) => {
                let m = matrix_from_rows(r)?;
                if m.shape() != (du, dx) {
                    return Err(Error::Config(format!("{what} must be {du}×{dx}, got {:?}", m.shape())));
                }
                Ok(Some(m))
            }
        }
    }

    pub fn k0_matrix(&self, du: usize, dx: usize) -> Result<Option<Matrix>> {
        Self::gain(&self.k0, "K0", du, dx)
    }

    pub fn k_matrix(&self, du: usize, dx: usize) -> Result<Option<Matrix>> {
        Self::gain(&self.k, "K", du, dx)
    }

    /// Structural checks that do not need the run.
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 8 {
            return Err(Error::Config("horizon T must be at least 8".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("δ must lie in (0, 1)".into()));
        }
        let sys = self.system()?;
        let (dx, du) = (sys.dx(), sys.du());
        self.k0_matrix(du, dx)?;
        let k = self.k_matrix(du, dx)?;
        if self.algorithm == Algorithm::FixedK && k.is_none() {
            return Err(Error::Config("fixed_k needs `k`".into()));
        }
        if self.algorithm == Algorithm::Alg2 {
            if sys.a.amax() != 0.0 {
                return Err(Error::Config("alg2 needs a memoryless plant (A = 0)".into()));
            }
            if self.k0.is_some() {
                return Err(Error::Config("alg2 cannot be wrapped with K0".into()));
            }
        }
        Ok(())
    }
}

/// Set `path.to.key` in a JSON document; the value is parsed as JSON when
/// possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in override path `{path}`")));
        }
        let obj = match node {
            Value::Object(o) => o,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(Error::Config(format!("override path `{path}` goes through a non-object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {"preset": "scalar_stable"},
        "noise": {"kind": "uniform_ball", "bound": 0.5},
        "horizon": 100,
        "cost": {"kind": "drifting_target_l1", "amplitude": 1.0, "period": 50.0},
        "algorithm": "alg1"
    }"#;

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let again = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.delta, 0.05);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_nested_and_new_keys() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        apply_override(&mut v, "params.alpha_scale=0.01").unwrap();
        apply_override(&mut v, "horizon=400").unwrap();
        apply_override(&mut v, "algorithm=fixed_k").unwrap();
        let c: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.params.alpha_scale, Some(0.01));
        assert_eq!(c.horizon, 400);
        assert_eq!(c.algorithm, Algorithm::FixedK);
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_short_horizon_and_unknown_preset() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.horizon = 7;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.horizon = 100;
        c.system = SystemSpec::Preset { preset: "nope".into() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_cost_kind_is_config_error() {
        let text = MINIMAL.replace("drifting_target_l1", "mystery");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }
}
