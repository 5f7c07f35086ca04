//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": { "scenario": "aligned" },
//!   "activation": "tanh",
//!   "channel": { "kind": "regression_gaussian", "delta": 0.3 },
//!   "lambda": 0.001,
//!   "grid": { "n_over_d": [1.0], "p_over_d": { "logspace": { "from": 0.1, "to": 10.0, "points": 20 } } },
//!   "simulation": { "d": 100, "seeds": 10 },
//!   "solver": { "tol": 1e-10 },
//!   "output_path": "curve.csv"
//! }
//! ```
//!
//! `model` is either `{"scenario": "iso" | "mis" | "ali"}` or
//! `{"blocks": [{"phi": …, "sigma_x": …, "sigma_beta": …}, …]}`. Grid axes are
//! a number, a list, or a geometric `logspace`; they are sorted ascending.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmoments::Activation;
use crate::realdata::Dataset;
use crate::replica::{BlockModel, Channel, Scenario, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Scenario { scenario: Scenario },
    Blocks { blocks: BlockModel },
}

impl ModelSpec {
    pub fn resolve(&self) -> BlockModel {
        match self {
            Self::Scenario { scenario } => BlockModel::scenario(*scenario),
            Self::Blocks { blocks } => blocks.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logspace {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Single(f64),
    List(Vec<f64>),
    Geometric { logspace: Logspace },
}

impl AxisSpec {
    /// Sorted, de-duplicated, strictly positive values.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let mut v = match self {
            Self::Single(x) => vec![*x],
            Self::List(xs) => xs.clone(),
            Self::Geometric { logspace: Logspace { from, to, points } } => {
                if *points == 0 || !(*from > 0.0) || !(*to > 0.0) {
                    return Err(Error::Config(format!("{name}: logspace needs positive bounds and points ≥ 1")));
                }
                let (a, b) = (from.ln(), to.ln());
                let step = if *points > 1 { (b - a) / (*points - 1) as f64 } else { 0.0 };
                (0..*points).map(|k| (a + step * k as f64).exp()).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::Config(format!("{name}: grid is empty")));
        }
        if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::Config(format!("{name}: entry {x} is not strictly positive")));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_over_d: AxisSpec,
    pub p_over_d: AxisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub d: usize,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Gradient tolerance of the logistic fit.
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
}

fn default_n_test() -> usize {
    10_000
}

fn default_fit_tol() -> f64 {
    1e-10
}

fn default_keep() -> usize {
    100
}

fn default_real_seeds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub dataset: Dataset,
    /// Directory holding the distribution files; `data/<dataset>` when absent.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_keep")]
    pub keep: usize,
    #[serde(default)]
    pub downscale: Option<(usize, usize)>,
    #[serde(default)]
    pub corruption: f64,
    #[serde(default = "default_real_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
}

impl RealDataConfig {
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data").join(self.dataset.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    model: ModelSpec,
    activation: Activation,
    channel: Channel,
    lambda: f64,
    grid: GridSpec,
    #[serde(default)]
    simulation: Option<SimulationConfig>,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default)]
    output_path: Option<PathBuf>,
    #[serde(default)]
    realdata: Option<RealDataConfig>,
}

/// Validated run configuration; grids are sorted ascending.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawRunConfig")]
pub struct RunConfig {
    pub model: BlockModel,
    pub activation: Activation,
    pub channel: Channel,
    pub lambda: f64,
    pub n_over_d: Vec<f64>,
    pub p_over_d: Vec<f64>,
    pub simulation: Option<SimulationConfig>,
    pub solver: SolverOptions,
    pub output_path: Option<PathBuf>,
    pub realdata: Option<RealDataConfig>,
}

impl TryFrom<RawRunConfig> for RunConfig {
    type Error = Error;

    fn try_from(raw: RawRunConfig) -> Result<Self> {
        let config = Self {
            model: raw.model.resolve(),
            activation: raw.activation,
            channel: raw.channel,
            lambda: raw.lambda,
            n_over_d: raw.grid.n_over_d.values("grid.n_over_d")?,
            p_over_d: raw.grid.p_over_d.values("grid.p_over_d")?,
            simulation: raw.simulation,
            solver: raw.solver,
            output_path: raw.output_path,
            realdata: raw.realdata,
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the invariants; called again after command-line overrides.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if let Some(sim) = &self.simulation {
            if sim.d < 20 {
                return Err(Error::Config(format!("simulation.d = {} is below 20", sim.d)));
            }
            if sim.seeds == 0 || sim.n_test == 0 {
                return Err(Error::Config("simulation needs at least one seed and one test point".into()));
            }
        }
        if let Some(real) = &self.realdata {
            if !(0.0..=1.0).contains(&real.corruption) {
                return Err(Error::Config(format!("realdata.corruption = {} outside [0, 1]", real.corruption)));
            }
            if real.seeds == 0 || real.keep == 0 || !real.alpha.is_finite() {
                return Err(Error::Config("realdata needs seeds ≥ 1, keep ≥ 1 and a finite alpha".into()));
            }
        }
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) || !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(Error::Config("solver needs damping in (0, 1], tol > 0 and max_iter ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"scenario": "ali"},
        "activation": "tanh",
        "channel": {"kind": "regression_gaussian", "delta": 0.3},
        "lambda": 1e-3,
        "grid": {"n_over_d": 1, "p_over_d": {"logspace": {"from": 0.1, "to": 10, "points": 5}}}
    }"#;

    #[test]
    fn parses_defaults_and_logspace() {
        let c = RunConfig::from_json(BASE).unwrap();
        assert_eq!(c.model, BlockModel::scenario(Scenario::Aligned));
        assert_eq!(c.n_over_d, vec![1.0]);
        let expected = [0.1, 0.316_227_766_016_837_94, 1.0, 3.162_277_660_168_379_5, 10.0];
        assert!(c.p_over_d.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12 * b));
        assert_eq!(c.solver, SolverOptions::default());
        assert!(c.simulation.is_none() && c.output_path.is_none());
    }

    #[test]
    fn explicit_blocks_and_lists() {
        let text = BASE
            .replace(r#"{"scenario": "ali"}"#, r#"{"blocks": [{"phi": 0.5, "sigma_x": 1, "sigma_beta": 2}, {"phi": 0.5, "sigma_x": 1, "sigma_beta": 0}]}"#)
            .replace(r#""n_over_d": 1"#, r#""n_over_d": [3, 1, 2, 1]"#);
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.model.len(), 2);
        assert_eq!(c.n_over_d, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            BASE.replace(r#""n_over_d": 1"#, r#""n_over_d": []"#),
            BASE.replace(r#""n_over_d": 1"#, r#""n_over_d": [1, -2]"#),
            BASE.replace(r#""lambda": 1e-3"#, r#""lambda": -1"#),
            BASE.replace(r#""lambda": 1e-3"#, r#""lambda": 1e-3, "simulation": {"d": 10, "seeds": 3}"#),
            BASE.replace(r#""lambda": 1e-3"#, r#""lambda": 1e-3, "solver": {"damping": 2}"#),
            BASE.replace(r#""lambda": 1e-3"#, r#""lambda": 1e-3, "typo": 1"#),
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))), "{text}");
        }
    }
}
