//! Experiment configuration. Every section has defaults and rejects unknown
//! keys, so a typo fails before anything is computed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdgame::dynamics::{CoefficientSet, ControlLabel, ControlSet};
use sdgame::game::{DppMode, Quadrature, TauRule};
use sdgame::gbsde::RegressionSpec;
use sdgame::geometry::Shape;
use sdgame::isaacs::Kind;
use sdgame::{Domain, ProblemSpec};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog fixture name; ignored when `spec` is given.
    pub fixture: Option<String>,
    pub spec: Option<InlineSpec>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub validate: ValidateParams,
    pub simulate: SimulateParams,
    pub gbsde: GbsdeParams,
    pub timechange: TimeChangeParams,
    pub pde: PdeParams,
    pub dpp: DppParams,
    pub cross: CrossParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSpec {
    pub shape: Shape,
    #[serde(default)]
    pub c0: Option<f64>,
    pub coefficients: CoefficientSet,
    #[serde(default = "origin_controls")]
    pub controls_u: Vec<Vec<f64>>,
    #[serde(default = "origin_controls")]
    pub controls_v: Vec<Vec<f64>>,
    pub horizon: f64,
}

fn origin_controls() -> Vec<Vec<f64>> {
    vec![vec![0.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateParams {
    pub samples: usize,
}

impl Default for ValidateParams {
    fn default() -> Self {
        ValidateParams { samples: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub t0: f64,
    pub x0: Option<Vec<f64>>,
    pub paths: usize,
    pub steps: usize,
    pub antithetic: bool,
    pub u: usize,
    pub v: usize,
    /// Write every path to `paths.csv`.
    pub dump_paths: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams { t0: 0.0, x0: None, paths: 1000, steps: 100, antithetic: false, u: 0, v: 0, dump_paths: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbsdeParams {
    pub t0: f64,
    pub x0: Option<Vec<f64>>,
    pub paths: usize,
    pub steps: usize,
    pub u: usize,
    pub v: usize,
    pub regression: RegressionSpec,
    /// Intermediate time for the flow check; skipped when absent.
    pub flow_s: Option<f64>,
    /// Shift of `Φ` for a comparison against the unshifted problem.
    pub comparison_shift: Option<f64>,
    pub comparison_tol: f64,
}

impl Default for GbsdeParams {
    fn default() -> Self {
        GbsdeParams {
            t0: 0.0,
            x0: None,
            paths: 10_000,
            steps: 100,
            u: 0,
            v: 0,
            regression: RegressionSpec::affine(),
            flow_s: None,
            comparison_shift: None,
            comparison_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum APath {
    /// `A = 0` on `[0, 1]`, `A = s − 1` on `[1, 2]`.
    Piecewise { samples: usize },
    /// `A_s = rate·s`.
    Linear { rate: f64, horizon: f64, samples: usize },
    /// Local time of one reflected path of the configured problem.
    LocalTime { x0: Vec<f64>, steps: usize },
    Samples { s: Vec<f64>, a: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationParams {
    pub t: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub paths: usize,
    pub steps: usize,
    #[serde(default = "default_relative_tolerance")]
    pub relative_tolerance: f64,
}

fn default_relative_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeChangeParams {
    pub a_path: APath,
    pub r_grid: usize,
    pub epsilons: Vec<f64>,
    /// Generator representation limit; uses the configured problem's `g`, `f`.
    pub representation: Option<RepresentationParams>,
    pub tolerance: f64,
}

impl Default for TimeChangeParams {
    fn default() -> Self {
        TimeChangeParams {
            a_path: APath::Piecewise { samples: 2001 },
            r_grid: sdgame::timechange::DEFAULT_R_GRID,
            epsilons: sdgame::timechange::DEFAULT_EPSILONS.to_vec(),
            representation: None,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeParams {
    pub kind: Kind,
    pub h: f64,
    pub layers: Option<usize>,
    pub substeps: Option<usize>,
    pub c_cfl: f64,
    pub residuals: bool,
}

impl Default for PdeParams {
    fn default() -> Self {
        PdeParams {
            kind: Kind::Lower,
            h: 0.02,
            layers: None,
            substeps: None,
            c_cfl: sdgame::isaacs::DEFAULT_C_CFL,
            residuals: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DppCheckParams {
    pub mode: DppMode,
    pub paths: usize,
    pub probes: usize,
}

impl Default for DppCheckParams {
    fn default() -> Self {
        DppCheckParams { mode: DppMode::Weak, paths: 10_000, probes: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DppParams {
    pub kind: Kind,
    pub h: f64,
    pub delta: f64,
    pub quadrature: Option<Quadrature>,
    pub tau_rule: Option<TauRule>,
    pub check: Option<DppCheckParams>,
    pub regularity: bool,
}

impl Default for DppParams {
    fn default() -> Self {
        DppParams {
            kind: Kind::Lower,
            h: 0.02,
            delta: 0.01,
            quadrature: None,
            tau_rule: None,
            check: Some(DppCheckParams::default()),
            regularity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossParams {
    pub kind: Kind,
    pub h: f64,
    pub delta: f64,
    pub paths: usize,
    pub steps: usize,
    pub probes: Vec<Probe>,
    pub tolerance: f64,
}

impl Default for CrossParams {
    fn default() -> Self {
        CrossParams {
            kind: Kind::Lower,
            h: 0.01,
            delta: 1.0 / 6400.0,
            paths: 10_000,
            steps: 400,
            probes: vec![Probe { t: 0.5, x: vec![0.0] }, Probe { t: 0.9, x: vec![0.5] }],
            tolerance: 0.03,
        }
    }
}

impl ExperimentConfig {
    /// Parses and resolves the problem, so every config error surfaces here.
    pub fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.problem()?;
        Ok((cfg, bytes))
    }

    pub fn fixture_name(&self) -> String {
        match (&self.spec, &self.fixture) {
            (Some(_), _) => "inline".to_string(),
            (None, Some(name)) => name.clone(),
            (None, None) => "eigenfixture".to_string(),
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let Some(inline) = &self.spec else {
            return sdgame::fixtures::by_name(&self.fixture_name()).map_err(|e| CliError::Config(e.to_string()));
        };
        let config = |e: sdgame::Error| CliError::Config(e.to_string());
        let domain = Domain::from_shape(inline.shape.clone(), inline.c0).map_err(config)?;
        let u = ControlSet::new(ControlLabel::U, inline.controls_u.clone()).map_err(config)?;
        let v = ControlSet::new(ControlLabel::V, inline.controls_v.clone()).map_err(config)?;
        ProblemSpec::new(domain, inline.coefficients.clone(), u, v, inline.horizon).map_err(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.fixture_name(), "eigenfixture");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"fixtur": "trivial"}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"pde": {"hh": 0.1}}"#).is_err());
    }

    #[test]
    fn inline_spec_resolves() {
        let text = r#"{
            "spec": {
                "shape": {"kind": "interval1d"},
                "coefficients": {
                    "drift": {"kind": "zero"},
                    "diffusion": {"kind": "constant", "scale": 1.0},
                    "g": {"y": -1.0},
                    "f": {},
                    "terminal": {"kind": "constant", "value": 1.0}
                },
                "horizon": 0.5
            }
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        let spec = cfg.problem().unwrap();
        assert_eq!(spec.horizon, 0.5);
        assert_eq!(cfg.fixture_name(), "inline");
    }
}
