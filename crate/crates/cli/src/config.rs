//! Experiment and sweep configuration files.
//!
//! Values are resolved as built-in defaults, then the TOML file, then
//! command-line flags; each layer overrides the previous one.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replicator_core::{
    Adaptation, ControlMatrix, ControllerSpec, ConvergenceCriteria, IntegratorConfig, PayoffMatrix,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `[a, b, c, d]`, row-major.
    pub payoff: [f64; 4],
    pub initial_x: f64,
    pub controller: ControllerConfig,
    pub integrator: IntegratorSection,
    pub convergence: ConvergenceSection,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            payoff: [1.0, 0.0, 0.0, 1.0],
            initial_x: 0.5,
            controller: ControllerConfig::default(),
            integrator: IntegratorSection::default(),
            convergence: ConvergenceSection::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// `phi1`, `phi2` or `none`.
    pub family: String,
    /// `none`, `g1`, `g2` or four bits such as `0010`.
    pub matrix: String,
    pub k: f64,
    pub h: f64,
    pub g0: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { family: "none".into(), matrix: "none".into(), k: 0.0, h: 0.0, g0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self { dt: d.dt, t_end: d.t_end, record_every: d.record_every }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub x_tol: f64,
    pub g_tol: f64,
    pub dg_tol: f64,
    pub window: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        let d = ConvergenceCriteria::default();
        Self { x_tol: d.x_tol, g_tol: d.g_tol, dg_tol: d.dg_tol, window: d.window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Csv] }
    }
}

/// A configuration checked against every model precondition.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub payoff: PayoffMatrix,
    pub spec: ControllerSpec,
    pub x0: f64,
    pub integrator: IntegratorConfig,
    pub criteria: ConvergenceCriteria,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config always serializes")
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let [a, b, c, d] = self.payoff;
        let payoff = PayoffMatrix::new(a, b, c, d)?;
        let c = &self.controller;
        let family: Adaptation = c.family.parse()?;
        let matrix: ControlMatrix = c.matrix.parse()?;
        let spec = ControllerSpec::new(matrix, family, c.k, c.h, c.g0)?;
        if !(0.0..=1.0).contains(&self.initial_x) {
            return Err(CliError::Usage(format!("initial_x must lie in [0,1], got {}", self.initial_x)));
        }
        let i = &self.integrator;
        let integrator = IntegratorConfig::new(i.dt, i.t_end, i.record_every)?;
        let v = &self.convergence;
        let criteria = ConvergenceCriteria { x_tol: v.x_tol, g_tol: v.g_tol, dg_tol: v.dg_tol, window: v.window };
        criteria.validate()?;
        Ok(Resolved { payoff, spec, x0: self.initial_x, integrator, criteria })
    }
}

/// Game families a sweep can parametrize by `(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameFamily {
    Coordination,
    DominantAction1,
    DominantAction2,
    AntiCoordination,
}

impl GameFamily {
    fn build(self, alpha: f64, beta: f64) -> PayoffMatrix {
        match self {
            GameFamily::Coordination => PayoffMatrix::coordination(alpha, beta),
            GameFamily::DominantAction1 => PayoffMatrix::dominant_action1(alpha, beta),
            GameFamily::DominantAction2 => PayoffMatrix::dominant_action2(alpha, beta),
            GameFamily::AntiCoordination => PayoffMatrix::anti_coordination(alpha, beta),
        }
    }
}

/// Axes of a cartesian sweep. Axes left out take the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub game: Option<GameFamily>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub payoffs: Option<Vec<[f64; 4]>>,
    pub k: Option<Vec<f64>>,
    pub h: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub g0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub grid: GridSpec,
}

impl SweepConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// All cases in deterministic order: payoff, then `k`, `h`, `x0`, `g0`.
    pub fn expand(&self) -> CliResult<Vec<ExperimentConfig>> {
        let g = &self.grid;
        let axes = [&g.alpha, &g.beta, &g.k, &g.h, &g.x0, &g.g0];
        if axes.iter().all(|a| a.is_none()) && g.payoffs.is_none() {
            return Err(CliError::Usage("empty grid: no axes given".into()));
        }
        if axes.iter().any(|a| a.as_ref().is_some_and(Vec::is_empty)) || g.payoffs.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::Usage("empty grid: an axis has no values".into()));
        }
        let payoffs: Vec<[f64; 4]> = match (&g.payoffs, &g.alpha, &g.beta) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::Usage("grid: give either payoffs or alpha/beta, not both".into()))
            }
            (Some(p), None, None) => p.clone(),
            (None, None, None) => vec![self.base.payoff],
            (None, alphas, betas) => {
                let family = g
                    .game
                    .ok_or_else(|| CliError::Usage("grid: alpha/beta axes need `game`".into()))?;
                let (alphas, betas) = match (alphas, betas) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(CliError::Usage("grid: alpha and beta must be given together".into())),
                };
                let mut out = Vec::new();
                for &alpha in alphas {
                    for &beta in betas {
                        out.push(family.build(alpha, beta).entries());
                    }
                }
                out
            }
        };
        let base = &self.base;
        let or_base = |axis: &Option<Vec<f64>>, v: f64| axis.clone().unwrap_or_else(|| vec![v]);
        let ks = or_base(&g.k, base.controller.k);
        let hs = or_base(&g.h, base.controller.h);
        let x0s = or_base(&g.x0, base.initial_x);
        let g0s = or_base(&g.g0, base.controller.g0);
        let mut cases = Vec::new();
        for payoff in &payoffs {
            for &k in &ks {
                for &h in &hs {
                    for &x0 in &x0s {
                        for &g0 in &g0s {
                            let mut c = base.clone();
                            c.payoff = *payoff;
                            c.controller.k = k;
                            c.controller.h = h;
                            c.controller.g0 = g0;
                            c.initial_x = x0;
                            cases.push(c);
                        }
                    }
                }
            }
        }
        Ok(cases)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}
