//! Verification suites over parameter grids, and seeded basin sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_thm1_escape, detect_convergence, region_of, ConvergenceCriteria, Limit, Region, Target};
use crate::controller::{check_validity, Adaptation, ControllerSpec, Theorem};
use crate::dynamics::{ControlledSystem, SystemState};
use crate::error::{Error, Result};
use crate::game::{GameClass, PayoffMatrix};
use crate::integrator::{integrate_with, IntegratorConfig, Trajectory};

/// Slack allowed when auditing that a `phi2` gain never decreases.
const MONOTONE_GAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Limits of the uncontrolled replicator equation.
    Prop2,
    /// Coordination games under `(G1, phi1)`.
    Thm1,
    /// Dominant-strategy games under `(G2, phi2)` with `k > alpha`.
    Thm2,
    /// Anti-coordination games under `(G2, phi2)`.
    Thm3,
    /// Agent-based cross-validation of the mean-field ODE.
    Abm,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Prop2 => "prop2",
            Suite::Thm1 => "thm1",
            Suite::Thm2 => "thm2",
            Suite::Thm3 => "thm3",
            Suite::Abm => "abm",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prop2" => Ok(Suite::Prop2),
            "thm1" => Ok(Suite::Thm1),
            "thm2" => Ok(Suite::Thm2),
            "thm3" => Ok(Suite::Thm3),
            "abm" => Ok(Suite::Abm),
            other => Err(Error::InvalidInput(format!("unknown suite {other:?}"))),
        }
    }
}

/// Uncontrolled games and initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop2Grid {
    pub games: Vec<PayoffMatrix>,
    pub x0s: Vec<f64>,
    /// Also run initial conditions sitting exactly on the mixed equilibrium.
    pub include_mixed_ne: bool,
    pub integrator: IntegratorConfig,
}

/// Cartesian grid over `(alpha, beta, k, h, x0, g0)`; the game class is
/// implied by the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ks: Vec<f64>,
    pub hs: Vec<f64>,
    pub x0s: Vec<f64>,
    pub g0s: Vec<f64>,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Prop2(Prop2Grid),
    Theorem(TheoremGrid),
}

fn tenths_and(extra: &[f64]) -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).chain(extra.iter().copied()).collect()
}

impl Suite {
    /// The grid `verify` runs. `None` for [`Suite::Abm`], which has its own driver.
    pub fn default_grid(&self) -> Option<Grid> {
        let cfg = |t_end: f64| IntegratorConfig { t_end, ..IntegratorConfig::default() };
        let scales = [0.5, 1.0, 2.0];
        match self {
            Suite::Prop2 => {
                let mut games = Vec::new();
                for &alpha in &scales {
                    for &beta in &scales {
                        games.push(PayoffMatrix::coordination(alpha, beta));
                        games.push(PayoffMatrix::dominant_action1(alpha, beta));
                        games.push(PayoffMatrix::dominant_action2(alpha, beta));
                        games.push(PayoffMatrix::anti_coordination(alpha, beta));
                    }
                }
                Some(Grid::Prop2(Prop2Grid {
                    games,
                    x0s: tenths_and(&[]),
                    include_mixed_ne: false,
                    integrator: cfg(50.0),
                }))
            }
            Suite::Thm1 => Some(Grid::Theorem(TheoremGrid {
                alphas: vec![1.0],
                betas: vec![1.0],
                ks: vec![0.5, 1.0, 2.0],
                hs: vec![0.1, 0.25, 0.4],
                x0s: tenths_and(&[0.99]),
                g0s: vec![0.1, 1.0],
                integrator: cfg(200.0),
            })),
            Suite::Thm2 => Some(Grid::Theorem(TheoremGrid {
                alphas: vec![0.5, 1.0],
                betas: vec![0.5, 1.0, 2.0],
                ks: vec![1.0, 2.0, 3.0, 4.0],
                hs: vec![0.5, 1.0, 2.0],
                x0s: vec![0.1, 0.5, 0.99],
                g0s: vec![0.2],
                integrator: cfg(100.0),
            })),
            Suite::Thm3 => Some(Grid::Theorem(TheoremGrid {
                alphas: vec![1.0],
                betas: vec![1.0],
                ks: vec![0.05, 0.1, 1.0],
                hs: vec![1.0],
                x0s: tenths_and(&[0.99]),
                g0s: vec![0.1],
                integrator: cfg(500.0),
            })),
            Suite::Abm => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    pub payoff: PayoffMatrix,
    pub k: f64,
    pub h: f64,
    pub x0: f64,
    pub g0: f64,
}

impl fmt::Display for CaseParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let PayoffMatrix { a, b, c, d } = self.payoff;
        write!(f, "a={a} b={b} c={c} d={d} k={} h={} x0={} g0={}", self.k, self.h, self.x0, self.g0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub params: CaseParams,
    pub terminal: Option<SystemState>,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases_total: usize,
    pub cases_passed: usize,
    pub failures: Vec<CaseFailure>,
    /// Runs outside the hypotheses; logged, never failed.
    pub exploratory: Vec<(CaseParams, Limit)>,
    /// Auxiliary certificates checked alongside the limit claims.
    pub certificates_checked: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases_total > 0 && self.cases_passed == self.cases_total
    }
}

struct Case {
    params: CaseParams,
    sys: ControlledSystem,
    /// `None` marks an exploratory case.
    theorem: Option<Theorem>,
    target: Target,
}

struct CaseOutcome {
    failure: Option<CaseFailure>,
    certificates: usize,
    limit: Limit,
}

/// Limit predicted for the uncontrolled replicator equation.
fn predicted_limit(game: &GameClass, x0: f64) -> Option<Target> {
    match *game {
        GameClass::Coordination { mixed_ne, .. } => Some(if x0 < mixed_ne {
            Target::X0
        } else if x0 > mixed_ne {
            Target::X1
        } else {
            Target::MixedNe
        }),
        GameClass::DominantAction1 { .. } => Some(if x0 > 0.0 { Target::X1 } else { Target::X0 }),
        GameClass::DominantAction2 { .. } => Some(if x0 < 1.0 { Target::X0 } else { Target::X1 }),
        GameClass::AntiCoordination { .. } => Some(if x0 <= 0.0 {
            Target::X0
        } else if x0 >= 1.0 {
            Target::X1
        } else {
            Target::MixedNe
        }),
        GameClass::Degenerate { .. } => None,
    }
}

fn prop2_cases(grid: &Prop2Grid) -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for game in &grid.games {
        let sys = ControlledSystem::uncontrolled(*game)?;
        for &x0 in &grid.x0s {
            if !(0.0..=1.0).contains(&x0) {
                return Err(Error::InvalidInput(format!("x0 must lie in [0,1], got {x0}")));
            }
            if !grid.include_mixed_ne && sys.class().mixed_ne() == Some(x0) {
                continue;
            }
            let Some(target) = predicted_limit(sys.class(), x0) else {
                continue;
            };
            cases.push(Case {
                params: CaseParams { payoff: *game, k: 0.0, h: 0.0, x0, g0: 0.0 },
                sys,
                theorem: Some(Theorem::NotApplicable),
                target,
            });
        }
    }
    Ok(cases)
}

fn theorem_cases(suite: Suite, grid: &TheoremGrid) -> Result<Vec<Case>> {
    let (build_game, matrix): (fn(f64, f64) -> PayoffMatrix, _) = match suite {
        Suite::Thm1 => (PayoffMatrix::coordination, crate::controller::ControlMatrix::G1),
        Suite::Thm2 => (PayoffMatrix::dominant_action1, crate::controller::ControlMatrix::G2),
        Suite::Thm3 => (PayoffMatrix::anti_coordination, crate::controller::ControlMatrix::G2),
        other => return Err(Error::InvalidInput(format!("suite {other} does not take a theorem grid"))),
    };
    let family = if suite == Suite::Thm1 { Adaptation::Linear } else { Adaptation::Power };
    let target = if suite == Suite::Thm1 { Target::Problem1 } else { Target::Problem2 };
    let mut cases = Vec::new();
    for &alpha in &grid.alphas {
        for &beta in &grid.betas {
            let payoff = build_game(alpha, beta);
            for &k in &grid.ks {
                for &h in &grid.hs {
                    for &x0 in &grid.x0s {
                        // The guarantees only cover x(0) in [0,1).
                        if !(0.0..1.0).contains(&x0) {
                            continue;
                        }
                        for &g0 in &grid.g0s {
                            let spec = ControllerSpec::new(matrix, family, k, h, g0)?;
                            let sys = ControlledSystem::new(payoff, spec)?;
                            let verdict = check_validity(sys.class(), &spec);
                            cases.push(Case {
                                params: CaseParams { payoff, k, h, x0, g0 },
                                sys,
                                theorem: verdict.satisfied.then_some(verdict.theorem),
                                target,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(cases)
}

fn gain_is_monotone(traj: &Trajectory) -> Option<(f64, f64, f64)> {
    traj.times
        .windows(2)
        .zip(traj.states.windows(2))
        .find(|(_, s)| s[1].g < s[0].g - MONOTONE_GAIN_SLACK)
        .map(|(t, s)| (t[1], s[0].g, s[1].g))
}

/// Once `x` has dropped below `h`, the maximum of `g` over successive
/// windows must not increase.
fn gain_dies(traj: &Trajectory, h: f64, window: f64) -> Option<String> {
    let start = traj.states.iter().position(|s| s.x < h)?;
    let t0 = traj.times[start];
    let mut maxima: Vec<(usize, f64)> = Vec::new();
    for (t, s) in traj.iter().skip(start) {
        let bin = ((t - t0) / window) as usize;
        match maxima.last_mut() {
            Some((b, m)) if *b == bin => *m = m.max(s.g),
            _ => maxima.push((bin, s.g)),
        }
    }
    maxima
        .windows(2)
        .find(|w| w[1].1 > w[0].1)
        .map(|w| format!("gain window maximum rose from {} to {} after x < h", w[0].1, w[1].1))
}

fn run_case(case: &Case, cfg: &IntegratorConfig, crit: &ConvergenceCriteria) -> CaseOutcome {
    let s0 = SystemState::new(case.params.x0, case.params.g0);
    let fail = |terminal: Option<SystemState>, claim: String| CaseOutcome {
        failure: Some(CaseFailure { params: case.params, terminal, claim }),
        certificates: 0,
        limit: Limit::None,
    };
    let traj = match integrate_with(&case.sys, s0, cfg, crit) {
        Ok(t) => t,
        Err(e) => return fail(None, format!("integration failed: {e}")),
    };
    let limit = traj.converged_to;
    let Some(theorem) = case.theorem else {
        return CaseOutcome { failure: None, certificates: 0, limit };
    };

    let mut claims = Vec::new();
    let report = detect_convergence(&traj, &case.sys, crit, case.target);
    if !report.converged {
        claims.push(report.diagnostic);
    }
    let mut certificates = 0;
    match theorem {
        Theorem::Thm1 => {
            if region_of(s0, case.sys.class()).ok() == Some(Region::B) {
                certificates += 1;
                match check_thm1_escape(&traj, case.sys.class(), case.sys.spec()) {
                    Ok(cert) if cert.holds => {}
                    Ok(cert) => claims.push(format!("escape certificate failed: {cert:?}")),
                    Err(e) => claims.push(format!("escape certificate error: {e}")),
                }
            }
            certificates += 1;
            if let Some(why) = gain_dies(&traj, case.sys.spec().h, crit.window) {
                claims.push(why);
            }
        }
        Theorem::Thm2 | Theorem::Thm3 => {
            certificates += 1;
            if let Some((t, before, after)) = gain_is_monotone(&traj) {
                claims.push(format!("gain decreased at t={t}: {before} -> {after}"));
            }
        }
        Theorem::NotApplicable => {}
    }
    if claims.is_empty() {
        CaseOutcome { failure: None, certificates, limit }
    } else {
        let mut out = fail(Some(traj.terminal), claims.join("; "));
        out.certificates = certificates;
        out.limit = limit;
        out
    }
}

/// Runs a suite over `grid`. Cases are independent and run on the current
/// rayon pool; the report lists them in grid order.
pub fn run_suite(suite: Suite, grid: &Grid, crit: &ConvergenceCriteria) -> Result<SuiteReport> {
    crit.validate()?;
    let (cases, cfg) = match (suite, grid) {
        (Suite::Prop2, Grid::Prop2(g)) => (prop2_cases(g)?, g.integrator),
        (Suite::Thm1 | Suite::Thm2 | Suite::Thm3, Grid::Theorem(g)) => (theorem_cases(suite, g)?, g.integrator),
        (s, _) => return Err(Error::InvalidInput(format!("grid does not match suite {s}"))),
    };
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Precondition(format!("grid for suite {suite} produced no cases")));
    }
    let outcomes: Vec<CaseOutcome> = cases.par_iter().map(|c| run_case(c, &cfg, crit)).collect();

    let mut report = SuiteReport {
        suite,
        cases_total: 0,
        cases_passed: 0,
        failures: Vec::new(),
        exploratory: Vec::new(),
        certificates_checked: 0,
    };
    for (case, outcome) in cases.iter().zip(outcomes) {
        if case.theorem.is_none() {
            report.exploratory.push((case.params, outcome.limit));
            continue;
        }
        report.cases_total += 1;
        report.certificates_checked += outcome.certificates;
        match outcome.failure {
            None => report.cases_passed += 1,
            Some(f) => report.failures.push(f),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinSample {
    pub initial: SystemState,
    pub limit: Limit,
}

/// Labels `n` random initial states by their limit with a coarse default
/// integration (`dt = 0.01`, `t_end = 200`).
pub fn basin_sample(sys: &ControlledSystem, n: usize, seed: u64) -> Result<Vec<BasinSample>> {
    let cfg = IntegratorConfig { dt: 1e-2, t_end: 200.0, record_every: 10, ..IntegratorConfig::default() };
    basin_sample_with(sys, n, seed, &cfg, &ConvergenceCriteria::default())
}

/// `x0` is drawn uniformly from `[0,1)`. Controlled systems also draw
/// `g0` uniformly from `[0.05, 2)`; uncontrolled ones keep the system's `g0`.
pub fn basin_sample_with(
    sys: &ControlledSystem,
    n: usize,
    seed: u64,
    cfg: &IntegratorConfig,
    crit: &ConvergenceCriteria,
) -> Result<Vec<BasinSample>> {
    if n == 0 {
        return Err(Error::InvalidInput("basin sample size must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controlled = sys.spec().family != Adaptation::None;
    let initials: Vec<SystemState> = (0..n)
        .map(|_| {
            let x0 = rng.random_range(0.0..1.0);
            let g0 = if controlled { rng.random_range(0.05..2.0) } else { sys.spec().g0 };
            SystemState::new(x0, g0)
        })
        .collect();
    initials
        .par_iter()
        .map(|&s0| integrate_with(sys, s0, cfg, crit).map(|t| BasinSample { initial: s0, limit: t.converged_to }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::classify;

    fn small_theorem_grid(ks: Vec<f64>, hs: Vec<f64>) -> TheoremGrid {
        TheoremGrid {
            alphas: vec![1.0],
            betas: vec![1.0],
            ks,
            hs,
            x0s: vec![0.2, 0.9],
            g0s: vec![0.5],
            integrator: IntegratorConfig { dt: 1e-2, t_end: 200.0, record_every: 10, ..Default::default() },
        }
    }

    #[test]
    fn predicted_limits() {
        let coord = classify(&PayoffMatrix::coordination(1.0, 1.0));
        assert_eq!(predicted_limit(&coord, 0.2), Some(Target::X0));
        assert_eq!(predicted_limit(&coord, 0.7), Some(Target::X1));
        assert_eq!(predicted_limit(&coord, 0.5), Some(Target::MixedNe));
        let anti = classify(&PayoffMatrix::anti_coordination(1.0, 1.0));
        assert_eq!(predicted_limit(&anti, 0.95), Some(Target::MixedNe));
        let d2 = classify(&PayoffMatrix::dominant_action2(1.0, 1.0));
        assert_eq!(predicted_limit(&d2, 0.95), Some(Target::X0));
    }

    #[test]
    fn out_of_hypothesis_cases_are_exploratory() {
        let grid = Grid::Theorem(small_theorem_grid(vec![1.0], vec![0.25, 0.6]));
        let report = run_suite(Suite::Thm1, &grid, &ConvergenceCriteria::default()).unwrap();
        assert_eq!(report.cases_total, 2);
        assert_eq!(report.exploratory.len(), 2);
        assert!(report.exploratory.iter().all(|(p, _)| p.h == 0.6));
        assert!(report.passed(), "{:?}", report.failures);
    }

    #[test]
    fn mismatched_or_empty_grid_is_rejected() {
        let theorem = Grid::Theorem(small_theorem_grid(vec![1.0], vec![0.25]));
        assert!(run_suite(Suite::Prop2, &theorem, &ConvergenceCriteria::default()).is_err());
        let empty = Grid::Theorem(small_theorem_grid(vec![], vec![0.25]));
        assert!(run_suite(Suite::Thm1, &empty, &ConvergenceCriteria::default()).is_err());
    }

    #[test]
    fn suite_is_deterministic() {
        let grid = Grid::Theorem(small_theorem_grid(vec![0.5, 2.0], vec![0.25]));
        let a = run_suite(Suite::Thm1, &grid, &ConvergenceCriteria::default()).unwrap();
        let b = run_suite(Suite::Thm1, &grid, &ConvergenceCriteria::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_enumerated() {
        // An impossible tolerance turns every case into a failure.
        let grid = Grid::Theorem(small_theorem_grid(vec![1.0], vec![0.25]));
        let crit = ConvergenceCriteria { x_tol: 1e-300, ..Default::default() };
        let report = run_suite(Suite::Thm1, &grid, &crit).unwrap();
        assert_eq!(report.cases_passed, 0);
        assert_eq!(report.failures.len(), 2);
        assert!(report.failures[0].claim.contains("Problem1"));
    }

    #[test]
    fn basin_of_uncontrolled_coordination() {
        let sys = ControlledSystem::uncontrolled(PayoffMatrix::coordination(1.0, 1.0)).unwrap();
        let samples = basin_sample(&sys, 40, 7).unwrap();
        for s in &samples {
            let expected = if s.initial.x < 0.5 { Limit::X0 } else { Limit::X1 };
            assert_eq!(s.limit, expected, "{:?}", s.initial);
        }
    }

    #[test]
    fn basin_of_thm1_controller_is_everything() {
        let sys = ControlledSystem::new(
            PayoffMatrix::coordination(1.0, 1.0),
            ControllerSpec::coordination(1.0, 0.4, 0.2).unwrap(),
        )
        .unwrap();
        let samples = basin_sample(&sys, 24, 3).unwrap();
        assert!(samples.iter().all(|s| s.limit == Limit::X0), "{samples:?}");
    }

    #[test]
    fn basin_sample_is_seeded() {
        let sys = ControlledSystem::uncontrolled(PayoffMatrix::coordination(1.0, 1.0)).unwrap();
        assert_eq!(basin_sample(&sys, 1, 99).unwrap(), basin_sample(&sys, 1, 99).unwrap());
        assert_ne!(basin_sample(&sys, 3, 1).unwrap(), basin_sample(&sys, 3, 2).unwrap());
        assert!(basin_sample(&sys, 0, 1).is_err());
    }
}
