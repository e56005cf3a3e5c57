//! Convergence detection on recorded trajectories, the region partition
//! used for coordination games, and numerical certificates for the
//! intermediate bounds behind the convergence guarantees.

mod suite;

pub use suite::{
    basin_sample, basin_sample_with, run_suite, BasinSample, CaseFailure, CaseParams, Grid, Prop2Grid,
    Suite, SuiteReport, TheoremGrid,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::controller::{check_validity, ControllerSpec, Theorem};
use crate::dynamics::{ControlledSystem, SystemState};
use crate::error::{Error, Result};
use crate::game::GameClass;
use crate::integrator::Trajectory;

/// Relative slack on the exponential gain lower bound.
pub const ESCAPE_BOUND_SLACK: f64 = 1e-6;
/// Relative slack on the exponential decay bound for `x`.
pub const DECAY_BOUND_SLACK: f64 = 1e-6;

/// Where a trajectory ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    /// Everyone plays action 2.
    X0,
    /// Everyone plays action 1.
    X1,
    /// The nominal game's mixed equilibrium.
    MixedNe,
    /// `x` is elsewhere but the gain has stopped moving.
    GainConstant,
    None,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::X0 => "x0",
            Limit::X1 => "x1",
            Limit::MixedNe => "mixed_ne",
            Limit::GainConstant => "gain_constant",
            Limit::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub x_tol: f64,
    /// Bound on `g` for `g -> 0` claims.
    pub g_tol: f64,
    /// Bound on `|phi(x) g|` for `g -> constant` claims.
    pub dg_tol: f64,
    /// Trailing time span over which a criterion must hold.
    pub window: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self { x_tol: 1e-3, g_tol: 0.05, dg_tol: 1e-6, window: 5.0 }
    }
}

impl ConvergenceCriteria {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x_tol", self.x_tol), ("g_tol", self.g_tol), ("dg_tol", self.dg_tol), ("window", self.window)] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// What a trajectory is expected to converge to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    X0,
    X1,
    MixedNe,
    GainConstant,
    /// `x -> 0` together with `g -> 0`.
    Problem1,
    /// `x -> 0` together with `g -> constant`.
    Problem2,
}

impl From<Limit> for Option<Target> {
    fn from(l: Limit) -> Self {
        match l {
            Limit::X0 => Some(Target::X0),
            Limit::X1 => Some(Target::X1),
            Limit::MixedNe => Some(Target::MixedNe),
            Limit::GainConstant => Some(Target::GainConstant),
            Limit::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// First recorded point inside the trailing window that breaks the criterion.
    pub first_violation: Option<(f64, SystemState)>,
    pub diagnostic: String,
}

fn check_point(sys: &ControlledSystem, crit: &ConvergenceCriteria, target: Target, s: SystemState) -> std::result::Result<(), String> {
    let x_at = |goal: f64, name: &str| {
        if (s.x - goal).abs() < crit.x_tol {
            Ok(())
        } else {
            Err(format!("|x - {name}| = {} >= x_tol {}", (s.x - goal).abs(), crit.x_tol))
        }
    };
    let gain_settled = || {
        let rate = (sys.spec().phi_unchecked(s.x.clamp(0.0, 1.0)) * s.g).abs();
        if rate < crit.dg_tol {
            Ok(())
        } else {
            Err(format!("|phi(x) g| = {rate} >= dg_tol {}", crit.dg_tol))
        }
    };
    match target {
        Target::X0 => x_at(0.0, "0"),
        Target::X1 => x_at(1.0, "1"),
        Target::MixedNe => match sys.class().mixed_ne() {
            Some(x_star) => x_at(x_star, "x*"),
            None => Err(format!("{} game has no mixed equilibrium", sys.class().name())),
        },
        Target::GainConstant => gain_settled(),
        Target::Problem1 => x_at(0.0, "0").and_then(|_| {
            if s.g < crit.g_tol {
                Ok(())
            } else {
                Err(format!("g = {} >= g_tol {}", s.g, crit.g_tol))
            }
        }),
        Target::Problem2 => x_at(0.0, "0").and_then(|_| gain_settled()),
    }
}

/// Whether `target` holds at every recorded point of the trailing window
/// `[t_last - window, t_last]`.
pub fn detect_convergence(
    traj: &Trajectory,
    sys: &ControlledSystem,
    crit: &ConvergenceCriteria,
    target: Target,
) -> ConvergenceReport {
    if traj.is_empty() {
        return ConvergenceReport {
            converged: false,
            first_violation: None,
            diagnostic: "empty trajectory".into(),
        };
    }
    let start = traj.t_end() - crit.window;
    for (t, s) in traj.iter().filter(|(t, _)| *t >= start) {
        if let Err(why) = check_point(sys, crit, target, s) {
            return ConvergenceReport {
                converged: false,
                first_violation: Some((t, s)),
                diagnostic: format!("{target:?} violated at t={t}: {why}"),
            };
        }
    }
    ConvergenceReport {
        converged: true,
        first_violation: None,
        diagnostic: format!("{target:?} held over [{}, {}]", start.max(0.0), traj.t_end()),
    }
}

/// Earliest recorded time from which `target` holds at every later recorded point.
pub fn settle_time(traj: &Trajectory, sys: &ControlledSystem, crit: &ConvergenceCriteria, target: Target) -> Option<f64> {
    let last_bad = traj
        .states
        .iter()
        .rposition(|&s| check_point(sys, crit, target, s).is_err());
    match last_bad {
        None => traj.times.first().copied(),
        Some(i) if i + 1 < traj.len() => Some(traj.times[i + 1]),
        Some(_) => None,
    }
}

/// Labels the limit of a trajectory, trying `X0`, `X1`, `MixedNe` and
/// `GainConstant` in that order.
pub fn label_trajectory(traj: &Trajectory, sys: &ControlledSystem, crit: &ConvergenceCriteria) -> Limit {
    [
        (Target::X0, Limit::X0),
        (Target::X1, Limit::X1),
        (Target::MixedNe, Limit::MixedNe),
        (Target::GainConstant, Limit::GainConstant),
    ]
    .into_iter()
    .find(|&(target, _)| detect_convergence(traj, sys, crit, target).converged)
    .map_or(Limit::None, |(_, l)| l)
}

/// Partition of the domain for coordination games, split at `x* = beta/(alpha+beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `x < x*`
    A,
    /// `x* <= x < 1`
    B,
    /// `x = 1`
    C,
}

pub fn region_of(s: SystemState, game: &GameClass) -> Result<Region> {
    let GameClass::Coordination { mixed_ne, .. } = *game else {
        return Err(Error::Precondition(format!("regions are defined for coordination games, got {}", game.name())));
    };
    s.check_domain()?;
    Ok(if s.x < mixed_ne {
        Region::A
    } else if s.x < 1.0 {
        Region::B
    } else {
        Region::C
    })
}

/// Outcome of [`check_thm1_escape`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeCertificate {
    pub holds: bool,
    /// Guaranteed exponential growth rate of the gain inside region B.
    pub mu: f64,
    /// First recorded time in region A.
    pub exit_time: Option<f64>,
    /// First recorded time back in B after the exit.
    pub reentry_time: Option<f64>,
    /// `(t, g, bound)` of the first point where the gain fell below the bound.
    pub bound_violation: Option<(f64, f64, f64)>,
}

/// Escape rate `mu = k (beta/(alpha+beta) - h)` of the gain in region B.
pub fn escape_rate(game: &GameClass, spec: &ControllerSpec) -> Result<f64> {
    let x_star = match *game {
        GameClass::Coordination { mixed_ne, .. } => mixed_ne,
        _ => return Err(Error::Precondition(format!("escape rate needs a coordination game, got {}", game.name()))),
    };
    Ok(spec.k * (x_star - spec.h))
}

/// Certifies that a trajectory starting in region B leaves it for A and
/// never returns, and that until it leaves, `g(t) >= g(0) e^{mu t}`.
pub fn check_thm1_escape(traj: &Trajectory, game: &GameClass, spec: &ControllerSpec) -> Result<EscapeCertificate> {
    let verdict = check_validity(game, spec);
    if verdict.theorem != Theorem::Thm1 || !verdict.satisfied {
        return Err(Error::Precondition(format!("configuration is not covered by Thm1: {}", verdict.detail)));
    }
    let first = *traj.states.first().ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    if region_of(first, game)? != Region::B {
        return Err(Error::Precondition(format!("trajectory starts at {first}, outside region B")));
    }
    let mu = escape_rate(game, spec)?;
    let g0 = first.g;

    let mut exit_time = None;
    let mut reentry_time = None;
    let mut bound_violation = None;
    for (t, s) in traj.iter() {
        let region = region_of(s, game)?;
        match exit_time {
            None if region == Region::A => exit_time = Some(t),
            None => {
                let bound = g0 * (mu * t).exp();
                if bound_violation.is_none() && s.g < bound * (1.0 - ESCAPE_BOUND_SLACK) {
                    bound_violation = Some((t, s.g, bound));
                }
            }
            Some(_) => {
                if region != Region::A && reentry_time.is_none() {
                    reentry_time = Some(t);
                }
            }
        }
    }
    Ok(EscapeCertificate {
        holds: exit_time.is_some() && reentry_time.is_none() && bound_violation.is_none(),
        mu,
        exit_time,
        reentry_time,
        bound_violation,
    })
}

/// Outcome of [`check_thm2_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayBoundReport {
    pub holds: bool,
    /// First recorded time with `x <= 1 - eps` and `g >= alpha/eps + beta + gamma`.
    pub tau: Option<f64>,
    pub gain_threshold: f64,
    /// Largest `x(t) / ((1 - eps) e^{-gamma eps^2 (t - tau)})` after `tau`.
    pub worst_ratio: f64,
    pub diagnostic: String,
}

/// Checks the exponential decay bound
/// `x(t) <= (1 - eps) exp(-gamma eps^2 (t - tau))` for all recorded `t >= tau`
/// on a dominant-strategy run.
pub fn check_thm2_bound(traj: &Trajectory, game: &GameClass, eps: f64, gamma: f64) -> Result<DecayBoundReport> {
    let GameClass::DominantAction1 { alpha, beta } = *game else {
        return Err(Error::Precondition(format!(
            "decay bound needs a game where action 1 dominates, got {}",
            game.name()
        )));
    };
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma must be > 0, got {gamma}")));
    }
    let gain_threshold = alpha / eps + beta + gamma;
    let tau_idx = traj.states.iter().position(|s| s.x <= 1.0 - eps && s.g >= gain_threshold);
    let Some(i0) = tau_idx else {
        return Ok(DecayBoundReport {
            holds: false,
            tau: None,
            gain_threshold,
            worst_ratio: f64::NAN,
            diagnostic: format!("tau_eps not reached by t={} (gain threshold {gain_threshold})", traj.t_end()),
        });
    };
    let tau = traj.times[i0];
    let rate = gamma * eps * eps;
    let mut worst_ratio = 0.0_f64;
    let mut first_bad = None;
    for (t, s) in traj.iter().skip(i0) {
        let bound = (1.0 - eps) * (-rate * (t - tau)).exp();
        let ratio = s.x / bound;
        worst_ratio = worst_ratio.max(ratio);
        if first_bad.is_none() && s.x > bound * (1.0 + DECAY_BOUND_SLACK) {
            first_bad = Some((t, s.x, bound));
        }
    }
    let diagnostic = match first_bad {
        None => format!("bound held from tau={tau} to t={}", traj.t_end()),
        Some((t, x, b)) => format!("x({t}) = {x} exceeds bound {b}"),
    };
    Ok(DecayBoundReport { holds: first_bad.is_none(), tau: Some(tau), gain_threshold, worst_ratio, diagnostic })
}
