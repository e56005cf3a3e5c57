//! Fixed-step classical Runge-Kutta integration of the controlled system
//! with projection back onto `[0,1] x [0,inf)` after every step.
//!
//! A step is split into RK4 substeps when the local eigenvalue bound
//! times `dt` leaves the comfortable part of the RK4 stability region. Large
//! gains make the `x` equation stiff (its rate scales with `g`), so a fixed
//! `dt` that resolves the transient can still be unstable once the gain has
//! grown. Substep lengths depend only on the current state, so runs stay
//! bit-for-bit reproducible.

use serde::{Deserialize, Serialize};

use crate::analysis::{label_trajectory, ConvergenceCriteria, Limit};
use crate::dynamics::{ControlledSystem, SystemState};
use crate::error::{Error, Result};

/// Integration aborts once the gain exceeds this value.
pub const GAIN_LIMIT: f64 = 1e12;

/// Largest `dt * |lambda|` accepted for a single RK4 substep.
const SUBSTEP_STABILITY: f64 = 0.5;

const MAX_SUBSTEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Store one state every `record_every` steps (plus the first and last).
    pub record_every: usize,
    /// Projection corrections larger than this are counted in
    /// [`Trajectory::clamp_events`].
    pub clamp_eps: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 100.0, record_every: 100, clamp_eps: 1e-12 }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, record_every: usize) -> Result<Self> {
        let cfg = Self { dt, t_end, record_every, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_end must be finite and >= dt, got t_end={} dt={}",
                self.t_end, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be >= 1".into()));
        }
        if !(self.clamp_eps >= 0.0) {
            return Err(Error::InvalidInput(format!("clamp_eps must be >= 0, got {}", self.clamp_eps)));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened so the run ends exactly at `t_end`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub terminal: SystemState,
    pub converged_to: Limit,
    /// Largest projection correction applied in any step.
    pub max_clamp_correction: f64,
    /// Steps whose projection correction exceeded `clamp_eps`.
    pub clamp_events: usize,
    /// Largest number of RK4 substeps used for one step.
    pub max_substeps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, SystemState)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }

    /// Largest recorded gain.
    pub fn peak_gain(&self) -> f64 {
        self.states.iter().map(|s| s.g).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Recorded state closest in time to `t`.
    pub fn state_near(&self, t: f64) -> Option<SystemState> {
        let idx = self.times.partition_point(|&ti| ti < t);
        let candidates = [idx.checked_sub(1), Some(idx)];
        candidates
            .into_iter()
            .flatten()
            .filter(|&i| i < self.len())
            .min_by(|&i, &j| (self.times[i] - t).abs().total_cmp(&(self.times[j] - t).abs()))
            .map(|i| self.states[i])
    }

    /// Trajectory built from already computed samples; used by the
    /// agent-based simulator and by CSV readers.
    pub fn from_samples(times: Vec<f64>, states: Vec<SystemState>) -> Self {
        let terminal = states.last().copied().unwrap_or(SystemState::new(0.0, 0.0));
        Self {
            times,
            states,
            terminal,
            converged_to: Limit::None,
            max_clamp_correction: 0.0,
            clamp_events: 0,
            max_substeps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct StepOutcome {
    pub state: SystemState,
    pub correction: f64,
    pub substeps: usize,
}

#[inline]
fn rk4(sys: &ControlledSystem, x: f64, g: f64, h: f64) -> Result<(f64, f64)> {
    let (k1x, k1g) = sys.field(x, g);
    let (k2x, k2g) = sys.field(x + 0.5 * h * k1x, g + 0.5 * h * k1g);
    let (k3x, k3g) = sys.field(x + 0.5 * h * k2x, g + 0.5 * h * k2g);
    let (k4x, k4g) = sys.field(x + h * k3x, g + h * k3g);
    let nx = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    let ng = g + h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
    if [k1x, k1g, k2x, k2g, k3x, k3g, k4x, k4g, nx, ng].iter().all(|v| v.is_finite()) {
        Ok((nx, ng))
    } else {
        Err(Error::NonFinite { t: f64::NAN })
    }
}

pub(crate) fn step_detailed(sys: &ControlledSystem, s: SystemState, dt: f64) -> Result<StepOutcome> {
    let (mut x, mut g) = (s.x, s.g);
    let mut correction = 0.0;
    let mut substeps = 0;
    let mut remaining = dt;
    // The substep length is re-derived from the current state before every
    // substep: the switch between the two pure states steepens within a
    // single step once the gain is large.
    while remaining > 0.0 {
        let rho = sys.stiffness_bound(x, g);
        if !rho.is_finite() {
            return Err(Error::NonFinite { t: f64::NAN });
        }
        let pieces = (remaining * rho / SUBSTEP_STABILITY).ceil().max(1.0);
        if substeps as f64 + pieces > MAX_SUBSTEPS as f64 {
            return Err(Error::TooStiff { t: f64::NAN, limit: MAX_SUBSTEPS });
        }
        let h = if pieces == 1.0 { remaining } else { remaining / pieces };
        let (nx, ng) = rk4(sys, x, g, h)?;
        x = nx.clamp(0.0, 1.0);
        // A subnormal share pushed further down has decayed past resolution.
        // Snapping it onto the invariant line x = 0 is what an implicit step
        // would round to, and avoids stiff substeps on a frozen value.
        if x < f64::MIN_POSITIVE && sys.advantage(0.0, ng.max(0.0)) <= 0.0 {
            x = 0.0;
        }
        g = ng.max(0.0);
        correction += (nx - x).abs() + (ng - g).abs();
        substeps += 1;
        remaining = if pieces == 1.0 { 0.0 } else { remaining - h };
    }
    Ok(StepOutcome { state: SystemState::new(x, g), correction, substeps })
}

/// One RK4 step of size `dt` followed by projection onto the domain.
pub fn step(sys: &ControlledSystem, s: SystemState, dt: f64) -> Result<SystemState> {
    s.check_domain()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    step_detailed(sys, s, dt).map(|o| o.state)
}

/// Integrates from `s0` to `cfg.t_end` and labels the limit with the
/// default [`ConvergenceCriteria`].
pub fn integrate(sys: &ControlledSystem, s0: SystemState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_with(sys, s0, cfg, &ConvergenceCriteria::default())
}

pub fn integrate_with(
    sys: &ControlledSystem,
    s0: SystemState,
    cfg: &IntegratorConfig,
    crit: &ConvergenceCriteria,
) -> Result<Trajectory> {
    cfg.validate()?;
    s0.check_domain()?;
    let n = cfg.n_steps();
    let capacity = n / cfg.record_every + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(s0);

    let mut s = s0;
    let mut max_clamp_correction = 0.0_f64;
    let mut clamp_events = 0;
    let mut max_substeps = 0;
    for i in 0..n {
        let t = i as f64 * cfg.dt;
        let (h, t_next) = if i + 1 == n { (cfg.t_end - t, cfg.t_end) } else { (cfg.dt, (i + 1) as f64 * cfg.dt) };
        let outcome = step_detailed(sys, s, h).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { t },
            Error::TooStiff { limit, .. } => Error::TooStiff { t, limit },
            other => other,
        })?;
        s = outcome.state;
        if s.g > GAIN_LIMIT {
            return Err(Error::GainOverflow { t: t_next, g: s.g, limit: GAIN_LIMIT });
        }
        max_clamp_correction = max_clamp_correction.max(outcome.correction);
        if outcome.correction > cfg.clamp_eps {
            clamp_events += 1;
        }
        max_substeps = max_substeps.max(outcome.substeps);
        if (i + 1) % cfg.record_every == 0 || i + 1 == n {
            times.push(t_next);
            states.push(s);
        }
    }

    let mut traj = Trajectory {
        times,
        states,
        terminal: s,
        converged_to: Limit::None,
        max_clamp_correction,
        clamp_events,
        max_substeps,
    };
    traj.converged_to = label_trajectory(&traj, sys, crit);
    Ok(traj)
}
