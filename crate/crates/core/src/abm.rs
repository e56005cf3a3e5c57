//! Finite-population pairwise-imitation model whose mean-field limit is the
//! replicator equation.
//!
//! Events arrive as a Poisson process of rate `N * rate_scale`. At each event
//! a uniformly random focal agent looks at a uniformly random model agent
//! (possibly itself) and copies its action with probability
//! `max(0, r_model - r_focal) / rate_scale`. Under this clock the expected
//! drift of the empirical share is `x(1-x)(r1 - r2)`, so ABM time and ODE
//! time coincide without rescaling. The gain is not per-agent: it follows
//! `g' = phi(x) g` driven by the empirical share, which is piecewise
//! constant, so it is advanced exactly between events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CaseFailure, CaseParams, Suite, SuiteReport};
use crate::controller::effective_payoff_unchecked;
use crate::dynamics::{ControlledSystem, SystemState};
use crate::error::{Error, Result};
use crate::game::{rewards_unchecked, PayoffMatrix};
use crate::integrator::{integrate, IntegratorConfig, Trajectory, GAIN_LIMIT};

/// Step used by the reference ODE integration in [`compare_to_ode`].
const ODE_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbmConfig {
    pub population: usize,
    pub seed: u64,
    /// Upper bound on any payoff difference between two agents.
    pub rate_scale: f64,
    /// Sampling interval of the recorded trajectory.
    pub record_dt: f64,
}

impl AbmConfig {
    pub fn new(population: usize, seed: u64, rate_scale: f64, record_dt: f64) -> Result<Self> {
        let cfg = Self { population, seed, rate_scale, record_dt };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config whose rate scale is the payoff-difference bound of `sys` at its
    /// initial gain (at least 1e-9 so a zero game is still admissible).
    pub fn for_system(sys: &ControlledSystem, population: usize, seed: u64) -> Result<Self> {
        let bound = payoff_difference_bound(sys, sys.spec().g0).max(1e-9);
        Self::new(population, seed, bound, 0.01)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidInput(format!("population must be >= 2, got {}", self.population)));
        }
        if !(self.rate_scale.is_finite() && self.rate_scale > 0.0) {
            return Err(Error::InvalidInput(format!("rate_scale must be finite and > 0, got {}", self.rate_scale)));
        }
        if !(self.record_dt.is_finite() && self.record_dt > 0.0) {
            return Err(Error::InvalidInput(format!("record_dt must be finite and > 0, got {}", self.record_dt)));
        }
        Ok(())
    }

    /// Mean time between imitation events.
    pub fn dt_event(&self) -> f64 {
        1.0 / (self.population as f64 * self.rate_scale)
    }
}

/// Largest `|r1 - r2|` over all shares, for the effective payoff at gain `g`.
pub fn payoff_difference_bound(sys: &ControlledSystem, g: f64) -> f64 {
    let m = effective_payoff_unchecked(sys.nominal(), &sys.spec().control_matrix, g);
    (m.a - m.c).abs().max((m.b - m.d).abs())
}

fn check_t_end(t_end: f64) -> Result<()> {
    if t_end.is_finite() && t_end > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("t_end must be finite and > 0, got {t_end}")))
    }
}

/// Runs the imitation process from `round(x0 * N)` agents on action 1 and
/// records `(x, g)` every `record_dt` up to `t_end`.
pub fn simulate_abm(sys: &ControlledSystem, x0: f64, cfg: &AbmConfig, t_end: f64) -> Result<Trajectory> {
    cfg.validate()?;
    check_t_end(t_end)?;
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::InvalidInput(format!("x0 must lie in [0,1], got {x0}")));
    }
    let n = cfg.population;
    let nf = n as f64;
    let spec = sys.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clock = Exp::new(nf * cfg.rate_scale).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut ones = (x0 * nf).round() as usize;
    let mut g = spec.g0;
    let mut t = 0.0;
    let n_records = (t_end / cfg.record_dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(n_records + 2);
    let mut states = Vec::with_capacity(n_records + 2);
    times.push(0.0);
    states.push(SystemState::new(ones as f64 / nf, g));
    let mut next_record = 1;

    let advance_gain = |g: f64, x: f64, dt: f64| g * (spec.phi_unchecked(x) * dt).exp();
    let check_gain = |g: f64, t: f64| {
        if g.is_finite() && g <= GAIN_LIMIT {
            Ok(())
        } else {
            Err(Error::GainOverflow { t, g, limit: GAIN_LIMIT })
        }
    };

    loop {
        let t_next = t + clock.sample(&mut rng);
        let x = ones as f64 / nf;
        // Emit records that fall before the next event.
        while next_record <= n_records {
            let tr = next_record as f64 * cfg.record_dt;
            if tr >= t_next {
                break;
            }
            let gr = advance_gain(g, x, tr - t);
            check_gain(gr, tr)?;
            times.push(tr);
            states.push(SystemState::new(x, gr));
            next_record += 1;
        }
        if t_next >= t_end {
            if times.last() != Some(&t_end) {
                let ge = advance_gain(g, x, t_end - t);
                check_gain(ge, t_end)?;
                times.push(t_end);
                states.push(SystemState::new(x, ge));
            }
            break;
        }
        g = advance_gain(g, x, t_next - t);
        check_gain(g, t_next)?;
        t = t_next;

        let bound = payoff_difference_bound(sys, g);
        if bound > cfg.rate_scale {
            return Err(Error::RateScaleTooSmall { t, rate_scale: cfg.rate_scale, bound });
        }
        let focal_is_one = rng.random_range(0..n) < ones;
        let model_is_one = rng.random_range(0..n) < ones;
        if focal_is_one == model_is_one {
            continue;
        }
        let m = effective_payoff_unchecked(sys.nominal(), &spec.control_matrix, g);
        let (r1, r2) = rewards_unchecked(x, &m);
        let gain = if model_is_one { r1 - r2 } else { r2 - r1 };
        if gain > 0.0 && rng.random::<f64>() < gain / cfg.rate_scale {
            if model_is_one {
                ones += 1;
            } else {
                ones -= 1;
            }
        }
    }
    Ok(Trajectory::from_samples(times, states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Largest `|x_abm - x_ode|` over the recorded times.
    pub sup_norm: f64,
    pub times: Vec<f64>,
    pub abm_x: Vec<f64>,
    pub ode_x: Vec<f64>,
}

/// Runs the ABM and the ODE from the same `x0` and compares the shares at
/// each ABM record time.
pub fn compare_to_ode(sys: &ControlledSystem, x0: f64, cfg: &AbmConfig, t_end: f64) -> Result<DeviationReport> {
    let abm = simulate_abm(sys, x0, cfg, t_end)?;
    let per_record = (cfg.record_dt / ODE_DT).ceil().max(1.0);
    let ode_cfg = IntegratorConfig::new(cfg.record_dt / per_record, t_end, per_record as usize)?;
    let ode = integrate(sys, sys.initial_state(x0), &ode_cfg)?;
    let mut ode_x = Vec::with_capacity(abm.len());
    for &t in &abm.times {
        let s = ode.state_near(t).ok_or_else(|| Error::Precondition("empty ODE trajectory".into()))?;
        ode_x.push(s.x);
    }
    let abm_x: Vec<f64> = abm.states.iter().map(|s| s.x).collect();
    let sup_norm = abm_x.iter().zip(&ode_x).map(|(a, o)| (a - o).abs()).fold(0.0, f64::max);
    Ok(DeviationReport { sup_norm, times: abm.times, abm_x, ode_x })
}

/// Median sup-norm deviation over `seeds` independent runs.
pub fn median_deviation(
    sys: &ControlledSystem,
    x0: f64,
    population: usize,
    seeds: std::ops::Range<u64>,
    t_end: f64,
) -> Result<f64> {
    let mut devs = seeds
        .into_par_iter()
        .map(|seed| {
            let cfg = AbmConfig::for_system(sys, population, seed)?;
            compare_to_ode(sys, x0, &cfg, t_end).map(|r| r.sup_norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    if devs.is_empty() {
        return Err(Error::InvalidInput("at least one seed is required".into()));
    }
    devs.sort_by(f64::total_cmp);
    let mid = devs.len() / 2;
    Ok(if devs.len() % 2 == 1 { devs[mid] } else { 0.5 * (devs[mid - 1] + devs[mid]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmSuiteConfig {
    /// Uncontrolled games with their initial share.
    pub games: Vec<(PayoffMatrix, f64)>,
    /// Increasing population sizes.
    pub populations: Vec<usize>,
    pub seeds: u64,
    pub t_end: f64,
    /// Bound on the median deviation at the largest population.
    pub tolerance: f64,
}

impl Default for AbmSuiteConfig {
    fn default() -> Self {
        Self {
            games: vec![
                (PayoffMatrix::coordination(1.0, 1.0), 0.8),
                (PayoffMatrix { a: 1.0, b: 3.0, c: 0.0, d: 2.0 }, 0.1),
                (PayoffMatrix::anti_coordination(1.0, 1.0), 0.95),
            ],
            populations: vec![100, 1000, 10_000],
            seeds: 20,
            t_end: 10.0,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmGameResult {
    pub payoff: PayoffMatrix,
    pub x0: f64,
    /// `(population, median sup-norm deviation)` in the configured order.
    pub medians: Vec<(usize, f64)>,
}

/// Mean-field agreement check: per game, the median deviation must fall
/// strictly as the population grows and end below the tolerance.
pub fn run_abm_suite(cfg: &AbmSuiteConfig) -> Result<(SuiteReport, Vec<AbmGameResult>)> {
    if cfg.games.is_empty() || cfg.populations.is_empty() || cfg.seeds == 0 {
        return Err(Error::Precondition("abm suite needs games, populations and seeds".into()));
    }
    let mut report = SuiteReport {
        suite: Suite::Abm,
        cases_total: 0,
        cases_passed: 0,
        failures: Vec::new(),
        exploratory: Vec::new(),
        certificates_checked: 0,
    };
    let mut results = Vec::new();
    for &(payoff, x0) in &cfg.games {
        let sys = ControlledSystem::uncontrolled(payoff)?;
        let medians = cfg
            .populations
            .iter()
            .map(|&n| median_deviation(&sys, x0, n, 0..cfg.seeds, cfg.t_end).map(|m| (n, m)))
            .collect::<Result<Vec<_>>>()?;
        let mut claims = Vec::new();
        if let Some(w) = medians.windows(2).find(|w| w[1].1 >= w[0].1) {
            claims.push(format!("median deviation did not decrease from N={} ({}) to N={} ({})", w[0].0, w[0].1, w[1].0, w[1].1));
        }
        let (n_last, m_last) = *medians.last().expect("populations is non-empty");
        if m_last >= cfg.tolerance {
            claims.push(format!("median deviation {m_last} at N={n_last} is not below {}", cfg.tolerance));
        }
        report.cases_total += 1;
        if claims.is_empty() {
            report.cases_passed += 1;
        } else {
            report.failures.push(CaseFailure {
                params: CaseParams { payoff, k: 0.0, h: 0.0, x0, g0: 0.0 },
                terminal: None,
                claim: claims.join("; "),
            });
        }
        results.push(AbmGameResult { payoff, x0, medians });
    }
    Ok((report, results))
}
