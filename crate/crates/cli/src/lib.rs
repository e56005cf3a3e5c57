//! Command-line front end: classify games, run single simulations, sweep
//! parameter grids and run the verification suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical failure.

pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use replicator_core::abm::{run_abm_suite, AbmSuiteConfig};
use replicator_core::analysis::{run_suite, Suite, SuiteReport};
use replicator_core::{check_validity, classify, integrate_with, ControlledSystem, PayoffMatrix, Theorem};

use crate::config::{ExperimentConfig, Format, SweepConfig};
use crate::error::{CliError, CliResult};
use crate::output::{trajectory_svg, write_trajectory_csv, RunSummary};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "REPLICATOR_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "replicator", version, about = "Adaptive-gain control of replicator dynamics")]
pub struct Cli {
    /// Worker threads for sweeps and suites [default: $REPLICATOR_WORKERS, else all cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the game with payoff matrix [[a, b], [c, d]].
    Classify {
        #[arg(allow_negative_numbers = true)]
        a: f64,
        #[arg(allow_negative_numbers = true)]
        b: f64,
        #[arg(allow_negative_numbers = true)]
        c: f64,
        #[arg(allow_negative_numbers = true)]
        d: f64,
        /// Print the classification as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Integrate one controlled system and write its trajectory.
    Simulate(SimulateArgs),
    /// Run every case of a cartesian parameter grid.
    Sweep(SweepArgs),
    /// Run a verification suite on its default grid.
    Verify {
        suite: SuiteArg,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    Prop2,
    Thm1,
    Thm2,
    Thm3,
    Abm,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Prop2 => Suite::Prop2,
            SuiteArg::Thm1 => Suite::Thm1,
            SuiteArg::Thm2 => Suite::Thm2,
            SuiteArg::Thm3 => Suite::Thm3,
            SuiteArg::Abm => Suite::Abm,
        }
    }
}

/// Flags that override the corresponding config-file entries.
#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, num_args = 4, value_names = ["A", "B", "C", "D"], allow_negative_numbers = true)]
    pub payoff: Option<Vec<f64>>,
    /// Adaptation family: phi1, phi2 or none.
    #[arg(long)]
    pub family: Option<String>,
    /// Control matrix: none, g1, g2 or four bits such as 0010.
    #[arg(long)]
    pub matrix: Option<String>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub g0: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<Format>>,
}

impl SimulateArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(p) = &self.payoff {
            cfg.payoff = p
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Usage("--payoff takes four numbers".into()))?;
        }
        let c = &mut cfg.controller;
        if let Some(v) = &self.family {
            c.family = v.clone();
        }
        if let Some(v) = &self.matrix {
            c.matrix = v.clone();
        }
        c.k = self.k.unwrap_or(c.k);
        c.h = self.h.unwrap_or(c.h);
        c.g0 = self.g0.unwrap_or(c.g0);
        cfg.initial_x = self.x0.unwrap_or(cfg.initial_x);
        let i = &mut cfg.integrator;
        i.dt = self.dt.unwrap_or(i.dt);
        i.t_end = self.t_end.unwrap_or(i.t_end);
        i.record_every = self.record_every.unwrap_or(i.record_every);
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = &self.formats {
            cfg.output.formats = v.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file with a `[base]` experiment and a `[grid]` of axes.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: base.output.dir].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs the parsed command, printing to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    configure_workers(cli.workers)?;
    match cli.command {
        Command::Classify { a, b, c, d, json } => cmd_classify([a, b, c, d], json),
        Command::Simulate(args) => {
            let mut cfg = match &args.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            args.apply(&mut cfg)?;
            cmd_simulate(&cfg).map(|_| ())
        }
        Command::Sweep(args) => {
            let mut sweep = SweepConfig::load(&args.config)?;
            if let Some(out) = args.out {
                sweep.base.output.dir = out;
            }
            cmd_sweep(&sweep).map(|_| ())
        }
        Command::Verify { suite, json } => cmd_verify(suite.into(), json).map(|_| ()),
    }
}

fn configure_workers(flag: Option<usize>) -> CliResult<()> {
    let workers = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::Usage(format!("{WORKERS_ENV}={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("worker count must be > 0".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn cmd_classify(entries: [f64; 4], json: bool) -> CliResult<()> {
    let [a, b, c, d] = entries;
    let m = PayoffMatrix::new(a, b, c, d)?;
    let class = classify(&m);
    if json {
        println!("{}", serde_json::to_string_pretty(&class).expect("class always serializes"));
    } else {
        println!("{class}");
    }
    Ok(())
}

/// Runs one experiment and writes its outputs. Integration failures still
/// write `summary.json` before returning a numerical error.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<RunSummary> {
    cfg.resolve()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let summary = run_case(cfg, dir)?;
    println!("{}", summary_line(&summary));
    if let Some(e) = &summary.error {
        return Err(CliError::Numerical(e.clone()));
    }
    Ok(summary)
}

fn summary_line(s: &RunSummary) -> String {
    match (&s.terminal, &s.converged_to) {
        (Some(t), Some(l)) => format!(
            "terminal x={} g={}, converged_to={l}, t_settle={}, {}",
            t.x,
            t.g,
            s.t_settle.map_or("-".into(), |v| v.to_string()),
            s.validity.detail
        ),
        _ => format!("failed: {}", s.error.as_deref().unwrap_or("unknown error")),
    }
}

/// Integrates one case into `dir`: echo config, summary, and requested formats.
fn run_case(cfg: &ExperimentConfig, dir: &Path) -> CliResult<RunSummary> {
    let r = cfg.resolve()?;
    let sys = ControlledSystem::new(r.payoff, r.spec)?;
    let validity = check_validity(sys.class(), &r.spec);
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let run = integrate_with(&sys, sys.initial_state(r.x0), &r.integrator, &r.criteria);
    let summary = RunSummary::from_run(&sys, validity, &run, &r.criteria);
    summary.write(&dir.join("summary.json"))?;
    if let Ok(traj) = &run {
        if cfg.output.formats.contains(&Format::Csv) {
            write_trajectory_csv(&dir.join("trajectory.csv"), traj)?;
        }
        if cfg.output.formats.contains(&Format::Svg) {
            let [a, b, c, d] = cfg.payoff;
            let title = format!(
                "A=[[{a},{b}],[{c},{d}]], {}, G={}, k={}, h={}, x0={}, g0={}",
                r.spec.family, r.spec.control_matrix, r.spec.k, r.spec.h, r.x0, r.spec.g0
            );
            write_text(&dir.join("trajectory.svg"), &trajectory_svg(traj, &title))?;
        }
    }
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub case_id: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub k: f64,
    pub h: f64,
    pub x0: f64,
    pub g0: f64,
    /// `satisfied`, `hypothesis_not_satisfied` or `not_applicable`.
    pub hypothesis: String,
    pub converged_to: String,
    pub t_settle: Option<f64>,
}

/// Runs every grid case into `<dir>/case_NNNN/` and writes `<dir>/sweep.csv`.
/// A failing case is recorded in its row, not raised.
pub fn cmd_sweep(sweep: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    let cases = sweep.expand()?;
    for c in &cases {
        c.resolve()?;
    }
    let root = &sweep.base.output.dir;
    std::fs::create_dir_all(root).map_err(CliError::io(format!("creating {}", root.display())))?;
    let rows = cases
        .par_iter()
        .enumerate()
        .map(|(case_id, cfg)| {
            let dir = root.join(format!("case_{case_id:04}"));
            std::fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
            let s = run_case(cfg, &dir)?;
            let hypothesis = match (s.validity.theorem, s.validity.satisfied) {
                (Theorem::NotApplicable, _) => "not_applicable",
                (_, true) => "satisfied",
                (_, false) => "hypothesis_not_satisfied",
            };
            let [a, b, c, d] = cfg.payoff;
            Ok(SweepRow {
                case_id,
                a,
                b,
                c,
                d,
                k: cfg.controller.k,
                h: cfg.controller.h,
                x0: cfg.initial_x,
                g0: cfg.controller.g0,
                hypothesis: hypothesis.into(),
                converged_to: s.converged_to.map_or("error".into(), |l| l.to_string()),
                t_settle: s.t_settle,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let path = root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(CliError::io(format!("writing {}", path.display())))?;
    println!("{} cases written to {}", rows.len(), root.display());
    Ok(rows)
}

/// Runs a suite and prints its report; any failed claim is a verification error.
pub fn cmd_verify(suite: Suite, json: bool) -> CliResult<SuiteReport> {
    let report = match suite {
        Suite::Abm => {
            let (report, results) = run_abm_suite(&AbmSuiteConfig::default())?;
            if !json {
                for r in &results {
                    let medians: Vec<String> = r.medians.iter().map(|(n, m)| format!("N={n}: {m:.4}")).collect();
                    println!("game {} x0={}: median sup deviation {}", r.payoff, r.x0, medians.join(", "));
                }
            }
            report
        }
        _ => {
            let grid = suite.default_grid().expect("theorem suites have a default grid");
            run_suite(suite, &grid, &replicator_core::ConvergenceCriteria::default())?
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report always serializes"));
    } else {
        print_report(&report);
    }
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::Verification(format!(
            "{}: {} of {} cases failed",
            report.suite,
            report.cases_total - report.cases_passed,
            report.cases_total
        )))
    }
}

fn print_report(report: &SuiteReport) {
    println!(
        "{}: {}/{} passed, {} exploratory, {} certificates checked",
        report.suite,
        report.cases_passed,
        report.cases_total,
        report.exploratory.len(),
        report.certificates_checked
    );
    if !report.failures.is_empty() {
        println!("{:<60} {:<28} claim", "case", "terminal");
        for f in &report.failures {
            let terminal = f.terminal.map_or("-".into(), |s| s.to_string());
            println!("{:<60} {:<28} {}", f.params.to_string(), terminal, f.claim);
        }
    }
}
