//! Default verification grids run end to end.

use replicator_core::abm::{run_abm_suite, AbmSuiteConfig};
use replicator_core::analysis::{run_suite, ConvergenceCriteria, Grid, Suite};

fn run_default(suite: Suite) {
    let grid = suite.default_grid().expect("theorem suites have a default grid");
    let report = run_suite(suite, &grid, &ConvergenceCriteria::default()).unwrap();
    for f in &report.failures {
        eprintln!("{suite}: {} -> {}", f.params, f.claim);
    }
    eprintln!(
        "{suite}: {}/{} passed, {} exploratory, {} certificates",
        report.cases_passed,
        report.cases_total,
        report.exploratory.len(),
        report.certificates_checked
    );
    assert!(report.passed());
}

#[test]
fn prop2_default_grid() {
    run_default(Suite::Prop2);
}

#[test]
fn thm1_default_grid() {
    run_default(Suite::Thm1);
}

#[test]
fn thm2_default_grid() {
    run_default(Suite::Thm2);
}

#[test]
fn thm3_default_grid() {
    run_default(Suite::Thm3);
}

#[test]
fn thm1_grid_certifies_escapes() {
    let Some(Grid::Theorem(grid)) = Suite::Thm1.default_grid() else { panic!("theorem grid expected") };
    let report = run_suite(Suite::Thm1, &Grid::Theorem(grid), &ConvergenceCriteria::default()).unwrap();
    // Every case has the gain-death audit; starts above the mixed equilibrium add an escape certificate.
    assert!(report.certificates_checked > report.cases_total);
}

#[test]
fn abm_default_suite() {
    let (report, results) = run_abm_suite(&AbmSuiteConfig::default()).unwrap();
    for r in &results {
        eprintln!("abm {} x0={}: {:?}", r.payoff, r.x0, r.medians);
    }
    assert!(report.passed(), "{:?}", report.failures);
}
