//! Stationary balance identities, repeated at each requested time step.

use std::fmt::Write as _;

use serde::Serialize;
use snse_core::measure::{balance_check, balance_identities, estimate_stationary, BalanceReport, MeasureEstimate};

use super::{e, Outcome};
use crate::config::RunConfig;
use crate::verdict::Verdict;
use crate::CliError;

/// Largest accepted relative balance residual.
pub const BALANCE_TOLERANCE: f64 = 0.1;

pub const BALANCE_CSV_HEADER: &str = "dt,identity,lhs_estimate,rhs_exact,residual,stderr";

#[derive(Serialize)]
struct BalanceRun {
    dt: f64,
    config_hash: String,
    estimate: MeasureEstimate,
    balance: BalanceReport,
}

fn criterion(label: &str) -> &str {
    match label {
        "est1" => "enstrophy balance",
        "balance_l2" => "l2 balance",
        "damped_balance_1" => "damped balance (enstrophy)",
        "damped_balance_2" => "damped balance (energy)",
        other => other,
    }
}

pub fn balance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let base = cfg.solver_config()?;
    let est = cfg.section(&cfg.estimator, "estimator")?;
    let dts = if est.dts.is_empty() { vec![base.dt] } else { est.dts.clone() };
    let mut runs = Vec::new();
    let mut verdicts = Vec::new();
    for &dt in &dts {
        let mut solver = base.clone();
        solver.dt = dt;
        let mut plan = cfg.estimator_plan(&solver, &[])?;
        solver.t_end = plan.total;
        solver.validate()?;
        for (_, f, _) in balance_identities(&solver)? {
            if !plan.functionals.contains(&f) {
                plan.functionals.push(f);
            }
        }
        let estimate = estimate_stationary(&solver, &plan)?;
        let report = balance_check(&solver, &estimate)?;
        for line in &report.lines {
            verdicts.push(
                Verdict::at_most(
                    format!("{} (dt={dt})", criterion(&line.label)),
                    line.residual.abs(),
                    BALANCE_TOLERANCE,
                    format!(
                        "time average {:.5} +/- {:.1e} vs exact {:.5}",
                        line.lhs_estimate,
                        line.stderr * line.rhs_exact,
                        line.rhs_exact
                    ),
                )
                .flag_unless(!estimate.is_flagged()),
            );
        }
        runs.push(BalanceRun {
            dt,
            config_hash: solver.fingerprint(),
            estimate,
            balance: report,
        });
    }
    let mut csv = format!("{BALANCE_CSV_HEADER}\n");
    for r in &runs {
        for l in &r.balance.lines {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                e(r.dt),
                l.label,
                e(l.lhs_estimate),
                e(l.rhs_exact),
                e(l.residual),
                e(l.stderr)
            )
            .unwrap();
        }
    }
    Ok(Outcome::new("balance", verdicts, &runs).with_csv("balance.csv", csv))
}
