//! Parameter sweeps: generic, inviscid limit, damped scaling and Moser.

use std::fmt::Write as _;

use snse_core::experiments::{
    damped_scaling_sweep, inviscid_sweep, moser_regularization_experiment, run_sweep, write_moser_csv,
    write_sweep_csv, MoserPlan, SweepAxis, SweepPlan, SweepPoint,
};
use snse_core::measure::{balance_identities, Functional};

use super::balance::BALANCE_TOLERANCE;
use super::{csv_string, e, Outcome};
use crate::config::{Axis, RunConfig, SweepKind};
use crate::verdict::{Status, Verdict};
use crate::CliError;

/// Largest accepted max/min ratio of a uniform-in-parameter quantity.
pub const RATIO_BOUND: f64 = 2.0;

pub fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.section(&cfg.sweep, "sweep")?.kind {
        SweepKind::Generic => generic(cfg),
        SweepKind::Inviscid => inviscid(cfg),
        SweepKind::Damped => damped(cfg),
        SweepKind::Moser => moser(cfg),
    }
}

fn plan(cfg: &RunConfig, extra: &[Functional]) -> Result<SweepPlan, CliError> {
    let s = cfg.section(&cfg.sweep, "sweep")?;
    let base = cfg.solver_config()?;
    let axis = match s.axis {
        Axis::Nu => SweepAxis::Nu,
        Axis::Alpha => SweepAxis::Alpha,
        Axis::DriftAmplitude => SweepAxis::DriftAmplitude,
    };
    let mut estimator = cfg.estimator_plan(&base, extra)?;
    // Parallelism goes to sweep points; each point runs its replicas serially.
    estimator.threads = 1;
    let mut p = SweepPlan::new(axis, s.values.clone(), base, estimator);
    p.dts = (!s.dts.is_empty()).then(|| s.dts.clone());
    p.threads = cfg.threads;
    Ok(p)
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Nu => "nu",
        SweepAxis::Alpha => "alpha",
        SweepAxis::DriftAmplitude => "drift_amplitude",
    }
}

fn labels(fs: &[Functional]) -> Vec<String> {
    fs.iter().map(Functional::label).collect()
}

fn balance_labels(plan: &SweepPlan) -> Result<Vec<String>, CliError> {
    let c = plan.config_at(0)?;
    Ok(balance_identities(&c)?.iter().map(|(l, _, _)| l.to_string()).collect())
}

/// Balance verdict for one point: within tolerance passes, within two
/// standard errors of it is flagged, otherwise fails.
fn point_balance(points: &[SweepPoint], label: &str, name: &str, axis: &str) -> Vec<Verdict> {
    points
        .iter()
        .filter_map(|p| {
            let line = p.balance.as_ref()?.get(label)?;
            let r = line.residual.abs();
            let mut v = Verdict::at_most(
                format!("{name} ({axis}={})", p.value),
                r,
                BALANCE_TOLERANCE,
                format!("lhs {:.5} vs exact {:.5}, stderr {:.1e}", line.lhs_estimate, line.rhs_exact, line.stderr),
            );
            if v.status == Status::Fail && r <= BALANCE_TOLERANCE + 2.0 * line.stderr {
                v = v.soften();
            }
            Some(v)
        })
        .collect()
}

fn diverged(points: &[SweepPoint]) -> Vec<Verdict> {
    points
        .iter()
        .filter(|p| !p.has_estimate())
        .map(|p| Verdict::new(format!("point {}", p.value), Status::Flagged, "diverging: blow-up guard tripped"))
        .collect()
}

fn generic(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.section(&cfg.sweep, "sweep")?;
    let p = plan(cfg, &s.functionals)?;
    let points = run_sweep(&p, &p.estimator.functionals)?;
    let balances = balance_labels(&p)?;
    let mut verdicts = Vec::new();
    for b in &balances {
        verdicts.extend(point_balance(&points, b, b, axis_name(p.axis)));
    }
    verdicts.extend(diverged(&points));
    let mut fl = labels(&p.estimator.functionals);
    for (_, f, _) in balance_identities(&p.config_at(0)?)? {
        if !fl.contains(&f.label()) {
            fl.push(f.label());
        }
    }
    let csv = csv_string(|buf| write_sweep_csv(&points, &fl, &balances, buf))?;
    Ok(Outcome::new("sweep", verdicts, &points).with_csv("sweep.csv", csv))
}

fn inviscid(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.section(&cfg.sweep, "sweep")?;
    let p = plan(cfg, &[])?;
    let res = inviscid_sweep(&p, s.delta)?;
    let mut verdicts = vec![
        Verdict::at_most(
            "uniform linf moment",
            res.linf_ratio,
            RATIO_BOUND,
            format!("max/min of E|omega|_inf over nu in {:?}", p.values),
        ),
        Verdict::at_most(
            "exponential moment",
            if res.exp_moment_overflow { f64::INFINITY } else { res.exp_moment_ratio },
            RATIO_BOUND,
            format!(
                "max/min of E exp(delta |omega|^2) at delta = {:.4e}{}",
                res.delta,
                if res.exp_moment_overflow { "; overflow" } else { "" }
            ),
        ),
    ];
    verdicts.extend(point_balance(&res.points, "est1", "enstrophy balance", "nu"));
    verdicts.extend(point_balance(&res.points, "balance_l2", "l2 balance", "nu"));
    verdicts.extend(diverged(&res.points));
    for v in &mut verdicts[..2] {
        *v = v.clone().flag_unless(res.flagged.is_empty());
    }
    let fl = labels(&[
        Functional::Linf,
        Functional::H1Sq,
        Functional::L2Sq,
        Functional::ExpL2 { delta: res.delta },
    ]);
    let balances = vec!["est1".to_string(), "balance_l2".to_string()];
    let csv = csv_string(|buf| write_sweep_csv(&res.points, &fl, &balances, buf))?;
    Ok(Outcome::new("sweep_inviscid", verdicts, &res).with_csv("sweep_inviscid.csv", csv))
}

fn damped(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.section(&cfg.sweep, "sweep")?;
    let p = plan(cfg, &[])?;
    let res = damped_scaling_sweep(&p, &s.alphas)?;
    let mut verdicts = Vec::new();
    for series in &res.series {
        let status = if series.passed { Status::Pass } else { Status::Fail };
        let name = if series.alpha > 0.0 {
            "damped decay"
        } else if series.alpha == 0.0 {
            "damped boundedness"
        } else {
            "damped growth"
        };
        verdicts.push(Verdict {
            value: series.fit.map(|f| f.slope).or(Some(series.ratio).filter(|r| r.is_finite())),
            threshold: (series.alpha > 0.0).then_some(2.0 * series.alpha - 0.2),
            ..Verdict::new(format!("{name} (alpha={})", series.alpha), status, series.verdict.clone())
        });
        verdicts.push(Verdict::at_most(
            format!("damped balance (alpha={})", series.alpha),
            series.max_abs_balance_residual,
            BALANCE_TOLERANCE,
            "largest relative residual over converged points",
        ));
    }
    let gamma = res.gamma;
    let fl = labels(&[
        Functional::VelocitySq,
        Functional::VelocityHs { gamma },
        Functional::EnstrophyDissipation,
        Functional::EnergyDissipation,
    ]);
    let balances = vec!["damped_balance_1".to_string(), "damped_balance_2".to_string()];
    let all: Vec<SweepPoint> = res.series.iter().flat_map(|s| s.points.iter().cloned()).collect();
    let csv = csv_string(|buf| write_sweep_csv(&all, &fl, &balances, buf))?;
    let mut fits = String::from("alpha,slope,slope_stderr,ci_low,ci_high,ratio,floor,passed\n");
    for s in &res.series {
        let f = |x: Option<f64>| x.map(e).unwrap_or_default();
        writeln!(
            fits,
            "{},{},{},{},{},{},{},{}",
            e(s.alpha),
            f(s.fit.map(|x| x.slope)),
            f(s.fit.map(|x| x.slope_stderr)),
            f(s.fit.map(|x| x.ci95.0)),
            f(s.fit.map(|x| x.ci95.1)),
            e(s.ratio),
            e(s.floor),
            s.passed
        )
        .unwrap();
    }
    Ok(Outcome::new("sweep_damped", verdicts, &res)
        .with_csv("sweep_damped.csv", csv)
        .with_csv("sweep_damped_fits.csv", fits))
}

fn moser(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.section(&cfg.moser, "moser")?;
    let plan = MoserPlan {
        lattice: cfg.lattice()?,
        noise: cfg.noise_spec()?,
        drift: cfg.drift_field()?,
        amplitudes: m.amplitudes.clone(),
        t: m.t,
        replicas: m.replicas,
        seed: cfg.seed,
        base_dt: m.base_dt,
        cfl: m.cfl,
        sample_interval: m.sample_interval.unwrap_or(m.t / 256.0),
        threads: cfg.threads,
    };
    let res = moser_regularization_experiment(&plan)?;
    let under: Vec<f64> = res.points.iter().filter(|p| p.under_resolved).map(|p| p.amplitude).collect();
    let verdicts = vec![Verdict::at_most(
        "moser regularization",
        res.ratio_spread,
        RATIO_BOUND,
        format!(
            "max/min of r(A) over A in {:?}; r = {:?}{}",
            m.amplitudes,
            res.points.iter().map(|p| (p.ratio * 1e4).round() / 1e4).collect::<Vec<_>>(),
            if under.is_empty() { String::new() } else { format!("; under-resolved at A in {under:?}") }
        ),
    )
    .flag_unless(under.is_empty())];
    let csv = csv_string(|buf| write_moser_csv(&res, buf))?;
    Ok(Outcome::new("sweep_moser", verdicts, &res).with_csv("sweep_moser.csv", csv))
}
