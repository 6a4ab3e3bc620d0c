//! Closed-form comparisons: OU law, Stokes spectrum, nonlinearity, Euler
//! conservation and the `L^p` Itô ledger.

use std::fmt::Write as _;

use serde::Serialize;
use snse_core::diagnostics::{energy, enstrophy};
use snse_core::experiments::{lp_ito_ledger, write_ledger_csv, LEDGER_RATIO_BAND};
use snse_core::integrator::{Mode, SolverConfig, State, Stepper};
use snse_core::measure::{estimate_stationary, BatchMeans, EstimatorPlan, Functional, InitialCondition};
use snse_core::oracles::{convolution_nonlinearity, ou_stationary_law, stokes_mode_variance, OuOracle};
use snse_core::pool::parallel_map;
use snse_core::random_fields::{random_field, seeded_rng};
use snse_core::spectral::{nonlinear_term, Wavenumber};

use super::{csv_string, e, Outcome};
use crate::config::{OracleKind, RunConfig};
use crate::verdict::{Status, Verdict};
use crate::CliError;

pub fn oracle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.section(&cfg.oracle, "oracle")?.kind {
        OracleKind::Ou => ou(cfg),
        OracleKind::Stokes => stokes(cfg),
        OracleKind::Nonlinearity => nonlinearity(cfg),
        OracleKind::Euler => euler(cfg),
        OracleKind::Ledger => ledger(cfg),
    }
}

/// Relative OU variance tolerance and per-step ray residual bound.
pub const OU_TOLERANCE: f64 = 0.05;
pub const RAY_RESIDUAL: f64 = 1e-12;

#[derive(Serialize)]
struct OuPoint {
    nu: f64,
    dt: f64,
    total: f64,
    burn_in: f64,
    replicas: usize,
    samples: u64,
    mean: f64,
    variance: f64,
    stderr: f64,
    analytic: f64,
    rel_err: f64,
    max_ray_residual: f64,
    config_hash: String,
}

fn ou_replica(
    oracle: &OuOracle,
    solver: &SolverConfig,
    burn_in: f64,
    seed: u64,
    replica: u64,
    n_batches: usize,
) -> snse_core::Result<(BatchMeans, BatchMeans, f64)> {
    let mut stepper = Stepper::new(solver)?;
    let mut state = State::zero(solver.lattice, seed, replica);
    let burn = (burn_in / solver.dt).round() as u64;
    let steps = solver.steps_from(0.0);
    let mut xs = Vec::with_capacity(steps.saturating_sub(burn) as usize);
    let mut worst = 0.0f64;
    for s in 1..=steps {
        stepper.step(&mut state)?;
        worst = worst.max(stepper.last_nonlinear_max());
        if s > burn {
            xs.push(oracle.projection(&state.omega));
        }
    }
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    Ok((BatchMeans::from_series(&xs, n_batches), BatchMeans::from_series(&sq, n_batches), worst))
}

fn ou(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = cfg.section(&cfg.oracle, "oracle")?;
    let lat = cfg.lattice()?;
    let mut points = Vec::new();
    let mut verdicts = Vec::new();
    for &nu in &o.nus {
        let oracle = OuOracle::new(lat, o.k, nu)?;
        let (dt, total, burn) = (o.dt_nu / nu, o.time_nu / nu, o.burn_nu / nu);
        let mut solver = oracle.solver_config(dt, total);
        solver.scheme = cfg.solver.scheme;
        solver.validate()?;
        let parts = parallel_map(o.replicas, cfg.threads, |r| {
            ou_replica(&oracle, &solver, burn, cfg.seed, r as u64, o.n_batches)
        });
        let (mut m1, mut m2, mut worst) = (BatchMeans::new(), BatchMeans::new(), 0.0f64);
        for part in parts {
            let (a, b, w) = part?;
            m1.merge(&a);
            m2.merge(&b);
            worst = worst.max(w);
        }
        let variance = m2.mean() - m1.mean().powi(2);
        let analytic = ou_stationary_law(&oracle).variance;
        let p = OuPoint {
            nu,
            dt,
            total,
            burn_in: burn,
            replicas: o.replicas,
            samples: m2.samples(),
            mean: m1.mean(),
            variance,
            stderr: m2.stderr(),
            analytic,
            rel_err: variance / analytic - 1.0,
            max_ray_residual: worst,
            config_hash: solver.fingerprint(),
        };
        verdicts.push(Verdict::at_most(
            format!("ou stationary variance (nu={nu})"),
            p.rel_err.abs(),
            OU_TOLERANCE,
            format!("simulated {:.5} +/- {:.1e} vs analytic {analytic}", p.variance, p.stderr),
        ));
        verdicts.push(Verdict::at_most(
            format!("ou ray residual (nu={nu})"),
            worst,
            RAY_RESIDUAL,
            "largest |N(omega)| coefficient over every step",
        ));
        points.push(p);
    }
    let mut csv = String::from("nu,dt,variance,stderr,analytic,rel_err,max_ray_residual\n");
    for p in &points {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            e(p.nu),
            e(p.dt),
            e(p.variance),
            e(p.stderr),
            e(p.analytic),
            e(p.rel_err),
            e(p.max_ray_residual)
        )
        .unwrap();
    }
    Ok(Outcome::new("oracle_ou", verdicts, &points).with_csv("oracle_ou.csv", csv))
}

pub const STOKES_TOLERANCE: f64 = 0.05;
/// Allowed ν-variation of the `α = ½` spectrum beyond two standard errors.
pub const STOKES_NU_VARIATION: f64 = 0.02;

#[derive(Serialize)]
struct StokesMode {
    k: Wavenumber,
    simulated: f64,
    stderr: f64,
    analytic: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct StokesPoint {
    nu: f64,
    dt: f64,
    total: f64,
    config_hash: String,
    modes: Vec<StokesMode>,
}

fn stokes(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = cfg.section(&cfg.oracle, "oracle")?;
    let base = cfg.solver_config()?;
    if base.mode != Mode::StokesLinear {
        return Err(CliError::Invalid("the stokes oracle needs solver.mode = \"stokes_linear\"".into()));
    }
    let modes: Vec<Wavenumber> = base.noise.modes().to_vec();
    let mut points = Vec::new();
    let mut verdicts = Vec::new();
    for &nu in &o.nus {
        let mut solver = base.clone();
        solver.nu = nu;
        solver.dt = o.dt_nu / nu;
        solver.t_end = o.time_nu / nu;
        solver.validate()?;
        let mut plan = EstimatorPlan::new(
            o.burn_nu / nu,
            solver.t_end,
            modes.iter().map(|&k| Functional::ModeSq { k }).collect(),
        );
        plan.n_batches = o.n_batches;
        plan.replicas = o.replicas;
        plan.seed = cfg.seed;
        plan.threads = cfg.threads;
        let est = estimate_stationary(&solver, &plan)?;
        let mut rows = Vec::new();
        for (&k, f) in modes.iter().zip(&est.functionals) {
            let analytic = stokes_mode_variance(&solver, k)?.vorticity_pair;
            rows.push(StokesMode {
                k,
                simulated: f.mean,
                stderr: f.stderr,
                analytic,
                rel_err: f.mean / analytic - 1.0,
            });
        }
        let worst = rows.iter().map(|m| m.rel_err.abs()).fold(0.0, f64::max);
        verdicts.push(Verdict::at_most(
            format!("stokes spectrum (nu={nu})"),
            worst,
            STOKES_TOLERANCE,
            format!("largest relative deviation over {} forced modes", rows.len()),
        ));
        points.push(StokesPoint {
            nu,
            dt: solver.dt,
            total: solver.t_end,
            config_hash: solver.fingerprint(),
            modes: rows,
        });
    }
    if (base.noise.alpha() - 0.5).abs() < 1e-15 && points.len() > 1 {
        let mut excess = 0.0f64;
        for m in 0..modes.len() {
            for a in &points {
                for b in &points {
                    let (x, y) = (&a.modes[m], &b.modes[m]);
                    let mc = 2.0 * (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
                    excess = excess.max(((x.simulated - y.simulated).abs() - mc) / x.analytic);
                }
            }
        }
        verdicts.push(Verdict::at_most(
            "stokes nu-independence (alpha=1/2)",
            excess.max(0.0),
            STOKES_NU_VARIATION,
            "largest pairwise relative spread across nu beyond two standard errors",
        ));
    }
    let mut csv = String::from("nu,k1,k2,simulated,stderr,analytic,rel_err\n");
    for p in &points {
        for m in &p.modes {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                e(p.nu),
                m.k[0],
                m.k[1],
                e(m.simulated),
                e(m.stderr),
                e(m.analytic),
                e(m.rel_err)
            )
            .unwrap();
        }
    }
    Ok(Outcome::new("oracle_stokes", verdicts, &points).with_csv("oracle_stokes.csv", csv))
}

pub const NONLINEARITY_TOLERANCE: f64 = 1e-12;

fn nonlinearity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = cfg.section(&cfg.oracle, "oracle")?;
    let lat = cfg.lattice()?;
    let mut errors = Vec::new();
    for i in 0..o.samples {
        let mut rng = seeded_rng(cfg.seed, i as u64);
        let w = random_field(lat, lat.n() as f64, 0.0, &mut rng);
        let slow = convolution_nonlinearity(&w)?.dealiased();
        errors.push(slow.max_abs_diff(&nonlinear_term(&w)));
    }
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let verdicts = vec![Verdict::at_most(
        "nonlinearity oracle",
        worst,
        NONLINEARITY_TOLERANCE,
        format!("max coefficient error over {} random dealiased fields on n = {}", errors.len(), lat.n()),
    )];
    let mut csv = String::from("sample,max_abs_error\n");
    for (i, err) in errors.iter().enumerate() {
        writeln!(csv, "{i},{}", e(*err)).unwrap();
    }
    Ok(Outcome::new("oracle_nonlinearity", verdicts, &errors).with_csv("oracle_nonlinearity.csv", csv))
}

pub const CONSERVATION_TOLERANCE: f64 = 1e-6;

#[derive(Serialize)]
struct EulerData {
    config_hash: String,
    steps: u64,
    energy0: f64,
    enstrophy0: f64,
    energy_drift: f64,
    enstrophy_drift: f64,
}

fn euler(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = cfg.section(&cfg.oracle, "oracle")?;
    let solver = cfg.solver_config()?;
    if solver.mode != Mode::DeterministicEuler {
        return Err(CliError::Invalid("the euler oracle needs solver.mode = \"deterministic_euler\"".into()));
    }
    let init = cfg.initial.clone().unwrap_or(InitialCondition::Zero).sample(solver.lattice, cfg.seed, 0);
    let (e0, i0) = (energy(&init), enstrophy(&init));
    if !(e0 > 0.0) {
        return Err(CliError::Invalid("the euler oracle needs a nonzero initial condition".into()));
    }
    let mut state = State::new(init, cfg.seed, 0);
    let mut stepper = Stepper::new(&solver)?;
    let steps = solver.steps_from(0.0);
    let stride = o.stride.max(1);
    let mut csv = format!("t,energy,enstrophy\n{},{},{}\n", e(0.0), e(e0), e(i0));
    let (mut de, mut di) = (0.0f64, 0.0f64);
    let mut failure = None;
    for s in 1..=steps {
        if let Err(err) = stepper.step(&mut state) {
            failure = Some(CliError::from(err));
            break;
        }
        if s % stride == 0 || s == steps {
            let (en, is) = (energy(&state.omega), enstrophy(&state.omega));
            de = de.max((en - e0).abs() / e0);
            di = di.max((is - i0).abs() / i0);
            writeln!(csv, "{},{},{}", e(state.t), e(en), e(is)).unwrap();
        }
    }
    let detail = format!("max relative drift over t in [0, {}]", solver.t_end);
    let verdicts = vec![
        Verdict::at_most("euler energy conservation", de, CONSERVATION_TOLERANCE, detail.clone()),
        Verdict::at_most("euler enstrophy conservation", di, CONSERVATION_TOLERANCE, detail),
    ];
    let data = EulerData {
        config_hash: solver.fingerprint(),
        steps,
        energy0: e0,
        enstrophy0: i0,
        energy_drift: de,
        enstrophy_drift: di,
    };
    let mut out = Outcome::new("oracle_euler", verdicts, &data).with_csv("oracle_euler.csv", csv);
    out.failure = failure;
    Ok(out)
}

fn ledger(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = cfg.section(&cfg.oracle, "oracle")?;
    let solver = cfg.solver_config()?;
    let init = cfg.initial.clone().unwrap_or(InitialCondition::Zero).sample(solver.lattice, cfg.seed, 0);
    let reports = lp_ito_ledger(&solver, &init, &o.ps, cfg.seed, 0)?;
    let (lo, hi) = LEDGER_RATIO_BAND;
    let verdicts = reports
        .iter()
        .map(|r| Verdict {
            criterion: format!("lp ito ledger (p={})", r.p),
            status: if r.pass { Status::Pass } else { Status::Fail },
            value: r.ratio.is_finite().then_some(r.ratio),
            threshold: None,
            detail: format!(
                "|R(dt/2)|/|R(dt)| must lie in [{lo}, {hi}]; R(dt) = {:.3e}, R(dt/2) = {:.3e}",
                r.coarse.residual, r.fine.residual
            ),
        })
        .collect();
    let csv = csv_string(|buf| write_ledger_csv(&reports, buf))?;
    Ok(Outcome::new("oracle_ledger", verdicts, &reports).with_csv("oracle_ledger.csv", csv))
}
