//! Parameter sweeps over ν, α or drift amplitude, with the inviscid and
//! damped-model verdicts built on top.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::SolverConfig;
use crate::measure::{
    balance_check, balance_identities, estimate_stationary, exp_moment_from, BalanceReport, EstimatorPlan,
    Functional, MeasureEstimate,
};
use crate::pool::parallel_map;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nu,
    Alpha,
    DriftAmplitude,
}

#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: SolverConfig,
    pub estimator: EstimatorPlan,
    /// Per-point time steps overriding `base.dt`.
    pub dts: Option<Vec<f64>>,
    /// Worker threads over sweep points.
    pub threads: usize,
}

impl SweepPlan {
    pub fn new(axis: SweepAxis, values: Vec<f64>, base: SolverConfig, estimator: EstimatorPlan) -> Self {
        Self {
            axis,
            values,
            base,
            estimator,
            dts: None,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("sweep has no values"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sweep values must be finite"));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::invalid("sweep values must be strictly sorted"));
        }
        if self.estimator.replicas == 0 {
            return Err(Error::invalid("sweep needs at least one replica"));
        }
        if let Some(dts) = &self.dts {
            if dts.len() != self.values.len() {
                return Err(Error::invalid("one time step per sweep value is required"));
            }
        }
        Ok(())
    }

    pub fn config_at(&self, i: usize) -> Result<SolverConfig> {
        let v = self.values[i];
        let mut c = self.base.clone();
        match self.axis {
            SweepAxis::Nu => c.nu = v,
            SweepAxis::Alpha => c.noise = c.noise.with_alpha(v),
            SweepAxis::DriftAmplitude => {
                let d = c
                    .drift
                    .as_mut()
                    .ok_or_else(|| Error::invalid("drift-amplitude sweep needs a drift"))?;
                d.amplitude = v;
            }
        }
        if let Some(dts) = &self.dts {
            c.dt = dts[i];
        }
        c.t_end = self.estimator.total;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PointStatus {
    Converged,
    /// Estimates exist but a stationarity or precision flag was raised.
    Flagged,
    /// The blow-up guard stopped a trajectory.
    Diverging { t: f64, norm: f64 },
}

impl PointStatus {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::Flagged => "flagged",
            Self::Diverging { .. } => "diverging",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub nu: f64,
    pub alpha: f64,
    pub dt: f64,
    pub seed: u64,
    pub config_hash: String,
    pub status: PointStatus,
    pub estimate: Option<MeasureEstimate>,
    pub balance: Option<BalanceReport>,
}

impl SweepPoint {
    pub fn mean(&self, f: &Functional) -> Option<f64> {
        self.estimate.as_ref()?.get_functional(f).map(|e| e.mean)
    }

    pub fn has_estimate(&self) -> bool {
        self.estimate.is_some()
    }
}

/// Runs every point of `plan`, estimating `functionals` plus whatever the
/// applicable balance identities need.
pub fn run_sweep(plan: &SweepPlan, functionals: &[Functional]) -> Result<Vec<SweepPoint>> {
    plan.validate()?;
    let configs = (0..plan.values.len()).map(|i| plan.config_at(i)).collect::<Result<Vec<_>>>()?;
    let jobs = parallel_map(configs.len(), plan.threads, |i| {
        run_point(&configs[i], plan.values[i], &plan.estimator, functionals)
    });
    jobs.into_iter().collect()
}

fn run_point(config: &SolverConfig, value: f64, plan: &EstimatorPlan, functionals: &[Functional]) -> Result<SweepPoint> {
    let mut est_plan = plan.clone();
    est_plan.threads = 1;
    est_plan.functionals = functionals.to_vec();
    for (_, f, _) in balance_identities(config)? {
        if !est_plan.functionals.contains(&f) {
            est_plan.functionals.push(f);
        }
    }
    let mut point = SweepPoint {
        value,
        nu: config.nu,
        alpha: config.noise.alpha(),
        dt: config.dt,
        seed: plan.seed,
        config_hash: config.fingerprint(),
        status: PointStatus::Converged,
        estimate: None,
        balance: None,
    };
    match estimate_stationary(config, &est_plan) {
        Ok(est) => {
            if est.is_flagged() {
                point.status = PointStatus::Flagged;
            }
            point.balance = Some(balance_check(config, &est)?);
            point.estimate = Some(est);
        }
        Err(Error::BlowUp { t, norm, .. }) => point.status = PointStatus::Diverging { t, norm },
        Err(e) => return Err(e),
    }
    Ok(point)
}

/// Least-squares fit of `log y = slope · log x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci95: (f64, f64),
    pub points: usize,
}

/// `None` with fewer than four points or any non-positive value.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 4 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = (rss / (n - 2.0) / sxx).sqrt();
    // Two-sided 95% Student quantiles for 2..=8 degrees of freedom, normal beyond.
    const T95: [f64; 7] = [4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306];
    let dof = xs.len() - 2;
    let q = T95.get(dof - 2).copied().unwrap_or(1.96);
    Some(SlopeFit {
        slope,
        intercept,
        slope_stderr,
        ci95: (slope - q * slope_stderr, slope + q * slope_stderr),
        points: xs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InviscidSweep {
    pub points: Vec<SweepPoint>,
    pub delta: f64,
    /// max/min of the mean `‖ω‖_∞` over converged points.
    pub linf_ratio: f64,
    /// max/min of the exponential moment over converged points.
    pub exp_moment_ratio: f64,
    pub exp_moment_overflow: bool,
    pub max_abs_est1_residual: f64,
    pub max_abs_balance_l2_residual: f64,
    /// Values whose stationarity or precision diagnostics raised a flag.
    pub flagged: Vec<f64>,
}

/// `δ = 0.1 / (c² Σ g_k²)`.
pub fn default_exp_delta(config: &SolverConfig) -> f64 {
    0.1 / (config.noise.c().powi(2) * config.noise.sum_g_sq())
}

fn ratio(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}

/// The √ν-forced sweep `ν ↓ 0` at `α = ½`, `τ = 0`.
pub fn inviscid_sweep(plan: &SweepPlan, delta: Option<f64>) -> Result<InviscidSweep> {
    if plan.axis != SweepAxis::Nu {
        return Err(Error::invalid("inviscid sweep runs over nu"));
    }
    if !plan.values.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::invalid("inviscid sweep needs decreasing nu values"));
    }
    if plan.base.tau != 0.0 || (plan.base.noise.alpha() - 0.5).abs() > 1e-15 {
        return Err(Error::invalid("inviscid sweep needs tau = 0 and alpha = 1/2"));
    }
    if plan.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("inviscid sweep needs nu > 0"));
    }
    let delta = delta.unwrap_or_else(|| default_exp_delta(&plan.base));
    let exp = Functional::ExpL2 { delta };
    let functionals = [Functional::Linf, Functional::H1Sq, Functional::L2Sq, exp.clone()];
    let points = run_sweep(plan, &functionals)?;
    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.has_estimate()).collect();
    let residual = |label: &str| {
        ok.iter()
            .filter_map(|p| p.balance.as_ref()?.get(label).map(|l| l.residual.abs()))
            .fold(0.0, f64::max)
    };
    let moments: Vec<_> = ok
        .iter()
        .filter_map(|p| exp_moment_from(p.estimate.as_ref()?, delta))
        .collect();
    Ok(InviscidSweep {
        linf_ratio: ratio(ok.iter().filter_map(|p| p.mean(&Functional::Linf))),
        exp_moment_ratio: ratio(moments.iter().map(|m| m.mean)),
        exp_moment_overflow: moments.iter().any(|m| m.overflow),
        max_abs_est1_residual: residual("est1"),
        max_abs_balance_l2_residual: residual("balance_l2"),
        flagged: points
            .iter()
            .filter(|p| p.status != PointStatus::Converged)
            .map(|p| p.value)
            .collect(),
        points,
        delta,
    })
}

/// Explicit lower bound on `E‖u_S‖²` for the damped model:
/// `(ν^{2α}/τ)(½c²Σb² − C_ν ½c²Σg²)` with `C_ν = ν / min_{s≥1} μ(s)`,
/// `μ(s) = ν s^{γ_d} + τ s^{−γ}`. Requires `τ > 0`.
pub fn stationary_lower_bound(config: &SolverConfig) -> Result<f64> {
    if !(config.tau > 0.0) {
        return Err(Error::invalid("lower bound needs tau > 0"));
    }
    let (nu, tau, g, d) = (config.nu, config.tau, config.gamma, config.diss_exponent);
    let amp = config.noise.amplitude(nu)?;
    let c_nu = if nu == 0.0 {
        0.0
    } else {
        let s_star = if g > 0.0 {
            (g * tau / (d * nu)).powf(1.0 / (d + g)).max(1.0)
        } else {
            1.0
        };
        nu / (nu * s_star.powf(d) + tau * s_star.powf(-g))
    };
    Ok(amp * amp / tau * 0.5 * (config.noise.sum_b_sq() - c_nu * config.noise.sum_g_sq()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampedSeries {
    pub alpha: f64,
    pub points: Vec<SweepPoint>,
    pub fit: Option<SlopeFit>,
    /// Lower bound at the largest ν.
    pub floor: f64,
    pub ratio: f64,
    pub verdict: String,
    pub passed: bool,
    pub max_abs_balance_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampedSweep {
    pub gamma: f64,
    pub tau: f64,
    pub series: Vec<DampedSeries>,
}

/// Growth factor across the decade that counts as unbounded for `α < 0`.
pub const GROWTH_FACTOR: f64 = 4.0;

/// The `ν`-sweep of the damped model, repeated for each `α`.
pub fn damped_scaling_sweep(plan: &SweepPlan, alphas: &[f64]) -> Result<DampedSweep> {
    if plan.axis != SweepAxis::Nu {
        return Err(Error::invalid("damped sweep runs over nu"));
    }
    if !(plan.base.tau > 0.0) || !(0.0..1.0).contains(&plan.base.gamma) {
        return Err(Error::invalid("damped sweep needs tau > 0 and gamma in [0, 1)"));
    }
    for required in [0.5, 0.25, 0.0] {
        if !alphas.contains(&required) {
            return Err(Error::invalid(format!("damped sweep alpha set must include {required}")));
        }
    }
    if !alphas.iter().any(|&a| a < 0.0) {
        return Err(Error::invalid("damped sweep alpha set must include a negative value"));
    }
    let gamma = plan.base.gamma;
    let u2 = Functional::VelocitySq;
    let hs = Functional::VelocityHs { gamma };
    let mut series = Vec::new();
    for &alpha in alphas {
        let mut p = plan.clone();
        p.base.noise = p.base.noise.with_alpha(alpha);
        let points = run_sweep(&p, &[u2.clone(), hs.clone()])?;
        let nu_max = p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut at_max = p.base.clone();
        at_max.nu = nu_max;
        let floor = stationary_lower_bound(&at_max)?;
        series.push(classify(alpha, points, floor, &u2));
    }
    Ok(DampedSweep {
        gamma,
        tau: plan.base.tau,
        series,
    })
}

fn classify(alpha: f64, points: Vec<SweepPoint>, floor: f64, u2: &Functional) -> DampedSeries {
    // Order by decreasing ν so "growth" reads left to right.
    let mut ordered: Vec<&SweepPoint> = points.iter().collect();
    ordered.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    let converged: Vec<(f64, f64)> = ordered
        .iter()
        .filter_map(|p| p.mean(u2).map(|m| (p.nu, m)))
        .collect();
    let xs: Vec<f64> = converged.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = converged.iter().map(|c| c.1).collect();
    let fit = fit_loglog(&xs, &ys);
    let r = ratio(ys.iter().copied());
    let max_abs_balance_residual = points
        .iter()
        .filter_map(|p| p.balance.as_ref())
        .flat_map(|b| b.lines.iter().map(|l| l.residual.abs()))
        .fold(0.0, f64::max);
    let diverged = points.iter().any(|p| matches!(p.status, PointStatus::Diverging { .. }));
    let (verdict, passed) = if alpha > 0.0 {
        match fit {
            Some(f) if f.slope >= 2.0 * alpha - 0.2 => (format!("decay: slope {:.3}", f.slope), true),
            Some(f) => (format!("slope {:.3} below {:.3}", f.slope, 2.0 * alpha - 0.2), false),
            None => ("too few converged points for a fit".to_string(), false),
        }
    } else if alpha == 0.0 {
        let min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let ok = r <= 2.0 && min >= floor && ys.len() == points.len();
        (format!("bounded: ratio {r:.3}, min {min:.4} vs floor {floor:.4}"), ok)
    } else {
        let monotone = ys.windows(2).all(|w| w[1] > w[0]);
        let growth = ys.last().zip(ys.first()).map(|(l, f)| l / f).unwrap_or(0.0);
        if diverged {
            ("diverging: blow-up guard tripped".to_string(), true)
        } else {
            (
                format!("growth x{growth:.2}, monotone {monotone}"),
                monotone && growth >= GROWTH_FACTOR,
            )
        }
    };
    DampedSeries {
        alpha,
        points,
        fit,
        floor,
        ratio: r,
        verdict,
        passed,
        max_abs_balance_residual,
    }
}

/// Header of the per-point sweep CSV for the given estimated and balance labels.
pub fn sweep_csv_header(functionals: &[String], balances: &[String]) -> String {
    let mut cols: Vec<String> = ["axis_value", "nu", "alpha", "dt", "seed", "config_hash", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for f in functionals {
        cols.push(format!("{f}_mean"));
        cols.push(format!("{f}_stderr"));
    }
    for b in balances {
        cols.push(format!("{b}_residual"));
        cols.push(format!("{b}_stderr"));
    }
    cols.join(",")
}

/// Writes one row per point; absent values are empty cells.
pub fn write_sweep_csv<W: Write>(
    points: &[SweepPoint],
    functionals: &[String],
    balances: &[String],
    mut out: W,
) -> Result<()> {
    writeln!(out, "{}", sweep_csv_header(functionals, balances))?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for p in points {
        let mut cells = vec![
            format!("{:e}", p.value),
            format!("{:e}", p.nu),
            format!("{:e}", p.alpha),
            format!("{:e}", p.dt),
            p.seed.to_string(),
            p.config_hash.clone(),
            p.status.name().to_string(),
        ];
        for f in functionals {
            let e = p.estimate.as_ref().and_then(|e| e.get(f));
            cells.push(cell(e.map(|e| e.mean)));
            cells.push(cell(e.map(|e| e.stderr)));
        }
        for b in balances {
            let l = p.balance.as_ref().and_then(|r| r.get(b));
            cells.push(cell(l.map(|l| l.residual)));
            cells.push(cell(l.map(|l| l.stderr)));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Mode;
    use crate::noise::NoiseSpec;
    use crate::spectral::Lattice;

    fn base() -> SolverConfig {
        let mut c = SolverConfig::new(Lattice::new(8).unwrap(), NoiseSpec::default_forcing(0.5));
        c.mode = Mode::StokesLinear;
        c.dt = 0.1;
        c
    }

    #[test]
    fn loglog_fit_recovers_power_laws() {
        let xs = [0.001, 0.01, 0.1, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.75)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-10);
        assert!(fit_loglog(&xs[..3], &ys[..3]).is_none());
        assert!(fit_loglog(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn plan_validation() {
        let est = EstimatorPlan::new(1.0, 3.0, vec![]);
        let mut p = SweepPlan::new(SweepAxis::Nu, vec![], base(), est);
        assert!(p.validate().is_err());
        p.values = vec![0.1, 0.2, 0.15];
        assert!(p.validate().is_err());
        p.values = vec![0.2, 0.1];
        assert!(p.validate().is_ok());
        p.dts = Some(vec![0.1]);
        assert!(p.validate().is_err());
        p.axis = SweepAxis::DriftAmplitude;
        p.dts = None;
        assert!(p.config_at(0).is_err());
    }

    #[test]
    fn lower_bound_matches_hand_computation() {
        let mut c = base();
        c.mode = Mode::FullNonlinear;
        c.noise = c.noise.with_alpha(0.0);
        c.tau = 1.0;
        c.gamma = 0.0;
        c.nu = 0.1;
        let expect = 0.5 * (3.5 - 0.1 / 1.1 * 6.0);
        assert!((stationary_lower_bound(&c).unwrap() - expect).abs() < 1e-14);
        c.gamma = 0.5;
        let s: f64 = 2.5f64.powf(0.4);
        let m = 0.1 * s * s + 1.0 / s.sqrt();
        let expect = 0.5 * (3.5 - 0.1 / m * 6.0);
        assert!((stationary_lower_bound(&c).unwrap() - expect).abs() < 1e-13);
        c.tau = 0.0;
        assert!(stationary_lower_bound(&c).is_err());
    }

    #[test]
    fn small_sweep_writes_one_row_per_point() {
        let mut est = EstimatorPlan::new(2.0, 12.0, vec![]);
        est.seed = 5;
        let plan = SweepPlan::new(SweepAxis::Nu, vec![1.0, 0.5], base(), est);
        let points = run_sweep(&plan, &[Functional::L2Sq]).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.config_hash.len() == 64 && p.balance.is_some()));
        let mut buf = Vec::new();
        let labels = vec!["l2_sq".to_string(), "h1_sq".to_string()];
        let bal = vec!["est1".to_string(), "balance_l2".to_string()];
        write_sweep_csv(&points, &labels, &bal, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let header_cols = lines[0].split(',').count();
        assert!(lines[1..].iter().all(|l| l.split(',').count() == header_cols));
        assert!(lines[1].split(',').all(|c| !c.is_empty()));
    }

    #[test]
    fn inviscid_preconditions() {
        let est = EstimatorPlan::new(1.0, 3.0, vec![]);
        let p = SweepPlan::new(SweepAxis::Nu, vec![0.01, 0.1], base(), est.clone());
        assert!(inviscid_sweep(&p, None).is_err());
        let mut b = base();
        b.tau = 0.5;
        let p = SweepPlan::new(SweepAxis::Nu, vec![0.1, 0.01], b, est);
        assert!(inviscid_sweep(&p, None).is_err());
    }

    #[test]
    fn damped_alpha_set_is_checked() {
        let mut b = base();
        b.tau = 1.0;
        let est = EstimatorPlan::new(1.0, 3.0, vec![]);
        let p = SweepPlan::new(SweepAxis::Nu, vec![0.1, 0.01], b, est);
        assert!(damped_scaling_sweep(&p, &[0.5, 0.25, 0.0]).is_err());
        assert!(damped_scaling_sweep(&p, &[0.5, 0.0, -0.25]).is_err());
    }
}
