//! Drift-independence of the parabolic `L² → L∞` regularization for
//! `dω + (A a·∇ω − Δω) dt = c Σ g_k dW^k`, `ω(0) = 0`.
//!
//! For each amplitude `A` the experiment estimates
//! `lhs = E sup_{[T,2T]} ‖ω‖_∞` and `rhs = E(‖ω‖_{L⁴([0,2T];L²)} ∨ c Σ ‖σ_m‖_∞)`
//! and reports `r(A) = lhs / ((1 + T^{−5/4}) rhs)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{DriftSpec, Mode, SolverConfig, State, Stepper};
use crate::noise::NoiseSpec;
use crate::pool::parallel_map;
use crate::spectral::{to_physical, Lattice, VelocityField, LINF_OVERSAMPLE};

#[derive(Clone, Debug)]
pub struct MoserPlan {
    pub lattice: Lattice,
    /// Forcing; its `α` is ignored (the rescaled problem has unit viscosity).
    pub noise: NoiseSpec,
    /// Divergence-free drift `a`, normalized to `‖a‖_∞ = 1`.
    pub drift: VelocityField,
    pub amplitudes: Vec<f64>,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Largest step used at any amplitude.
    pub base_dt: f64,
    /// Target advective Courant number `A·max|a|·k_max·dt`.
    pub cfl: f64,
    /// Spacing of the `‖ω‖_∞` samples on `[T, 2T]`, identical for every `A`.
    pub sample_interval: f64,
    pub threads: usize,
}

/// Courant number above which a point is flagged as under-resolved.
pub const CFL_LIMIT: f64 = 0.5;

impl MoserPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t <= 0.125) {
            return Err(Error::invalid(format!("T must lie in (0, 1/8], got {}", self.t)));
        }
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid("drift amplitudes must be a nonempty list of values >= 0"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("need at least one replica"));
        }
        if !(self.base_dt > 0.0 && self.cfl > 0.0 && self.sample_interval > 0.0) {
            return Err(Error::invalid("base_dt, cfl and sample_interval must be > 0"));
        }
        if self.drift.lattice() != &self.lattice {
            return Err(Error::invalid("drift lives on a different lattice"));
        }
        Ok(())
    }

    /// Largest wavevector length in the dealiased band.
    fn k_max(&self) -> f64 {
        self.lattice.dealias_cutoff() as f64 * std::f64::consts::SQRT_2 * self.lattice.wave_scale()
    }

    /// Solver configuration at amplitude `a` with the CFL-limited step.
    pub fn config_for(&self, amplitude: f64) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.lattice, self.noise.with_alpha(0.0));
        cfg.mode = Mode::PrescribedDrift;
        cfg.nu = 1.0;
        cfg.drift = Some(DriftSpec::new(self.drift.clone(), amplitude)?);
        let speed = amplitude * max_speed(&self.drift)?;
        let target = if speed > 0.0 {
            self.base_dt.min(self.cfl / (speed * self.k_max()))
        } else {
            self.base_dt
        };
        // An even number of equal steps so that t = T falls on the grid.
        let mut steps = (2.0 * self.t / target).ceil() as u64;
        steps += steps % 2;
        cfg.dt = 2.0 * self.t / steps as f64;
        cfg.t_end = 2.0 * self.t;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn max_speed(v: &VelocityField) -> Result<f64> {
    let g1 = to_physical(&v.u1, LINF_OVERSAMPLE)?;
    let g2 = to_physical(&v.u2, LINF_OVERSAMPLE)?;
    Ok(g1.values().iter().zip(g2.values()).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserSample {
    /// `max` of the sampled `‖ω‖_∞` on `[T, 2T]`.
    pub sup_linf: f64,
    /// `‖ω‖_{L⁴([0,2T];L²)}` by running trapezoid accumulation.
    pub l4l2: f64,
    /// The same functional by trapezoid quadrature of the stored series.
    pub l4l2_quadrature: f64,
}

/// One trajectory from `ω(0) = 0`.
pub fn moser_trajectory(config: &SolverConfig, sample_interval: f64, seed: u64, trajectory: u64) -> Result<MoserSample> {
    let steps = config.steps_from(0.0);
    let half = steps / 2;
    let every = ((sample_interval / config.dt).round() as u64).max(1);
    let mut stepper = Stepper::new(config)?;
    let mut state = State::zero(config.lattice, seed, trajectory);
    let dt = config.dt;
    let mut q = Vec::with_capacity(steps as usize + 1);
    q.push(0.0f64);
    let (mut running, mut comp) = (0.0f64, 0.0f64);
    let mut sup = 0.0f64;
    for s in 1..=steps {
        stepper.step(&mut state)?;
        let qn = state.omega.l2_sq();
        let prev = *q.last().expect("nonempty");
        // Kahan-compensated running trapezoid of ‖ω‖⁴ = q².
        let y = 0.5 * dt * (prev * prev + qn * qn) - comp;
        let t = running + y;
        comp = (t - running) - y;
        running = t;
        q.push(qn);
        if s >= half && ((s - half) % every == 0 || s == steps) {
            let grid = to_physical(&state.omega, LINF_OVERSAMPLE)?;
            sup = sup.max(grid.max_abs());
        }
    }
    let quad = dt * pairwise(&q.iter().map(|v| v * v).collect::<Vec<_>>()) - 0.5 * dt * (q[0] * q[0] + q[q.len() - 1].powi(2));
    Ok(MoserSample {
        sup_linf: sup,
        l4l2: running.max(0.0).powf(0.25),
        l4l2_quadrature: quad.max(0.0).powf(0.25),
    })
}

fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise(a) + pairwise(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserPoint {
    pub amplitude: f64,
    pub dt: f64,
    pub steps: u64,
    pub cfl_number: f64,
    pub under_resolved: bool,
    pub config_hash: String,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub l4l2_mean: f64,
    pub rhs_mean: f64,
    pub ratio: f64,
    /// Largest relative gap between the two `L⁴L²` evaluations.
    pub l4l2_consistency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserResult {
    pub t: f64,
    pub prefactor: f64,
    pub sum_sup_norms: f64,
    pub seed: u64,
    pub replicas: usize,
    pub points: Vec<MoserPoint>,
    /// `max_A r(A) / min_A r(A)`.
    pub ratio_spread: f64,
}

pub fn moser_regularization_experiment(plan: &MoserPlan) -> Result<MoserResult> {
    plan.validate()?;
    let configs = plan
        .amplitudes
        .iter()
        .map(|&a| plan.config_for(a))
        .collect::<Result<Vec<_>>>()?;
    let r = plan.replicas;
    let samples = parallel_map(configs.len() * r, plan.threads, |job| {
        let (i, rep) = (job / r, job % r);
        moser_trajectory(&configs[i], plan.sample_interval, plan.seed, rep as u64)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let prefactor = 1.0 + plan.t.powf(-1.25);
    let sum_sup = plan.noise.c() * plan.noise.sum_sup_norms();
    let speed = max_speed(&plan.drift)?;
    let points: Vec<MoserPoint> = configs
        .iter()
        .zip(&plan.amplitudes)
        .enumerate()
        .map(|(i, (cfg, &a))| {
            let s = &samples[i * r..(i + 1) * r];
            let n = r as f64;
            let lhs_mean = s.iter().map(|x| x.sup_linf).sum::<f64>() / n;
            let lhs_var = if r > 1 {
                s.iter().map(|x| (x.sup_linf - lhs_mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                f64::NAN
            };
            let rhs_mean = s.iter().map(|x| x.l4l2.max(sum_sup)).sum::<f64>() / n;
            let cfl_number = a * speed * plan.k_max() * cfg.dt;
            MoserPoint {
                amplitude: a,
                dt: cfg.dt,
                steps: cfg.steps_from(0.0),
                cfl_number,
                under_resolved: cfl_number > CFL_LIMIT,
                config_hash: cfg.fingerprint(),
                lhs_mean,
                lhs_stderr: (lhs_var / n).sqrt(),
                l4l2_mean: s.iter().map(|x| x.l4l2).sum::<f64>() / n,
                rhs_mean,
                ratio: lhs_mean / (prefactor * rhs_mean),
                l4l2_consistency: s
                    .iter()
                    .map(|x| (x.l4l2 - x.l4l2_quadrature).abs() / x.l4l2.max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max),
            }
        })
        .collect();
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.ratio), hi.max(p.ratio)));
    Ok(MoserResult {
        t: plan.t,
        prefactor,
        sum_sup_norms: sum_sup,
        seed: plan.seed,
        replicas: plan.replicas,
        points,
        ratio_spread: hi / lo,
    })
}

pub const MOSER_CSV_HEADER: &str =
    "amplitude,dt,steps,cfl_number,under_resolved,lhs_mean,lhs_stderr,l4l2_mean,rhs_mean,ratio,config_hash";

pub fn write_moser_csv<W: std::io::Write>(result: &MoserResult, mut out: W) -> Result<()> {
    writeln!(out, "{MOSER_CSV_HEADER}")?;
    for p in &result.points {
        writeln!(
            out,
            "{:e},{:e},{},{:e},{},{:e},{:e},{:e},{:e},{:e},{}",
            p.amplitude,
            p.dt,
            p.steps,
            p.cfl_number,
            p.under_resolved,
            p.lhs_mean,
            p.lhs_stderr,
            p.l4l2_mean,
            p.rhs_mean,
            p.ratio,
            p.config_hash
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::random_divergence_free;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(amplitudes: Vec<f64>) -> MoserPlan {
        let lattice = Lattice::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        MoserPlan {
            lattice,
            noise: NoiseSpec::default_forcing(0.0),
            drift: random_divergence_free(lattice, 2.0, &mut rng),
            amplitudes,
            t: 0.125,
            replicas: 2,
            seed: 3,
            base_dt: 1e-3,
            cfl: 0.1,
            sample_interval: 0.01,
            threads: 1,
        }
    }

    #[test]
    fn steps_are_even_and_cfl_limited() {
        let p = plan(vec![0.0, 100.0]);
        let c0 = p.config_for(0.0).unwrap();
        assert_eq!(c0.steps_from(0.0), 250);
        let c1 = p.config_for(100.0).unwrap();
        let steps = c1.steps_from(0.0);
        assert_eq!(steps % 2, 0);
        assert!(100.0 * c1.dt * p.k_max() <= 0.1 * (1.0 + 1e-12));
        assert!((c1.dt * steps as f64 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_long_horizons() {
        let mut p = plan(vec![0.0]);
        p.t = 0.2;
        assert!(moser_regularization_experiment(&p).is_err());
    }

    #[test]
    fn heat_equation_baseline_is_finite_and_consistent() {
        let res = moser_regularization_experiment(&plan(vec![0.0, 1.0])).unwrap();
        assert_eq!(res.points.len(), 2);
        assert_eq!(res.sum_sup_norms, 12.0);
        for p in &res.points {
            assert!(p.lhs_mean.is_finite() && p.lhs_mean > 0.0);
            assert!(p.rhs_mean >= 12.0);
            assert!(p.l4l2_consistency <= 1e-8);
            assert!(!p.under_resolved);
        }
        let again = moser_regularization_experiment(&plan(vec![0.0, 1.0])).unwrap();
        assert_eq!(res, again);
    }
}
