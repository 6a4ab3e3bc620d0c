//! Stationary statistics by Krylov–Bogoliubov time averaging: burn-in,
//! batch-means standard errors, replica ensembles, and the exact balance
//! identities the averages must satisfy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::integrator::{Mode, SolverConfig, State, Stepper};
use crate::pool::parallel_map;
use crate::random_fields::random_field;
use crate::spectral::{to_physical, Grid, Lattice, SpectralField, Wavenumber, LINF_OVERSAMPLE};

/// A scalar functional of the vorticity to be time-averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Functional {
    One,
    /// `‖ω‖²`.
    L2Sq,
    /// `‖∇ω‖²`.
    H1Sq,
    /// `‖ω‖_∞` on the oversample-2 grid.
    Linf,
    Lp { p: f64 },
    Energy,
    /// `‖u‖² = Σ |ω̂_k|²/|k|²`.
    VelocitySq,
    /// `‖u‖²_{H^{1−γ/2}} = Σ |k|^{−γ}|ω̂_k|²`.
    VelocityHs { gamma: f64 },
    /// `exp(δ‖ω‖²)`.
    ExpL2 { delta: f64 },
    /// `|ω̂_k|² + |ω̂_{−k}|²`.
    ModeSq { k: Wavenumber },
    /// Cosine-channel amplitude `2 Re ω̂_k`.
    ModeCos { k: Wavenumber },
    /// Sine-channel amplitude `−2 Im ω̂_k`.
    ModeSin { k: Wavenumber },
    /// `Σ μ_k |ω̂_k|²`.
    EnstrophyDissipation,
    /// `Σ μ_k |ω̂_k|²/|k|²`.
    EnergyDissipation,
}

impl Functional {
    pub fn label(&self) -> String {
        match self {
            Self::One => "one".into(),
            Self::L2Sq => "l2_sq".into(),
            Self::H1Sq => "h1_sq".into(),
            Self::Linf => "linf".into(),
            Self::Lp { p } => format!("lp_{p}"),
            Self::Energy => "energy".into(),
            Self::VelocitySq => "velocity_sq".into(),
            Self::VelocityHs { gamma } => format!("velocity_hs_{gamma}"),
            Self::ExpL2 { delta } => format!("exp_l2_{delta}"),
            Self::ModeSq { k } => format!("mode_sq_{}_{}", k[0], k[1]),
            Self::ModeCos { k } => format!("mode_cos_{}_{}", k[0], k[1]),
            Self::ModeSin { k } => format!("mode_sin_{}_{}", k[0], k[1]),
            Self::EnstrophyDissipation => "enstrophy_dissipation".into(),
            Self::EnergyDissipation => "energy_dissipation".into(),
        }
    }

    fn needs_grid(&self) -> bool {
        matches!(self, Self::Linf | Self::Lp { .. })
    }

    fn validate(&self, lattice: &Lattice) -> Result<()> {
        match self {
            Self::Lp { p } if !(*p >= 1.0) => Err(Error::invalid(format!("L^p needs p >= 1, got {p}"))),
            Self::ExpL2 { delta } if !(*delta > 0.0) => {
                Err(Error::invalid(format!("exponential moment needs delta > 0, got {delta}")))
            }
            Self::VelocityHs { gamma } if !(0.0..2.0).contains(gamma) => {
                Err(Error::invalid(format!("gamma must lie in [0, 2), got {gamma}")))
            }
            Self::ModeSq { k } | Self::ModeCos { k } | Self::ModeSin { k }
                if *k == [0, 0] || !lattice.is_active(*k) =>
            {
                Err(Error::invalid(format!("mode {k:?} is not an active wavenumber")))
            }
            _ => Ok(()),
        }
    }

    /// `grid` must be the oversample-2 sampling of `omega` when [`Self::needs_grid`].
    fn eval(&self, omega: &SpectralField, grid: Option<&Grid>, config: &SolverConfig) -> f64 {
        match self {
            Self::One => 1.0,
            Self::L2Sq => omega.l2_sq(),
            Self::H1Sq => omega.h1_sq(),
            Self::Linf => grid.expect("grid").max_abs(),
            Self::Lp { p } => grid.expect("grid").mean_of(|s| s.abs().powf(*p)).powf(1.0 / p),
            Self::Energy => diagnostics::energy(omega),
            Self::VelocitySq => omega.weighted_sq(|k2| 1.0 / k2),
            Self::VelocityHs { gamma } => omega.weighted_sq(|k2| k2.powf(-0.5 * gamma)),
            Self::ExpL2 { delta } => (delta * omega.l2_sq()).exp(),
            Self::ModeSq { k } => 2.0 * omega.get(*k).norm_sqr(),
            Self::ModeCos { k } => 2.0 * omega.get(*k).re,
            Self::ModeSin { k } => -2.0 * omega.get(*k).im,
            Self::EnstrophyDissipation => config.dissipation_functional(omega),
            Self::EnergyDissipation => {
                let lat = omega.lattice();
                omega
                    .coeffs()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.norm_sqr() > 0.0)
                    .map(|(i, c)| {
                        let k = lat.wavenumber(i);
                        config.linear_multiplier(k) * c.norm_sqr() / lat.k_sq(k)
                    })
                    .sum()
            }
        }
    }
}

/// One time-contiguous batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub mean: f64,
    pub len: u64,
    /// Whether the batch lies in the second half of its trajectory.
    pub late: bool,
}

/// Mergeable batch-means accumulator for one functional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    batches: Vec<Batch>,
    max: Option<f64>,
    nonfinite: u64,
}

impl BatchMeans {
    pub fn new() -> Self {
        Self::default()
    }

    /// Splits one trajectory's samples into `n_batches` equal batches;
    /// leading samples that do not fill a batch are dropped.
    pub fn from_series(samples: &[f64], n_batches: usize) -> Self {
        let mut acc = Self::new();
        if n_batches == 0 || samples.len() < n_batches {
            return acc;
        }
        let len = samples.len() / n_batches;
        let skip = samples.len() - len * n_batches;
        for (b, chunk) in samples[skip..].chunks(len).enumerate() {
            let mean = chunk.iter().sum::<f64>() / len as f64;
            acc.batches.push(Batch {
                mean,
                len: len as u64,
                late: 2 * b >= n_batches,
            });
        }
        for &s in &samples[skip..] {
            if s.is_finite() {
                acc.max = Some(acc.max.map_or(s, |m: f64| m.max(s)));
            } else {
                acc.nonfinite += 1;
            }
        }
        acc
    }

    pub fn merge(&mut self, other: &BatchMeans) {
        self.batches.extend_from_slice(&other.batches);
        self.max = match (self.max, other.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.nonfinite += other.nonfinite;
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn samples(&self) -> u64 {
        self.batches.iter().map(|b| b.len).sum()
    }

    pub fn max(&self) -> Option<f64> {
        self.max
    }

    pub fn nonfinite(&self) -> u64 {
        self.nonfinite
    }

    /// Sample-weighted mean over all batches.
    pub fn mean(&self) -> f64 {
        mean_of(self.batches.iter())
    }

    /// Standard deviation of the batch means over `√B`.
    pub fn stderr(&self) -> f64 {
        stderr_of(self.batches.iter())
    }

    /// Early-half versus late-half comparison.
    pub fn stationarity(&self) -> Stationarity {
        let early = self.batches.iter().filter(|b| !b.late);
        let late = self.batches.iter().filter(|b| b.late);
        let (m1, s1) = (mean_of(early.clone()), stderr_of(early));
        let (m2, s2) = (mean_of(late.clone()), stderr_of(late));
        let spread = (s1 * s1 + s2 * s2).sqrt();
        let diff = (m1 - m2).abs();
        Stationarity {
            early_mean: m1,
            late_mean: m2,
            passed: diff <= 2.0 * spread || diff <= 1e-12 * m1.abs().max(m2.abs()),
        }
    }
}

fn mean_of<'a>(batches: impl Iterator<Item = &'a Batch>) -> f64 {
    let (s, n) = batches.fold((0.0, 0u64), |(s, n), b| (s + b.mean * b.len as f64, n + b.len));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn stderr_of<'a>(batches: impl Iterator<Item = &'a Batch> + Clone) -> f64 {
    let count = batches.clone().count();
    if count < 2 {
        return f64::NAN;
    }
    let m = batches.clone().map(|b| b.mean).sum::<f64>() / count as f64;
    let var = batches.map(|b| (b.mean - m).powi(2)).sum::<f64>() / (count - 1) as f64;
    (var / count as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub early_mean: f64,
    pub late_mean: f64,
    pub passed: bool,
}

/// Fixed-range histogram of the two channels of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeHistogram {
    pub k: Wavenumber,
    pub lo: f64,
    pub hi: f64,
    pub counts_re: Vec<u64>,
    pub counts_im: Vec<u64>,
    pub outside: u64,
}

impl ModeHistogram {
    pub fn new(k: Wavenumber, range: f64, bins: usize) -> Self {
        Self {
            k,
            lo: -range,
            hi: range,
            counts_re: vec![0; bins],
            counts_im: vec![0; bins],
            outside: 0,
        }
    }

    fn bin(&self, v: f64) -> Option<usize> {
        let bins = self.counts_re.len();
        if !(v >= self.lo && v < self.hi) {
            return None;
        }
        Some((((v - self.lo) / (self.hi - self.lo)) * bins as f64).min(bins as f64 - 1.0) as usize)
    }

    pub fn record(&mut self, omega: &SpectralField) {
        let c = omega.get(self.k);
        match self.bin(c.re) {
            Some(b) => self.counts_re[b] += 1,
            None => self.outside += 1,
        }
        match self.bin(c.im) {
            Some(b) => self.counts_im[b] += 1,
            None => self.outside += 1,
        }
    }

    pub fn merge(&mut self, other: &ModeHistogram) {
        for (a, b) in self.counts_re.iter_mut().zip(&other.counts_re) {
            *a += b;
        }
        for (a, b) in self.counts_im.iter_mut().zip(&other.counts_im) {
            *a += b;
        }
        self.outside += other.outside;
    }
}

/// Starting vorticity of every replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// Gaussian field on `|k| ≤ radius` with coefficient scale `amplitude·|k|^{−decay}`,
    /// drawn from a stream keyed by the seed and replica.
    Random { radius: f64, decay: f64, amplitude: f64 },
}

impl InitialCondition {
    pub fn label(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Random { radius, decay, amplitude } => {
                format!("random(radius={radius},decay={decay},amplitude={amplitude})")
            }
        }
    }

    pub fn sample(&self, lattice: Lattice, seed: u64, replica: u64) -> SpectralField {
        match self {
            Self::Zero => SpectralField::zeros(lattice),
            Self::Random { radius, decay, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INITIAL_KEY);
                rng.set_stream(replica);
                let mut f = random_field(lattice, *radius, *decay, &mut rng);
                f.scale(*amplitude);
                f
            }
        }
    }
}

const INITIAL_KEY: u64 = 0x1e5f_0c0d_a7a5_eed5;

/// How to run and sample an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorPlan {
    pub burn_in: f64,
    /// Time horizon including burn-in.
    pub total: f64,
    /// Time between samples; rounded to a whole number of steps.
    pub sample_interval: f64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    #[serde(default = "one")]
    pub replicas: usize,
    pub seed: u64,
    /// Replica `r` uses noise stream `trajectory_offset + r`.
    #[serde(default)]
    pub trajectory_offset: u64,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    pub functionals: Vec<Functional>,
    #[serde(default)]
    pub histogram_modes: Vec<Wavenumber>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_range")]
    pub histogram_range: f64,
    #[serde(default = "one")]
    pub threads: usize,
}

fn default_batches() -> usize {
    16
}
fn one() -> usize {
    1
}
fn default_initial() -> InitialCondition {
    InitialCondition::Zero
}
fn default_bins() -> usize {
    32
}
fn default_range() -> f64 {
    2.0
}

pub const MIN_BATCHES: usize = 8;

impl EstimatorPlan {
    pub fn new(burn_in: f64, total: f64, functionals: Vec<Functional>) -> Self {
        Self {
            burn_in,
            total,
            sample_interval: 0.0,
            n_batches: default_batches(),
            replicas: 1,
            seed: 0,
            trajectory_offset: 0,
            initial: InitialCondition::Zero,
            functionals,
            histogram_modes: Vec::new(),
            histogram_bins: default_bins(),
            histogram_range: default_range(),
            threads: 1,
        }
    }

    fn schedule(&self, dt: f64) -> Result<Schedule> {
        if !(self.burn_in > 0.0 && self.total > self.burn_in && self.total.is_finite()) {
            return Err(Error::invalid(format!(
                "need total > burn_in > 0, got burn_in = {}, total = {}",
                self.burn_in, self.total
            )));
        }
        if self.n_batches < MIN_BATCHES {
            return Err(Error::invalid(format!("need at least {MIN_BATCHES} batches")));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("need at least one replica"));
        }
        let burn = (self.burn_in / dt).round() as u64;
        let total = (self.total / dt).round() as u64;
        let every = ((self.sample_interval / dt).round() as u64).max(1);
        let samples = (total - burn) / every;
        if (samples as usize) < self.n_batches {
            return Err(Error::invalid(format!(
                "{samples} samples cannot fill {} batches",
                self.n_batches
            )));
        }
        Ok(Schedule { burn, every, samples })
    }
}

struct Schedule {
    burn: u64,
    every: u64,
    samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_batches: usize,
    pub samples: u64,
    pub burn_in: f64,
    pub total_time: f64,
    pub max: Option<f64>,
    pub stationarity: Stationarity,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub initial: String,
    pub seed: u64,
    pub replicas: usize,
    pub dt: f64,
    pub functionals: Vec<FunctionalEstimate>,
    pub histograms: Vec<ModeHistogram>,
}

impl MeasureEstimate {
    pub fn get(&self, label: &str) -> Option<&FunctionalEstimate> {
        self.functionals.iter().find(|f| f.label == label)
    }

    pub fn get_functional(&self, f: &Functional) -> Option<&FunctionalEstimate> {
        self.get(&f.label())
    }

    pub fn is_flagged(&self) -> bool {
        self.functionals.iter().any(|f| !f.flags.is_empty())
    }
}

/// Per-replica result before merging.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaAccumulator {
    pub functionals: Vec<BatchMeans>,
    pub histograms: Vec<ModeHistogram>,
}

impl ReplicaAccumulator {
    pub fn merge(&mut self, other: &ReplicaAccumulator) {
        for (a, b) in self.functionals.iter_mut().zip(&other.functionals) {
            a.merge(b);
        }
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            a.merge(b);
        }
    }
}

/// Runs one replica and returns its accumulators.
pub fn run_replica(config: &SolverConfig, plan: &EstimatorPlan, replica: usize) -> Result<ReplicaAccumulator> {
    let sched = plan.schedule(config.dt)?;
    let lat = config.lattice;
    let trajectory = plan.trajectory_offset + replica as u64;
    let init = plan.initial.sample(lat, plan.seed, trajectory);
    let mut state = State::new(init, plan.seed, trajectory);
    let mut stepper = Stepper::new(config)?;
    stepper.advance(&mut state, sched.burn, &mut [], 1)?;

    let need_grid = plan.functionals.iter().any(Functional::needs_grid);
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(sched.samples as usize); plan.functionals.len()];
    let mut histograms: Vec<ModeHistogram> = plan
        .histogram_modes
        .iter()
        .map(|&k| ModeHistogram::new(k, plan.histogram_range, plan.histogram_bins))
        .collect();
    for _ in 0..sched.samples {
        stepper.advance(&mut state, sched.every, &mut [], 1)?;
        let grid = if need_grid {
            Some(to_physical(&state.omega, LINF_OVERSAMPLE)?)
        } else {
            None
        };
        for (f, s) in plan.functionals.iter().zip(series.iter_mut()) {
            s.push(f.eval(&state.omega, grid.as_ref(), config));
        }
        for h in &mut histograms {
            h.record(&state.omega);
        }
    }
    Ok(ReplicaAccumulator {
        functionals: series.iter().map(|s| BatchMeans::from_series(s, plan.n_batches)).collect(),
        histograms,
    })
}

/// Time averages over `[burn_in, total]` pooled across replicas.
pub fn estimate_stationary(config: &SolverConfig, plan: &EstimatorPlan) -> Result<MeasureEstimate> {
    config.validate()?;
    plan.schedule(config.dt)?;
    for f in &plan.functionals {
        f.validate(&config.lattice)?;
    }
    for &k in &plan.histogram_modes {
        if k == [0, 0] || !config.lattice.is_active(k) {
            return Err(Error::invalid(format!("histogram mode {k:?} is not active")));
        }
    }
    let parts = parallel_map(plan.replicas, plan.threads, |r| run_replica(config, plan, r));
    let mut merged: Option<ReplicaAccumulator> = None;
    for part in parts {
        let part = part?;
        match &mut merged {
            Some(m) => m.merge(&part),
            None => merged = Some(part),
        }
    }
    Ok(finish(config, plan, merged.expect("at least one replica")))
}

/// Turns merged accumulators into a report.
pub fn finish(config: &SolverConfig, plan: &EstimatorPlan, acc: ReplicaAccumulator) -> MeasureEstimate {
    let functionals = plan
        .functionals
        .iter()
        .zip(&acc.functionals)
        .map(|(f, bm)| {
            let mean = bm.mean();
            let stderr = bm.stderr();
            let stationarity = bm.stationarity();
            let mut flags = Vec::new();
            if stderr > 0.5 * mean.abs() {
                flags.push("stderr exceeds 50% of mean".to_string());
            }
            if !stationarity.passed {
                flags.push("stationarity check failed".to_string());
            }
            if bm.nonfinite() > 0 || !mean.is_finite() {
                flags.push("overflow".to_string());
            }
            FunctionalEstimate {
                label: f.label(),
                mean,
                stderr,
                n_batches: bm.batches().len(),
                samples: bm.samples(),
                burn_in: plan.burn_in,
                total_time: plan.total,
                max: bm.max(),
                stationarity,
                flags,
            }
        })
        .collect();
    MeasureEstimate {
        initial: plan.initial.label(),
        seed: plan.seed,
        replicas: plan.replicas,
        dt: config.dt,
        functionals,
        histograms: acc.histograms,
    }
}

/// `max(10/μ_min, 100)` over the forced modes.
pub fn default_burn_in(config: &SolverConfig) -> f64 {
    let mu_min = config
        .noise
        .modes()
        .iter()
        .map(|&k| config.linear_multiplier(k))
        .fold(f64::INFINITY, f64::min);
    if mu_min.is_finite() && mu_min > 0.0 {
        (10.0 / mu_min).max(100.0)
    } else {
        100.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceLine {
    pub label: String,
    pub lhs_estimate: f64,
    pub rhs_exact: f64,
    pub residual: f64,
    /// Standard error of the residual.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub lines: Vec<BalanceLine>,
}

impl BalanceReport {
    pub fn get(&self, label: &str) -> Option<&BalanceLine> {
        self.lines.iter().find(|l| l.label == label)
    }
}

/// The balance identities that apply to `config` together with the
/// functional each left-hand side needs and its exact right-hand side.
pub fn balance_identities(config: &SolverConfig) -> Result<Vec<(&'static str, Functional, f64)>> {
    if config.mode == Mode::DeterministicEuler {
        return Ok(Vec::new());
    }
    let amp = config.noise.amplitude(config.nu)?;
    let half_g = 0.5 * amp * amp * config.noise.sum_g_sq();
    let half_b = 0.5 * amp * amp * config.noise.sum_b_sq();
    let laplacian_only = config.tau == 0.0 && config.diss_exponent == 2.0 && config.nu > 0.0;
    Ok(if laplacian_only {
        vec![
            ("est1", Functional::H1Sq, half_g / config.nu),
            ("balance_l2", Functional::L2Sq, half_b / config.nu),
        ]
    } else {
        vec![
            ("damped_balance_1", Functional::EnstrophyDissipation, half_g),
            ("damped_balance_2", Functional::EnergyDissipation, half_b),
        ]
    })
}

/// Residuals `(lhs − rhs)/rhs` of every applicable identity.
pub fn balance_check(config: &SolverConfig, estimate: &MeasureEstimate) -> Result<BalanceReport> {
    let mut lines = Vec::new();
    for (label, functional, rhs) in balance_identities(config)? {
        let est = estimate.get_functional(&functional).ok_or_else(|| {
            Error::invalid(format!("estimate lacks functional {} needed by {label}", functional.label()))
        })?;
        let (residual, stderr) = if rhs == 0.0 {
            (if est.mean == 0.0 { 0.0 } else { f64::INFINITY }, 0.0)
        } else {
            ((est.mean - rhs) / rhs, est.stderr / rhs)
        };
        lines.push(BalanceLine {
            label: label.to_string(),
            lhs_estimate: est.mean,
            rhs_exact: rhs,
            residual,
            stderr,
        });
    }
    Ok(BalanceReport { lines })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub delta: f64,
    pub mean: f64,
    pub stderr: f64,
    pub overflow: bool,
}

/// Time average of `exp(δ‖ω‖²)`.
pub fn exp_moment_estimate(config: &SolverConfig, delta: f64, plan: &EstimatorPlan) -> Result<ExpMoment> {
    let f = Functional::ExpL2 { delta };
    let mut plan = plan.clone();
    plan.functionals = vec![f.clone()];
    let est = estimate_stationary(config, &plan)?;
    Ok(exp_moment_from(&est, delta).expect("functional present"))
}

/// Reads an exponential moment already contained in `estimate`.
pub fn exp_moment_from(estimate: &MeasureEstimate, delta: f64) -> Option<ExpMoment> {
    let e = estimate.get_functional(&Functional::ExpL2 { delta })?;
    Some(ExpMoment {
        delta,
        mean: e.mean,
        stderr: e.stderr,
        overflow: !e.mean.is_finite() || e.max.is_none_or(|m| m > 1e300) || e.flags.iter().any(|f| f == "overflow"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;
    use proptest::prelude::*;

    fn stokes(nu: f64) -> SolverConfig {
        let mut c = SolverConfig::new(Lattice::new(8).unwrap(), NoiseSpec::default_forcing(0.5));
        c.mode = Mode::StokesLinear;
        c.nu = nu;
        c.dt = 0.05;
        c
    }

    #[test]
    fn constant_functional_has_zero_stderr() {
        let mut plan = EstimatorPlan::new(1.0, 5.0, vec![Functional::One]);
        plan.replicas = 2;
        let est = estimate_stationary(&stokes(1.0), &plan).unwrap();
        let one = est.get("one").unwrap();
        assert_eq!(one.mean, 1.0);
        assert_eq!(one.stderr, 0.0);
        assert_eq!(one.n_batches, 32);
        assert!(one.flags.is_empty());
    }

    #[test]
    fn plan_preconditions() {
        let c = stokes(1.0);
        let mut plan = EstimatorPlan::new(0.0, 5.0, vec![Functional::One]);
        assert!(estimate_stationary(&c, &plan).is_err());
        plan.burn_in = 6.0;
        assert!(estimate_stationary(&c, &plan).is_err());
        plan.burn_in = 1.0;
        plan.n_batches = 4;
        assert!(estimate_stationary(&c, &plan).is_err());
        plan.n_batches = 16;
        plan.total = 1.5;
        assert!(estimate_stationary(&c, &plan).is_err());
        plan.total = 5.0;
        plan.functionals = vec![Functional::ModeSq { k: [9, 0] }];
        assert!(estimate_stationary(&c, &plan).is_err());
    }

    #[test]
    fn estimates_are_deterministic() {
        let mut plan = EstimatorPlan::new(2.0, 20.0, vec![Functional::L2Sq, Functional::Linf]);
        plan.seed = 42;
        plan.replicas = 3;
        plan.histogram_modes = vec![[1, 0]];
        let a = estimate_stationary(&stokes(0.5), &plan).unwrap();
        plan.threads = 3;
        let b = estimate_stationary(&stokes(0.5), &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn balance_labels_follow_the_model() {
        let mut c = stokes(0.1);
        let ids = balance_identities(&c).unwrap();
        assert_eq!(ids[0].0, "est1");
        assert!((ids[0].2 - 3.0).abs() < 1e-14);
        assert!((ids[1].2 - 1.75).abs() < 1e-14);
        c.tau = 1.0;
        c.noise = c.noise.with_alpha(0.0);
        let ids = balance_identities(&c).unwrap();
        assert_eq!(ids[0].0, "damped_balance_1");
        assert!((ids[0].2 - 3.0).abs() < 1e-14);
        assert!((ids[1].2 - 1.75).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_balance_is_trivially_satisfied() {
        let mut c = stokes(1.0);
        c.noise = NoiseSpec::default_forcing(0.5).with_c(0.0).unwrap();
        let plan = EstimatorPlan::new(1.0, 5.0, vec![Functional::H1Sq, Functional::L2Sq]);
        let est = estimate_stationary(&c, &plan).unwrap();
        let rep = balance_check(&c, &est).unwrap();
        assert!(rep.lines.iter().all(|l| l.residual == 0.0 && l.rhs_exact == 0.0));
        let e = exp_moment_estimate(&c, 0.3, &plan).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!(!e.overflow);
    }

    #[test]
    fn burn_in_heuristic() {
        let c = stokes(1.0);
        assert_eq!(default_burn_in(&c), 100.0);
        let c = stokes(0.01);
        assert!((default_burn_in(&c) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_counts_every_sample() {
        let mut h = ModeHistogram::new([1, 0], 1.0, 4);
        let lat = Lattice::new(8).unwrap();
        for v in [-0.9, -0.2, 0.3, 0.99, 1.5] {
            let w = SpectralField::from_modes(lat, &[([1, 0], num_complex::Complex64::new(v, 0.0))]).unwrap();
            h.record(&w);
        }
        assert_eq!(h.counts_re, vec![1, 1, 1, 1]);
        assert_eq!(h.counts_im, vec![0, 0, 5, 0]);
        assert_eq!(h.outside, 1);
    }

    proptest! {
        #[test]
        fn merged_mean_is_the_weighted_mean(
            a in prop::collection::vec(-10.0f64..10.0, 16..64),
            b in prop::collection::vec(-10.0f64..10.0, 16..64),
            c in prop::collection::vec(-10.0f64..10.0, 16..64),
        ) {
            let (pa, pb, pc) = (
                BatchMeans::from_series(&a, 8),
                BatchMeans::from_series(&b, 8),
                BatchMeans::from_series(&c, 8),
            );
            let mut ab = pa.clone();
            ab.merge(&pb);
            let weighted = (pa.mean() * pa.samples() as f64 + pb.mean() * pb.samples() as f64)
                / (pa.samples() + pb.samples()) as f64;
            prop_assert!((ab.mean() - weighted).abs() <= 1e-12 * (1.0 + weighted.abs()));

            let mut left = ab.clone();
            left.merge(&pc);
            let mut bc = pb.clone();
            bc.merge(&pc);
            let mut right = pa.clone();
            right.merge(&bc);
            prop_assert_eq!(left, right);
        }
    }
}
