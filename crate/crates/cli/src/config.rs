//! Run configuration: one TOML file with sections, CLI overrides on top.
//!
//! Every section has defaults; the resolved form (all defaults expanded) is
//! written next to the outputs and hashed into every payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snse_core::diagnostics::DiagnosticsSpec;
use snse_core::integrator::{DriftSpec, Mode, Scheme, SolverConfig, DEFAULT_BLOWUP_GUARD};
use snse_core::measure::{default_burn_in, EstimatorPlan, Functional, InitialCondition};
use snse_core::noise::NoiseSpec;
use snse_core::random_fields::{random_divergence_free, seeded_rng};
use snse_core::spectral::{Lattice, VelocityField, Wavenumber};

use crate::CliError;

/// Stream ids separating the random draws a single seed feeds.
const DRIFT_STREAM: u64 = 0x6472_6966;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moser: Option<MoserSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elliptic: Option<EllipticSection>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n: usize,
    pub dealias_fraction: f64,
    pub nu: f64,
    pub tau: f64,
    pub gamma: f64,
    pub diss_exponent: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub scheme: Scheme,
    pub advection_scale: f64,
    pub blowup_guard: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_cutoff: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            n: 32,
            dealias_fraction: 2.0 / 3.0,
            nu: 0.05,
            tau: 0.0,
            gamma: 0.0,
            diss_exponent: 2.0,
            dt: 2.5e-3,
            t_end: 1.0,
            mode: Mode::FullNonlinear,
            scheme: Scheme::ExponentialHeun,
            advection_scale: 1.0,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
            damping_cutoff: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    /// Six pair modes on `|k|² ∈ {1, 2, 4}` with unit `g`.
    Default,
    None,
    /// Explicit `modes` and coefficients `b`.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub forcing: Forcing,
    pub c: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<Wavenumber>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            forcing: Forcing::Default,
            c: 1.0,
            alpha: 0.5,
            modes: Vec::new(),
            b: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    /// Spectral radius of the random divergence-free drift.
    pub radius: f64,
    pub amplitude: f64,
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            radius: 3.0,
            amplitude: 1.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Steps between diagnostics rows.
    pub diagnostics_stride: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_stride: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            diagnostics_stride: 10,
            checkpoint_stride: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Defaults to `max(10/μ_min, 100)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub total: f64,
    pub sample_interval: f64,
    pub n_batches: usize,
    pub replicas: usize,
    /// Time steps at which `balance` repeats the estimate; empty means `solver.dt`.
    pub dts: Vec<f64>,
    pub histogram_modes: Vec<Wavenumber>,
    pub histogram_bins: usize,
    pub histogram_range: f64,
    pub functionals: Vec<Functional>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            burn_in: None,
            total: 2000.0,
            sample_interval: 0.0,
            n_batches: 16,
            replicas: 1,
            dts: Vec::new(),
            histogram_modes: Vec::new(),
            histogram_bins: 32,
            histogram_range: 2.0,
            functionals: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Generic,
    Inviscid,
    Damped,
    Moser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Nu,
    Alpha,
    DriftAmplitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub axis: Axis,
    pub values: Vec<f64>,
    /// One time step per value; empty means `solver.dt` everywhere.
    pub dts: Vec<f64>,
    /// Noise exponents of the damped sweep.
    pub alphas: Vec<f64>,
    /// Exponential-moment `δ`; defaults to `0.1/(c²Σg²)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub functionals: Vec<Functional>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::Generic,
            axis: Axis::Nu,
            values: Vec::new(),
            dts: Vec::new(),
            alphas: Vec::new(),
            delta: None,
            functionals: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoserSection {
    pub amplitudes: Vec<f64>,
    pub t: f64,
    pub replicas: usize,
    pub base_dt: f64,
    pub cfl: f64,
    /// Spacing of the sup-norm samples; defaults to `T/256`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
}

impl Default for MoserSection {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.0, 1.0, 1e2, 1e4],
            t: 0.125,
            replicas: 8,
            base_dt: 1e-3,
            cfl: 0.1,
            sample_interval: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Stationary law of an eigenfunction forced along itself.
    Ou,
    /// Per-mode variances of the linear dynamics.
    Stokes,
    /// Fast nonlinearity against the convolution sum.
    Nonlinearity,
    /// Energy and enstrophy conservation of the unforced inviscid flow.
    Euler,
    /// First-order convergence of the `L^p` Itô bookkeeping.
    Ledger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kind: OracleKind,
    pub nus: Vec<f64>,
    /// `dt·ν`, so one value serves every viscosity.
    pub dt_nu: f64,
    /// Horizon `T·ν` including burn-in.
    pub time_nu: f64,
    pub burn_nu: f64,
    pub replicas: usize,
    pub n_batches: usize,
    /// Eigenfunction wavenumber for `ou`.
    pub k: Wavenumber,
    /// Random fields for `nonlinearity`.
    pub samples: usize,
    /// Exponents for `ledger`.
    pub ps: Vec<u32>,
    /// Steps between conservation checks for `euler`.
    pub stride: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            kind: OracleKind::Ou,
            nus: vec![1.0, 0.1],
            dt_nu: 0.05,
            time_nu: 2e4,
            burn_nu: 20.0,
            replicas: 1,
            n_batches: 16,
            k: [1, 0],
            samples: 5,
            ps: vec![2, 4],
            stride: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticSection {
    pub amplitudes: Vec<f64>,
    /// Defaults to the run seed alone.
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub drift_radius: f64,
    pub source_radius: f64,
    pub source_decay: f64,
    pub radii: Vec<f64>,
    pub centers: usize,
    pub rings: usize,
    pub r_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart: Option<usize>,
    pub max_iterations: usize,
    /// `‖v‖_∞ ≤ linf_bound·‖f‖_∞` is expected; violations are flagged.
    pub linf_bound: f64,
}

impl Default for EllipticSection {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.0, 10.0, 1e2, 1e3, 1e4],
            seeds: Vec::new(),
            tol: 1e-10,
            drift_radius: 3.0,
            source_radius: 4.0,
            source_decay: 0.0,
            radii: snse_core::elliptic::dyadic_radii(3, 7),
            centers: 64,
            rings: 4,
            r_star: snse_core::elliptic::DEFAULT_R_STAR,
            restart: None,
            max_iterations: 20_000,
            linf_bound: 10.0,
        }
    }
}

impl RunConfig {
    /// Parses a config file; errors name the file, line and offending key.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Canonical TOML of the configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML with the output path and thread count
    /// removed, so results hash identically wherever and however they run.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.threads = 1;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Fills the sections `command` reads with their defaults.
    pub fn resolve(&mut self, command: &str) {
        match command {
            "run" => {
                self.run.get_or_insert_with(Default::default);
                self.diagnostics.get_or_insert_with(Default::default);
                self.initial.get_or_insert(InitialCondition::Zero);
            }
            "balance" => {
                self.estimator.get_or_insert_with(Default::default);
                self.initial.get_or_insert(InitialCondition::Zero);
            }
            "sweep" => {
                let kind = self.sweep.get_or_insert_with(Default::default).kind;
                if kind == SweepKind::Moser {
                    self.moser.get_or_insert_with(Default::default);
                    self.drift.get_or_insert_with(Default::default);
                } else {
                    self.estimator.get_or_insert_with(Default::default);
                    self.initial.get_or_insert(InitialCondition::Zero);
                }
            }
            "oracle" => {
                let kind = self.oracle.get_or_insert_with(Default::default).kind;
                if matches!(kind, OracleKind::Euler | OracleKind::Ledger) {
                    self.initial.get_or_insert(InitialCondition::Random {
                        radius: 4.0,
                        decay: 1.0,
                        amplitude: 1.0,
                    });
                }
            }
            "elliptic" => {
                let seed = self.seed;
                let e = self.elliptic.get_or_insert_with(Default::default);
                if e.seeds.is_empty() {
                    e.seeds.push(seed);
                }
            }
            _ => {}
        }
        if let Some(d) = self.drift.as_mut() {
            d.seed.get_or_insert(self.seed);
        }
    }

    pub fn lattice(&self) -> Result<Lattice, CliError> {
        Ok(Lattice::with_params(
            self.solver.n,
            2.0 * std::f64::consts::PI,
            self.solver.dealias_fraction,
        )?)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec, CliError> {
        let n = &self.noise;
        if n.forcing != Forcing::Custom && !(n.modes.is_empty() && n.b.is_empty()) {
            return Err(CliError::Invalid(
                "noise.modes and noise.b apply only with forcing = \"custom\"".into(),
            ));
        }
        Ok(match n.forcing {
            Forcing::Default => NoiseSpec::default_forcing(n.alpha).with_c(n.c)?,
            Forcing::None => NoiseSpec::none(),
            Forcing::Custom => NoiseSpec::new(n.modes.clone(), n.b.clone(), n.c, n.alpha)?,
        })
    }

    /// The random divergence-free drift of the `[drift]` section, `‖a‖_∞ = 1`.
    pub fn drift_field(&self) -> Result<VelocityField, CliError> {
        let d = self.drift.clone().unwrap_or_default();
        let mut rng = seeded_rng(d.seed.unwrap_or(self.seed), DRIFT_STREAM);
        Ok(random_divergence_free(self.lattice()?, d.radius, &mut rng))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let mut c = SolverConfig::new(self.lattice()?, self.noise_spec()?);
        c.nu = s.nu;
        c.tau = s.tau;
        c.gamma = s.gamma;
        c.diss_exponent = s.diss_exponent;
        c.dt = s.dt;
        c.t_end = s.t_end;
        c.mode = s.mode;
        c.scheme = s.scheme;
        c.advection_scale = s.advection_scale;
        c.damping_cutoff = s.damping_cutoff;
        c.blowup_guard = s.blowup_guard;
        if s.mode == Mode::PrescribedDrift {
            let amplitude = self.drift.as_ref().map_or(1.0, |d| d.amplitude);
            c.drift = Some(DriftSpec::new(self.drift_field()?, amplitude)?);
        }
        c.validate()?;
        Ok(c)
    }

    /// Estimator plan from `[estimator]`, with `extra` functionals prepended.
    pub fn estimator_plan(&self, solver: &SolverConfig, extra: &[Functional]) -> Result<EstimatorPlan, CliError> {
        let e = self.estimator.clone().unwrap_or_default();
        let mut functionals: Vec<Functional> = extra.to_vec();
        for f in &e.functionals {
            if !functionals.contains(f) {
                functionals.push(f.clone());
            }
        }
        let mut plan = EstimatorPlan::new(e.burn_in.unwrap_or_else(|| default_burn_in(solver)), e.total, functionals);
        plan.sample_interval = e.sample_interval;
        plan.n_batches = e.n_batches;
        plan.replicas = e.replicas;
        plan.seed = self.seed;
        plan.initial = self.initial.clone().unwrap_or(InitialCondition::Zero);
        plan.histogram_modes = e.histogram_modes;
        plan.histogram_bins = e.histogram_bins;
        plan.histogram_range = e.histogram_range;
        plan.threads = self.threads;
        Ok(plan)
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Invalid(format!("config needs a [{name}] section")))
    }
}
