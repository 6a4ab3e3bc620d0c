//! Time stepping of
//! `dω + (A·N(ω) + Yω + ν(−Δ)^{γ_d/2} ω) dt = c ν^α Σ_k g_k dW^k`.
//!
//! The linear part is diagonal in Fourier space with multiplier
//! `μ_k = ν|k|^{γ_d} + τ|k|^{−γ}` and is integrated exactly, together with
//! the additive noise: over one step each forced channel receives a Gaussian
//! with the exact Ornstein–Uhlenbeck variance `c²ν^{2α}g_k²(1 − e^{−2μ_k dt})/(2μ_k)`.
//! The advection term is treated explicitly, either by one evaluation
//! (exponential Euler) or by an exponential Heun predictor–corrector that
//! reuses the same noise draw.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, NoiseStream, StreamPosition};
use crate::spectral::io::{read_f64, read_field, read_u64, write_field};
use crate::spectral::{
    Lattice, PhysicalDrift, SpectralField, VelocityField, Wavenumber, Workspace,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Self-advection by the Biot–Savart velocity.
    FullNonlinear,
    /// No advection: independent Ornstein–Uhlenbeck modes.
    StokesLinear,
    /// Advection by a fixed divergence-free drift `A·a`.
    PrescribedDrift,
    /// Inviscid, unforced Euler dynamics (classical RK4).
    DeterministicEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `ω ← e^{−μdt}(ω + dt N(ω)) + ξ`.
    ExponentialEuler,
    /// Predictor–corrector on the same noise draw; two evaluations per step.
    ExponentialHeun,
}

/// Fixed drift for [`Mode::PrescribedDrift`].
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    pub velocity: VelocityField,
    pub amplitude: f64,
}

impl DriftSpec {
    pub fn new(velocity: VelocityField, amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::invalid(format!("drift amplitude must be >= 0, got {amplitude}")));
        }
        let res = velocity.divergence_residual();
        if res > 1e-13 {
            return Err(Error::invalid(format!("drift is not divergence-free (residual {res:e})")));
        }
        Ok(Self { velocity, amplitude })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub nu: f64,
    pub tau: f64,
    pub gamma: f64,
    pub diss_exponent: f64,
    pub dt: f64,
    pub t_end: f64,
    pub lattice: Lattice,
    pub noise: NoiseSpec,
    pub mode: Mode,
    pub scheme: Scheme,
    /// Multiplies the advection term; `1/ν` after time rescaling.
    pub advection_scale: f64,
    /// Restricts the damping `Y` to `|k| ≤ cutoff` when set.
    pub damping_cutoff: Option<f64>,
    pub blowup_guard: f64,
    pub drift: Option<DriftSpec>,
}

pub const DEFAULT_BLOWUP_GUARD: f64 = 1e6;

impl SolverConfig {
    /// Undamped Laplacian dissipation, `ν = 0.05`, `dt = 2.5e−3`, full nonlinear.
    pub fn new(lattice: Lattice, noise: NoiseSpec) -> Self {
        Self {
            nu: 0.05,
            tau: 0.0,
            gamma: 0.0,
            diss_exponent: 2.0,
            dt: 2.5e-3,
            t_end: 1.0,
            lattice,
            noise,
            mode: Mode::FullNonlinear,
            scheme: Scheme::ExponentialHeun,
            advection_scale: 1.0,
            damping_cutoff: None,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
            drift: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.dt) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !nonneg(self.nu) {
            return Err(Error::invalid(format!("nu must be >= 0, got {}", self.nu)));
        }
        if !nonneg(self.tau) {
            return Err(Error::invalid(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.diss_exponent > 0.0 && self.diss_exponent <= 2.0) {
            return Err(Error::invalid(format!(
                "dissipation exponent must lie in (0, 2], got {}",
                self.diss_exponent
            )));
        }
        if !positive(self.blowup_guard) {
            return Err(Error::invalid("blow-up guard must be > 0"));
        }
        if !self.advection_scale.is_finite() {
            return Err(Error::invalid("advection scale must be finite"));
        }
        if (self.lattice.side_length() - 2.0 * std::f64::consts::PI).abs() > 1e-12 {
            return Err(Error::invalid("the solver runs on the [0, 2π)² torus only"));
        }
        self.noise.check_lattice(&self.lattice)?;
        self.noise.amplitude(self.nu)?;
        match self.mode {
            Mode::DeterministicEuler => {
                if self.nu != 0.0 || self.tau != 0.0 || !self.noise.is_silent() {
                    return Err(Error::invalid(
                        "deterministic_euler mode requires nu = tau = 0 and no noise",
                    ));
                }
            }
            Mode::PrescribedDrift => {
                let drift = self
                    .drift
                    .as_ref()
                    .ok_or_else(|| Error::invalid("prescribed_drift mode needs a drift"))?;
                if drift.velocity.lattice() != &self.lattice {
                    return Err(Error::invalid("drift lives on a different lattice"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `μ_k = ν|k|^{γ_d} + τ|k|^{−γ}`.
    pub fn linear_multiplier(&self, k: Wavenumber) -> f64 {
        let k2 = self.lattice.k_sq(k);
        let kabs = k2.sqrt();
        let dissipation = if self.diss_exponent == 2.0 {
            self.nu * k2
        } else {
            self.nu * kabs.powf(self.diss_exponent)
        };
        let damped = self.damping_cutoff.is_none_or(|c| kabs <= c + 1e-12);
        let damping = if damped && self.tau != 0.0 {
            self.tau * kabs.powf(-self.gamma)
        } else {
            0.0
        };
        dissipation + damping
    }

    /// `Σ_k μ_k |ω̂_k|²`, the dissipation rate appearing in the balance identities.
    pub fn dissipation_functional(&self, omega: &SpectralField) -> f64 {
        let lat = omega.lattice();
        omega
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(i, c)| self.linear_multiplier(lat.wavenumber(i)) * c.norm_sqr())
            .sum()
    }

    /// Stationary per-channel variance of forced mode `k` under the linear dynamics.
    pub fn ou_channel_variance(&self, k: Wavenumber) -> Result<f64> {
        let i = self
            .noise
            .position_of(k)
            .ok_or_else(|| Error::invalid(format!("mode {k:?} is not forced")))?;
        let amp = self.noise.amplitude(self.nu)?;
        let mu = self.linear_multiplier(k);
        if mu <= 0.0 {
            return Err(Error::invalid(format!("mode {k:?} is undamped; no stationary law")));
        }
        Ok(amp * amp * self.noise.g()[i].powi(2) / (2.0 * mu))
    }

    /// SHA-256 over a canonical rendering of every field (floats by their
    /// exact round-trip representation), as lowercase hex.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let lat = &self.lattice;
        h.update(format!(
            "n={};side={:?};frac={:?};nu={:?};tau={:?};gamma={:?};diss={:?};dt={:?};t_end={:?};\
             mode={:?};scheme={:?};adv={:?};cutoff={:?};guard={:?};",
            lat.n(),
            lat.side_length(),
            lat.dealias_fraction(),
            self.nu,
            self.tau,
            self.gamma,
            self.diss_exponent,
            self.dt,
            self.t_end,
            self.mode,
            self.scheme,
            self.advection_scale,
            self.damping_cutoff,
            self.blowup_guard,
        ));
        h.update(format!(
            "modes={:?};g={:?};c={:?};alpha={:?};",
            self.noise.modes(),
            self.noise.g(),
            self.noise.c(),
            self.noise.alpha()
        ));
        if let Some(d) = &self.drift {
            h.update(format!("drift_amplitude={:?};", d.amplitude));
            for c in d.velocity.u1.coeffs().iter().chain(d.velocity.u2.coeffs()) {
                h.update(c.re.to_le_bytes());
                h.update(c.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of steps needed to go from `t0` to `t_end`.
    pub fn steps_from(&self, t0: f64) -> u64 {
        ((self.t_end - t0) / self.dt).round().max(0.0) as u64
    }
}

/// Free-standing form of [`SolverConfig::linear_multiplier`].
pub fn linear_multiplier(config: &SolverConfig, k: Wavenumber) -> f64 {
    config.linear_multiplier(k)
}

/// Maps the `(ν, c√ν)` problem to unit diffusion with advection scaled by
/// `1/ν` and noise amplitude `c`; time and step are multiplied by `ν`.
pub fn rescale_time_equivalence(config: &SolverConfig) -> Result<SolverConfig> {
    if config.mode != Mode::FullNonlinear {
        return Err(Error::invalid("time rescaling applies to full_nonlinear mode"));
    }
    if config.tau != 0.0 {
        return Err(Error::invalid("time rescaling requires tau = 0"));
    }
    if (config.noise.alpha() - 0.5).abs() > 1e-15 {
        return Err(Error::invalid("time rescaling requires alpha = 1/2"));
    }
    if !(config.nu > 0.0) {
        return Err(Error::invalid("time rescaling requires nu > 0"));
    }
    let nu = config.nu;
    let mut out = config.clone();
    out.nu = 1.0;
    out.noise = config.noise.with_alpha(0.0);
    out.advection_scale = config.advection_scale / nu;
    out.dt = config.dt * nu;
    out.t_end = config.t_end * nu;
    Ok(out)
}

/// Current time, vorticity, and noise-stream position of one trajectory.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub omega: SpectralField,
    pub stream: NoiseStream,
}

impl State {
    pub fn new(omega: SpectralField, seed: u64, trajectory: u64) -> Self {
        Self {
            t: 0.0,
            omega,
            stream: NoiseStream::new(seed, trajectory),
        }
    }

    pub fn zero(lattice: Lattice, seed: u64, trajectory: u64) -> Self {
        Self::new(SpectralField::zeros(lattice), seed, trajectory)
    }
}

struct ForcedSlot {
    index: usize,
    conj: usize,
    std: f64,
}

/// Precomputed propagator for one configuration; owns its transform buffers.
pub struct Stepper {
    config: SolverConfig,
    ev: Evaluator,
    decay: Vec<f64>,
    forced: Vec<ForcedSlot>,
    normals: Vec<f64>,
    xi: Vec<Complex64>,
    k1: SpectralField,
    k2: SpectralField,
    stage: SpectralField,
    acc: SpectralField,
}

impl Stepper {
    pub fn new(config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let lat = config.lattice;
        let mut ws = Workspace::new(lat);
        let mut decay = vec![0.0; lat.n() * lat.n()];
        for (i, d) in decay.iter_mut().enumerate() {
            let k = lat.wavenumber(i);
            if k != [0, 0] && lat.is_active(k) {
                *d = (-config.linear_multiplier(k) * config.dt).exp();
            }
        }
        let amp = config.noise.amplitude(config.nu)?;
        let forced = config
            .noise
            .modes()
            .iter()
            .zip(config.noise.g())
            .map(|(&k, &g)| {
                let mu = config.linear_multiplier(k);
                let var = if mu * config.dt > 1e-12 {
                    -(-2.0 * mu * config.dt).exp_m1() / (2.0 * mu)
                } else {
                    config.dt
                };
                let index = lat.index(k).expect("forced modes are active");
                ForcedSlot {
                    index,
                    conj: lat.conjugate_index(index),
                    std: amp * g * var.sqrt(),
                }
            })
            .collect::<Vec<_>>();
        let (drift, scale) = match (&config.mode, &config.drift) {
            (Mode::PrescribedDrift, Some(d)) => (
                Some(ws.sample_drift(&d.velocity)),
                d.amplitude * config.advection_scale,
            ),
            _ => (None, config.advection_scale),
        };
        let zero = SpectralField::zeros(lat);
        Ok(Self {
            config: config.clone(),
            ev: Evaluator {
                ws,
                mode: config.mode,
                scale,
                drift,
                max_seen: 0.0,
            },
            decay,
            normals: vec![0.0; 2 * forced.len()],
            xi: vec![Complex64::new(0.0, 0.0); forced.len()],
            forced,
            k1: zero.clone(),
            k2: zero.clone(),
            stage: zero.clone(),
            acc: zero,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Largest `|N̂_k|` seen during the most recent step.
    pub fn last_nonlinear_max(&self) -> f64 {
        self.ev.max_seen
    }

    /// `A · max|a|` over the base grid; zero outside drift mode.
    pub fn drift_speed(&self) -> f64 {
        match (&self.ev.drift, &self.config.drift) {
            (Some(p), Some(d)) => d.amplitude * p.max_speed(),
            _ => 0.0,
        }
    }

    /// Draws this step's exact OU noise into `self.xi`, one entry per forced pair.
    fn draw_noise(&mut self, stream: &mut NoiseStream) {
        if self.forced.is_empty() {
            return;
        }
        stream.next_normals(&mut self.normals);
        for (m, slot) in self.forced.iter().enumerate() {
            let z = Complex64::new(self.normals[2 * m], -self.normals[2 * m + 1]);
            self.xi[m] = 0.5 * slot.std * z;
        }
    }

    /// Advances `state` by one step in place.
    pub fn step(&mut self, state: &mut State) -> Result<()> {
        self.ev.max_seen = 0.0;
        let dt = self.config.dt;
        if self.config.mode == Mode::DeterministicEuler {
            self.rk4(state);
        } else {
            self.draw_noise(&mut state.stream);
            self.ev.eval(&state.omega, &mut self.k1);
            match self.config.scheme {
                Scheme::ExponentialEuler => {
                    let n1 = self.k1.coeffs();
                    for (i, c) in state.omega.coeffs_mut().iter_mut().enumerate() {
                        *c = self.decay[i] * (*c + dt * n1[i]);
                    }
                }
                Scheme::ExponentialHeun => {
                    {
                        let p = self.stage.coeffs_mut();
                        let w = state.omega.coeffs();
                        let n1 = self.k1.coeffs();
                        for i in 0..p.len() {
                            p[i] = self.decay[i] * (w[i] + dt * n1[i]);
                        }
                    }
                    add_noise(&self.forced, &self.xi, &mut self.stage);
                    self.ev.eval(&self.stage, &mut self.k2);
                    let n1 = self.k1.coeffs();
                    let n2 = self.k2.coeffs();
                    for (i, c) in state.omega.coeffs_mut().iter_mut().enumerate() {
                        *c = self.decay[i] * (*c + 0.5 * dt * n1[i]) + 0.5 * dt * n2[i];
                    }
                }
            }
            add_noise(&self.forced, &self.xi, &mut state.omega);
        }
        state.t += dt;
        self.check(state)
    }

    fn rk4(&mut self, state: &mut State) {
        let dt = self.config.dt;
        let w0 = &mut state.omega;
        self.acc.clone_from(w0);
        let weights = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0];
        let offsets = [0.5 * dt, 0.5 * dt, dt];
        self.ev.eval(w0, &mut self.k1);
        for s in 0..4 {
            self.acc.axpy(weights[s], &self.k1);
            if s == 3 {
                break;
            }
            self.stage.clone_from(w0);
            self.stage.axpy(offsets[s], &self.k1);
            self.ev.eval(&self.stage, &mut self.k1);
        }
        std::mem::swap(w0, &mut self.acc);
    }

    fn check(&self, state: &State) -> Result<()> {
        let norm = state.omega.l2_sq().sqrt();
        if !norm.is_finite() || norm > self.config.blowup_guard {
            return Err(Error::BlowUp {
                t: state.t,
                norm,
                guard: self.config.blowup_guard,
            });
        }
        debug_assert!(
            self.forced.iter().all(|f| {
                let c = state.omega.coeffs();
                c[f.index] == c[f.conj].conj()
            }) && state.omega.coeffs()[0] == Complex64::new(0.0, 0.0),
            "step broke the field invariants"
        );
        Ok(())
    }

    /// Runs to `config.t_end`, calling every observer after each `stride` steps.
    pub fn run(
        &mut self,
        state: &mut State,
        observers: &mut [&mut dyn Observer],
        stride: usize,
    ) -> Result<()> {
        let steps = self.config.steps_from(state.t);
        self.advance(state, steps, observers, stride)
    }

    /// Takes exactly `steps` steps with observer calls every `stride` steps.
    pub fn advance(
        &mut self,
        state: &mut State,
        steps: u64,
        observers: &mut [&mut dyn Observer],
        stride: usize,
    ) -> Result<()> {
        let stride = stride.max(1) as u64;
        for s in 1..=steps {
            self.step(state)?;
            if s % stride == 0 {
                for obs in observers.iter_mut() {
                    obs.observe_state(state)?;
                }
            }
        }
        Ok(())
    }
}

fn add_noise(forced: &[ForcedSlot], xi: &[Complex64], target: &mut SpectralField) {
    let coeffs = target.coeffs_mut();
    for (slot, x) in forced.iter().zip(xi) {
        coeffs[slot.index] += x;
        coeffs[slot.conj] += x.conj();
    }
}

/// Evaluates the explicit part `N` of the right-hand side.
struct Evaluator {
    ws: Workspace,
    mode: Mode,
    scale: f64,
    drift: Option<PhysicalDrift>,
    max_seen: f64,
}

impl Evaluator {
    fn eval(&mut self, omega: &SpectralField, out: &mut SpectralField) {
        match self.mode {
            Mode::StokesLinear => {
                out.scale(0.0);
                return;
            }
            Mode::FullNonlinear | Mode::DeterministicEuler => {
                self.ws.nonlinear_into(omega, self.scale, out)
            }
            Mode::PrescribedDrift => {
                let drift = self.drift.as_ref().expect("validated");
                self.ws.advection_into(drift, omega, self.scale, out)
            }
        }
        let m = out.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.max_seen = self.max_seen.max(m);
    }
}

/// Receives read-only snapshots during [`integrate`].
pub trait Observer {
    fn observe(&mut self, t: f64, omega: &SpectralField) -> Result<()>;

    /// Full-state hook; defaults to [`Observer::observe`].
    fn observe_state(&mut self, state: &State) -> Result<()> {
        self.observe(state.t, &state.omega)
    }
}

impl<F> Observer for F
where
    F: FnMut(f64, &SpectralField) -> Result<()>,
{
    fn observe(&mut self, t: f64, omega: &SpectralField) -> Result<()> {
        self(t, omega)
    }
}

/// One step with a freshly built [`Stepper`]; use a `Stepper` in loops.
pub fn step(state: &State, config: &SolverConfig) -> Result<State> {
    let mut stepper = Stepper::new(config)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Integrates from `state.t` to `config.t_end`.
pub fn integrate(
    mut state: State,
    config: &SolverConfig,
    observers: &mut [&mut dyn Observer],
    stride: usize,
) -> Result<State> {
    if !(config.t_end > state.t) {
        return Err(Error::invalid(format!(
            "t_end = {} is not after the current time {}",
            config.t_end, state.t
        )));
    }
    let mut stepper = Stepper::new(config)?;
    stepper.run(&mut state, observers, stride)?;
    Ok(state)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SNSECKP1";

/// Header of an integrator checkpoint; the field payload follows in the
/// spectral binary format.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub config_hash: [u8; 32],
    pub position: StreamPosition,
    pub omega: SpectralField,
}

impl Checkpoint {
    pub fn of(state: &State, config_hash: [u8; 32]) -> Self {
        Self {
            t: state.t,
            config_hash,
            position: state.stream.position(),
            omega: state.omega.clone(),
        }
    }

    pub fn into_state(self) -> State {
        State {
            t: self.t,
            omega: self.omega,
            stream: NoiseStream::at(self.position),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&self.config_hash)?;
        w.write_all(&self.position.seed.to_le_bytes())?;
        w.write_all(&self.position.trajectory.to_le_bytes())?;
        w.write_all(&self.position.step.to_le_bytes())?;
        write_field(&self.omega, &mut w)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let t = read_f64(&mut r)?;
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let position = StreamPosition {
            seed: read_u64(&mut r)?,
            trajectory: read_u64(&mut r)?,
            step: read_u64(&mut r)?,
        };
        let omega = read_field(&mut r)?;
        Ok(Self {
            t,
            config_hash,
            position,
            omega,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Observer that overwrites a checkpoint file at each call.
pub struct CheckpointObserver {
    path: std::path::PathBuf,
    config_hash: [u8; 32],
    pub written: usize,
}

impl CheckpointObserver {
    pub fn new(path: impl Into<std::path::PathBuf>, config_hash: [u8; 32]) -> Self {
        Self {
            path: path.into(),
            config_hash,
            written: 0,
        }
    }
}

impl Observer for CheckpointObserver {
    fn observe(&mut self, _t: f64, _omega: &SpectralField) -> Result<()> {
        Err(Error::invalid("checkpoint observer needs the full state"))
    }

    fn observe_state(&mut self, state: &State) -> Result<()> {
        Checkpoint::of(state, self.config_hash).save(&self.path)?;
        self.written += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice(n: usize) -> Lattice {
        Lattice::new(n).unwrap()
    }

    fn smooth_initial(n: usize, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_field(lattice(n), 4.0, 2.0, &mut rng)
    }

    #[test]
    fn fingerprint_tracks_every_parameter() {
        let a = SolverConfig::new(lattice(16), NoiseSpec::default_forcing(0.5));
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        let mut b = a.clone();
        b.dt *= 1.0 + f64::EPSILON;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut b = a.clone();
        b.noise = b.noise.with_alpha(0.25);
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn stokes_decay_is_exact_without_noise() {
        let lat = lattice(16);
        let mut cfg = SolverConfig::new(lat, NoiseSpec::none());
        cfg.mode = Mode::StokesLinear;
        cfg.nu = 0.3;
        cfg.dt = 0.1;
        cfg.t_end = 1.0;
        let w0 = smooth_initial(16, 1);
        let out = integrate(State::new(w0.clone(), 0, 0), &cfg, &mut [], 1).unwrap();
        let mut expect = w0;
        expect.apply_multiplier(|k| (-0.3 * lat.k_sq(k) * 1.0).exp());
        assert!(out.omega.max_abs_diff(&expect) < 1e-14);
        assert!((out.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_without_noise_stays_zero() {
        let cfg = SolverConfig::new(lattice(16), NoiseSpec::none());
        let mut st = State::zero(lattice(16), 3, 0);
        let mut stepper = Stepper::new(&cfg).unwrap();
        stepper.advance(&mut st, 10, &mut [], 1).unwrap();
        assert_eq!(st.omega.l2_sq(), 0.0);
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let mut cfg = SolverConfig::new(lattice(16), NoiseSpec::default_forcing(0.5));
        cfg.t_end = 0.1;
        let a = integrate(State::new(smooth_initial(16, 2), 7, 3), &cfg, &mut [], 1).unwrap();
        let b = integrate(State::new(smooth_initial(16, 2), 7, 3), &cfg, &mut [], 1).unwrap();
        assert_eq!(a.omega, b.omega);
        let c = integrate(State::new(smooth_initial(16, 2), 7, 4), &cfg, &mut [], 1).unwrap();
        assert!(a.omega.max_abs_diff(&c.omega) > 0.0);
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let mut cfg = SolverConfig::new(lattice(16), NoiseSpec::default_forcing(0.5));
        cfg.t_end = 40.0 * cfg.dt;
        let hash = [7u8; 32];

        let mut full = State::new(smooth_initial(16, 4), 11, 0);
        let mut stepper = Stepper::new(&cfg).unwrap();
        stepper.run(&mut full, &mut [], 1).unwrap();

        let mut first = State::new(smooth_initial(16, 4), 11, 0);
        let mut ck = CheckpointObserver::new(&path, hash);
        let mut stepper = Stepper::new(&cfg).unwrap();
        stepper.advance(&mut first, 17, &mut [&mut ck], 17).unwrap();
        assert_eq!(ck.written, 1);

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config_hash, hash);
        assert_eq!(loaded.position.step, 17);
        let mut resumed = loaded.into_state();
        let mut stepper = Stepper::new(&cfg).unwrap();
        stepper.run(&mut resumed, &mut [], 1).unwrap();
        assert_eq!(resumed.omega, full.omega);
        assert_eq!(resumed.t.to_bits(), full.t.to_bits());
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let st = State::new(smooth_initial(8, 1), 0, 0);
        let mut buf = Vec::new();
        Checkpoint::of(&st, [0; 32]).write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(Checkpoint::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn blowup_guard_reports_numerical_failure() {
        let mut cfg = SolverConfig::new(lattice(16), NoiseSpec::none());
        cfg.blowup_guard = 1e-3;
        let mut st = State::new(smooth_initial(16, 5), 0, 0);
        let err = Stepper::new(&cfg).unwrap().step(&mut st).unwrap_err();
        assert!(err.is_numerical());
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SolverConfig::new(lattice(16), NoiseSpec::default_forcing(0.5));
        let mut c = base.clone();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.nu = -1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.mode = Mode::DeterministicEuler;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.mode = Mode::PrescribedDrift;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.lattice = Lattice::with_params(16, 1.0, 2.0 / 3.0).unwrap();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.lattice = lattice(8);
        c.noise = NoiseSpec::single_mode([3, 0], 1.0, 1.0, 0.0).unwrap();
        assert!(c.validate().is_err());
        assert!(base.validate().is_ok());
    }

    #[test]
    fn multiplier_combines_dissipation_and_damping() {
        let mut c = SolverConfig::new(lattice(16), NoiseSpec::none());
        c.nu = 0.1;
        c.tau = 2.0;
        c.gamma = 0.5;
        let m = c.linear_multiplier([3, 4]);
        assert!((m - (0.1 * 25.0 + 2.0 / 5f64.sqrt())).abs() < 1e-14);
        c.damping_cutoff = Some(2.0);
        assert!((c.linear_multiplier([3, 4]) - 2.5).abs() < 1e-14);
        assert!((c.linear_multiplier([1, 1]) - (0.2 + 2.0 * 2f64.powf(-0.25))).abs() < 1e-14);
        c.diss_exponent = 1.0;
        c.damping_cutoff = None;
        assert!((linear_multiplier(&c, [3, 4]) - (0.5 + 2.0 / 5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn time_rescaling_reproduces_the_trajectory() {
        let lat = lattice(16);
        let mut cfg = SolverConfig::new(lat, NoiseSpec::default_forcing(0.5));
        cfg.nu = 0.2;
        cfg.dt = 0.01;
        cfg.t_end = 0.3;
        let scaled = rescale_time_equivalence(&cfg).unwrap();
        assert_eq!(scaled.nu, 1.0);
        assert!((scaled.t_end - 0.06).abs() < 1e-15);
        let w0 = smooth_initial(16, 6);
        let a = integrate(State::new(w0.clone(), 9, 0), &cfg, &mut [], 1).unwrap();
        let b = integrate(State::new(w0, 9, 0), &scaled, &mut [], 1).unwrap();
        let rel = a.omega.max_abs_diff(&b.omega) / a.omega.l2_sq().sqrt();
        assert!(rel < 1e-12, "rel = {rel:e}");
    }

    #[test]
    fn time_rescaling_at_unit_viscosity_changes_nothing() {
        let mut cfg = SolverConfig::new(lattice(16), NoiseSpec::default_forcing(0.5));
        cfg.nu = 1.0;
        let s = rescale_time_equivalence(&cfg).unwrap();
        assert_eq!(s.dt, cfg.dt);
        assert_eq!(s.t_end, cfg.t_end);
        assert_eq!(s.advection_scale, 1.0);
        assert_eq!(s.noise.amplitude(1.0).unwrap(), cfg.noise.amplitude(1.0).unwrap());
        let mut bad = cfg.clone();
        bad.tau = 1.0;
        assert!(rescale_time_equivalence(&bad).is_err());
    }

    #[test]
    fn eigenfunction_ray_has_no_nonlinear_feedback() {
        let lat = lattice(16);
        let k = [1, 2];
        let mut cfg = SolverConfig::new(lat, NoiseSpec::single_mode(k, 1.0, 1.0, 0.5).unwrap());
        cfg.nu = 0.1;
        cfg.dt = 0.01;
        let mut st = State::new(
            SpectralField::from_modes(lat, &[(k, Complex64::new(0.7, -0.2))]).unwrap(),
            1,
            0,
        );
        let mut stepper = Stepper::new(&cfg).unwrap();
        for _ in 0..200 {
            stepper.step(&mut st).unwrap();
            assert!(stepper.last_nonlinear_max() <= 1e-12);
            let mut off = st.omega.clone();
            off.set(k, Complex64::new(0.0, 0.0)).unwrap();
            assert!(off.l2_sq().sqrt() <= 1e-12 * st.omega.l2_sq().sqrt());
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let lat = lattice(16);
        let mut cfg = SolverConfig::new(lat, NoiseSpec::none());
        cfg.mode = Mode::DeterministicEuler;
        cfg.nu = 0.0;
        cfg.t_end = 0.4;
        let w0 = smooth_initial(16, 8);
        let run = |dt: f64| {
            let mut c = cfg.clone();
            c.dt = dt;
            integrate(State::new(w0.clone(), 0, 0), &c, &mut [], 1).unwrap().omega
        };
        let r = run(0.005);
        let e1 = run(0.04).max_abs_diff(&r);
        let e2 = run(0.02).max_abs_diff(&r);
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed order {order}");
    }
}
