//! Finite-mode additive white noise for the vorticity equation.
//!
//! Each forced pair `±k` carries two independent real Wiener processes, one
//! driving `cos(k·x)` and one driving `sin(k·x)`, both with amplitude
//! `c ν^α g_k`. In the coefficient table this is
//! `dω̂_k = c ν^α g_k (dW^cos − i dW^sin) / 2`, which makes the expected
//! squared L² norm of the forcing per unit time exactly `c² ν^{2α} Σ g_k²`
//! and reproduces the enstrophy balance `E‖∇ω‖² = (c²/2) Σ g_k²` with no
//! extra factor.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{is_pair_representative, Lattice, SpectralField, Wavenumber};

/// Forced modes, their velocity amplitudes `b_k`, and the `c ν^α` scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    modes: Vec<Wavenumber>,
    b: Vec<f64>,
    g: Vec<f64>,
    c: f64,
    alpha: f64,
}

impl NoiseSpec {
    /// Modes are normalized to their pair representative; `k = 0` and
    /// repeated pairs are rejected. `c = 0` switches the noise off.
    pub fn new(modes: Vec<Wavenumber>, b: Vec<f64>, c: f64, alpha: f64) -> Result<Self> {
        if modes.len() != b.len() {
            return Err(Error::invalid(format!(
                "{} forced modes but {} amplitudes",
                modes.len(),
                b.len()
            )));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!("noise amplitude c must be >= 0, got {c}")));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid("scaling exponent alpha must be finite"));
        }
        let mut canon = Vec::with_capacity(modes.len());
        for (&k, &bk) in modes.iter().zip(&b) {
            if k == [0, 0] {
                return Err(Error::invalid("the k = 0 mode cannot be forced"));
            }
            if !bk.is_finite() {
                return Err(Error::invalid(format!("amplitude for mode {k:?} is not finite")));
            }
            let rep = if is_pair_representative(k) { k } else { [-k[0], -k[1]] };
            if canon.contains(&rep) {
                return Err(Error::invalid(format!("mode {k:?} is forced twice")));
            }
            canon.push(rep);
        }
        let g = canon
            .iter()
            .zip(&b)
            .map(|(k, bk)| integer_norm(*k) * bk)
            .collect();
        Ok(Self {
            modes: canon,
            b,
            g,
            c,
            alpha,
        })
    }

    /// All shells `1 ≤ |k|² ≤ 4` with `b_k = 1/|k|` (so `g_k = 1`), `c = 1`.
    pub fn default_forcing(alpha: f64) -> Self {
        let mut modes = Vec::new();
        for k1 in 0..=2 {
            for k2 in -2..=2 {
                let k = [k1, k2];
                let r2 = k1 * k1 + k2 * k2;
                if is_pair_representative(k) && (1..=4).contains(&r2) {
                    modes.push(k);
                }
            }
        }
        let b = modes.iter().map(|&k| 1.0 / integer_norm(k)).collect();
        Self::new(modes, b, 1.0, alpha).expect("default forcing is valid")
    }

    /// One forced pair with vorticity amplitude `g`.
    pub fn single_mode(k: Wavenumber, g: f64, c: f64, alpha: f64) -> Result<Self> {
        if k == [0, 0] {
            return Err(Error::invalid("the k = 0 mode cannot be forced"));
        }
        Self::new(vec![k], vec![g / integer_norm(k)], c, alpha)
    }

    /// No forcing at all.
    pub fn none() -> Self {
        Self::new(Vec::new(), Vec::new(), 0.0, 0.0).expect("empty spec is valid")
    }

    pub fn modes(&self) -> &[Wavenumber] {
        &self.modes
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Vorticity amplitudes `g_k = |k| b_k`.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::new(self.modes.clone(), self.b.clone(), c, self.alpha)
    }

    pub fn is_silent(&self) -> bool {
        self.c == 0.0 || self.g.iter().all(|&g| g == 0.0)
    }

    pub fn position_of(&self, k: Wavenumber) -> Option<usize> {
        let rep = if is_pair_representative(k) { k } else { [-k[0], -k[1]] };
        self.modes.iter().position(|&m| m == rep)
    }

    /// `c ν^α`; zero when `ν = 0` and `α > 0`, an error when `ν = 0` and `α < 0`.
    pub fn amplitude(&self, nu: f64) -> Result<f64> {
        if nu < 0.0 || !nu.is_finite() {
            return Err(Error::invalid(format!("viscosity must be >= 0, got {nu}")));
        }
        if self.alpha == 0.0 {
            return Ok(self.c);
        }
        if nu == 0.0 {
            if self.alpha > 0.0 {
                return Ok(0.0);
            }
            return Err(Error::invalid(
                "nu = 0 with a negative scaling exponent gives infinite forcing",
            ));
        }
        Ok(self.c * nu.powf(self.alpha))
    }

    /// `Σ g_k²`.
    pub fn sum_g_sq(&self) -> f64 {
        self.g.iter().map(|g| g * g).sum()
    }

    /// `Σ b_k² = Σ (g_k/|k|)²`.
    pub fn sum_b_sq(&self) -> f64 {
        self.b.iter().map(|b| b * b).sum()
    }

    /// `Σ_m ‖σ_m‖_∞` over the real noise channels (`g_k cos`, `g_k sin`).
    pub fn sum_sup_norms(&self) -> f64 {
        2.0 * self.g.iter().map(|g| g.abs()).sum::<f64>()
    }

    /// Checks that every forced mode survives dealiasing on `lattice`.
    pub fn check_lattice(&self, lattice: &Lattice) -> Result<()> {
        for &k in &self.modes {
            if !lattice.is_dealiased(k) {
                return Err(Error::invalid(format!(
                    "forced mode {k:?} lies outside the dealiased band of an n = {} grid",
                    lattice.n()
                )));
            }
        }
        Ok(())
    }

    /// The forcing profile `Σ_k g_k (w_cos cos(k·x) + w_sin sin(k·x))` for
    /// per-mode channel weights.
    pub fn profile(&self, lattice: Lattice, cos_w: &[f64], sin_w: &[f64]) -> Result<SpectralField> {
        let mut field = SpectralField::zeros(lattice);
        for (i, &k) in self.modes.iter().enumerate() {
            let v = 0.5 * self.g[i] * Complex64::new(cos_w[i], -sin_w[i]);
            field.set(k, v)?;
        }
        Ok(field)
    }
}

fn integer_norm(k: Wavenumber) -> f64 {
    ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt()
}

/// Wiener increments for one step: one `N(0, dt)` draw per channel per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl NoiseIncrement {
    pub fn zero(modes: usize, dt: f64) -> Self {
        Self {
            dt,
            cos: vec![0.0; modes],
            sin: vec![0.0; modes],
        }
    }
}

/// Position of a counter-based Gaussian stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub seed: u64,
    pub trajectory: u64,
    pub step: u64,
}

/// Counter-based normal generator keyed by `(seed, trajectory, step, slot)`.
///
/// The ChaCha8 keystream for `(seed, trajectory)` is partitioned into
/// fixed-width blocks, one per step, so the draws of step `s` never depend
/// on how many draws earlier steps consumed.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    pos: StreamPosition,
    rng: ChaCha8Rng,
}

/// Keystream words reserved per step (`2³²` u32 words).
const STEP_WORDS: u128 = 1 << 32;

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self::at(StreamPosition {
            seed,
            trajectory,
            step: 0,
        })
    }

    pub fn at(pos: StreamPosition) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(pos.seed);
        rng.set_stream(pos.trajectory);
        Self { pos, rng }
    }

    pub fn position(&self) -> StreamPosition {
        self.pos
    }

    /// Fills `out` with standard normals for the current step and advances.
    /// Slots `2m` and `2m + 1` are the cosine and sine draws of mode `m`.
    pub fn next_normals(&mut self, out: &mut [f64]) {
        self.rng.set_word_pos(self.pos.step as u128 * STEP_WORDS);
        for pair in out.chunks_mut(2) {
            let (a, b) = standard_normal_pair(&mut self.rng);
            pair[0] = a;
            if pair.len() > 1 {
                pair[1] = b;
            }
        }
        self.pos.step += 1;
    }
}

/// Two independent standard normals by the Box–Muller transform; consumes
/// exactly two `u64` draws so the stream layout is fixed.
pub fn standard_normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let to_unit = |x: u64| ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u1 = to_unit(rng.next_u64());
    let u2 = to_unit(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    (r * c, r * s)
}

/// Draws the Wiener increments of one step from `stream`.
pub fn sample_increment(spec: &NoiseSpec, stream: &mut NoiseStream, dt: f64) -> Result<NoiseIncrement> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be > 0, got {dt}")));
    }
    let m = spec.modes().len();
    let mut z = vec![0.0; 2 * m];
    stream.next_normals(&mut z);
    let s = dt.sqrt();
    Ok(NoiseIncrement {
        dt,
        cos: z.iter().step_by(2).map(|v| v * s).collect(),
        sin: z.iter().skip(1).step_by(2).map(|v| v * s).collect(),
    })
}

/// `c ν^α Σ_k g_k (ΔW_k^cos cos(k·x) + ΔW_k^sin sin(k·x))` as a spectral field.
pub fn forcing_field(
    spec: &NoiseSpec,
    inc: &NoiseIncrement,
    nu: f64,
    lattice: Lattice,
) -> Result<SpectralField> {
    let amp = spec.amplitude(nu)?;
    let mut field = spec.profile(lattice, &inc.cos, &inc.sin)?;
    field.scale(amp);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_forcing_has_six_pairs_with_unit_g() {
        let s = NoiseSpec::default_forcing(0.5);
        assert_eq!(s.modes().len(), 6);
        assert!(s.g().iter().all(|&g| (g - 1.0).abs() < 1e-15));
        assert!((s.sum_g_sq() - 6.0).abs() < 1e-14);
        assert!((s.sum_b_sq() - 3.5).abs() < 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::new(vec![[0, 0]], vec![1.0], 1.0, 0.5).is_err());
        assert!(NoiseSpec::new(vec![[1, 0], [-1, 0]], vec![1.0, 1.0], 1.0, 0.5).is_err());
        assert!(NoiseSpec::new(vec![[1, 0]], vec![1.0, 2.0], 1.0, 0.5).is_err());
        assert!(NoiseSpec::new(vec![[1, 0]], vec![1.0], -1.0, 0.5).is_err());
        let s = NoiseSpec::new(vec![[-1, -2]], vec![1.0], 1.0, 0.5).unwrap();
        assert_eq!(s.modes(), &[[1, 2]]);
        assert!((s.g()[0] - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn amplitude_cases() {
        let s = NoiseSpec::default_forcing(0.5);
        assert!((s.amplitude(0.04).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(s.amplitude(0.0).unwrap(), 0.0);
        assert_eq!(s.with_alpha(0.0).amplitude(0.0).unwrap(), 1.0);
        assert!(s.with_alpha(-0.25).amplitude(0.0).is_err());
    }

    #[test]
    fn increments_are_reproducible() {
        let s = NoiseSpec::default_forcing(0.5);
        let mut a = NoiseStream::new(42, 3);
        let mut b = NoiseStream::new(42, 3);
        for _ in 0..5 {
            assert_eq!(
                sample_increment(&s, &mut a, 1e-3).unwrap(),
                sample_increment(&s, &mut b, 1e-3).unwrap()
            );
        }
        // Jumping straight to step 4 gives the same draw as walking there.
        let mut c = NoiseStream::at(StreamPosition { seed: 42, trajectory: 3, step: 4 });
        let mut walk = NoiseStream::new(42, 3);
        for _ in 0..4 {
            sample_increment(&s, &mut walk, 1e-3).unwrap();
        }
        assert_eq!(
            sample_increment(&s, &mut c, 1e-3).unwrap(),
            sample_increment(&s, &mut walk, 1e-3).unwrap()
        );
        let mut other = NoiseStream::new(42, 4);
        assert_ne!(
            sample_increment(&s, &mut other, 1e-3).unwrap(),
            sample_increment(&s, &mut NoiseStream::new(42, 3), 1e-3).unwrap()
        );
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let s = NoiseSpec::default_forcing(0.5);
        let mut st = NoiseStream::new(0, 0);
        assert!(sample_increment(&s, &mut st, 0.0).is_err());
        assert!(sample_increment(&s, &mut st, -1.0).is_err());
    }

    #[test]
    fn increment_moments() {
        let s = NoiseSpec::default_forcing(0.5);
        let mut st = NoiseStream::new(2024, 0);
        let dt = 1e-3;
        let n = 1_000_000;
        let m = s.modes().len();
        let mut sq = vec![0.0; 2 * m];
        let mut cross = 0.0;
        for _ in 0..n {
            let inc = sample_increment(&s, &mut st, dt).unwrap();
            for i in 0..m {
                sq[2 * i] += inc.cos[i] * inc.cos[i];
                sq[2 * i + 1] += inc.sin[i] * inc.sin[i];
            }
            cross += inc.cos[0] * inc.cos[1];
        }
        for v in sq {
            assert!((v / n as f64 / dt - 1.0).abs() < 0.01);
        }
        assert!((cross / n as f64 / dt).abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn zero_increment_gives_zero_field() {
        let s = NoiseSpec::default_forcing(0.5);
        let lat = Lattice::new(16).unwrap();
        let f = forcing_field(&s, &NoiseIncrement::zero(6, 1e-3), 0.1, lat).unwrap();
        assert_eq!(f.l2_sq(), 0.0);
    }

    #[test]
    fn single_mode_forcing_norm() {
        // ‖F‖² = c²ν g² (ΔWc² + ΔWs²)/2 for one pair; E = c²ν g² dt.
        let s = NoiseSpec::single_mode([1, 0], 1.0, 1.0, 0.5).unwrap();
        let lat = Lattice::new(8).unwrap();
        let inc = NoiseIncrement { dt: 1e-3, cos: vec![0.3], sin: vec![-0.2] };
        let f = forcing_field(&s, &inc, 0.04, lat).unwrap();
        assert!((f.l2_sq() - 0.04 * (0.09 + 0.04) / 2.0).abs() < 1e-16);
        assert_eq!(f.invariant_defect(), 0.0);

        let mut st = NoiseStream::new(5, 0);
        let dt = 1e-3;
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let inc = sample_increment(&s, &mut st, dt).unwrap();
            acc += forcing_field(&s, &inc, 0.04, lat).unwrap().l2_sq();
        }
        let mean = acc / n as f64;
        assert!((mean / (0.04 * dt) - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn scaling_homotopy() {
        let s = NoiseSpec::default_forcing(0.5).with_c(1.3).unwrap();
        let lat = Lattice::new(16).unwrap();
        let mut st = NoiseStream::new(1, 0);
        let inc = sample_increment(&s, &mut st, 0.01).unwrap();
        let nu = 0.07;
        let a = forcing_field(&s, &inc, nu, lat).unwrap();
        let folded = s.with_c(1.3 * nu.powf(0.5)).unwrap().with_alpha(0.0);
        let b = forcing_field(&folded, &inc, nu, lat).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }
}
