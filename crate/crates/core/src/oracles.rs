//! Closed-form ground truth: the Ornstein–Uhlenbeck law of an eigenfunction
//! forced along itself, the per-mode Stokes spectrum, and a brute-force
//! convolution form of the nonlinearity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Mode, SolverConfig};
use crate::noise::NoiseSpec;
use crate::spectral::{
    is_pair_representative, nonlinear_term, Lattice, SpectralField, Wavenumber,
};

/// `ω_E = cos(k·x)`: a Laplacian eigenfunction on which `u·∇ω` vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct OuOracle {
    k: Wavenumber,
    omega_e: SpectralField,
    lambda: f64,
    nu: f64,
}

impl OuOracle {
    pub fn new(lattice: Lattice, k: Wavenumber, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("OU oracle needs nu > 0, got {nu}")));
        }
        if !lattice.is_dealiased(k) {
            return Err(Error::invalid(format!("mode {k:?} is outside the dealiased band")));
        }
        let omega_e = SpectralField::from_modes(lattice, &[(k, Complex64::new(0.5, 0.0))])?;
        let residual = nonlinear_term(&omega_e).coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        debug_assert!(residual <= 1e-13);
        Ok(Self {
            k,
            lambda: lattice.k_sq(k),
            omega_e,
            nu,
        })
    }

    /// `cos(m x₁)`.
    pub fn shear(lattice: Lattice, m: i32, nu: f64) -> Result<Self> {
        Self::new(lattice, [m, 0], nu)
    }

    pub fn wavenumber(&self) -> Wavenumber {
        self.k
    }

    pub fn omega_e(&self) -> &SpectralField {
        &self.omega_e
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `⟨ω, ω_E⟩ / ‖ω_E‖²`.
    pub fn projection(&self, omega: &SpectralField) -> f64 {
        omega.inner(&self.omega_e) / self.omega_e.l2_sq()
    }

    /// Forcing `√ν ω_E dW` (the companion sine channel is an independent
    /// shear on the same ray and does not affect the projection).
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec::single_mode(self.k, 1.0, 1.0, 0.5).expect("valid single mode")
    }

    /// Full nonlinear solver config for the oracle experiment.
    pub fn solver_config(&self, dt: f64, t_end: f64) -> SolverConfig {
        let mut cfg = SolverConfig::new(*self.omega_e.lattice(), self.noise());
        cfg.nu = self.nu;
        cfg.dt = dt;
        cfg.t_end = t_end;
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

/// Stationary law of the eigen-coefficient: `N(0, 1/(2λ))` for every `ν > 0`.
pub fn ou_stationary_law(oracle: &OuOracle) -> GaussianLaw {
    GaussianLaw {
        mean: 0.0,
        variance: 1.0 / (2.0 * oracle.lambda),
    }
}

/// Exact stationary second moments of one forced mode under the linear dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesVariance {
    /// Variance of each real channel (`cos` and `sin` amplitude): `c²ν^{2α}g²/(2μ)`.
    pub channel: f64,
    /// `E|ω̂_k|² + E|ω̂_{−k}|²`, equal to `channel` under the real-pair convention.
    pub vorticity_pair: f64,
    /// `E|û_k|² + E|û_{−k}|² = vorticity_pair / |k|²`.
    pub velocity_pair: f64,
}

pub fn stokes_mode_variance(config: &SolverConfig, k: Wavenumber) -> Result<StokesVariance> {
    if config.mode != Mode::StokesLinear {
        return Err(Error::invalid("Stokes spectrum applies to stokes_linear mode"));
    }
    let key = if is_pair_representative(k) { k } else { [-k[0], -k[1]] };
    let channel = config.ou_channel_variance(key)?;
    Ok(StokesVariance {
        channel,
        vorticity_pair: channel,
        velocity_pair: channel / config.lattice.k_sq(key),
    })
}

/// `−u·∇ω` by the exact double sum over wavenumber pairs; `n ≤ 16` only.
pub fn convolution_nonlinearity(omega: &SpectralField) -> Result<SpectralField> {
    let lat = *omega.lattice();
    if lat.n() > 16 {
        return Err(Error::invalid(format!(
            "convolution oracle is O(n⁴); n = {} exceeds 16",
            lat.n()
        )));
    }
    let support: Vec<(Wavenumber, [f64; 2], Complex64)> = lat
        .active_wavenumbers()
        .filter(|&k| k != [0, 0])
        .map(|k| (k, lat.wavevector(k), omega.get(k)))
        .filter(|(_, _, c)| c.norm() > 0.0)
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); lat.n() * lat.n()];
    for &(p, pv, wp) in &support {
        let p2 = pv[0] * pv[0] + pv[1] * pv[1];
        for &(q, qv, wq) in &support {
            let k = [p[0] + q[0], p[1] + q[1]];
            if k == [0, 0] || !lat.is_active(k) {
                continue;
            }
            // û(p)·(i q) ω̂(q) = (q₂p₁ − q₁p₂)/|p|² ω̂(p)ω̂(q), negated.
            let w = (pv[1] * qv[0] - pv[0] * qv[1]) / p2;
            let idx = lat.index(k).expect("active");
            out[idx] += w * wp * wq;
        }
    }
    SpectralField::from_coeffs(lat, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat(n: usize) -> Lattice {
        Lattice::new(n).unwrap()
    }

    #[test]
    fn ou_law_examples() {
        let o1 = OuOracle::shear(lat(16), 1, 0.3).unwrap();
        assert_eq!(ou_stationary_law(&o1), GaussianLaw { mean: 0.0, variance: 0.5 });
        let o2 = OuOracle::shear(lat(16), 2, 0.01).unwrap();
        assert_eq!(ou_stationary_law(&o2).variance, 0.125);
        assert!(OuOracle::shear(lat(16), 1, 0.0).is_err());
    }

    #[test]
    fn eigenfunction_has_vanishing_self_advection() {
        for k in [[1, 0], [2, 0], [0, 3], [2, 1]] {
            let o = OuOracle::new(lat(16), k, 1.0).unwrap();
            let mut lap = o.omega_e().laplacian();
            lap.axpy(o.lambda(), o.omega_e());
            assert_eq!(lap.l2_sq(), 0.0);
            let n = nonlinear_term(o.omega_e());
            assert!(n.coeffs().iter().all(|c| c.norm() <= 1e-13));
            assert!((o.projection(o.omega_e()) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stokes_variance_examples() {
        let noise = NoiseSpec::single_mode([1, 0], 1.0, 1.0, 0.5).unwrap();
        let mut cfg = SolverConfig::new(lat(16), noise.clone());
        cfg.mode = Mode::StokesLinear;
        for nu in [1.0, 0.1, 0.01] {
            cfg.nu = nu;
            let v = stokes_mode_variance(&cfg, [1, 0]).unwrap();
            assert!((v.vorticity_pair - 0.5).abs() < 1e-15);
            assert!((v.velocity_pair - 0.5).abs() < 1e-15);
            assert_eq!(stokes_mode_variance(&cfg, [-1, 0]).unwrap(), v);
        }
        cfg.noise = noise.with_alpha(1.0);
        cfg.nu = 0.01;
        assert!((stokes_mode_variance(&cfg, [1, 0]).unwrap().vorticity_pair - 0.005).abs() < 1e-15);
        cfg.noise = noise.with_alpha(0.5);
        cfg.tau = 1.0;
        cfg.gamma = 0.5;
        let v = stokes_mode_variance(&cfg, [1, 0]).unwrap().channel;
        assert!((v - 0.01 / (2.0 * (0.01 + 1.0))).abs() < 1e-15);
        assert!(stokes_mode_variance(&cfg, [2, 0]).is_err());
        cfg.mode = Mode::FullNonlinear;
        assert!(stokes_mode_variance(&cfg, [1, 0]).is_err());
    }

    #[test]
    fn convolution_matches_fast_nonlinearity() {
        for seed in 0..5 {
            for n in [8, 16] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = random_field(lat(n), n as f64, 0.0, &mut rng);
                let slow = convolution_nonlinearity(&w).unwrap().dealiased();
                let fast = nonlinear_term(&w);
                assert!(slow.max_abs_diff(&fast) <= 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn convolution_oracle_trivial_cases() {
        let shear =
            SpectralField::from_modes(lat(8), &[([0, 1], Complex64::new(0.3, 0.1)), ([0, 2], Complex64::new(-0.2, 0.4))])
                .unwrap();
        assert_eq!(convolution_nonlinearity(&shear).unwrap().l2_sq(), 0.0);
        let o = OuOracle::new(lat(8), [1, 1], 1.0).unwrap();
        assert!(convolution_nonlinearity(o.omega_e()).unwrap().l2_sq() < 1e-28);
        assert!(convolution_nonlinearity(&SpectralField::zeros(lat(32))).is_err());
    }
}
