//! Fourier representation of real, zero-mean fields on the square torus.
//!
//! A field is stored as its full `n × n` table of complex coefficients in FFT
//! order: row `i₁` holds wavenumber `k₁ = i₁` for `i₁ < n/2` and `i₁ − n`
//! otherwise, likewise for columns and `k₂`. Only the active band
//! `|kᵢ| ≤ n/2 − 1` is ever nonzero; the Nyquist row/column and `k = 0` are
//! kept at zero and the table is Hermitian (`ĉ_{−k} = conj ĉ_k`).
//!
//! Norms use the normalized-integral convention
//! `‖ω‖² = |T²|⁻¹ ∫ ω² dx = Σ_k |ω̂_k|²`.

mod fft;
pub mod io;
mod ops;

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::Fft2;
pub(crate) use fft::with_fft;
pub use ops::{
    biot_savart, from_physical, linf_norm, nonlinear_term, to_physical, Grid, PhysicalDrift, Workspace,
    LINF_OVERSAMPLE,
};

/// Integer wavenumber `(k₁, k₂)`.
pub type Wavenumber = [i32; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    n: usize,
    side_length: f64,
    dealias_fraction: f64,
}

impl Lattice {
    pub const DEFAULT_DEALIAS: f64 = 2.0 / 3.0;

    /// `n × n` grid on the `[0, 2π)²` torus with 2/3-rule dealiasing.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_params(n, 2.0 * PI, Self::DEFAULT_DEALIAS)
    }

    pub fn with_params(n: usize, side_length: f64, dealias_fraction: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::invalid(format!(
                "grid size must be even and >= 8, got {n}"
            )));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::invalid(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        Ok(Self {
            n,
            side_length,
            dealias_fraction,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Largest active |kᵢ|; the Nyquist index `n/2` is never used.
    pub fn kmax(&self) -> i32 {
        (self.n / 2 - 1) as i32
    }

    /// Largest |kᵢ| kept by the dealiasing cutoff.
    pub fn dealias_cutoff(&self) -> i32 {
        let cut = (self.dealias_fraction * (self.n / 2) as f64 + 1e-12).floor() as i32;
        cut.min(self.kmax())
    }

    /// Scale from integer wavenumbers to physical wavevectors, `2π / L`.
    pub fn wave_scale(&self) -> f64 {
        2.0 * PI / self.side_length
    }

    pub fn wavevector(&self, k: Wavenumber) -> [f64; 2] {
        let s = self.wave_scale();
        [s * k[0] as f64, s * k[1] as f64]
    }

    /// Physical |k|² for wavenumber `k`.
    pub fn k_sq(&self, k: Wavenumber) -> f64 {
        let [a, b] = self.wavevector(k);
        a * a + b * b
    }

    pub fn is_active(&self, k: Wavenumber) -> bool {
        let m = self.kmax();
        k[0].abs() <= m && k[1].abs() <= m
    }

    pub fn is_dealiased(&self, k: Wavenumber) -> bool {
        let c = self.dealias_cutoff();
        k[0].abs() <= c && k[1].abs() <= c
    }

    /// Storage index of `k`, or `None` outside the active band.
    pub fn index(&self, k: Wavenumber) -> Option<usize> {
        if !self.is_active(k) {
            return None;
        }
        let n = self.n as i32;
        let i1 = k[0].rem_euclid(n) as usize;
        let i2 = k[1].rem_euclid(n) as usize;
        Some(i1 * self.n + i2)
    }

    /// Wavenumber stored at flat index `idx` (may be a Nyquist entry).
    pub fn wavenumber(&self, idx: usize) -> Wavenumber {
        let n = self.n;
        let fold = |i: usize| if i < n / 2 { i as i32 } else { i as i32 - n as i32 };
        [fold(idx / n), fold(idx % n)]
    }

    /// Flat index of `−k` given the flat index of `k`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// All active wavenumbers `k ≠ 0` in storage order.
    pub fn active_wavenumbers(&self) -> impl Iterator<Item = Wavenumber> + '_ {
        (0..self.n * self.n)
            .map(|i| self.wavenumber(i))
            .filter(|&k| k != [0, 0] && self.is_active(k))
    }

    /// Collocation spacing of the base grid.
    pub fn grid_spacing(&self) -> f64 {
        self.side_length / self.n as f64
    }
}

/// Canonical representative of the Hermitian pair `{k, −k}`.
pub fn is_pair_representative(k: Wavenumber) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

/// Complex Fourier coefficients of a real zero-mean scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: Lattice) -> Self {
        let len = lattice.n * lattice.n;
        Self {
            lattice,
            coeffs: vec![ZERO; len],
        }
    }

    /// Builds a field from `(k, ω̂_k)` pairs; each entry also sets `−k`.
    pub fn from_modes(lattice: Lattice, modes: &[(Wavenumber, Complex64)]) -> Result<Self> {
        let mut field = Self::zeros(lattice);
        for &(k, value) in modes {
            field.set(k, value)?;
        }
        Ok(field)
    }

    /// Wraps a raw coefficient table, enforcing the field invariants.
    pub fn from_coeffs(lattice: Lattice, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.n * lattice.n {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                lattice.n * lattice.n,
                coeffs.len()
            )));
        }
        let mut field = Self { lattice, coeffs };
        field.enforce_invariants();
        Ok(field)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn get(&self, k: Wavenumber) -> Complex64 {
        self.lattice.index(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Sets `ω̂_k = value` and `ω̂_{−k} = conj(value)`.
    pub fn set(&mut self, k: Wavenumber, value: Complex64) -> Result<()> {
        if k == [0, 0] {
            return Err(Error::invalid("the k = 0 coefficient of a zero-mean field is fixed"));
        }
        let i = self.lattice.index(k).ok_or_else(|| {
            Error::invalid(format!("wavenumber {k:?} outside the active band"))
        })?;
        let j = self.lattice.conjugate_index(i);
        self.coeffs[i] = value;
        self.coeffs[j] = value.conj();
        if i == j {
            self.coeffs[i].im = 0.0;
        }
        Ok(())
    }

    /// Zeroes the mean and Nyquist entries and symmetrizes the table.
    pub fn enforce_invariants(&mut self) {
        let lat = self.lattice;
        for i in 0..self.coeffs.len() {
            let k = lat.wavenumber(i);
            if k == [0, 0] || !lat.is_active(k) {
                self.coeffs[i] = ZERO;
                continue;
            }
            let j = lat.conjugate_index(i);
            if j < i {
                continue;
            }
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
    }

    /// Largest violation of Hermitian symmetry, mean-zero, or band limits.
    pub fn invariant_defect(&self) -> f64 {
        let lat = self.lattice;
        let mut worst: f64 = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = lat.wavenumber(i);
            if k == [0, 0] || !lat.is_active(k) {
                worst = worst.max(c.norm());
            } else {
                let j = lat.conjugate_index(i);
                worst = worst.max((c - self.coeffs[j].conj()).norm());
            }
        }
        worst
    }

    /// `‖ω‖²_{L²} = Σ |ω̂_k|²`.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `‖∇ω‖²_{L²} = Σ |k|² |ω̂_k|²`.
    pub fn h1_sq(&self) -> f64 {
        self.weighted_sq(|k2| k2)
    }

    /// `Σ w(|k|²) |ω̂_k|²` over the active band.
    pub fn weighted_sq(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let lat = self.lattice;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(i, c)| weight(lat.k_sq(lat.wavenumber(i))) * c.norm_sqr())
            .sum()
    }

    /// Real L² inner product `Σ Re(ω̂_k conj(η̂_k))`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.lattice, other.lattice);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// Applies a real radial multiplier `m(k)` coefficient-wise.
    pub fn apply_multiplier(&mut self, m: impl Fn(Wavenumber) -> f64) {
        let lat = self.lattice;
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if c.norm_sqr() > 0.0 {
                *c *= m(lat.wavenumber(i));
            }
        }
    }

    /// Zeroes every coefficient outside the 2/3-rule band.
    pub fn dealias(&mut self) {
        let lat = self.lattice;
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if !lat.is_dealiased(lat.wavenumber(i)) {
                *c = ZERO;
            }
        }
    }

    pub fn dealiased(&self) -> Self {
        let mut out = self.clone();
        out.dealias();
        out
    }

    /// Keeps only shells with `|k| ≤ radius`.
    pub fn truncated_to_shell(&self, radius: f64) -> Self {
        let mut out = self.clone();
        let lat = self.lattice;
        let r2 = radius * radius;
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if lat.k_sq(lat.wavenumber(i)) > r2 + 1e-12 {
                *c = ZERO;
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        let lat = self.lattice;
        let mut out = self.clone();
        out.apply_multiplier(|k| -lat.k_sq(k));
        out
    }

    /// `(∂₁ω, ∂₂ω)`.
    pub fn gradient(&self) -> VelocityField {
        let lat = self.lattice;
        let mut d1 = self.clone();
        let mut d2 = self.clone();
        for (i, (a, b)) in d1.coeffs.iter_mut().zip(d2.coeffs.iter_mut()).enumerate() {
            let [kx, ky] = lat.wavevector(lat.wavenumber(i));
            *a *= Complex64::new(0.0, kx);
            *b *= Complex64::new(0.0, ky);
        }
        VelocityField { u1: d1, u2: d2 }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        debug_assert_eq!(self.lattice, other.lattice);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// Largest coefficient-wise difference.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(rhs);
        out
    }
}

/// Two-component vector field; produced divergence-free by [`biot_savart`].
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl VelocityField {
    pub fn zeros(lattice: Lattice) -> Self {
        Self {
            u1: SpectralField::zeros(lattice),
            u2: SpectralField::zeros(lattice),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        self.u1.lattice()
    }

    /// Spectral divergence `i(k₁û₁ + k₂û₂)`.
    pub fn divergence(&self) -> SpectralField {
        let g1 = self.u1.gradient().u1;
        let g2 = self.u2.gradient().u2;
        &g1 + &g2
    }

    /// Max over k of `|k₁û₁_k + k₂û₂_k|`.
    pub fn divergence_residual(&self) -> f64 {
        self.divergence()
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Scalar curl `∂₁u₂ − ∂₂u₁`.
    pub fn curl(&self) -> SpectralField {
        let d1u2 = self.u2.gradient().u1;
        let d2u1 = self.u1.gradient().u2;
        &d1u2 - &d2u1
    }

    /// `‖u‖² = ‖u₁‖² + ‖u₂‖²`.
    pub fn l2_sq(&self) -> f64 {
        self.u1.l2_sq() + self.u2.l2_sq()
    }

    pub fn scale(&mut self, s: f64) {
        self.u1.scale(s);
        self.u2.scale(s);
    }
}
