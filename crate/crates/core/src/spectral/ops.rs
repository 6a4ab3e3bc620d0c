use num_complex::Complex64;

use super::{with_fft, Fft2, Lattice, SpectralField, VelocityField};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Oversampling factor used for every physical-space functional.
pub const LINF_OVERSAMPLE: usize = 2;

/// Real samples on an `m × m` collocation grid, row index along `x₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    m: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::invalid(format!(
                "grid of size {m} needs {} values, got {}",
                m * m,
                values.len()
            )));
        }
        Ok(Self { m, values })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j1: usize, j2: usize) -> f64 {
        self.values[(j1 % self.m) * self.m + j2 % self.m]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid average, i.e. the normalized integral for band-limited data.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Compensated (Neumaier) mean of `f` over the grid.
    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in &self.values {
            let x = f(v);
            let t = sum + x;
            comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
            sum = t;
        }
        (sum + comp) / self.values.len() as f64
    }

    /// Periodic translation by whole grid cells.
    pub fn shifted(&self, s1: usize, s2: usize) -> Grid {
        let m = self.m;
        let mut values = vec![0.0; m * m];
        for j1 in 0..m {
            for j2 in 0..m {
                values[((j1 + s1) % m) * m + (j2 + s2) % m] = self.values[j1 * m + j2];
            }
        }
        Grid { m, values }
    }
}

fn check_oversample(oversample: usize) -> Result<()> {
    if matches!(oversample, 1 | 2 | 4) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "oversample factor must be 1, 2 or 4, got {oversample}"
        )))
    }
}

/// Copies the active coefficients of `field` into an `m × m` zero-padded table.
fn pad(field: &SpectralField, m: usize) -> Vec<Complex64> {
    let lat = field.lattice();
    let mut buf = vec![ZERO; m * m];
    let mi = m as i32;
    for (i, c) in field.coeffs().iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let k = lat.wavenumber(i);
        let j = k[0].rem_euclid(mi) as usize * m + k[1].rem_euclid(mi) as usize;
        buf[j] = *c;
    }
    buf
}

/// Evaluates the field on an `(oversample · n)²` grid by zero padding.
pub fn to_physical(field: &SpectralField, oversample: usize) -> Result<Grid> {
    check_oversample(oversample)?;
    let m = oversample * field.lattice().n();
    let mut buf = pad(field, m);
    with_fft(m, |fft| fft.inverse(&mut buf));
    Ok(Grid {
        m,
        values: buf.into_iter().map(|c| c.re).collect(),
    })
}

/// Forward transform of grid samples, truncated to the lattice's active band.
pub fn from_physical(lattice: Lattice, grid: &Grid) -> Result<SpectralField> {
    let m = grid.size();
    let n = lattice.n();
    if m % n != 0 || check_oversample(m / n).is_err() {
        return Err(Error::invalid(format!(
            "grid size {m} is not 1, 2 or 4 times the lattice size {n}"
        )));
    }
    let mut buf: Vec<Complex64> = grid.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    with_fft(m, |fft| fft.forward(&mut buf));
    let mut coeffs = vec![ZERO; n * n];
    let mi = m as i32;
    for k in lattice.active_wavenumbers() {
        let src = k[0].rem_euclid(mi) as usize * m + k[1].rem_euclid(mi) as usize;
        coeffs[lattice.index(k).expect("active")] = buf[src];
    }
    SpectralField::from_coeffs(lattice, coeffs)
}

/// Max |ω| over the oversample-2 grid; approximates the true supremum from below.
pub fn linf_norm(field: &SpectralField) -> f64 {
    to_physical(field, LINF_OVERSAMPLE)
        .expect("supported oversample")
        .max_abs()
}

/// Velocity from vorticity: `û_k = −i k^⊥ ω̂_k / |k|²` with `k^⊥ = (−k₂, k₁)`.
pub fn biot_savart(omega: &SpectralField) -> VelocityField {
    let lat = *omega.lattice();
    let mut u1 = SpectralField::zeros(lat);
    let mut u2 = SpectralField::zeros(lat);
    for (i, w) in omega.coeffs().iter().enumerate() {
        if w.norm_sqr() == 0.0 {
            continue;
        }
        let k = lat.wavenumber(i);
        let [kx, ky] = lat.wavevector(k);
        let inv = 1.0 / (kx * kx + ky * ky);
        u1.coeffs_mut()[i] = Complex64::new(0.0, ky * inv) * w;
        u2.coeffs_mut()[i] = Complex64::new(0.0, -kx * inv) * w;
    }
    VelocityField { u1, u2 }
}

/// Dealiased pseudo-spectral `N(ω) = −u·∇ω`.
pub fn nonlinear_term(omega: &SpectralField) -> SpectralField {
    let mut ws = Workspace::new(*omega.lattice());
    let mut out = SpectralField::zeros(*omega.lattice());
    ws.nonlinear_into(omega, 1.0, &mut out);
    out
}

/// Precomputed multipliers and buffers for repeated transforms on one lattice.
///
/// Not shared between threads; each trajectory owns its own.
pub struct Workspace {
    lattice: Lattice,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    inv_k2: Vec<f64>,
    dealiased: Vec<bool>,
    conj: Vec<usize>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl Workspace {
    pub fn new(lattice: Lattice) -> Self {
        let n = lattice.n();
        let len = n * n;
        let mut kx = vec![0.0; len];
        let mut ky = vec![0.0; len];
        let mut inv_k2 = vec![0.0; len];
        let mut dealiased = vec![false; len];
        let mut conj = vec![0; len];
        for i in 0..len {
            let k = lattice.wavenumber(i);
            let [a, b] = lattice.wavevector(k);
            kx[i] = a;
            ky[i] = b;
            if k != [0, 0] && lattice.is_active(k) {
                inv_k2[i] = 1.0 / (a * a + b * b);
                dealiased[i] = lattice.is_dealiased(k);
            }
            conj[i] = lattice.conjugate_index(i);
        }
        Self {
            lattice,
            fft: Fft2::new(n),
            kx,
            ky,
            inv_k2,
            dealiased,
            conj,
            a: vec![ZERO; len],
            b: vec![ZERO; len],
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Loads `∂₁ω + i ∂₂ω` (dealiased input) into physical buffer `b`.
    fn load_gradient(&mut self, omega: &SpectralField) {
        for (i, w) in omega.coeffs().iter().enumerate() {
            self.b[i] = if self.dealiased[i] {
                // i kx ω̂ + i (i ky ω̂)
                Complex64::new(-self.ky[i], self.kx[i]) * w
            } else {
                ZERO
            };
        }
        self.fft.inverse(&mut self.b);
    }

    /// Forward-transforms the real product stored in `a.re`, writes
    /// `scale · (−product)` into `out` restricted to the dealiased band.
    fn finish(&mut self, scale: f64, out: &mut SpectralField) {
        self.fft.forward(&mut self.a);
        let coeffs = out.coeffs_mut();
        for i in 0..coeffs.len() {
            if !self.dealiased[i] {
                coeffs[i] = ZERO;
                continue;
            }
            let j = self.conj[i];
            if j < i {
                continue;
            }
            let c = -scale * 0.5 * (self.a[i] + self.a[j].conj());
            coeffs[i] = c;
            coeffs[j] = c.conj();
        }
    }

    /// `out = scale · N(ω)` with `N(ω) = −u·∇ω`, `u` from Biot–Savart.
    pub fn nonlinear_into(&mut self, omega: &SpectralField, scale: f64, out: &mut SpectralField) {
        debug_assert_eq!(omega.lattice(), &self.lattice);
        for (i, w) in omega.coeffs().iter().enumerate() {
            self.a[i] = if self.dealiased[i] {
                // û₁ + i û₂ = (i ky + kx) ω̂ / |k|²
                Complex64::new(self.kx[i], self.ky[i]) * (self.inv_k2[i] * w)
            } else {
                ZERO
            };
        }
        self.fft.inverse(&mut self.a);
        self.load_gradient(omega);
        for (a, b) in self.a.iter_mut().zip(&self.b) {
            // u₁∂₁ω + u₂∂₂ω = Re(U · conj(G))
            *a = Complex64::new(a.re * b.re + a.im * b.im, 0.0);
        }
        self.finish(scale, out);
    }

    /// `out = scale · (−a·∇ω)` for a drift sampled on the base grid.
    pub fn advection_into(
        &mut self,
        drift: &PhysicalDrift,
        omega: &SpectralField,
        scale: f64,
        out: &mut SpectralField,
    ) {
        debug_assert_eq!(drift.n, self.lattice.n());
        self.load_gradient(omega);
        for ((a, b), d) in self.a.iter_mut().zip(&self.b).zip(&drift.packed) {
            *a = Complex64::new(d.re * b.re + d.im * b.im, 0.0);
        }
        self.finish(scale, out);
    }

    /// Samples a velocity field on the base grid for [`Workspace::advection_into`].
    pub fn sample_drift(&mut self, velocity: &VelocityField) -> PhysicalDrift {
        let n = self.lattice.n();
        let mut packed: Vec<Complex64> = velocity
            .u1
            .coeffs()
            .iter()
            .zip(velocity.u2.coeffs())
            .map(|(a, b)| a + Complex64::new(0.0, 1.0) * b)
            .collect();
        self.fft.inverse(&mut packed);
        PhysicalDrift { n, packed }
    }
}

/// A velocity field on the physical base grid, packed as `u₁ + i u₂`.
#[derive(Clone, Debug)]
pub struct PhysicalDrift {
    n: usize,
    packed: Vec<Complex64>,
}

impl PhysicalDrift {
    /// Max of `|a(x)|` over the base grid.
    pub fn max_speed(&self) -> f64 {
        self.packed.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
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

    fn cos_mode(l: Lattice, k: [i32; 2], amp: f64) -> SpectralField {
        SpectralField::from_modes(l, &[(k, Complex64::new(0.5 * amp, 0.0))]).unwrap()
    }

    #[test]
    fn biot_savart_single_mode() {
        let w = SpectralField::from_modes(lat(8), &[([1, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let u = biot_savart(&w);
        assert!((u.u2.get([1, 0]) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((u.u2.get([-1, 0]) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(u.u1.l2_sq(), 0.0);
    }

    #[test]
    fn biot_savart_zero() {
        let u = biot_savart(&SpectralField::zeros(lat(8)));
        assert_eq!(u.l2_sq(), 0.0);
    }

    #[test]
    fn biot_savart_curl_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_field(lat(8), 3.0, 1.0, &mut rng);
        let u = biot_savart(&w);
        assert!(u.curl().max_abs_diff(&w) <= 1e-13);
        assert!(u.divergence_residual() <= 1e-13);
    }

    #[test]
    fn shear_has_no_self_advection() {
        let w = cos_mode(lat(16), [0, 1], 1.0);
        let n = nonlinear_term(&w);
        assert_eq!(n.l2_sq(), 0.0);
    }

    #[test]
    fn laplacian_eigenfunction_is_steady() {
        let l = lat(16);
        // cos(x₁) + sin(x₂) is an eigenfunction with λ = 1.
        let w = SpectralField::from_modes(
            l,
            &[
                ([1, 0], Complex64::new(0.5, 0.0)),
                ([0, 1], Complex64::new(0.0, -0.5)),
            ],
        )
        .unwrap();
        assert!(nonlinear_term(&w).coeffs().iter().all(|c| c.norm() < 1e-13));
    }

    #[test]
    fn to_physical_cosine_rows() {
        let l = lat(8);
        let g = to_physical(&cos_mode(l, [1, 0], 1.0), 1).unwrap();
        for j1 in 0..8 {
            let expect = (2.0 * std::f64::consts::PI * j1 as f64 / 8.0).cos();
            for j2 in 0..8 {
                assert!((g.get(j1, j2) - expect).abs() < 1e-14);
            }
        }
        let z = to_physical(&SpectralField::zeros(l), 2).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn to_physical_rejects_unsupported_oversample() {
        let f = SpectralField::zeros(lat(8));
        assert!(to_physical(&f, 3).is_err());
        assert!(to_physical(&f, 0).is_err());
    }

    #[test]
    fn physical_roundtrip_all_oversamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_field(lat(16), 7.0, 0.0, &mut rng);
        for s in [1, 2, 4] {
            let back = from_physical(*w.lattice(), &to_physical(&w, s).unwrap()).unwrap();
            assert!(back.max_abs_diff(&w) < 1e-13, "oversample {s}");
        }
    }

    #[test]
    fn linf_examples() {
        let l = lat(16);
        assert!((linf_norm(&cos_mode(l, [1, 0], 1.0)) - 1.0).abs() < 1e-14);
        let mut w = cos_mode(l, [1, 0], 3.0);
        w += &cos_mode(l, [0, 1], 4.0);
        assert!((linf_norm(&w) - 7.0).abs() < 1e-13);
    }

    #[test]
    fn oversampled_max_dominates_base_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = random_field(lat(16), 7.0, 0.0, &mut rng);
            let base = to_physical(&w, 1).unwrap().max_abs();
            let fine = to_physical(&w, 4).unwrap().max_abs();
            assert!(fine >= base - 1e-14);
            assert!(linf_norm(&w) >= w.l2_sq().sqrt() - 1e-12);
        }
    }

    #[test]
    fn nonlinearity_is_energy_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_field(lat(32), 10.0, 1.0, &mut rng);
        let n = nonlinear_term(&w);
        let bound = 1e-10 * w.l2_sq() * w.h1_sq().sqrt();
        assert!(n.inner(&w).abs() <= bound);
    }
}
