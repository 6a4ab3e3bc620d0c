//! Random band-limited test fields and divergence-free drifts.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::noise::standard_normal_pair;
use crate::spectral::{
    biot_savart, is_pair_representative, to_physical, Lattice, SpectralField, VelocityField,
    LINF_OVERSAMPLE,
};

/// Generator for test fields keyed by `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Gaussian field on the shells `1 ≤ |k| ≤ radius` (clipped to the dealiased
/// band) with coefficient standard deviation `|k|^{−decay}`.
pub fn random_field<R: Rng + ?Sized>(
    lattice: Lattice,
    radius: f64,
    decay: f64,
    rng: &mut R,
) -> SpectralField {
    let mut field = SpectralField::zeros(lattice);
    let r2 = radius * radius;
    let modes: Vec<_> = lattice
        .active_wavenumbers()
        .filter(|&k| is_pair_representative(k) && lattice.is_dealiased(k))
        .filter(|&k| ((k[0] * k[0] + k[1] * k[1]) as f64) <= r2 + 1e-12)
        .collect();
    for k in modes {
        let (a, b) = standard_normal_pair(rng);
        let amp = ((k[0] * k[0] + k[1] * k[1]) as f64).powf(-0.5 * decay);
        field
            .set(k, Complex64::new(a, b) * amp)
            .expect("dealiased modes are active");
    }
    field
}

/// Random divergence-free velocity on `|k| ≤ radius`, normalized so that
/// the sampled `max |u|` over the oversample-2 grid is 1.
pub fn random_divergence_free<R: Rng + ?Sized>(
    lattice: Lattice,
    radius: f64,
    rng: &mut R,
) -> VelocityField {
    let omega = random_field(lattice, radius, 0.0, rng);
    let mut u = biot_savart(&omega);
    let g1 = to_physical(&u.u1, LINF_OVERSAMPLE).expect("supported oversample");
    let g2 = to_physical(&u.u2, LINF_OVERSAMPLE).expect("supported oversample");
    let speed = g1
        .values()
        .iter()
        .zip(g2.values())
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max);
    if speed > 0.0 {
        u.scale(1.0 / speed);
    }
    u
}
