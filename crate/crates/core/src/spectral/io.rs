//! Flat binary and CSV serialization of spectral fields.
//!
//! Binary layout (little-endian): `n: u64`, then `n²` coefficients as
//! interleaved `re: f64, im: f64` in row-major storage order (row `i₁`,
//! column `i₂`, see [`super::Lattice::wavenumber`]). The lattice is assumed
//! to be the default `[0, 2π)²` torus with 2/3 dealiasing.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Lattice, SpectralField};
use crate::error::{Error, Result};

pub fn write_field<W: Write>(field: &SpectralField, mut w: W) -> Result<()> {
    let n = field.lattice().n() as u64;
    w.write_all(&n.to_le_bytes())?;
    for c in field.coeffs() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<SpectralField> {
    let n = read_u64(&mut r)? as usize;
    if n > 1 << 14 {
        return Err(Error::Format(format!("implausible grid size {n}")));
    }
    let lattice = Lattice::new(n).map_err(|e| Error::Format(e.to_string()))?;
    let mut coeffs = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        coeffs.push(Complex64::new(re, im));
    }
    let field = SpectralField::from_coeffs(lattice, coeffs.clone())?;
    if field.coeffs() != coeffs.as_slice() {
        return Err(Error::Format(
            "coefficients violate Hermitian/zero-mean invariants".into(),
        ));
    }
    Ok(field)
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub const CSV_HEADER: &str = "k1,k2,re,im";

/// One row per active nonzero coefficient (both members of each pair).
pub fn write_csv<W: Write>(field: &SpectralField, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let lat = field.lattice();
    for (i, c) in field.coeffs().iter().enumerate() {
        let k = lat.wavenumber(i);
        if k == [0, 0] || !lat.is_active(k) {
            continue;
        }
        writeln!(w, "{},{},{:e},{:e}", k[0], k[1], c.re, c.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::random_field;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn binary_roundtrip_is_bit_exact(seed in any::<u64>(), n in prop::sample::select(vec![8usize, 16, 32])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(Lattice::new(n).unwrap(), 5.0, 1.0, &mut rng);
            let mut buf = Vec::new();
            write_field(&f, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 8 + 16 * n * n);
            let back = read_field(buf.as_slice()).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn truncated_input_is_an_error() {
        let f = SpectralField::zeros(Lattice::new(8).unwrap());
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        buf.truncate(100);
        assert!(read_field(buf.as_slice()).is_err());
    }

    #[test]
    fn non_hermitian_payload_is_rejected() {
        let n = 8u64;
        let mut buf = n.to_le_bytes().to_vec();
        for i in 0..64 {
            let v = if i == 1 { 1.0f64 } else { 0.0 };
            buf.extend_from_slice(&v.to_le_bytes());
            buf.extend_from_slice(&0.0f64.to_le_bytes());
        }
        assert!(read_field(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_lists_active_modes() {
        let lat = Lattice::new(8).unwrap();
        let f = SpectralField::from_modes(lat, &[([1, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 7 * 7 - 1);
        assert!(text.contains("\n1,0,1e0,0e0\n"));
        assert!(text.contains("\n-1,0,1e0,-0e0\n"));
    }
}
