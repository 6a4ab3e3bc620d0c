//! Functionals of the vorticity: norms, energy, enstrophy, Casimirs and the
//! two-level entropy. Physical-space quantities use quadrature on the
//! oversample-2 grid, which is exact for polynomial functionals of degree
//! up to 4 of a band-limited field inside the 2/3 band.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Observer;
use crate::spectral::{to_physical, Grid, SpectralField, LINF_OVERSAMPLE};

/// `E = ½ Σ |ω̂_k|² / |k|²`.
pub fn energy(omega: &SpectralField) -> f64 {
    0.5 * omega.weighted_sq(|k2| 1.0 / k2)
}

/// `I = ‖ω‖²_{L²}` (normalized integral of `ω²`).
pub fn enstrophy(omega: &SpectralField) -> f64 {
    omega.l2_sq()
}

/// Mean of `F(ω)` over the oversample-2 grid.
pub fn casimir(omega: &SpectralField, f: impl Fn(f64) -> f64) -> f64 {
    physical(omega).mean_of(f)
}

/// `F(s) = −ρ₊ log ρ₊ − ρ₋ log ρ₋` with `ρ± = (1 ± s)/2`, extended by 0 at `s = ±1`.
pub fn two_level_density(s: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(0.5 * (1.0 + s)) + term(0.5 * (1.0 - s))
}

/// Two-level entropy, or `None` when `|ω| > 1` somewhere on the sampling grid.
pub fn entropy_two_level(omega: &SpectralField) -> Option<f64> {
    entropy_on(&physical(omega))
}

fn entropy_on(grid: &Grid) -> Option<f64> {
    if grid.max_abs() > 1.0 {
        return None;
    }
    Some(grid.mean_of(two_level_density))
}

/// Normalized-integral `L^p` norm by grid quadrature.
pub fn lp_norm(omega: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("L^p norm needs p >= 1, got {p}")));
    }
    Ok(lp_on(&physical(omega), p))
}

fn lp_on(grid: &Grid, p: f64) -> f64 {
    if p == 2.0 {
        return grid.mean_of(|s| s * s).sqrt();
    }
    grid.mean_of(|s| s.abs().powf(p)).powf(1.0 / p)
}

fn physical(omega: &SpectralField) -> Grid {
    to_physical(omega, LINF_OVERSAMPLE).expect("supported oversample factor")
}

/// Which optional quantities a [`DiagnosticsRecord`] carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Exponents for the `L^p` columns.
    #[serde(default = "default_lp")]
    pub lp: Vec<f64>,
    /// Powers `m` of the Casimirs `mean(ω^m)`.
    #[serde(default = "default_casimirs")]
    pub casimir_powers: Vec<u32>,
}

fn default_lp() -> Vec<f64> {
    vec![4.0]
}

fn default_casimirs() -> Vec<u32> {
    vec![3, 4]
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            lp: default_lp(),
            casimir_powers: default_casimirs(),
        }
    }
}

impl DiagnosticsSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.lp.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(Error::invalid(format!("L^p exponent must be >= 1, got {p}")));
        }
        Ok(())
    }

    /// CSV header matching [`DiagnosticsRecord::csv_row`].
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = ["t", "l2_sq", "h1_sq", "linf", "energy", "entropy2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(self.lp.iter().map(|p| format!("lp_{p}")));
        cols.extend(self.casimir_powers.iter().map(|m| format!("casimir_{m}")));
        cols.join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub linf: f64,
    /// `(p, ‖ω‖_{L^p})`.
    pub lp: Vec<(f64, f64)>,
    pub energy: f64,
    /// `(m, mean(ω^m))`.
    pub casimirs: Vec<(u32, f64)>,
    pub entropy2: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn compute(t: f64, omega: &SpectralField, spec: &DiagnosticsSpec) -> Self {
        let grid = physical(omega);
        Self {
            t,
            l2_sq: omega.l2_sq(),
            h1_sq: omega.h1_sq(),
            linf: grid.max_abs(),
            lp: spec.lp.iter().map(|&p| (p, lp_on(&grid, p))).collect(),
            energy: energy(omega),
            casimirs: spec
                .casimir_powers
                .iter()
                .map(|&m| (m, grid.mean_of(|s| s.powi(m as i32))))
                .collect(),
            entropy2: entropy_on(&grid),
        }
    }

    /// Empty cell for an absent entropy.
    pub fn csv_row(&self) -> String {
        let mut cells = vec![
            format!("{:e}", self.t),
            format!("{:e}", self.l2_sq),
            format!("{:e}", self.h1_sq),
            format!("{:e}", self.linf),
            format!("{:e}", self.energy),
            self.entropy2.map(|v| format!("{v:e}")).unwrap_or_default(),
        ];
        cells.extend(self.lp.iter().map(|(_, v)| format!("{v:e}")));
        cells.extend(self.casimirs.iter().map(|(_, v)| format!("{v:e}")));
        cells.join(",")
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.l2_sq, self.h1_sq, self.linf, self.energy]
            .iter()
            .chain(self.lp.iter().map(|(_, v)| v))
            .chain(self.casimirs.iter().map(|(_, v)| v))
            .all(|v| v.is_finite())
    }
}

/// Appends one CSV row per call; writes the header on construction.
pub struct CsvDiagnostics<W: Write> {
    spec: DiagnosticsSpec,
    out: W,
    pub rows: usize,
}

impl<W: Write> CsvDiagnostics<W> {
    pub fn new(spec: DiagnosticsSpec, mut out: W) -> Result<Self> {
        spec.validate()?;
        writeln!(out, "{}", spec.csv_header())?;
        Ok(Self { spec, out, rows: 0 })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Observer for CsvDiagnostics<W> {
    fn observe(&mut self, t: f64, omega: &SpectralField) -> Result<()> {
        let rec = DiagnosticsRecord::compute(t, omega, &self.spec);
        writeln!(self.out, "{}", rec.csv_row())?;
        self.rows += 1;
        Ok(())
    }
}
