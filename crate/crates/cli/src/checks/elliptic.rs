//! Stationary drift-diffusion: `H¹` bound and drift-independent modulus of
//! continuity across a sweep of drift amplitudes.

use std::fmt::Write as _;

use serde::Serialize;
use snse_core::elliptic::{
    elliptic_report, solve_stationary_from, EllipticOptions, EllipticProblem, ModulusOptions, SolveMethod,
};
use snse_core::random_fields::{random_divergence_free, random_field, seeded_rng};
use snse_core::spectral::{linf_norm, SpectralField};

use super::{e, Outcome};
use crate::config::RunConfig;
use crate::verdict::{Status, Verdict};
use crate::CliError;

const DRIFT_STREAM: u64 = 0x656c_6c64;
const SOURCE_STREAM: u64 = 0x656c_6c66;

/// Largest accepted solver residual.
pub const RESIDUAL_BOUND: f64 = 1e-10;
/// Largest accepted `C(A)/C(0)`.
pub const MODULUS_RATIO_BOUND: f64 = 2.0;

pub const ELLIPTIC_CSV_HEADER: &str =
    "seed,amplitude,method,iterations,residual,h1_ratio,linf_ratio,modulus_constant,constant_ratio";
pub const MODULUS_CSV_HEADER: &str = "seed,amplitude,r,osc,osc_sqrt_log";

#[derive(Serialize)]
struct EllipticPoint {
    seed: u64,
    amplitude: f64,
    method: SolveMethod,
    iterations: usize,
    residual: f64,
    h1_ratio: f64,
    linf_ratio: f64,
    radii: Vec<f64>,
    osc: Vec<f64>,
    constant: f64,
    constant_ratio: f64,
}

pub fn elliptic(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let el = cfg.section(&cfg.elliptic, "elliptic")?;
    let lat = cfg.lattice()?;
    if el.amplitudes.first() != Some(&0.0) {
        return Err(CliError::Invalid("elliptic.amplitudes must start with 0".into()));
    }
    let opts = EllipticOptions {
        tol: el.tol,
        restart: el.restart,
        max_iterations: el.max_iterations,
        ..EllipticOptions::default()
    };
    let mut points: Vec<EllipticPoint> = Vec::new();
    let mut failure = None;
    'seeds: for &seed in &el.seeds {
        let b = random_divergence_free(lat, el.drift_radius, &mut seeded_rng(seed, DRIFT_STREAM));
        let f = random_field(lat, el.source_radius, el.source_decay, &mut seeded_rng(seed, SOURCE_STREAM));
        let base = EllipticProblem::new(b, f, 0.0)?;
        let f_linf = linf_norm(base.f());
        let modulus = ModulusOptions {
            centers: el.centers,
            seed,
            r_star: el.r_star,
            rings: el.rings,
        };
        let mut v0: Option<SpectralField> = None;
        let mut c0 = f64::NAN;
        for &a in &el.amplitudes {
            let problem = base.with_amplitude(a)?;
            let sol = match solve_stationary_from(&problem, &opts, v0.as_ref()) {
                Ok(s) => s,
                Err(err) => {
                    failure = Some(CliError::from(err));
                    break 'seeds;
                }
            };
            let rep = elliptic_report(&problem, &sol.v, &el.radii, &modulus)?;
            if a == 0.0 {
                c0 = rep.constant;
            }
            points.push(EllipticPoint {
                seed,
                amplitude: a,
                method: sol.method,
                iterations: sol.iterations,
                residual: sol.residual,
                h1_ratio: rep.h1_ratio.unwrap_or(f64::NAN),
                linf_ratio: rep.linf / f_linf,
                radii: rep.radii,
                osc: rep.osc,
                constant: rep.constant,
                constant_ratio: rep.constant / c0,
            });
            v0 = Some(sol.v);
        }
    }

    let worst = |g: fn(&EllipticPoint) -> f64| points.iter().map(g).fold(0.0, f64::max);
    let h1_bound = 1.0 + 10.0 * el.tol;
    let mut verdicts = vec![
        Verdict::at_most(
            "elliptic h1 bound",
            worst(|p| p.h1_ratio),
            h1_bound,
            format!("max |grad v|^2/|f|^2 over {} solves", points.len()),
        ),
        Verdict::at_most(
            "elliptic solver residual",
            worst(|p| p.residual),
            RESIDUAL_BOUND,
            "max relative residual |Lv - f|/|f|",
        ),
        Verdict::at_most(
            "elliptic modulus",
            worst(|p| p.constant_ratio),
            MODULUS_RATIO_BOUND,
            format!(
                "max C(A)/C(0) at radii {:?}; C = {:?}",
                el.radii,
                points.iter().map(|p| (p.constant * 1e4).round() / 1e4).collect::<Vec<_>>()
            ),
        ),
    ];
    if failure.is_some() {
        for v in &mut verdicts {
            v.status = Status::Fail;
            v.detail.push_str("; solver did not converge on every amplitude");
        }
    }
    for p in points.iter().filter(|p| p.linf_ratio > el.linf_bound) {
        verdicts.push(Verdict::new(
            format!("elliptic linf (seed={}, A={})", p.seed, p.amplitude),
            Status::Flagged,
            format!("|v|_inf/|f|_inf = {:.3} exceeds {}", p.linf_ratio, el.linf_bound),
        ));
    }

    let mut table = format!("{ELLIPTIC_CSV_HEADER}\n");
    let mut modulus = format!("{MODULUS_CSV_HEADER}\n");
    for p in &points {
        let method = match p.method {
            SolveMethod::Gmres => "gmres",
            SolveMethod::PseudoTime => "pseudo_time",
        };
        writeln!(
            table,
            "{},{},{method},{},{},{},{},{},{}",
            p.seed,
            e(p.amplitude),
            p.iterations,
            e(p.residual),
            e(p.h1_ratio),
            e(p.linf_ratio),
            e(p.constant),
            e(p.constant_ratio)
        )
        .unwrap();
        for (r, o) in p.radii.iter().zip(&p.osc) {
            writeln!(
                modulus,
                "{},{},{},{},{}",
                p.seed,
                e(p.amplitude),
                e(*r),
                e(*o),
                e(o * (1.0 / r).ln().sqrt())
            )
            .unwrap();
        }
    }
    let mut out = Outcome::new("elliptic", verdicts, &points)
        .with_csv("elliptic.csv", table)
        .with_csv("elliptic_modulus.csv", modulus);
    out.failure = failure;
    Ok(out)
}
