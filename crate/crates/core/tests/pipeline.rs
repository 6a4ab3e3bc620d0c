use num_complex::Complex64;
use proptest::prelude::*;
use snse_core::elliptic::{energy_bound_check, solve_stationary, EllipticOptions, EllipticProblem};
use snse_core::experiments::fit_loglog;
use snse_core::integrator::{Checkpoint, Mode, SolverConfig, State, Stepper};
use snse_core::measure::{estimate_stationary, EstimatorPlan, Functional};
use snse_core::noise::NoiseSpec;
use snse_core::oracles::stokes_mode_variance;
use snse_core::random_fields::{random_divergence_free, random_field, seeded_rng};
use snse_core::spectral::{from_physical, nonlinear_term, to_physical, Lattice, SpectralField};

fn lat(n: usize) -> Lattice {
    Lattice::new(n).unwrap()
}

/// `Δ⁻¹ω`, the stream function up to sign.
fn inverse_laplacian(w: &SpectralField) -> SpectralField {
    let mut psi = w.clone();
    let l = *w.lattice();
    psi.apply_multiplier(|k| -1.0 / l.k_sq(k));
    psi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn galerkin_advection_conserves_energy_and_enstrophy(seed in any::<u64>(), decay in 0.0f64..2.0) {
        let w = random_field(lat(16), 8.0, decay, &mut seeded_rng(seed, 0));
        let n = nonlinear_term(&w);
        let scale = w.l2_sq() * n.l2_sq().sqrt().max(1.0);
        prop_assert!(n.inner(&w).abs() <= 1e-12 * scale);
        prop_assert!(n.inner(&inverse_laplacian(&w)).abs() <= 1e-12 * scale);
        prop_assert!(n.invariant_defect() <= 1e-14 * scale);
    }

    #[test]
    fn physical_round_trip_is_exact(seed in any::<u64>(), oversample in prop::sample::select(vec![1usize, 2, 4])) {
        let w = random_field(lat(16), 6.0, 1.0, &mut seeded_rng(seed, 1));
        let grid = to_physical(&w, oversample).unwrap();
        let back = from_physical(lat(16), &grid).unwrap();
        prop_assert!(back.max_abs_diff(&w) <= 1e-13);
    }

    #[test]
    fn drifts_are_divergence_free(seed in any::<u64>(), radius in 1.0f64..6.0) {
        let u = random_divergence_free(lat(16), radius, &mut seeded_rng(seed, 2));
        prop_assert!(u.divergence_residual() <= 1e-13);
    }
}

#[test]
fn checkpoint_restart_matches_an_uninterrupted_run() {
    let mut cfg = SolverConfig::new(lat(16), NoiseSpec::default_forcing(0.5));
    cfg.nu = 0.1;
    cfg.dt = 0.01;
    let init = random_field(lat(16), 4.0, 1.0, &mut seeded_rng(3, 0));
    let mut straight = State::new(init.clone(), 3, 0);
    let mut stepper = Stepper::new(&cfg).unwrap();
    stepper.advance(&mut straight, 100, &mut [], 1).unwrap();

    let mut first = State::new(init, 3, 0);
    stepper.advance(&mut first, 60, &mut [], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    Checkpoint::of(&first, [7; 32]).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.config_hash, [7; 32]);
    let mut resumed = loaded.into_state();
    Stepper::new(&cfg).unwrap().advance(&mut resumed, 40, &mut [], 1).unwrap();
    assert_eq!(resumed.t, straight.t);
    assert_eq!(resumed.omega, straight.omega);
}

#[test]
fn linear_spectrum_matches_closed_form() {
    let mut cfg = SolverConfig::new(lat(8), NoiseSpec::default_forcing(0.5));
    cfg.mode = Mode::StokesLinear;
    cfg.nu = 0.5;
    cfg.dt = 0.1;
    let modes = cfg.noise.modes().to_vec();
    let mut plan = EstimatorPlan::new(20.0, 4000.0, modes.iter().map(|&k| Functional::ModeSq { k }).collect());
    plan.replicas = 2;
    let est = estimate_stationary(&cfg, &plan).unwrap();
    for (&k, f) in modes.iter().zip(&est.functionals) {
        let exact = stokes_mode_variance(&cfg, k).unwrap().vorticity_pair;
        assert!((f.mean / exact - 1.0).abs() < 0.08, "{k:?}: {} vs {exact}", f.mean);
    }
}

#[test]
fn steady_solution_respects_the_energy_bound() {
    let b = random_divergence_free(lat(16), 3.0, &mut seeded_rng(1, 3));
    let f = SpectralField::from_modes(lat(16), &[([1, 2], Complex64::new(1.0, -0.5)), ([3, 0], Complex64::new(0.2, 0.0))])
        .unwrap();
    for a in [0.0, 30.0, 300.0] {
        let p = EllipticProblem::new(b.clone(), f.clone(), a).unwrap();
        let sol = solve_stationary(&p, &EllipticOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(energy_bound_check(&p, &sol.v) <= 1.0 + 1e-9);
    }
}

#[test]
fn loglog_fit_recovers_a_power_law() {
    let xs = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.5 * x.powf(0.75)).collect();
    let fit = fit_loglog(&xs, &ys).unwrap();
    assert!((fit.slope - 0.75).abs() < 1e-12);
    assert!((fit.intercept - 2.5f64.ln()).abs() < 1e-12);
    assert!(fit_loglog(&xs[..3], &ys[..3]).is_none());
}
