//! Single-trajectory runs with streamed diagnostics and checkpoints.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use snse_core::diagnostics::{CsvDiagnostics, DiagnosticsRecord};
use snse_core::integrator::{Checkpoint, Observer, State, Stepper};
use snse_core::measure::InitialCondition;

use crate::config::RunConfig;
use crate::output::RunDir;
use crate::CliError;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "run.json";

#[derive(Serialize)]
struct RunSummary {
    solver_hash: String,
    t_start: f64,
    t_final: f64,
    steps: u64,
    resumed: bool,
    final_diagnostics: Option<DiagnosticsRecord>,
}

/// Decodes the hex solver fingerprint into checkpoint form.
pub fn fingerprint_bytes(hex: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).expect("fingerprint is hex");
    }
    out
}

pub fn run(cfg: &RunConfig, dir: &mut RunDir, resume: Option<&Path>) -> Result<(), CliError> {
    let solver = cfg.solver_config()?;
    let fp = solver.fingerprint();
    // Checkpoints are keyed on the dynamics alone so a run can be extended.
    let mut dynamics = solver.clone();
    dynamics.t_end = 0.0;
    let key = fingerprint_bytes(&dynamics.fingerprint());
    let rs = cfg.section(&cfg.run, "run")?.clone();
    let spec = cfg.diagnostics.clone().unwrap_or_default();
    let mut state = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config_hash != key {
                return Err(CliError::Invalid(format!(
                    "{} was written by a different solver configuration",
                    path.display()
                )));
            }
            ck.into_state()
        }
        None => {
            let init = cfg.initial.clone().unwrap_or(InitialCondition::Zero).sample(solver.lattice, cfg.seed, 0);
            State::new(init, cfg.seed, 0)
        }
    };
    let t_start = state.t;
    let steps = solver.steps_from(t_start);
    let mut stepper = Stepper::new(&solver)?;
    let mut diag = CsvDiagnostics::new(spec.clone(), dir.csv_writer(DIAGNOSTICS_FILE)?)?;
    diag.observe(state.t, &state.omega)?;
    let stride = rs.diagnostics_stride.max(1);
    let mut failure = None;
    let mut taken = 0;
    for s in 1..=steps {
        if let Err(e) = stepper.step(&mut state) {
            failure = Some(CliError::from(e));
            break;
        }
        taken = s;
        if s % stride == 0 && s != steps {
            diag.observe(state.t, &state.omega)?;
        }
        if rs.checkpoint_stride > 0 && s % rs.checkpoint_stride == 0 && s != steps {
            Checkpoint::of(&state, key).save(&dir.file(CHECKPOINT_FILE))?;
            dir.register(CHECKPOINT_FILE);
        }
    }
    let final_diagnostics = if failure.is_none() {
        diag.observe(state.t, &state.omega)?;
        Checkpoint::of(&state, key).save(&dir.file(CHECKPOINT_FILE))?;
        dir.register(CHECKPOINT_FILE);
        Some(DiagnosticsRecord::compute(state.t, &state.omega, &spec))
    } else {
        None
    };
    diag.into_inner().flush()?;
    let summary = RunSummary {
        solver_hash: fp,
        t_start,
        t_final: state.t,
        steps: taken,
        resumed: resume.is_some(),
        final_diagnostics,
    };
    dir.write_json(SUMMARY_FILE, "run", &[], &summary)?;
    failure.map_or(Ok(()), Err)
}
