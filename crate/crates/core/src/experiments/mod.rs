//! Parameter sweeps and the derived scaling, regularization and Itô-ledger experiments.

pub mod ledger;
pub mod moser;
pub mod sweep;

pub use ledger::{ledger_run, lp_ito_ledger, write_ledger_csv, LedgerReport, LedgerTerms, LEDGER_CSV_HEADER, LEDGER_RATIO_BAND};
pub use moser::{
    moser_regularization_experiment, moser_trajectory, write_moser_csv, MoserPlan, MoserPoint, MoserResult, MoserSample,
    CFL_LIMIT, MOSER_CSV_HEADER,
};
pub use sweep::{
    damped_scaling_sweep, default_exp_delta, fit_loglog, inviscid_sweep, run_sweep, stationary_lower_bound, sweep_csv_header,
    write_sweep_csv, DampedSeries, DampedSweep, InviscidSweep, PointStatus, SlopeFit, SweepAxis, SweepPlan, SweepPoint,
    GROWTH_FACTOR,
};
