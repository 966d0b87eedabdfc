//! Scenario files, stability reports, parameter sweeps and CSV output.

mod csv_out;
mod report;
mod scenario;
mod sweep;

pub use csv_out::{fmt_f64, trace_csv_string, write_trace_csv, write_trace_file};
pub use report::{render_equilibrium, run_check, CheckOutcome};
pub use scenario::{
    load_scenario, load_scenario_with, HistorySpec, HopSpec, LinkSpec, Overrides, RouteEntry, Scenario, ScenarioSpec,
    SimSpec,
};
pub use sweep::{
    isolated_equilibrium, load_sweep, random_history, run_sweep, trial_rng, Axis, AxisTarget, AxisValues, Spacing,
    SweepResult, SweepRow, SweepSpec, Tallies, HISTORY_CAP_MARGIN, HISTORY_RANGE, SWEEP_COLUMNS, WIDE_HISTORY_RANGE,
};
