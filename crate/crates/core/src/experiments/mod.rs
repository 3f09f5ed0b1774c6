//! Monte-Carlo sweeps, named scenarios and their file formats.

pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use config::{SceneFile, SweepSettings};
pub use output::{read_csv, write_csv, write_csv_file};
pub use scenario::{run_scenario, ScenarioOptions, ScenarioReport, SCENARIOS};
pub use sweep::{
    parse_variants, run_rmse_sweep, snr_range, Distance, SweepConfig, SweepRow, Variant,
};
