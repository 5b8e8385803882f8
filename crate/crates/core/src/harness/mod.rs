//! Experiment orchestration: campaign configs, parallel Monte Carlo runs, CSV output, CDFs.

pub mod campaign;
pub mod config;
pub mod stats;

pub use crate::seed::derive_seed;
pub use campaign::{
    per_ms_se, read_csv_file, run_campaign, run_unit, sum_se, sweep_points, write_csv, write_csv_file,
    CampaignOutput, ResultRow, RowStatus, RunOptions, StageTimes, SweepPoint, CSV_HEADER,
};
pub use config::{Band, CampaignSpec, CovarianceMode, Preset};
pub use stats::{compute_cdf, mean, percentile};
