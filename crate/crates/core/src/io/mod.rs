//! Configuration files and run outputs.

pub mod config;
pub mod output;

pub use config::{load_config, InitSpec, ModelParams, RawConfig, RunConfig, SystemKind};
pub use output::{
    read_energy_csv, read_ppm, read_snapshot, render_heatmap, run_config, write_energy_csv,
    write_heatmap, write_json, write_snapshot, RunSummary, SnapshotMeta,
};
