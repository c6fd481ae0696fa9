//! Experiment harness: configuration, artifact persistence, and the
//! orchestration commands behind the `taskpls` binary.
//!
//! Artifact layout under a run's output directory:
//!
//! ```text
//! <output_dir>/
//!   run_manifest.json        config snapshot, seeds, artifact hashes, timing
//!   ensembles/train/         manifest.json + per-item .raw rasters
//!   ensembles/test/
//!   template.json (+ .w.raw) observer template
//!   results.csv              one row per (alpha, beta, gamma) grid point
//!   render/                  windowed PNG panels and difference maps
//! ```
//!
//! Rasters are little-endian 64-bit floats in row-major order; dimensions
//! live in the accompanying manifest. PNG exports are windowed 8-bit
//! previews for inspection only and are never read back.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

pub use commands::{
    cmd_denoise, cmd_evaluate, cmd_generate, cmd_render, cmd_sweep, cmd_template, SweepRow,
};
pub use config::{ExperimentConfig, SolverSettings};
