//! Experiment orchestration: configuration, lockstep propagation of several
//! methods, checkpoints and CSV output.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod experiments;
pub mod output;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use engine::{CellSpec, Engine, EngineParams, Method, Sample};
pub use experiments::{
    compare, propagate, revert, revert_cells, run, sample, sweep, sweep_report, unitarity, unitarity_cells, CellSeries,
    RunReport, SweepReport,
};
