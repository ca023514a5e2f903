//! Experiment harness: configs, runs, CSV traces and plots.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod trace;

pub use config::RunConfig;
pub use experiment::{run_experiment, run_single, trajectory_2d};
pub use plot::{emit_plot, PlotStyle};
pub use trace::{Trace, TraceMetric, TraceRow, XAxis};

/// `git describe --always --dirty` of the working directory, or "unknown".
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}
