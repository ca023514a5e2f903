use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use sega::harness::config::split_override;
use sega::harness::{emit_plot, run_experiment, trajectory_2d, PlotStyle, RunConfig, TraceMetric, XAxis};
use sega::SegaError;

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "sega", version, about = "Run, plot and verify sketched gradient experiments")]
struct Cli {
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config key, e.g. --override method.stepsize.policy=simple_uniform.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write one CSV trace per seed.
    Run {
        config: PathBuf,
        /// Record iterate paths of SEGA, CD and biasSEGA instead (n = 2 only).
        #[arg(long)]
        trajectory: bool,
    },
    /// Plot CSV traces as a log-scale SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Axis::Iter)]
        x: Axis,
        #[arg(long, value_enum, default_value_t = Metric::FGap)]
        y: Metric,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Iter,
    Oracle,
    Cost,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    FGap,
    Dist,
    Lyapunov,
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<SegaError>(), Some(SegaError::Config(_)))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, trajectory } => {
            let overrides = cli
                .overrides
                .iter()
                .map(|s| split_override(s).map(|(k, v)| (k.to_string(), v.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let mut cfg = RunConfig::load(&config, &overrides)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let traces = if trajectory { trajectory_2d(&cfg)? } else { run_experiment(&cfg)? };
            for t in &traces {
                let last = t.last().context("empty trace")?;
                println!(
                    "{} seed={} k={} oracle_calls={} f_gap={:.6e} dist_sq={:.6e}",
                    t.method, t.seed, last.k, last.oracle_calls, last.f_gap, last.dist_sq_b
                );
            }
            if let Some(dir) = &cfg.output.dir {
                println!("wrote {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { csv, x, y, title, out } => {
            let style = PlotStyle {
                x: match x {
                    Axis::Iter => XAxis::Iterations,
                    Axis::Oracle => XAxis::OracleCalls,
                    Axis::Cost => XAxis::CostUnits,
                },
                y: match y {
                    Metric::FGap => TraceMetric::FGap,
                    Metric::Dist => TraceMetric::DistSq,
                    Metric::Lyapunov => TraceMetric::Lyapunov,
                },
                title,
                ..Default::default()
            };
            emit_plot(&csv, &style, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let report = sega::verify::run_suite(cli.seed.unwrap_or(0));
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INVARIANT) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
