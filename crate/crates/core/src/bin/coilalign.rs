//! Command-line front end: simulate reader logs, estimate start positions,
//! replay GPS-tracked runs, and sweep parameters.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 ambiguous
//! estimate without a side prior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coilalign_core::error::{Error, Result};
use coilalign_core::harness::{
    cmd_estimate, cmd_replay, cmd_simulate, cmd_sweep, EstimateOptions, EstimateReport,
    SweepConfig, SweepParam,
};
use coilalign_core::logio::{load_scenario, MapFormat, ScenarioConfig};
use coilalign_core::mle::SidePrior;

#[derive(Parser)]
#[command(
    name = "coilalign",
    about = "RFID coherent-phase coil alignment: simulator and grid MLE estimator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a read log (plus ground-truth sidecar) for a scenario.
    Simulate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        /// Output directory for reads.csv, reads.truth.json, gps.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the start position from a read log using the scenario's
    /// known trajectory.
    Estimate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        #[arg(long, value_name = "PATH")]
        log: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        opts: EstimateArgs,
    },
    /// Estimate using a GPS-derived trajectory (field runs).
    Replay {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        #[arg(long, value_name = "PATH")]
        gps: PathBuf,
        #[arg(long, value_name = "PATH")]
        log: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        opts: EstimateArgs,
    },
    /// Monte Carlo sweep over one parameter; writes sweep.csv.
    Sweep {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        /// One of: phase_sigma, read_rate, grid_resolution, speed.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. "0,5,10,20".
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 20)]
        trials: u32,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Base seed; trial k runs with seed + k.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct EstimateArgs {
    /// Likelihood map output format.
    #[arg(long, value_name = "csv|pgm", default_value = "csv")]
    map_format: String,
    /// Override the grid resolution of searched axes, in meters.
    #[arg(long, value_name = "METERS")]
    grid_res: Option<f64>,
    /// Override the scenario side prior: left, right, or none.
    #[arg(long, value_name = "left|right|none")]
    prior: Option<String>,
    /// Skip and count malformed log rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

impl EstimateArgs {
    fn to_options(&self) -> Result<EstimateOptions> {
        let map_format: MapFormat = self.map_format.parse()?;
        let prior_override = match self.prior.as_deref() {
            None => None,
            Some("left") => Some(SidePrior::LeftOfTag),
            Some("right") => Some(SidePrior::RightOfTag),
            Some("none") => Some(SidePrior::None),
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown prior '{other}' (expected left, right, or none)"
                )))
            }
        };
        if let Some(res) = self.grid_res {
            if !(res > 0.0) {
                return Err(Error::Config(format!("--grid-res must be > 0, got {res}")));
            }
        }
        Ok(EstimateOptions {
            map_format,
            grid_resolution_m: self.grid_res,
            prior_override,
            lenient: self.lenient,
        })
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open scenario {}: {e}", path.display())))?;
    load_scenario(std::io::BufReader::new(file))
}

fn print_report(report: &EstimateReport) {
    let e = &report.estimate;
    println!(
        "best: ({:+.4}, {:+.4}, {:+.4}) m  likelihood {:.4}",
        e.best.x, e.best.y, e.best.z, e.best_likelihood
    );
    if let Some(m) = e.mirror {
        println!(
            "mirror: ({:+.4}, {:+.4}, {:+.4}) m  likelihood {:.4}",
            m.x,
            m.y,
            m.z,
            e.mirror_likelihood.unwrap_or(f64::NAN)
        );
    }
    if e.ambiguous {
        println!("estimate is AMBIGUOUS: two near-equal peaks and no side prior");
    }
    if let (Some(lat), Some(vert)) = (e.lateral_offset_m, e.vertical_offset_m) {
        println!("misalignment: lateral {:+.4} m, vertical {:+.4} m", lat, vert);
    }
    if let Some(err) = report.error_m {
        println!("error vs ground truth: {:.4} m", err);
    }
    if let Some(skipped) = report.skipped_rows {
        if skipped > 0 {
            eprintln!("warning: skipped {skipped} malformed log rows");
        }
    }
    println!(
        "reads: {} across {} tag(s); grid cells: {}",
        report.reads_total,
        report.tags_used.len(),
        report.grid_cells
    );
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let cfg = load(&scenario)?;
            let artifacts = cmd_simulate(&cfg, &out, seed)?;
            println!(
                "wrote {} reads to {}",
                artifacts.events_written,
                artifacts.log_path.display()
            );
            println!("ground truth sidecar: {}", artifacts.truth_path.display());
            if let Some(gps) = artifacts.gps_path {
                println!("synthetic GPS track: {}", gps.display());
            }
            Ok(false)
        }
        Command::Estimate { scenario, log, out, opts } => {
            let cfg = load(&scenario)?;
            let artifacts = cmd_estimate(&cfg, &log, &out, &opts.to_options()?)?;
            print_report(&artifacts.report);
            println!("result: {}", artifacts.result_path.display());
            Ok(artifacts.report.estimate.ambiguous)
        }
        Command::Replay { scenario, gps, log, out, opts } => {
            let cfg = load(&scenario)?;
            let artifacts = cmd_replay(&cfg, &gps, &log, &out, &opts.to_options()?)?;
            print_report(&artifacts.report);
            println!("result: {}", artifacts.result_path.display());
            Ok(artifacts.report.estimate.ambiguous)
        }
        Command::Sweep { scenario, param, values, trials, out, seed } => {
            let cfg = load(&scenario)?;
            let param: SweepParam = param.parse()?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("--values entry '{v}' is not a number"))
                    })
                })
                .collect::<Result<_>>()?;
            let sweep = SweepConfig {
                seed_base: seed.unwrap_or(cfg.seed),
                scenario: cfg,
                param,
                values,
                trials,
            };
            let (rows, path) = cmd_sweep(&sweep, &out)?;
            for r in &rows {
                println!(
                    "{} = {:>10.4}: median {:.4} m, p90 {:.4} m over {} trials",
                    r.param, r.value, r.median_m, r.p90_m, r.trials
                );
            }
            println!("table: {}", path.display());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(false) => ExitCode::SUCCESS,
        // An ambiguous estimate completed but needs a side prior to act on.
        Ok(true) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
