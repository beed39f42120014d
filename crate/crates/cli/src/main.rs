use std::path::PathBuf;
use std::process::ExitCode;

use agepot_cli::error::{CliError, Result};
use agepot_cli::output::{hazard_table_csv, write_file};
use agepot_cli::runner::{hazard_from_fpt, run_scenario, FptParams, RunOptions, RunReport};
use agepot_cli::{bundled, bundled_names, load_scenario};
use clap::{Args, Parser, Subcommand};

/// Population density solvers for spiking neurons: Monte Carlo engines,
/// Fokker-Planck, age-structured and joint age-potential models.
#[derive(Parser)]
#[command(name = "agepot", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the scenario's Monte Carlo seed.
    #[arg(long, global = true, env = "AGEPOT_SEED")]
    seed: Option<u64>,
    /// Directory receiving CSV and JSON artifacts.
    #[arg(long, global = true, env = "AGEPOT_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "AGEPOT_THREADS")]
    threads: Option<usize>,
    /// Snapshot every this many solver steps, in addition to the scenario's times.
    #[arg(long, global = true, env = "AGEPOT_SNAPSHOT_STRIDE")]
    snapshot_stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts; check failures are reported but not fatal.
    Run { scenario: String },
    /// Run a scenario and exit with status 4 if any check fails.
    Check { scenario: String },
    /// Tabulate the first-passage hazard S(a) = ISI(a)/P(a) for a constant drive.
    FptHazard(HazardArgs),
    /// Print the bundled scenarios.
    ListScenarios,
}

#[derive(Args)]
struct HazardArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    v_r: f64,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    v_min: f64,
    #[arg(long, default_value_t = 400)]
    n_v: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 2.0)]
    a_max: f64,
    #[arg(long, default_value_t = 2)]
    warmup_cells: usize,
}

fn summarize(report: &RunReport, files: &[PathBuf]) {
    println!("scenario {}", report.scenario.name);
    for c in &report.comparisons {
        println!(
            "  {} vs {}: l1_rel {:.4e}, linf_rel {:.4e}",
            c.reference, c.candidate, c.l1_rel, c.linf_rel
        );
    }
    for c in &report.checks {
        println!(
            "  check {} {} vs {}: {:.4e} (tolerance {:.4e}) {}",
            c.kind,
            c.reference,
            c.candidate,
            c.value,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    println!("  wrote {} files", files.len());
}

fn execute(cli: Cli) -> Result<()> {
    let g = cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let opts = RunOptions {
        seed: g.seed,
        snapshot_stride: g.snapshot_stride,
    };
    match cli.command {
        Command::Run { scenario } => {
            let report = run_scenario(&load_scenario(&scenario)?, &opts)?;
            let files = report.write(&g.out_dir)?;
            summarize(&report, &files);
            Ok(())
        }
        Command::Check { scenario } => {
            let report = run_scenario(&load_scenario(&scenario)?, &opts)?;
            let files = report.write(&g.out_dir)?;
            summarize(&report, &files);
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Tolerance {
                    failed: report.failed(),
                    total: report.checks.len(),
                })
            }
        }
        Command::FptHazard(h) => {
            let (hazard, table) = hazard_from_fpt(&FptParams {
                mu: h.mu,
                sigma: h.sigma,
                v_r: h.v_r,
                v_min: h.v_min,
                n_v: h.n_v,
                dt: h.dt,
                a_max: h.a_max,
                warmup_cells: h.warmup_cells,
            })?;
            write_file(&g.out_dir.join("hazard.csv"), &hazard_table_csv(&hazard, 1).to_csv())?;
            write_file(&g.out_dir.join("fpt.csv"), &table.to_csv())?;
            println!("wrote {}", g.out_dir.join("hazard.csv").display());
            Ok(())
        }
        Command::ListScenarios => {
            for name in bundled_names() {
                let s = bundled(name).expect("bundled name")?;
                let models: Vec<&str> = s.models.iter().map(|m| m.name()).collect();
                println!("{name}\t{}\t{}", models.join(","), s.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
