use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use mvsim_cli::{
    cmd_checkgrowth, cmd_diagnose, cmd_horizon, cmd_inequalities, cmd_simulate, cmd_stability,
    EXIT_VALIDATION,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mvsim",
    version,
    about = "Magnetoviscoelastic flow simulator: coupled fluid, elastic and magnetization dynamics with verification tooling"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario: snapshots, diagnostics CSV and a manifest.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads; results are identical for any value.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute instantaneous diagnostics from stored snapshots.
    Diagnose {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Two-run perturbation study with the Gronwall bound breakdown.
    Stability {
        #[arg(long)]
        scenario: PathBuf,
        /// Initial perturbation amplitude; 0 runs a bitwise twin.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Compare against a half-resolution run instead of a perturbed one.
        #[arg(long)]
        cross_resolution: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Randomized sup-ratio estimation for the interpolation inequalities.
    Inequalities {
        /// Comma-separated subset; default is all nine.
        #[arg(long, value_delimiter = ',')]
        names: Option<Vec<String>>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        degree: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128])]
        resolutions: Vec<usize>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Blow-up horizon of the comparison equation z' = c (1 + z^3).
    Horizon {
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 0.0)]
        z0: f64,
        #[arg(long, default_value_t = 1e9)]
        cap: f64,
    },
    /// Verify the growth contract of a named elastic energy density.
    Checkgrowth {
        #[arg(long)]
        density: String,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        #[arg(long, default_value_t = 8.0)]
        r_max: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            };
        }
    };

    let result = match cli.cmd {
        Cmd::Simulate {
            scenario,
            output_dir,
            threads,
        } => cmd_simulate(&scenario, output_dir.as_deref(), threads),
        Cmd::Diagnose {
            scenario,
            snapshots,
            output_dir,
            threads,
        } => cmd_diagnose(&scenario, &snapshots, output_dir.as_deref(), threads),
        Cmd::Stability {
            scenario,
            eps,
            cross_resolution,
            output_dir,
            threads,
        } => cmd_stability(
            &scenario,
            eps,
            cross_resolution,
            output_dir.as_deref(),
            threads,
        ),
        Cmd::Inequalities {
            names,
            samples,
            degree,
            resolutions,
            seed,
            output_dir,
            threads,
        } => cmd_inequalities(
            names,
            samples,
            degree,
            &resolutions,
            seed,
            output_dir.as_deref(),
            threads,
        ),
        Cmd::Horizon { c, z0, cap } => cmd_horizon(c, z0, cap),
        Cmd::Checkgrowth {
            density,
            samples,
            r_max,
            seed,
        } => cmd_checkgrowth(&density, samples, r_max, seed),
    };

    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mvsim: {}", e.message);
            if let Some(summary) = e.summary {
                println!("{summary}");
            }
            ExitCode::from(e.code)
        }
    }
}
