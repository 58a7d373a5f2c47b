use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use statecov::experiment::{bench_scaling, run_experiment, write_csv, BaselineMode, ExperimentConfig};
use statecov::{GgnConfig, Status};

#[derive(Parser)]
#[command(name = "statecov", version, allow_negative_numbers = true, about = "Kalman smoothing with state-dependent noise covariances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic benchmark and write per-step estimates as CSV.
    Experiment {
        #[arg(long = "n", default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        omega: f64,
        /// Termination threshold; defaults to 1e-8 * (1 + |K|) at the current iterate.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        beta: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 100)]
        max_outer: usize,
        /// median | fixed=VALUE | oracle
        #[arg(long, default_value = "median")]
        baseline: BaselineMode,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the extended smoother for several horizon lengths.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for hitting the iteration cap, so usage errors use 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> statecov::Result<ExitCode> {
    match cli.command {
        Command::Experiment { n, seed, omega, epsilon, beta, gamma, max_outer, baseline, out } => {
            let cfg = ExperimentConfig {
                num_steps: n,
                seed,
                baseline,
                solver: GgnConfig { omega, epsilon, beta, gamma, max_outer, ..Default::default() },
                ..Default::default()
            };
            let result = run_experiment(&cfg)?;
            match out {
                Some(path) => write_csv(&result, BufWriter::new(File::create(path)?))?,
                None => write_csv(&result, io::stdout().lock())?,
            }
            eprintln!(
                "status {:?} after {} iterations; x1 MSE kf {:.4e} rts {:.4e} eks {:.4e}",
                result.status,
                result.trace.len(),
                result.mse.kf[0],
                result.mse.rts[0],
                result.mse.eks[0]
            );
            Ok(match result.status {
                Status::Converged => ExitCode::SUCCESS,
                Status::MaxIterations => ExitCode::from(2),
                Status::LineSearchStalled => ExitCode::from(1),
            })
        }
        Command::Bench { sizes, seed, reps } => {
            let rows = bench_scaling(&sizes, seed, reps)?;
            println!("n,outer_iters,inner_iters,seconds,seconds_per_outer,ratio");
            let mut prev: Option<f64> = None;
            for r in &rows {
                let ratio = prev.map_or(String::new(), |p| format!("{:.3}", r.seconds_per_outer / p));
                println!(
                    "{},{},{},{:.6},{:.6},{}",
                    r.num_steps, r.outer_iters, r.inner_iters, r.seconds, r.seconds_per_outer, ratio
                );
                prev = Some(r.seconds_per_outer);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
