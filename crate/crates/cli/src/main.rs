use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rarefuse_cli::{run_config_file, CliError};
use rarefuse_core::benchmarks::{
    benchmark_by_name, oracle_failure_probability, Oracle, BENCHMARK_NAMES, MIN_ORACLE_RESOLUTION,
};

#[derive(Parser)]
#[command(name = "rarefuse", version, about = "Fused multifidelity importance sampling for rare events")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Inspect the built-in benchmarks.
    Benchmarks {
        #[command(subcommand)]
        action: BenchmarkAction,
    },
    /// Print the reference failure probability of a benchmark.
    Oracle {
        #[arg(long)]
        benchmark: String,
        #[arg(long, default_value_t = 2001)]
        resolution: usize,
    },
}

#[derive(Subcommand)]
enum BenchmarkAction {
    /// List the registered benchmark names.
    List,
}

fn oracle(name: &str, resolution: usize) -> Result<serde_json::Value, CliError> {
    let b = benchmark_by_name(name).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let p = oracle_failure_probability(&b, resolution)
        .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let mut out = serde_json::json!({
        "benchmark": b.name,
        "oracle": b.oracle.describe(),
        "probability": p,
    });
    if let Oracle::GridQuadrature { .. } = b.oracle {
        out["resolution"] = resolution.into();
        let coarse = (resolution / 2) | 1;
        if coarse >= MIN_ORACLE_RESOLUTION {
            let pc = oracle_failure_probability(&b, coarse)?;
            out["coarse_resolution"] = coarse.into();
            out["coarse_probability"] = pc.into();
            out["refinement_delta"] = (p - pc).into();
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let report = run_config_file(&config)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            println!(
                "{}: wrote results for {} to {}",
                report.config_hash,
                report.benchmark,
                report.config.output_dir.display()
            );
        }
        Command::Benchmarks { action: BenchmarkAction::List } => {
            for name in BENCHMARK_NAMES {
                let b = benchmark_by_name(name)?;
                println!("{name}\td={}\t{}", b.dim(), b.oracle.describe());
            }
        }
        Command::Oracle { benchmark, resolution } => {
            println!("{}", serde_json::to_string_pretty(&oracle(&benchmark, resolution)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("error: cannot start {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
