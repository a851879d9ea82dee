use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gise::cli;

#[derive(Parser)]
#[command(name = "gise", version, about = "Adaptive Gegenbauer spectral element optimal control solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive solver on a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Solution file; the CSV samples go next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve on a fixed mesh for every alpha and size in the schedule.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        alphas: Vec<f64>,
        /// Interior interfaces in original time.
        #[arg(long, value_delimiter = ',')]
        fixed_edges: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check quadrature exactness, scaling and the error bound.
    Quadcheck {
        #[arg(long)]
        m: usize,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Write the reference matrix as CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> gise::error::Result<u8> {
    match cli.command {
        Command::Solve { config, out } => {
            let run = cli::solve_config(&gise::config::RunConfig::load(&config)?, out.as_deref())?;
            for record in &run.outcome.trace {
                println!("{record}");
            }
            for w in &run.outcome.warnings {
                println!("warning: {w}");
            }
            let sol = &run.outcome.solution;
            println!(
                "status={} objective={:.12} K={} interfaces={:?}",
                run.outcome.solve.status,
                sol.objective,
                sol.mesh.len(),
                sol.interfaces_time()
            );
            println!("wrote {} and {}", run.solution_path.display(), run.csv_path.display());
            Ok(run.exit_code() as u8)
        }
        Command::Sweep { config, alphas, fixed_edges, out } => {
            let (rows, path) = cli::cmd_sweep(&config, &alphas, fixed_edges.as_deref(), out.as_deref())?;
            for r in &rows {
                println!(
                    "alpha={:<6} N={:<3} Lx={:<3} Lu={:<3} J={:<22.14e} last={:.3e} status={}",
                    r.alpha,
                    r.config.n,
                    r.config.lx,
                    r.config.lu,
                    r.objective,
                    r.max_last_coeff(),
                    r.status
                );
            }
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Quadcheck { m, alpha, dump } => {
            let checks = cli::quadcheck(m, alpha)?;
            for c in &checks {
                println!("{c}");
            }
            if let Some(path) = dump {
                cli::quadcheck_dump(m, alpha, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(if checks.iter().all(|c| c.pass) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
