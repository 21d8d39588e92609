use clap::{Parser, Subcommand};
use spectral_burgers::config::ExperimentConfig;
use spectral_burgers::experiments;
use spectral_burgers::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 pass, 1 acceptance failure, 2 config error, 3 numerical failure.
#[derive(Parser)]
#[command(name = "sburg", version, about = "Stochastic Burgers simulation and verification runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the worker count from the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment named in the config.
    Run { config: PathBuf },
    /// Run the moment experiment for every viscosity in the config's list
    /// and check monotone approach to the limiting value.
    Sweep { config: PathBuf },
    /// Run the bound audits with the config's parameters.
    Audit { config: PathBuf },
    /// Replay a stored forcing dump through both grid solvers.
    Replay {
        dump: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 256)]
        grid_points: usize,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
}

fn load(path: &PathBuf, cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => load(config, &cli).and_then(|c| experiments::run(&c)),
        Command::Sweep { config } => load(config, &cli).and_then(|c| experiments::sweep(&c)),
        Command::Audit { config } => load(config, &cli).and_then(|c| experiments::audit(&c)),
        Command::Replay {
            dump,
            epsilon,
            grid_points,
            output,
        } => {
            return match experiments::replay(dump, *epsilon, *grid_points, output) {
                Ok(report) => {
                    println!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            };
        }
    };
    match outcome {
        Ok(manifest) => {
            println!(
                "{} finished: hash {} ({:.2}s)",
                serde_json::to_string(&manifest.experiment).unwrap_or_default(),
                manifest.config_hash,
                manifest.wall_time_secs
            );
            println!("{}", manifest.summary);
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::BadDump(_) => ExitCode::from(2),
        Error::AcceptanceFailed(_) => ExitCode::from(1),
        _ => ExitCode::from(3),
    }
}
