use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ridgeapprox_cli::{run, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ridgeapprox",
    version,
    about = "Gradient-based ridge approximation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error and bounds as a function of the projector rank
    Curve(RunArgs),
    /// Projectors from small-sample H estimates scored against a reference
    Audit(RunArgs),
    /// Eigenvalue spectra, bases and mode fields
    Spectrum(RunArgs),
    /// Sobol' indices with DGSM bounds
    Sobol(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `sampling.seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; affects speed only
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(experiment: Experiment, args: RunArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    }
    let out = args.out.unwrap_or_else(|| cfg.output_dir.clone());
    for path in run(experiment, &cfg, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Curve(a) => (Experiment::Curve, a),
        Command::Audit(a) => (Experiment::Audit, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Sobol(a) => (Experiment::Sobol, a),
    };
    match execute(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
