use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use owlab_cli::config::parse_seed;
use owlab_cli::{run_experiment, Config, ExperimentConfig, RunError, DEFAULT_SEED};

/// Run one numerical experiment and write its CSV tables.
#[derive(Parser, Debug)]
#[command(name = "owlab", version)]
struct Args {
    /// Experiment name, e.g. `p22` or `ap-estimate`.
    experiment: String,
    /// Keyed-text configuration file (`section.key = value` per line).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; decimal or 0x-prefixed hex. Overrides `run.seed`.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Output directory. Overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Overrides `run.threads`.
    #[arg(long)]
    threads: Option<usize>,
}

fn resolve(args: Args) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let config = Config::parse(&text)?;
    let seed = match (args.seed, config.raw("run.seed")) {
        (Some(s), _) => s,
        (None, Some(s)) => parse_seed(s).map_err(RunError::Invalid)?,
        (None, None) => DEFAULT_SEED,
    };
    let out = match args.out {
        Some(o) => o,
        None => PathBuf::from(config.get("run.out", ".".to_string())?),
    };
    let threads = match args.threads {
        Some(t) => Some(t),
        None if config.contains("run.threads") => Some(config.require::<usize>("run.threads")?),
        None => None,
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| RunError::Invalid(format!("thread pool: {e}")))?;
    }
    Ok(ExperimentConfig { experiment: args.experiment, config, seed, out })
}

fn main() -> ExitCode {
    // usage errors exit 1; status 2 is reserved for failed preconditions
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match resolve(args).and_then(|run| run_experiment(&run)) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("owlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
