use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use knowlens_evalbench::experiment::{run_experiments, write_report, ExperimentFile, Suite};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synth,
    Accuracy,
    Timing,
}

/// Runs the synthetic, clustering-accuracy or timing experiments and writes
/// results.csv and manifest.json. Exits with status 1 if any threshold fails.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    command: Command,
    /// Experiment TOML; defaults to the built-in protocol for the command.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Base seed; experiment seeds become seed, seed + 1, ...
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let suite = match args.command {
        Command::Synth => Suite::Synth,
        Command::Accuracy => Suite::Accuracy,
        Command::Timing => Suite::Timing,
    };
    let mut file = match &args.config {
        Some(path) => match ExperimentFile::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentFile::default_for(suite),
    };
    file.experiments.retain(|e| e.suite() == suite);
    if let Some(seed) = args.seed {
        file.experiments.iter_mut().for_each(|e| e.reseed(seed));
    }
    let report = match run_experiments(&file) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_report(&args.out, &file, &report, args.seed) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for c in &report.checks {
        println!(
            "{} {}/{}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.experiment,
            c.name,
            c.detail
        );
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
