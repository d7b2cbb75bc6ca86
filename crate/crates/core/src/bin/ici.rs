use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ici_core::harness::{execute, parse_config, write_outputs, ExperimentKind, ExperimentSpec, HarnessError};

#[derive(Parser)]
#[command(name = "ici", version, about = "Inter-cell interference detection and whitening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its CSVs and manifest.
    Run {
        config: PathBuf,
        /// Master seed, overriding `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Validate and print the plan without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Parse and validate a config, then print it fully resolved.
    Validate { config: PathBuf },
}

fn plan(spec: &ExperimentSpec) -> String {
    let e = &spec.experiment;
    let tasks = match e.kind {
        ExperimentKind::Bernstein => e.grid.len() * spec.bernstein.t_s.len() * spec.bernstein.sigma_m.len(),
        _ => e.grid.len() * e.n_drops,
    };
    let detectors: Vec<&str> = e.detectors.iter().map(|d| d.name()).collect();
    format!(
        "kind {} | grid {:?} | drops {} | detectors [{}] | master seed {} | {} tasks | output {}",
        e.kind,
        e.grid,
        e.n_drops,
        detectors.join(", "),
        spec.master_seed(),
        tasks,
        e.output_dir.display()
    )
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Validate { config } => {
            let spec = parse_config(&config)?;
            print!("{}", spec.to_toml());
            Ok(())
        }
        Command::Run { config, seed, out, jobs, dry_run } => {
            let mut spec = parse_config(&config)?;
            if let Some(s) = seed {
                spec.scenario.seed = s;
            }
            if let Some(dir) = out {
                spec.experiment.output_dir = dir;
            }
            if jobs == Some(0) {
                return Err(HarnessError::InvalidSpec("--jobs must be at least 1".into()));
            }
            println!("{}", plan(&spec));
            if dry_run {
                return Ok(());
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| HarnessError::InvalidSpec(format!("thread pool: {e}")))?;
            let output = pool.install(|| execute(&spec))?;
            let summary = write_outputs(&spec, &output, &spec.experiment.output_dir)?;
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", summary.manifest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
