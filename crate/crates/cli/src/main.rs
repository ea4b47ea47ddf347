use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gemdiff::harness::{self, ExperimentKind, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "gemdiff", version, about = "Verification experiments for GEM diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    #[command(after_long_help = defaults_help())]
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "GEMDIFF_THREADS")]
        threads: Option<usize>,
        /// Record per-row wall time in the CSV (reruns then differ).
        #[arg(long)]
        timing: bool,
    },
    /// List experiment names.
    ListExperiments,
}

fn defaults_help() -> String {
    let mut s = String::from("Parameter defaults by experiment:\n");
    for k in ExperimentKind::ALL {
        s.push_str(&format!("  {:<24} {}\n", k.name(), k.defaults()));
    }
    s.push_str("\nExit status: 0 if every row passes, 1 on failing rows or runtime errors, 2 on config errors.");
    s
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, threads: Option<usize>, timing: bool) -> Result<i32, HarnessError> {
    let text = std::fs::read_to_string(&config).map_err(|e| {
        HarnessError::Config(harness::ConfigError {
            field: None,
            line: None,
            message: format!("cannot read {}: {e}", config.display()),
        })
    })?;
    let mut cfg = harness::parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if threads == Some(0) {
        return Err(HarnessError::Config(harness::ConfigError {
            field: Some("threads".into()),
            line: None,
            message: "must be at least 1".into(),
        }));
    }
    let outcome = harness::run(&cfg, &RunOptions { threads, timing })?;
    let failed = outcome.rows.iter().filter(|r| !r.pass).count();
    for r in outcome.rows.iter().filter(|r| !r.pass) {
        eprintln!("FAIL {}: estimate {} (analytic {:?}, tolerance {})", r.quantity, r.estimate, r.analytic, r.tolerance);
    }
    println!(
        "{}: {}/{} rows pass in {:.1}s; wrote {}",
        cfg.experiment,
        outcome.rows.len() - failed,
        outcome.rows.len(),
        outcome.runtime_s,
        outcome.csv_path.display()
    );
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<24} {}", k.name(), k.description());
            }
            0
        }
        Command::Run {
            config,
            seed,
            out,
            threads,
            timing,
        } => match run(config, seed, out, threads, timing) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
