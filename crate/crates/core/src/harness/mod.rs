//! Configuration, orchestration and reporting for the verification suites.

pub mod config;
pub mod experiments;
pub mod report;

use std::fs;
use std::io;
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind, Parameters};
pub use experiments::{run_experiment, ExperimentOutput};
pub use report::{ReportRow, Summary, CSV_HEADER, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool size.
    pub threads: Option<usize>,
    /// Fill the CSV runtime column (breaks byte-identical reruns).
    pub timing: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub runtime_s: f64,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// 0 iff every row passes.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }
}

/// Run the configured experiment and write `<experiment>.csv`,
/// `<experiment>.json` and any artifacts into the output directory.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(k) = opts.threads {
            b = b.num_threads(k);
        }
        b.build().map_err(|e| HarnessError::ThreadPool(e.to_string()))?
    };
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let output = pool.install(|| run_experiment(config.experiment, &config.parameters, config.seed))?;
    let runtime_s = start.elapsed().as_secs_f64();

    fs::create_dir_all(&config.output_dir)?;
    let name = config.experiment.name();
    let csv_path = config.output_dir.join(format!("{name}.csv"));
    report::write_csv_file(&csv_path, &output.rows, opts.timing)?;
    let summary = Summary::new(
        name,
        config.seed,
        threads,
        &config.parameters,
        &output.rows,
        runtime_s,
        &output.notes,
    );
    let json_path = config.output_dir.join(format!("{name}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n")?;
    for (file, contents) in &output.artifacts {
        fs::write(config.output_dir.join(file), contents)?;
    }
    Ok(RunOutcome {
        rows: output.rows,
        notes: output.notes,
        csv_path,
        json_path,
        runtime_s,
    })
}
