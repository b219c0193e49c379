//! `odecg` — dynamic-feature waveform classification pipeline.
//!
//! Subcommands cover the full workflow: synthesize labeled corpora, extract
//! per-lead dynamic features, evaluate classifiers under stratified CV,
//! compare the ODE reconstruction against a spline baseline, and fetch
//! single files over HTTP.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "odecg",
    version,
    about = "Dynamic-feature waveform classification via time-varying second-order ODEs"
)]
struct Cli {
    /// Worker threads for parallel stages (default: ODECG_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-lead features from every record in a manifest.
    Featurize {
        /// Manifest CSV (record_id,label); records resolve next to it.
        #[arg(long)]
        manifest: PathBuf,
        /// Flat key-value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// key=value overrides on top of the config file.
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Output directory (features.csv, rejects.csv, config_used.txt).
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated classification reports from a features file.
    Evaluate {
        /// Features CSV produced by `featurize`.
        #[arg(long)]
        features: PathBuf,
        /// binary | multiclass | auto (by label arity).
        #[arg(long, default_value = "auto")]
        task: String,
        /// Lead sets: `all12` (Table-style layout), `each`, a single lead,
        /// or a comma list evaluated as one combined set.
        #[arg(long, default_value = "all12")]
        leads: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Optional CSV record_id,subject for subject-level folds.
        #[arg(long)]
        subjects: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic WFDB corpus from a spec file.
    Synth {
        /// Sectioned spec: global keys plus one [class NAME] per class.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ODE reconstruction vs cubic spline on one lead of one record.
    CompareSpline {
        /// Path to the record's .hea or .csv file.
        #[arg(long)]
        record: PathBuf,
        /// Lead name, e.g. ii.
        #[arg(long)]
        lead: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Download a single file over HTTP(S), optionally checksum-verified.
    Fetch {
        #[arg(long)]
        url: String,
        /// Expected SHA-256 (hex); mismatches delete the download.
        #[arg(long)]
        sha256: Option<String>,
        /// Destination file path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_workers(requested: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        let n = requested.or_else(|| {
            std::env::var("ODECG_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        });
        if let Some(n) = n {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Featurize {
            manifest,
            config,
            sets,
            out,
        } => {
            let cfg = PipelineConfig::resolve(config.as_deref(), &sets)?;
            commands::cmd_featurize(&manifest, &cfg, &out)
        }
        Command::Evaluate {
            features,
            task,
            leads,
            config,
            sets,
            subjects,
            out,
        } => {
            let cfg = PipelineConfig::resolve(config.as_deref(), &sets)?;
            commands::cmd_evaluate(&features, &task, &leads, &cfg, subjects.as_deref(), &out)
        }
        Command::Synth { spec, out } => commands::cmd_synth(&spec, &out),
        Command::CompareSpline {
            record,
            lead,
            config,
            sets,
            out,
        } => {
            let cfg = PipelineConfig::resolve(config.as_deref(), &sets)?;
            commands::cmd_compare_spline(&record, &lead, &cfg, &out)
        }
        Command::Fetch { url, sha256, out } => commands::cmd_fetch(&url, sha256.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One machine-parsable line on stderr.
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
