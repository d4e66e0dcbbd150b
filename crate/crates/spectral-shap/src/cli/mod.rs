//! Command-line surface: `transform`, `approx`, `explain`, `verify`,
//! `bench`. The binary is a thin wrapper; everything here is ordinary
//! library code so the pipeline is scriptable from tests and examples too.

mod bench;
mod explain;
mod manifest;
mod transform;
mod verify_cmd;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use manifest::RunManifest;

use crate::error::{Error, Result};

/// Environment variable naming the default worker-pool cap.
pub const THREADS_ENV: &str = "SPECTRAL_SHAP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "spectral-shap",
    version,
    about = "Exact interventional SHAP values from sparse Walsh-Hadamard spectra"
)]
pub struct Cli {
    /// Worker-pool cap; defaults to SPECTRAL_SHAP_THREADS or all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Validate inputs and parameters without writing any outputs.
    #[arg(long, global = true)]
    pub dry_run: bool,

    /// JSON file mirroring the flags; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact spectrum of a tree-ensemble model file, with optional pruning.
    Transform(transform::TransformArgs),
    /// Recover a spectrum from a query-access source.
    Approx(transform::ApproxArgs),
    /// SHAP values for a query file against a spectrum and background data.
    Explain(explain::ExplainArgs),
    /// Randomized property suites with hard tolerances.
    Verify(verify_cmd::VerifyArgs),
    /// Wall-time and accuracy comparison of engine variants and baselines.
    Bench(bench::BenchArgs),
}

/// Shared global options after config-file resolution.
#[derive(Debug, Clone)]
pub struct Context {
    pub dry_run: bool,
    pub config: serde_json::Value,
}

impl Context {
    /// Config lookup with flag precedence: `flag` beats
    /// `config[command][key]` beats `config[key]` beats `default`.
    pub fn resolve<T: Clone + serde::de::DeserializeOwned>(
        &self,
        flag: Option<T>,
        command: &str,
        key: &str,
        default: T,
    ) -> T {
        if let Some(v) = flag {
            return v;
        }
        [self.config.get(command).and_then(|s| s.get(key)), self.config.get(key)]
            .into_iter()
            .flatten()
            .find_map(|value| serde_json::from_value(value.clone()).ok())
            .unwrap_or(default)
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.clone(),
                source: e,
            })?
        }
        None => serde_json::Value::Null,
    };
    let ctx = Context {
        dry_run: cli.dry_run,
        config,
    };

    let threads = cli
        .threads
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or_else(|| {
            ctx.config
                .get("threads")
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
        });
    if let Some(threads) = threads {
        // A second initialization in the same process is fine; results are
        // thread-count invariant by the engine's reduction contract.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }

    match cli.command {
        Command::Transform(args) => transform::run_transform(&ctx, args),
        Command::Approx(args) => transform::run_approx(&ctx, args),
        Command::Explain(args) => explain::run(&ctx, args),
        Command::Verify(args) => verify_cmd::run(&ctx, args),
        Command::Bench(args) => bench::run(&ctx, args),
    }
}

/// Fixed 17-significant-digit float formatting for CSV artifacts; parses
/// back to the identical f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Common output-directory arguments.
#[derive(Debug, Args)]
pub struct OutDirArg {
    /// Output directory for reports and the run manifest.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub(crate) fn ensure_dir(path: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
