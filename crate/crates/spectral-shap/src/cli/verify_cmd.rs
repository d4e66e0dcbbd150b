//! `verify`: run the randomized property suites and exit nonzero on the
//! first violated tolerance.

use clap::Args;

use super::{ensure_dir, fmt_float, write_text, Context, OutDirArg, RunManifest};
use crate::error::{Error, Result};
use crate::verify::{run_suites, VerifyConfig};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Dimension (brute-force legs cap this at 12).
    #[arg(long)]
    pub n: Option<usize>,

    /// Support size of the random spectra.
    #[arg(long)]
    pub k: Option<usize>,

    /// Maximum frequency degree of the random spectra.
    #[arg(long)]
    pub dd: Option<usize>,

    #[arg(long)]
    pub trials: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Diagnostic negative control: corrupt the weight table and expect the
    /// suites to fail.
    #[arg(long, hide = true)]
    pub corrupt_weight_table: bool,

    #[command(flatten)]
    pub out: OutDirArg,
}

pub fn run(ctx: &Context, args: VerifyArgs) -> Result<()> {
    let config = VerifyConfig {
        n: ctx.resolve(args.n, "verify", "n", 10),
        k: ctx.resolve(args.k, "verify", "k", 32),
        max_degree: ctx.resolve(args.dd, "verify", "dd", 3),
        trials: ctx.resolve(args.trials, "verify", "trials", 20),
        seed: ctx.resolve(args.seed, "verify", "seed", 0),
        corrupt_weight_table: args.corrupt_weight_table,
    };
    let mut manifest = RunManifest::new(
        "verify",
        serde_json::json!({
            "n": config.n,
            "k": config.k,
            "dd": config.max_degree,
            "trials": config.trials,
            "seed": config.seed,
        }),
    );

    if ctx.dry_run {
        println!("dry-run: verify config ok ({config:?})");
        return Ok(());
    }

    manifest.start_phase("suites");
    let report = run_suites(&config)?;
    for suite in &report.suites {
        println!(
            "{:<24} cases={:<5} max_deviation={:<12.3e} tolerance={:<9.1e} {}",
            suite.name,
            suite.cases,
            suite.max_deviation,
            suite.tolerance,
            if suite.pass { "ok" } else { "FAIL" }
        );
    }

    manifest.start_phase("write");
    ensure_dir(&args.out.out)?;
    let mut csv = String::from("suite,cases,max_deviation,tolerance,pass\n");
    for suite in &report.suites {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            suite.name,
            suite.cases,
            fmt_float(suite.max_deviation),
            fmt_float(suite.tolerance),
            suite.pass
        ));
    }
    write_text(&args.out.out.join("verify.csv"), &csv)?;
    manifest.write(&args.out.out.join("manifest.json"))?;

    if let Some(failure) = report.first_failure() {
        return Err(Error::PropertyFailure {
            property: failure.name.to_string(),
            detail: format!(
                "max deviation {:.3e} exceeds tolerance {:.1e}; reproduce with seed {}",
                failure.max_deviation, failure.tolerance, failure.worst_seed
            ),
        });
    }
    println!("all suites passed");
    Ok(())
}
