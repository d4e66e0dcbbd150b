//! `transform`: tree model file to exact spectrum file.
//! `approx`: query-access source to recovered spectrum file.

use std::path::PathBuf;

use clap::Args;

use super::{Context, RunManifest};
use crate::blackbox::{
    exhaustive_transform, fidelity_r2, low_degree_recovery, QueryHandle, RecoveryConfig,
    RecoveryMode,
};
use crate::error::{Error, Result};
use crate::spectrum::{prune, write_spectrum_file};
use crate::tree::{ensemble_to_spectrum, read_tree_model_file};

/// Preset pruning profile: keep 99.95% of the spectrum energy, never
/// dropping amplitudes of 0.005 or more.
pub const PRUNE_PRESET: (f64, f64) = (0.9995, 0.005);

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Tree ensemble model file (native JSON format).
    #[arg(long)]
    pub model: PathBuf,

    /// Output spectrum file.
    #[arg(long)]
    pub out: PathBuf,

    /// Keep the largest terms covering this fraction of spectrum energy
    /// (1.0 = no pruning).
    #[arg(long)]
    pub prune_energy: Option<f64>,

    /// Never drop a term with at least this coefficient magnitude.
    #[arg(long)]
    pub min_amp: Option<f64>,

    /// Apply the preset pruning profile (energy 0.9995, amplitude 0.005).
    #[arg(long)]
    pub prune_preset: bool,
}

pub fn run_transform(ctx: &Context, args: TransformArgs) -> Result<()> {
    let (preset_energy, preset_amp) = if args.prune_preset {
        (Some(PRUNE_PRESET.0), Some(PRUNE_PRESET.1))
    } else {
        (None, None)
    };
    let energy = ctx.resolve(
        args.prune_energy.or(preset_energy),
        "transform",
        "prune-energy",
        1.0,
    );
    let min_amp = ctx.resolve(args.min_amp.or(preset_amp), "transform", "min-amp", 0.0);

    let mut manifest = RunManifest::new(
        "transform",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "out": args.out.display().to_string(),
            "prune_energy": energy,
            "min_amp": min_amp,
        }),
    );
    manifest.add_input(&args.model)?;

    manifest.start_phase("load_model");
    let ensemble = read_tree_model_file(&args.model)?;

    if ctx.dry_run {
        println!(
            "dry-run: model ok ({} trees over {} features)",
            ensemble.trees.len(),
            ensemble.n_features
        );
        return Ok(());
    }

    manifest.start_phase("transform");
    let spectrum = ensemble_to_spectrum(&ensemble)?;
    manifest.start_phase("prune");
    let (pruned, report) = prune(&spectrum, energy, min_amp)?;
    manifest.start_phase("write");
    write_spectrum_file(&args.out, &pruned)?;
    let energy_path = args.out.with_extension("energy.json");
    super::write_text(
        &energy_path,
        &serde_json::to_string_pretty(&report).expect("report serialization cannot fail"),
    )?;
    manifest.write(&manifest_path(&args.out))?;

    println!(
        "wrote {} terms (dropped {}, kept {:.6} of {:.6} energy) to {}",
        pruned.support_size(),
        report.dropped_count,
        report.kept_energy,
        report.total_energy,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// Black-box source: `tree:<path>`, `spectrum:<path>`,
    /// `truth-table:<path>`, `parity`, `majority`, or
    /// `random-sparse:k,d,seed`.
    #[arg(long)]
    pub source: String,

    /// Dimension, required for synthetic sources.
    #[arg(long)]
    pub n: Option<usize>,

    /// `exhaustive` (n <= 24, exact) or `low-degree` (regression).
    #[arg(long, default_value = "low-degree")]
    pub mode: String,

    #[arg(long)]
    pub max_degree: Option<usize>,

    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long)]
    pub ridge: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Keep only this many coefficients by magnitude.
    #[arg(long)]
    pub top_k: Option<usize>,

    /// Fresh-sample count for the fidelity score (0 skips it).
    #[arg(long)]
    pub fidelity_samples: Option<usize>,

    /// Output spectrum file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_approx(ctx: &Context, args: ApproxArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "approx",
        serde_json::json!({
            "source": args.source,
            "mode": args.mode,
            "out": args.out.display().to_string(),
        }),
    );

    manifest.start_phase("load_source");
    let handle = build_handle(&args.source, args.n, &mut manifest)?;
    let n = handle.n();

    if ctx.dry_run {
        println!("dry-run: source ok (dimension {n})");
        return Ok(());
    }

    let mode = ctx.resolve(Some(args.mode.clone()), "approx", "mode", String::new());
    manifest.start_phase("recover");
    let (spectrum, recovery_report) = match mode.as_str() {
        "exhaustive" => (exhaustive_transform(&handle, n)?, None),
        "low-degree" => {
            let config = RecoveryConfig {
                mode: RecoveryMode::LowDegree,
                max_degree: ctx.resolve(args.max_degree, "approx", "max-degree", 2),
                num_samples: ctx.resolve(args.samples, "approx", "samples", 4096),
                ridge: ctx.resolve(args.ridge, "approx", "ridge", 1e-6),
                rng_seed: ctx.resolve(args.seed, "approx", "seed", 0),
                top_k: args.top_k,
            };
            let (s, r) = low_degree_recovery(&handle, n, &config)?;
            (s, Some(r))
        }
        other => {
            return Err(Error::InvalidParameter {
                name: "mode",
                message: format!("expected exhaustive or low-degree, got {other:?}"),
            })
        }
    };

    manifest.start_phase("write");
    write_spectrum_file(&args.out, &spectrum)?;
    if let Some(report) = &recovery_report {
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        let text = serde_json::json!({
            "samples_used": report.samples_used,
            "basis_size": report.basis_size,
            "condition_estimate": report.condition_estimate,
            "in_sample_r2": report.in_sample_r2,
            "warnings": report.warnings,
        });
        super::write_text(
            &args.out.with_extension("recovery.json"),
            &serde_json::to_string_pretty(&text).expect("serialization cannot fail"),
        )?;
    }

    let fidelity_samples = ctx.resolve(args.fidelity_samples, "approx", "fidelity-samples", 2048);
    if fidelity_samples >= 2 {
        manifest.start_phase("fidelity");
        let r2 = fidelity_r2(&handle, &spectrum, fidelity_samples, 0x5eed)?;
        println!("fidelity r2 on {fidelity_samples} fresh samples: {r2:.6}");
    }
    manifest.write(&manifest_path(&args.out))?;
    println!(
        "wrote {} terms (degree {}) to {}; {} queries issued",
        spectrum.support_size(),
        spectrum.degree(),
        args.out.display(),
        handle.query_count()
    );
    Ok(())
}

fn build_handle(source: &str, n: Option<usize>, manifest: &mut RunManifest) -> Result<QueryHandle> {
    if let Some(path) = source.strip_prefix("tree:") {
        let path = PathBuf::from(path);
        manifest.add_input(&path)?;
        QueryHandle::from_tree_model_file(&path)
    } else if let Some(path) = source.strip_prefix("spectrum:") {
        let path = PathBuf::from(path);
        manifest.add_input(&path)?;
        QueryHandle::from_spectrum_file(&path)
    } else if let Some(path) = source.strip_prefix("truth-table:") {
        let path = PathBuf::from(path);
        manifest.add_input(&path)?;
        QueryHandle::from_truth_table_csv(&path)
    } else {
        let n = n.ok_or_else(|| Error::InvalidParameter {
            name: "n",
            message: format!("synthetic source {source:?} needs --n"),
        })?;
        QueryHandle::synthetic(source, n)
    }
}

fn manifest_path(out: &std::path::Path) -> PathBuf {
    out.with_extension("manifest.json")
}
