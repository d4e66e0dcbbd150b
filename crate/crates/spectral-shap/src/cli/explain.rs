//! `explain`: spectrum + data + schema + queries to a SHAP CSV, a summary
//! JSON, the persisted encoding report and a run manifest.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use super::{ensure_dir, fmt_float, write_text, Context, RunManifest};
use crate::data::{
    encode_csv_with_report, load_csv, select_background, BackgroundSpec, BackgroundStrategy,
    Schema,
};
use crate::error::{Error, Result};
use crate::shap::{ShapEngine, ShapResult, Variant};
use crate::spectrum::read_spectrum_file;

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Spectrum file produced by `transform` or `approx`.
    #[arg(long)]
    pub spectrum: PathBuf,

    /// Data CSV providing the background distribution.
    #[arg(long)]
    pub data: PathBuf,

    /// Column schema JSON for both data and queries.
    #[arg(long)]
    pub schema: PathBuf,

    #[arg(long)]
    pub background_size: Option<usize>,

    /// Random background selection keyed by this seed; leading rows when
    /// absent.
    #[arg(long)]
    pub background_seed: Option<u64>,

    /// Query CSV with the same columns as the data file.
    #[arg(long)]
    pub queries: PathBuf,

    /// `base`, `precompute`, `sparse`, `positional`, or `all` (runs every
    /// variant and reports pairwise deviations).
    #[arg(long, default_value = "precompute")]
    pub variant: String,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Also report per-source-column attribution sums (one-hot groups).
    #[arg(long)]
    pub group_by_source: bool,
}

#[derive(Serialize)]
struct QuerySummary {
    query_id: usize,
    base_value: f64,
    prediction: f64,
    sum_phi: f64,
    efficiency_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_attributions: Option<Vec<SourceAttribution>>,
}

#[derive(Serialize)]
struct SourceAttribution {
    column: String,
    phi_sum: f64,
}

#[derive(Serialize)]
struct Summary {
    variant: String,
    n: usize,
    background_size: usize,
    queries: Vec<QuerySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant_max_pairwise_deviation: Option<f64>,
    warnings: Vec<String>,
}

pub fn run(ctx: &Context, args: ExplainArgs) -> Result<()> {
    let background_size = ctx.resolve(args.background_size, "explain", "background-size", 0);
    let variant_name = ctx.resolve(
        Some(args.variant.clone()),
        "explain",
        "variant",
        "precompute".into(),
    );

    let mut manifest = RunManifest::new(
        "explain",
        serde_json::json!({
            "spectrum": args.spectrum.display().to_string(),
            "data": args.data.display().to_string(),
            "schema": args.schema.display().to_string(),
            "queries": args.queries.display().to_string(),
            "background_size": background_size,
            "background_seed": args.background_seed,
            "variant": variant_name,
            "out": args.out.display().to_string(),
        }),
    );
    for input in [&args.spectrum, &args.data, &args.schema, &args.queries] {
        manifest.add_input(input)?;
    }

    manifest.start_phase("load");
    let spectrum = read_spectrum_file(&args.spectrum)?;
    let schema = Schema::from_file(&args.schema)?;
    let dataset = load_csv(&args.data, &schema)?;
    if dataset.n() != spectrum.n() {
        return Err(Error::DimensionMismatch {
            context: format!("{} vs {}", args.data.display(), args.spectrum.display()),
            expected: spectrum.n(),
            actual: dataset.n(),
        });
    }

    let background_size = if background_size == 0 {
        dataset.len()
    } else {
        background_size
    };
    let spec = BackgroundSpec {
        strategy: match args.background_seed {
            Some(seed) => BackgroundStrategy::Random { seed },
            None => BackgroundStrategy::FirstRows,
        },
        size: background_size,
    };
    let background = select_background(&dataset, &spec)?;

    let queries = encode_csv_with_report(&args.queries, &schema, &dataset.report)?;
    if queries.n() != spectrum.n() {
        return Err(Error::DimensionMismatch {
            context: format!("{} vs {}", args.queries.display(), args.spectrum.display()),
            expected: spectrum.n(),
            actual: queries.n(),
        });
    }
    let mut warnings = dataset.warnings.clone();
    warnings.extend(queries.warnings.clone());
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    if ctx.dry_run {
        println!(
            "dry-run: inputs ok ({} queries, {} background rows, n={})",
            queries.len(),
            background.len(),
            spectrum.n()
        );
        return Ok(());
    }

    manifest.start_phase("explain");
    let engine = ShapEngine::new(spectrum.clone(), background.clone())?;
    let (results, variant_dev, variant_used) = if variant_name == "all" {
        let mut per_variant: Vec<Vec<ShapResult>> = Vec::with_capacity(Variant::ALL.len());
        for v in Variant::ALL {
            per_variant.push(engine.batch_explain(&queries.rows, v)?);
        }
        let mut dev = 0.0f64;
        for a in 0..per_variant.len() {
            for b in a + 1..per_variant.len() {
                for (ra, rb) in per_variant[a].iter().zip(&per_variant[b]) {
                    for (x, y) in ra.attributions.iter().zip(&rb.attributions) {
                        dev = dev.max((x - y).abs());
                    }
                }
            }
        }
        println!("variant diff: max pairwise |delta phi| = {dev:.3e}");
        (per_variant.swap_remove(0), Some(dev), "all".to_string())
    } else {
        let variant: Variant = variant_name.parse()?;
        (
            engine.batch_explain(&queries.rows, variant)?,
            None,
            variant.name().to_string(),
        )
    };

    manifest.start_phase("write");
    ensure_dir(&args.out)?;

    // Long-form CSV, fixed column order and float format.
    let mut csv = String::from("query_id,feature_index,phi\n");
    for (qid, result) in results.iter().enumerate() {
        for (i, phi) in result.attributions.iter().enumerate() {
            csv.push_str(&format!("{qid},{i},{}\n", fmt_float(*phi)));
        }
    }
    write_text(&args.out.join("shap.csv"), &csv)?;

    let summaries: Vec<QuerySummary> = results
        .iter()
        .enumerate()
        .map(|(qid, r)| QuerySummary {
            query_id: qid,
            base_value: r.base_value,
            prediction: r.prediction,
            sum_phi: r.sum_phi(),
            efficiency_residual: r.efficiency_residual(),
            source_attributions: args.group_by_source.then(|| {
                dataset
                    .report
                    .groups
                    .iter()
                    .map(|g| SourceAttribution {
                        column: g.name.clone(),
                        phi_sum: (g.start..g.start + g.width)
                            .map(|i| r.attributions[i])
                            .sum(),
                    })
                    .collect()
            }),
        })
        .collect();
    let summary = Summary {
        variant: variant_used,
        n: spectrum.n(),
        background_size: background.len(),
        queries: summaries,
        variant_max_pairwise_deviation: variant_dev,
        warnings,
    };
    write_text(
        &args.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serialization cannot fail"),
    )?;
    dataset.report.write_file(&args.out.join("encoding_report.json"))?;
    manifest.write(&args.out.join("manifest.json"))?;

    println!(
        "explained {} queries over n={} with |D|={}; outputs in {}",
        results.len(),
        spectrum.n(),
        background.len(),
        args.out.display()
    );
    Ok(())
}
