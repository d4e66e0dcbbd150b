//! `bench`: desk-scale wall-time and accuracy comparison of the engine
//! variants against KernelSHAP baselines, emitted as plot-ready CSV.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use super::{ensure_dir, fmt_float, write_text, Context, RunManifest};
use crate::data::{
    encode_csv_with_report, load_csv, select_background, BackgroundSpec, BackgroundStrategy,
    Schema,
};
use crate::error::{Error, Result};
use crate::oracles::{exact_shap_bruteforce, kernel_shap, r2_vector, KernelShapConfig};
use crate::shap::{ShapEngine, Variant};
use crate::spectrum::read_spectrum_file;

pub const BASELINE_FACTORS: [f64; 3] = [0.02, 0.1, 1.0];

/// Exact reference vectors are only computed up to this dimension.
const EXACT_DIM_CAP: usize = 12;

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub spectrum: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub schema: PathBuf,

    #[arg(long)]
    pub background_size: Option<usize>,

    #[arg(long)]
    pub background_seed: Option<u64>,

    #[arg(long)]
    pub queries: PathBuf,

    /// `all` or a comma-separated subset of
    /// base,precompute,sparse,positional.
    #[arg(long, default_value = "all")]
    pub variants: String,

    /// Timing repetitions per variant (mean and stddev reported).
    #[arg(long)]
    pub repeat: Option<usize>,

    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

struct BenchRow {
    method: String,
    sample_factor: Option<f64>,
    repeats: usize,
    mean_s: f64,
    std_s: f64,
    r2: Option<f64>,
}

pub fn run(ctx: &Context, args: BenchArgs) -> Result<()> {
    let repeat = ctx.resolve(args.repeat, "bench", "repeat", 1).max(1);
    let background_size = ctx.resolve(args.background_size, "bench", "background-size", 0);

    let mut manifest = RunManifest::new(
        "bench",
        serde_json::json!({
            "spectrum": args.spectrum.display().to_string(),
            "data": args.data.display().to_string(),
            "queries": args.queries.display().to_string(),
            "variants": args.variants,
            "repeat": repeat,
            "background_size": background_size,
            "background_seed": args.background_seed,
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
    let background = select_background(
        &dataset,
        &BackgroundSpec {
            strategy: match args.background_seed {
                Some(seed) => BackgroundStrategy::Random { seed },
                None => BackgroundStrategy::FirstRows,
            },
            size: background_size,
        },
    )?;
    let queries = encode_csv_with_report(&args.queries, &schema, &dataset.report)?;
    let n = spectrum.n();
    if !queries.is_empty() && queries.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("{} vs {}", args.queries.display(), args.spectrum.display()),
            expected: n,
            actual: queries.n(),
        });
    }

    let variants: Vec<Variant> = if args.variants == "all" {
        Variant::ALL.to_vec()
    } else {
        args.variants
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_>>()?
    };

    if ctx.dry_run {
        println!(
            "dry-run: inputs ok ({} queries, |D|={}, n={n}, {} variants, repeat {repeat})",
            queries.len(),
            background.len(),
            variants.len()
        );
        return Ok(());
    }

    ensure_dir(&args.out)?;
    let header = "method,sample_factor,repeats,wall_time_s_mean,wall_time_s_std,r2_vs_exact\n";
    if queries.is_empty() {
        write_text(&args.out.join("bench.csv"), header)?;
        manifest.write(&args.out.join("manifest.json"))?;
        println!("no queries; wrote header-only bench.csv");
        return Ok(());
    }

    // Exact reference for accuracy columns, affordable only at small n.
    manifest.start_phase("exact_reference");
    let exact: Option<Vec<Vec<f64>>> = if n <= EXACT_DIM_CAP {
        Some(
            queries
                .rows
                .iter()
                .map(|q| exact_shap_bruteforce(&spectrum, q, &background))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mean_r2 = |estimates: &[Vec<f64>]| -> Option<f64> {
        exact.as_ref().map(|truth| {
            let total: f64 = estimates
                .iter()
                .zip(truth)
                .map(|(e, t)| r2_vector(e, t).unwrap_or(f64::NEG_INFINITY))
                .sum();
            total / estimates.len() as f64
        })
    };

    let mut rows: Vec<BenchRow> = Vec::new();

    manifest.start_phase("variants");
    let engine = ShapEngine::new(spectrum.clone(), background.clone())?;
    for &variant in &variants {
        let mut times = Vec::with_capacity(repeat);
        let mut attributions = Vec::new();
        for _ in 0..repeat {
            let start = Instant::now();
            let results = engine.batch_explain(&queries.rows, variant)?;
            times.push(start.elapsed().as_secs_f64());
            attributions = results.into_iter().map(|r| r.attributions).collect();
        }
        let (mean_s, std_s) = mean_std(&times);
        rows.push(BenchRow {
            method: variant.name().to_string(),
            sample_factor: None,
            repeats: repeat,
            mean_s,
            std_s,
            r2: mean_r2(&attributions),
        });
    }

    manifest.start_phase("baselines");
    if n <= EXACT_DIM_CAP {
        for factor in BASELINE_FACTORS {
            let start = Instant::now();
            let mut estimates = Vec::with_capacity(queries.len());
            for (qi, q) in queries.rows.iter().enumerate() {
                let config = KernelShapConfig {
                    sample_factor: factor,
                    rng_seed: qi as u64,
                    ..KernelShapConfig::default()
                };
                let (phi, _) = kernel_shap(&spectrum, q, &background, &config)?;
                estimates.push(phi);
            }
            let elapsed = start.elapsed().as_secs_f64();
            rows.push(BenchRow {
                method: "kernel_shap".to_string(),
                sample_factor: Some(factor),
                repeats: 1,
                mean_s: elapsed,
                std_s: 0.0,
                r2: mean_r2(&estimates),
            });
        }
    } else {
        eprintln!("notice: n={n} > {EXACT_DIM_CAP}, kernel_shap baselines and r2 columns skipped");
    }

    manifest.start_phase("write");
    let mut csv = String::from(header);
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.method,
            row.sample_factor.map(|f| f.to_string()).unwrap_or_default(),
            row.repeats,
            fmt_float(row.mean_s),
            fmt_float(row.std_s),
            row.r2.map(fmt_float).unwrap_or_default(),
        ));
    }
    write_text(&args.out.join("bench.csv"), &csv)?;

    // Convergence report in the baseline-table layout.
    if n <= EXACT_DIM_CAP {
        let mut csv = String::from("sample_factor,wall_time_s,r2_vs_exact\n");
        for row in rows.iter().filter(|r| r.sample_factor.is_some()) {
            csv.push_str(&format!(
                "{},{},{}\n",
                row.sample_factor.unwrap(),
                fmt_float(row.mean_s),
                row.r2.map(fmt_float).unwrap_or_default(),
            ));
        }
        write_text(&args.out.join("convergence.csv"), &csv)?;
    }
    manifest.write(&args.out.join("manifest.json"))?;

    for row in &rows {
        println!(
            "{:<12} factor={:<6} mean={:.4}s std={:.4}s r2={}",
            row.method,
            row.sample_factor.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
            row.mean_s,
            row.std_s,
            row.r2.map(|r| format!("{r:.6}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (samples.len() - 1) as f64;
    (mean, var.sqrt())
}
