//! The full tabular pipeline as a library user sees it: schema, CSV
//! ingestion with one-hot encoding, background selection, and attributions
//! aggregated back onto the source columns.
//!
//! ```bash
//! cargo run --example csv_pipeline
//! ```

use spectral_shap::data::{
    decode_row, load_csv, select_background, BackgroundSpec, BackgroundStrategy, Schema,
};
use spectral_shap::synth;
use spectral_shap::tree::ensemble_to_spectrum;
use spectral_shap::{ShapEngine, Variant};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("members.csv");
    let mut csv = String::from("insured,region,age\n");
    for i in 0..60 {
        let region = ["north", "south", "east"][i % 3];
        let insured = (i * 5 + 1) % 7 % 2;
        let age = 20 + (i * 11) % 50;
        csv.push_str(&format!("{insured},{region},{age}\n"));
    }
    std::fs::write(&csv_path, csv).unwrap();

    let schema = Schema::from_json(
        r#"[{"name": "insured", "kind": "binary"},
            {"name": "region", "kind": "categorical"},
            {"name": "age", "kind": "continuous", "bins": 4}]"#,
    )
    .unwrap();

    let dataset = load_csv(&csv_path, &schema).unwrap();
    println!(
        "encoded {} rows into {} binary features:",
        dataset.len(),
        dataset.n()
    );
    for group in &dataset.report.groups {
        let detail = match group.kind.as_str() {
            "categorical" => format!("levels {:?}", group.levels),
            "continuous" => format!("edges {:?}", group.edges),
            _ => "0/1".to_string(),
        };
        println!(
            "  {:<8} [{}..{}] {detail}",
            group.name,
            group.start,
            group.start + group.width
        );
    }

    // A model over the encoded features; in practice this comes from
    // `transform` or `approx`.
    let ensemble = synth::random_ensemble(dataset.n(), 10, 4, 77);
    let spectrum = ensemble_to_spectrum(&ensemble).unwrap();

    let background = select_background(
        &dataset,
        &BackgroundSpec {
            strategy: BackgroundStrategy::Random { seed: 1 },
            size: 20,
        },
    )
    .unwrap();
    let engine = ShapEngine::new(spectrum, background).unwrap();

    let query = dataset.rows[3].clone();
    println!(
        "\nexplaining row 3 = {:?}",
        decode_row(&dataset.report, &query).unwrap()
    );
    let result = engine.shap_values(&query, Variant::Precompute).unwrap();
    println!(
        "prediction {:+.4}, background mean {:+.4}",
        result.prediction, result.base_value
    );

    // Per-source aggregation: sum member coordinates of each one-hot group.
    for group in &dataset.report.groups {
        let phi: f64 = (group.start..group.start + group.width)
            .map(|i| result.attributions[i])
            .sum();
        println!("  {:<8} phi = {phi:+.4}", group.name);
    }
    println!(
        "residual of the efficiency identity: {:+.1e}",
        result.efficiency_residual()
    );
}
