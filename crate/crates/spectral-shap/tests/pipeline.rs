//! End-to-end library tests over the shipped fixture: CSV ingestion,
//! background selection, tree transform, explanation, and agreement with
//! the oracles.

use std::path::PathBuf;

use spectral_shap::data::{
    decode_row, load_csv, select_background, BackgroundSpec, BackgroundStrategy, Schema,
};
use spectral_shap::oracles::exact_shap_bruteforce;
use spectral_shap::synth;
use spectral_shap::tree::ensemble_to_spectrum;
use spectral_shap::{ShapEngine, Variant};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn load_fixture() -> spectral_shap::data::TabularDataset {
    let schema = Schema::from_file(&fixture("members.schema.json")).unwrap();
    load_csv(&fixture("members.csv"), &schema).unwrap()
}

#[test]
fn fixture_encodes_one_hot_groups() {
    let ds = load_fixture();
    // 1 binary + 5 regions + 4 age bins.
    assert_eq!(ds.n(), 10);
    assert_eq!(ds.len(), 120);
    for row in &ds.rows {
        let region_hot: usize = (1..6).filter(|&i| row.get(i)).count();
        let age_hot: usize = (6..10).filter(|&i| row.get(i)).count();
        assert_eq!(region_hot, 1);
        assert_eq!(age_hot, 1);
    }
    let decoded = decode_row(&ds.report, &ds.rows[0]).unwrap();
    assert_eq!(decoded[0], "1");
    assert_eq!(decoded[1], "north");
}

#[test]
fn background_seeds_give_different_selections() {
    let ds = load_fixture();
    let select = |seed| {
        select_background(
            &ds,
            &BackgroundSpec {
                strategy: BackgroundStrategy::Random { seed },
                size: 10,
            },
        )
        .unwrap()
    };
    let a = select(1);
    let b = select(2);
    assert_ne!(a.points(), b.points());
    // Same seed twice is identical.
    assert_eq!(a.points(), select(1).points());
}

#[test]
fn tree_pipeline_matches_oracle_on_fixture_data() {
    let ds = load_fixture();
    let n = ds.n();
    let ensemble = synth::random_ensemble(n, 6, 4, 2024);
    let spectrum = ensemble_to_spectrum(&ensemble).unwrap();
    let background = select_background(
        &ds,
        &BackgroundSpec {
            strategy: BackgroundStrategy::Random { seed: 3 },
            size: 12,
        },
    )
    .unwrap();
    let engine = ShapEngine::new(spectrum.clone(), background.clone()).unwrap();
    for query in ds.rows.iter().take(5) {
        let result = engine.shap_values(query, Variant::Sparse).unwrap();
        let oracle = exact_shap_bruteforce(&spectrum, query, &background).unwrap();
        for (a, b) in result.attributions.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(result.efficiency_residual().abs() <= 1e-9);
        assert!((result.prediction - ensemble.predict(query)).abs() <= 1e-9);
    }
}

#[test]
fn batch_explain_attaches_query_index_to_errors() {
    let ds = load_fixture();
    let ensemble = synth::random_ensemble(ds.n(), 3, 3, 7);
    let spectrum = ensemble_to_spectrum(&ensemble).unwrap();
    let background = select_background(
        &ds,
        &BackgroundSpec {
            strategy: BackgroundStrategy::FirstRows,
            size: 5,
        },
    )
    .unwrap();
    let engine = ShapEngine::new(spectrum, background).unwrap();
    let mut queries = ds.rows[..3].to_vec();
    queries.push(spectral_shap::PointVector::zeros(4)); // wrong dimension
    let err = engine.batch_explain(&queries, Variant::Base).unwrap_err();
    match err {
        spectral_shap::Error::QueryFailed { index, .. } => assert_eq!(index, 3),
        other => panic!("unexpected error {other:?}"),
    }
}
