//! Spectrum recovery with query access only: exhaustive transform for a
//! small model, low-degree regression for a larger one, fidelity scores and
//! query accounting for both.
//!
//! ```bash
//! cargo run --example blackbox_recovery
//! ```

use spectral_shap::blackbox::{
    exhaustive_transform, fidelity_r2, low_degree_recovery, QueryHandle, RecoveryConfig,
    RecoveryMode,
};
use spectral_shap::spectrum::degree_support_count;
use spectral_shap::synth;

fn main() {
    // Small dimension: query every point once, recover exactly.
    let ensemble = synth::random_ensemble(10, 8, 3, 101);
    let handle = QueryHandle::from_ensemble(ensemble);
    let exact = exhaustive_transform(&handle, 10).unwrap();
    println!(
        "exhaustive: {} queries -> {} terms, degree {}, fidelity r2 = {:.6}",
        handle.query_count(),
        exact.support_size(),
        exact.degree(),
        fidelity_r2(&handle, &exact, 2000, 1).unwrap()
    );

    // Larger dimension: fit the degree-2 basis from uniform samples.
    let n = 24;
    let planted = synth::random_spectrum(n, 30, 2, 55).unwrap();
    let handle = QueryHandle::from_spectrum(planted.clone());
    let basis = degree_support_count(n, 2).unwrap() as usize;
    let config = RecoveryConfig {
        mode: RecoveryMode::LowDegree,
        max_degree: 2,
        num_samples: 4 * basis,
        ridge: 1e-6,
        rng_seed: 3,
        top_k: Some(30),
    };
    let (recovered, report) = low_degree_recovery(&handle, n, &config).unwrap();
    println!(
        "low-degree: {} samples over a {}-function basis, condition ~ {:.1e}",
        report.samples_used, report.basis_size, report.condition_estimate
    );
    let mut worst = 0.0f64;
    for (f, c) in planted.terms() {
        worst = worst.max((recovered.coefficient(f).unwrap_or(0.0) - c).abs());
    }
    println!(
        "recovered {} terms, worst planted-coefficient error {worst:.2e}, in-sample r2 = {:.8}",
        recovered.support_size(),
        report.in_sample_r2
    );
    println!(
        "fresh-sample fidelity r2 = {:.8}",
        fidelity_r2(&handle, &recovered, 4000, 9).unwrap()
    );
}
