//! Amortization in action: the transform is paid once, then a batch of
//! queries is explained by a linear pass per query, versus KernelSHAP
//! solving a sampled least-squares problem for every query from scratch.
//!
//! ```bash
//! cargo run --release --example amortized_batch
//! ```

use std::time::Instant;

use spectral_shap::oracles::{kernel_shap, r2_vector, KernelShapConfig};
use spectral_shap::synth;
use spectral_shap::{BackgroundDataset, ShapEngine, Variant};

fn main() {
    let n = 12;
    let spectrum = synth::random_spectrum(n, 64, 4, 31_337).unwrap();
    let background = BackgroundDataset::new(n, synth::random_points(n, 20, 31_338)).unwrap();
    let queries = synth::random_points(n, 50, 31_339);

    let start = Instant::now();
    let engine = ShapEngine::new(spectrum.clone(), background.clone()).unwrap();
    let batch = engine.batch_explain(&queries, Variant::Precompute).unwrap();
    let batch_s = start.elapsed().as_secs_f64();
    println!(
        "engine: {} queries in {batch_s:.4}s ({:.2}ms per query, cache shared)",
        queries.len(),
        1e3 * batch_s / queries.len() as f64
    );

    let start = Instant::now();
    let mut r2_total = 0.0;
    for (qi, q) in queries.iter().enumerate() {
        let config = KernelShapConfig {
            sample_factor: 1.0,
            rng_seed: qi as u64,
            ..KernelShapConfig::default()
        };
        let (phi, _) = kernel_shap(&spectrum, q, &background, &config).unwrap();
        r2_total += r2_vector(&phi, &batch[qi].attributions).unwrap();
    }
    let kernel_s = start.elapsed().as_secs_f64();
    println!(
        "kernel_shap at factor 1.0: {kernel_s:.4}s ({:.2}ms per query), mean r2 vs engine {:.6}",
        1e3 * kernel_s / queries.len() as f64,
        r2_total / queries.len() as f64
    );
    println!("amortized speedup: {:.1}x", kernel_s / batch_s);
}
