//! Seeded generators for synthetic spectra, trees and points. Everything is
//! keyed by an explicit seed so suites and benchmarks reproduce exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectrum::{degree_support_count, Frequency, PointVector, SparseSpectrum};
use crate::tree::{TreeEnsemble, TreeNode};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` distinct frequencies of degree at most `max_degree`, coefficients
/// uniform in [-1, 1] bounded away from zero.
pub fn random_spectrum(n: usize, k: usize, max_degree: usize, seed: u64) -> Result<SparseSpectrum> {
    let capacity = degree_support_count(n, max_degree.min(n))?;
    if (k as u128) > capacity {
        return Err(Error::InvalidParameter {
            name: "k",
            message: format!("{k} exceeds the {capacity} frequencies of degree <= {max_degree}"),
        });
    }
    let mut rng = seeded_rng(seed);
    let mut seen = std::collections::HashSet::new();
    let mut terms = Vec::with_capacity(k);
    while terms.len() < k {
        let f = random_frequency(n, max_degree, &mut rng);
        if seen.insert(f.clone()) {
            let mut c: f64 = rng.random_range(-1.0..1.0);
            if c.abs() < 1e-3 {
                c = if c < 0.0 { c - 1e-3 } else { c + 1e-3 };
            }
            terms.push((f, c));
        }
    }
    SparseSpectrum::from_terms(n, terms)
}

fn random_frequency(n: usize, max_degree: usize, rng: &mut ChaCha8Rng) -> Frequency {
    let degree = rng.random_range(0..=max_degree.min(n));
    let mut indices = Vec::with_capacity(degree);
    while indices.len() < degree {
        let i = rng.random_range(0..n);
        if !indices.contains(&i) {
            indices.push(i);
        }
    }
    indices.sort_unstable();
    Frequency::from_indices(n, &indices).expect("indices are in range")
}

pub fn random_point(n: usize, rng: &mut ChaCha8Rng) -> PointVector {
    PointVector::from_bools(&(0..n).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
}

pub fn random_points(n: usize, count: usize, seed: u64) -> Vec<PointVector> {
    let mut rng = seeded_rng(seed);
    (0..count).map(|_| random_point(n, &mut rng)).collect()
}

/// Random tree of depth at most `max_depth`: interior nodes split on a
/// uniform feature and recurse with probability 3/4, leaves are U[-1, 1].
pub fn random_tree(n: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
    fn build(n: usize, depth_left: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        if depth_left == 0 || rng.random_range(0..4) == 0 {
            TreeNode::leaf(rng.random_range(-1.0..1.0))
        } else {
            let feature = rng.random_range(0..n);
            TreeNode::split(
                feature,
                build(n, depth_left - 1, rng),
                build(n, depth_left - 1, rng),
            )
        }
    }
    build(n, max_depth, rng)
}

/// Ensemble of `num_trees` random trees with uniform 1/T weights.
pub fn random_ensemble(n: usize, num_trees: usize, max_depth: usize, seed: u64) -> TreeEnsemble {
    let mut rng = seeded_rng(seed);
    let roots = (0..num_trees)
        .map(|_| random_tree(n, max_depth, &mut rng))
        .collect();
    TreeEnsemble::averaged(n, roots).expect("generated features are in range")
}
