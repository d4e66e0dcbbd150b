//! Spectrum recovery for query-access models: exhaustive transform for
//! small dimensions, ridge-regularized low-degree regression for larger
//! ones, and fidelity scoring for the result.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::oracles::r2_vector;
use crate::predictor::Predictor;
use crate::spectrum::{
    degree_support_count, dense_wht, Frequency, PointVector, SparseSpectrum,
    ZERO_DROP_THRESHOLD,
};
use crate::synth;
use crate::tree::read_tree_model_file;

/// Practical cap on the low-degree basis: the regression materializes a
/// `p x p` normal matrix.
const BASIS_GUARD: u128 = 4096;

/// A black-box evaluator with a monotone query counter. Evaluators must be
/// deterministic; `thread_safe` declares whether queries may be issued
/// concurrently.
pub struct QueryHandle {
    n: usize,
    eval: Arc<dyn Fn(&PointVector) -> f64 + Send + Sync>,
    counter: AtomicU64,
    thread_safe: bool,
}

impl QueryHandle {
    pub fn from_fn(
        n: usize,
        eval: impl Fn(&PointVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        QueryHandle {
            n,
            eval: Arc::new(eval),
            counter: AtomicU64::new(0),
            thread_safe: true,
        }
    }

    /// Marks the handle as not safe for concurrent queries; samplers fall
    /// back to sequential evaluation.
    pub fn single_threaded(mut self) -> Self {
        self.thread_safe = false;
        self
    }

    pub fn from_spectrum(spectrum: SparseSpectrum) -> Self {
        let n = spectrum.n();
        Self::from_fn(n, move |x| spectrum.evaluate(x).expect("dimension fixed"))
    }

    pub fn from_ensemble(ensemble: crate::tree::TreeEnsemble) -> Self {
        let n = ensemble.n_features;
        Self::from_fn(n, move |x| ensemble.predict(x))
    }

    pub fn from_spectrum_file(path: &Path) -> Result<Self> {
        Ok(Self::from_spectrum(crate::spectrum::read_spectrum_file(
            path,
        )?))
    }

    pub fn from_tree_model_file(path: &Path) -> Result<Self> {
        Ok(Self::from_ensemble(read_tree_model_file(path)?))
    }

    /// Loads a full truth table: one row per point with `n` bit columns
    /// followed by a value column, all `2^n` rows present in any order.
    pub fn from_truth_table_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Csv {
                path: path.into(),
                source: e,
            })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path.into(),
                source: e,
            })?
            .len();
        if headers < 2 {
            return Err(Error::schema(
                "/header",
                "truth table needs bit columns plus a value column",
            ));
        }
        let n = headers - 1;
        if n > 24 {
            return Err(Error::ResourceGuard(format!(
                "truth table of dimension {n} exceeds cap 24"
            )));
        }
        let mut values = vec![f64::NAN; 1usize << n];
        let mut seen = 0usize;
        for (ri, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv {
                path: path.into(),
                source: e,
            })?;
            let line = ri + 2;
            let mut bits = Vec::with_capacity(n);
            for c in 0..n {
                match record.get(c).map(str::trim) {
                    Some("0") => bits.push(0u8),
                    Some("1") => bits.push(1u8),
                    other => {
                        return Err(Error::MalformedCell {
                            line,
                            column: format!("bit {c}"),
                            value: other.unwrap_or("").to_string(),
                        })
                    }
                }
            }
            let value: f64 = record
                .get(n)
                .map(str::trim)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::MalformedCell {
                    line,
                    column: "value".into(),
                    value: record.get(n).unwrap_or("").to_string(),
                })?;
            let idx = PointVector::from_bits(&bits)?
                .truth_table_index()
                .expect("n <= 24") as usize;
            if values[idx].is_nan() {
                seen += 1;
            }
            values[idx] = value;
        }
        if seen != values.len() {
            return Err(Error::schema(
                "/rows",
                format!("truth table covers {seen} of {} points", values.len()),
            ));
        }
        Ok(Self::from_fn(n, move |x| {
            values[x.truth_table_index().expect("n <= 24") as usize]
        }))
    }

    /// Named synthetic generators: `parity`, `majority`, and
    /// `random-sparse:k,d,seed`.
    pub fn synthetic(name: &str, n: usize) -> Result<Self> {
        match name {
            "parity" => Ok(Self::from_fn(n, move |x| {
                if x.bits().iter().map(|b| *b as usize).sum::<usize>() % 2 == 1 {
                    -1.0
                } else {
                    1.0
                }
            })),
            "majority" => Ok(Self::from_fn(n, move |x| {
                let ones = 2 * x.bits().iter().map(|b| *b as usize).sum::<usize>();
                if ones > n {
                    1.0
                } else if ones < n {
                    -1.0
                } else {
                    0.0
                }
            })),
            other => {
                if let Some(args) = other.strip_prefix("random-sparse:") {
                    let parts: Vec<&str> = args.split(',').collect();
                    if parts.len() != 3 {
                        return Err(Error::InvalidParameter {
                            name: "synthetic",
                            message: "random-sparse takes k,d,seed".into(),
                        });
                    }
                    let k: usize = parts[0].trim().parse().map_err(|_| Error::InvalidParameter {
                        name: "synthetic",
                        message: format!("bad k {:?}", parts[0]),
                    })?;
                    let d: usize = parts[1].trim().parse().map_err(|_| Error::InvalidParameter {
                        name: "synthetic",
                        message: format!("bad d {:?}", parts[1]),
                    })?;
                    let seed: u64 = parts[2].trim().parse().map_err(|_| Error::InvalidParameter {
                        name: "synthetic",
                        message: format!("bad seed {:?}", parts[2]),
                    })?;
                    Ok(Self::from_spectrum(synth::random_spectrum(n, k, d, seed)?))
                } else {
                    Err(Error::InvalidParameter {
                        name: "synthetic",
                        message: format!("unknown generator {other:?}"),
                    })
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn query_count(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn thread_safe(&self) -> bool {
        self.thread_safe
    }

    pub fn query(&self, x: &PointVector) -> f64 {
        self.counter.fetch_add(1, Ordering::Relaxed);
        (self.eval)(x)
    }

    /// Evaluates a batch, in parallel when the handle allows it; outputs are
    /// in input order either way.
    pub fn query_batch(&self, points: &[PointVector]) -> Vec<f64> {
        if self.thread_safe {
            self.counter
                .fetch_add(points.len() as u64, Ordering::Relaxed);
            points.par_iter().map(|x| (self.eval)(x)).collect()
        } else {
            points.iter().map(|x| self.query(x)).collect()
        }
    }
}

impl Predictor for QueryHandle {
    fn dim(&self) -> usize {
        self.n
    }

    fn predict(&self, x: &PointVector) -> f64 {
        self.query(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    Exhaustive,
    LowDegree,
}

#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub mode: RecoveryMode,
    pub max_degree: usize,
    pub num_samples: usize,
    /// Ridge penalty for the first fit; the kept support is refit without it.
    pub ridge: f64,
    pub rng_seed: u64,
    /// Keep only this many coefficients by magnitude before the refit.
    pub top_k: Option<usize>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            mode: RecoveryMode::LowDegree,
            max_degree: 2,
            num_samples: 4096,
            ridge: 1e-6,
            rng_seed: 0,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecoveryReport {
    pub samples_used: usize,
    pub basis_size: usize,
    pub condition_estimate: f64,
    pub in_sample_r2: f64,
    pub warnings: Vec<String>,
}

/// Queries all `2^n` points once (in natural truth-table order) and runs
/// the dense transform; the result is exact.
pub fn exhaustive_transform(handle: &QueryHandle, n: usize) -> Result<SparseSpectrum> {
    if handle.n() != n {
        return Err(Error::dim("handle", n, handle.n()));
    }
    if n > 24 {
        return Err(Error::ResourceGuard(format!(
            "exhaustive transform of dimension {n} exceeds cap 24"
        )));
    }
    let points: Vec<PointVector> = (0..1u64 << n)
        .map(|idx| PointVector::from_truth_table_index(n, idx))
        .collect();
    let values = handle.query_batch(&points);
    dense_wht(&values)
}

/// Counter-based uniform sampling: point `i` is generated from an RNG
/// stream keyed by `(seed, i)`, so sample sets reproduce across runs and
/// thread counts.
fn sample_point(n: usize, seed: u64, index: u64) -> PointVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    synth::random_point(n, &mut rng)
}

/// Fits `h` on the `(-1)^<f, x>` features of degree at most `max_degree`
/// from uniform samples: a ridge-regularized least squares picks the
/// support (optionally truncated to `top_k` coefficients by magnitude),
/// which is then refit without regularization.
pub fn low_degree_recovery(
    handle: &QueryHandle,
    n: usize,
    config: &RecoveryConfig,
) -> Result<(SparseSpectrum, RecoveryReport)> {
    if handle.n() != n {
        return Err(Error::dim("handle", n, handle.n()));
    }
    if config.num_samples > 1_000_000 {
        return Err(Error::ResourceGuard(format!(
            "num_samples {} exceeds guard 1000000",
            config.num_samples
        )));
    }
    if config.num_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "num_samples",
            message: "need at least one sample".into(),
        });
    }
    let basis_count = degree_support_count(n, config.max_degree.min(n))?;
    if basis_count > BASIS_GUARD {
        return Err(Error::ResourceGuard(format!(
            "degree-{} basis has {basis_count} functions, guard is {BASIS_GUARD}",
            config.max_degree
        )));
    }
    let p = basis_count as usize;

    let mut report = RecoveryReport {
        samples_used: config.num_samples,
        basis_size: p,
        ..RecoveryReport::default()
    };
    if (config.num_samples as u128) < 2 * basis_count {
        report.warnings.push(format!(
            "num_samples {} is below the recommended 2x basis size {}",
            config.num_samples, basis_count
        ));
    }

    let basis = enumerate_basis(n, config.max_degree);
    let points: Vec<PointVector> = (0..config.num_samples as u64)
        .map(|i| sample_point(n, config.rng_seed, i))
        .collect();
    let values = handle.query_batch(&points);

    // Design rows stream into the normal equations; nothing m x p is stored.
    let mut normal = vec![0.0f64; p * p];
    let mut rhs = vec![0.0f64; p];
    let mut row = vec![0.0f64; p];
    for (x, &y) in points.iter().zip(&values) {
        for (j, f) in basis.iter().enumerate() {
            row[j] = f.sign_at(x);
        }
        for i in 0..p {
            let ri = row[i];
            for j in i..p {
                normal[i * p + j] += ri * row[j];
            }
            rhs[i] += ri * y;
        }
    }
    for i in 0..p {
        for j in 0..i {
            normal[i * p + j] = normal[j * p + i];
        }
        normal[i * p + i] += config.ridge.max(0.0);
    }

    let (coefs, condition) = cholesky_solve(&normal, &rhs, p)
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    report.condition_estimate = condition;

    // Support selection: top_k by magnitude, ties broken by frequency order.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        coefs[b]
            .abs()
            .partial_cmp(&coefs[a].abs())
            .unwrap()
            .then_with(|| basis[a].cmp(&basis[b]))
    });
    let keep = config.top_k.unwrap_or(p).min(p);
    let mut support: Vec<usize> = order[..keep]
        .iter()
        .copied()
        .filter(|&j| coefs[j] != 0.0)
        .collect();
    support.sort_unstable();

    // Unregularized refit on the kept support.
    let ps = support.len();
    let mut spectrum = SparseSpectrum::empty(n);
    let mut fitted = vec![0.0f64; config.num_samples];
    if ps > 0 {
        let mut normal_s = vec![0.0f64; ps * ps];
        let mut rhs_s = vec![0.0f64; ps];
        let mut row_s = vec![0.0f64; ps];
        for (x, &y) in points.iter().zip(&values) {
            for (jj, &j) in support.iter().enumerate() {
                row_s[jj] = basis[j].sign_at(x);
            }
            for i in 0..ps {
                let ri = row_s[i];
                for j in i..ps {
                    normal_s[i * ps + j] += ri * row_s[j];
                }
                rhs_s[i] += ri * y;
            }
        }
        for i in 0..ps {
            for j in 0..i {
                normal_s[i * ps + j] = normal_s[j * ps + i];
            }
            // Tiny jitter keeps an exactly-rank-deficient refit diagnosable
            // instead of a hard Cholesky failure.
            normal_s[i * ps + i] += 1e-12;
        }
        let (refit, refit_cond) = cholesky_solve(&normal_s, &rhs_s, ps)
            .ok_or(Error::IllConditioned { condition })?;
        report.condition_estimate = report.condition_estimate.max(refit_cond);

        let terms: Vec<(Frequency, f64)> = support
            .iter()
            .zip(&refit)
            .filter(|(_, c)| c.abs() >= ZERO_DROP_THRESHOLD)
            .map(|(&j, &c)| (basis[j].clone(), c))
            .collect();
        spectrum = SparseSpectrum::from_terms(n, terms)?;
        for (slot, x) in fitted.iter_mut().zip(&points) {
            *slot = spectrum.evaluate(x).expect("dimensions fixed");
        }
    }

    report.in_sample_r2 = r2_vector(&fitted, &values).unwrap_or(f64::NEG_INFINITY);
    Ok((spectrum, report))
}

/// All frequencies of degree at most `max_degree` in canonical order.
fn enumerate_basis(n: usize, max_degree: usize) -> Vec<Frequency> {
    let mut out = vec![Frequency::empty(n)];
    let mut current: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_degree.min(n) {
        let mut next = Vec::new();
        for prefix in &current {
            let start = prefix.last().map_or(0, |l| l + 1);
            for i in start..n {
                let mut ext = prefix.clone();
                ext.push(i);
                out.push(Frequency::from_indices(n, &ext).expect("indices in range"));
                next.push(ext);
            }
        }
        current = next;
    }
    out.sort_by(crate::spectrum::canonical_cmp);
    out
}

/// R-squared between handle outputs and the spectrum on fresh uniform
/// points.
pub fn fidelity_r2(
    handle: &QueryHandle,
    spectrum: &SparseSpectrum,
    num_eval_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if handle.n() != spectrum.n() {
        return Err(Error::dim("fidelity", spectrum.n(), handle.n()));
    }
    if num_eval_samples < 2 {
        return Err(Error::InvalidParameter {
            name: "num_eval_samples",
            message: "need at least 2 samples".into(),
        });
    }
    let points: Vec<PointVector> = (0..num_eval_samples as u64)
        .map(|i| sample_point(spectrum.n(), rng_seed, i))
        .collect();
    let truth = handle.query_batch(&points);
    let estimate: Vec<f64> = points
        .iter()
        .map(|x| spectrum.evaluate(x).expect("dimensions fixed"))
        .collect();
    r2_vector(&estimate, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_transform_matches_tree_transform() {
        let ensemble = synth::random_ensemble(8, 4, 3, 13);
        let direct = crate::tree::ensemble_to_spectrum(&ensemble).unwrap();
        let handle = QueryHandle::from_ensemble(ensemble);
        let recovered = exhaustive_transform(&handle, 8).unwrap();
        assert_eq!(handle.query_count(), 256);
        assert_eq!(recovered.support_size(), direct.support_size());
        for (f, c) in direct.terms() {
            let r = recovered.coefficient(f).unwrap();
            assert!((r - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn exhaustive_transform_constant_handle() {
        let handle = QueryHandle::from_fn(5, |_| 2.25);
        let s = exhaustive_transform(&handle, 5).unwrap();
        assert_eq!(s.support_size(), 1);
        assert_eq!(
            s.coefficient(&Frequency::empty(5)),
            Some(2.25)
        );
    }

    #[test]
    fn exhaustive_transform_recovers_planted_support() {
        let planted = synth::random_spectrum(6, 4, 3, 3).unwrap();
        let handle = QueryHandle::from_spectrum(planted.clone());
        let s = exhaustive_transform(&handle, 6).unwrap();
        assert_eq!(s.support_size(), 4);
        for (f, c) in planted.terms() {
            assert!((s.coefficient(f).unwrap() - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn low_degree_recovery_of_planted_function() {
        let n = 12;
        let planted = synth::random_spectrum(n, 20, 2, 91).unwrap();
        let handle = QueryHandle::from_spectrum(planted.clone());
        let basis = degree_support_count(n, 2).unwrap() as usize;
        let config = RecoveryConfig {
            mode: RecoveryMode::LowDegree,
            max_degree: 2,
            num_samples: 4 * basis,
            ridge: 1e-6,
            rng_seed: 17,
            top_k: Some(20),
        };
        let (recovered, report) = low_degree_recovery(&handle, n, &config).unwrap();
        assert_eq!(handle.query_count() as usize, config.num_samples);
        assert!(report.warnings.is_empty());
        assert_eq!(recovered.support_size(), 20);
        for (f, c) in planted.terms() {
            let r = recovered.coefficient(f).unwrap_or(0.0);
            assert!((r - c).abs() <= 1e-6, "termwise error too large");
        }
        assert!(report.in_sample_r2 > 0.999999);
    }

    #[test]
    fn degree_cap_leaves_high_degree_energy_in_residual() {
        let n = 10;
        // Planted: low-degree part plus known degree-2 mass.
        let low = synth::random_spectrum(n, 6, 1, 5).unwrap();
        let high = crate::spectrum::SparseSpectrum::from_terms(
            n,
            vec![
                (Frequency::from_indices(n, &[0, 1]).unwrap(), 0.8),
                (Frequency::from_indices(n, &[2, 5]).unwrap(), -0.6),
            ],
        )
        .unwrap();
        let full = low.linear_combination(1.0, &high, 1.0).unwrap();
        let high_energy = high.energy();
        let handle = QueryHandle::from_spectrum(full);
        let config = RecoveryConfig {
            max_degree: 1,
            num_samples: 12_000,
            ridge: 1e-8,
            rng_seed: 3,
            top_k: None,
            mode: RecoveryMode::LowDegree,
        };
        let (recovered, _) = low_degree_recovery(&handle, n, &config).unwrap();
        assert!(recovered.degree() <= 1);
        // Residual mean square approximates the unfit high-degree energy.
        let eval_points: Vec<PointVector> = (0..8000u64)
            .map(|i| sample_point(n, 1234, i))
            .collect();
        let rss: f64 = eval_points
            .iter()
            .map(|x| {
                let t = handle.query(x);
                let e = recovered.evaluate(x).unwrap();
                (t - e) * (t - e)
            })
            .sum::<f64>()
            / eval_points.len() as f64;
        assert!(
            (rss - high_energy).abs() <= 0.1 * high_energy,
            "residual {rss} vs planted high-degree energy {high_energy}"
        );
    }

    #[test]
    fn zero_function_recovers_empty_spectrum() {
        let handle = QueryHandle::from_fn(8, |_| 0.0);
        let config = RecoveryConfig {
            max_degree: 2,
            num_samples: 256,
            ..RecoveryConfig::default()
        };
        let (s, _) = low_degree_recovery(&handle, 8, &config).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn monotone_in_sample_fidelity_in_top_k() {
        let n = 9;
        let planted = synth::random_spectrum(n, 18, 2, 44).unwrap();
        let handle = QueryHandle::from_spectrum(planted);
        let mut last = f64::NEG_INFINITY;
        for top_k in [1usize, 2, 4, 8, 16, 32] {
            let config = RecoveryConfig {
                max_degree: 2,
                num_samples: 2048,
                ridge: 1e-8,
                rng_seed: 6,
                top_k: Some(top_k),
                mode: RecoveryMode::LowDegree,
            };
            let (_, report) = low_degree_recovery(&handle, n, &config).unwrap();
            assert!(
                report.in_sample_r2 >= last - 1e-12,
                "in-sample fit degraded when keeping more terms"
            );
            last = report.in_sample_r2;
        }
    }

    #[test]
    fn fidelity_r2_exact_and_empty() {
        let planted = synth::random_spectrum(7, 10, 3, 8).unwrap();
        let handle = QueryHandle::from_spectrum(planted.clone());
        let r2 = fidelity_r2(&handle, &planted, 500, 0).unwrap();
        assert_eq!(r2, 1.0);
        let empty = SparseSpectrum::empty(7);
        let r2 = fidelity_r2(&handle, &empty, 500, 0).unwrap();
        assert!(r2 <= 0.0);
    }

    #[test]
    fn preset_pruned_tree_spectrum_keeps_high_fidelity() {
        let ensemble = synth::random_ensemble(12, 10, 6, 321);
        let exact = crate::tree::ensemble_to_spectrum(&ensemble).unwrap();
        let (pruned, report) = crate::spectrum::prune(&exact, 0.9995, 0.005).unwrap();
        assert!(report.kept_energy >= 0.9995 * report.total_energy);
        let handle = QueryHandle::from_ensemble(ensemble);
        let r2 = fidelity_r2(&handle, &pruned, 4000, 2).unwrap();
        assert!(r2 >= 0.99, "pruned fidelity r2 = {r2}");
    }

    #[test]
    fn synthetic_generators() {
        let parity = QueryHandle::synthetic("parity", 4).unwrap();
        let all_ones = PointVector::from_bits(&[1, 1, 1, 1]).unwrap();
        assert_eq!(parity.query(&all_ones), 1.0);
        let one = PointVector::from_bits(&[1, 0, 0, 0]).unwrap();
        assert_eq!(parity.query(&one), -1.0);

        let maj = QueryHandle::synthetic("majority", 3).unwrap();
        assert_eq!(maj.query(&PointVector::from_bits(&[1, 1, 0]).unwrap()), 1.0);
        assert_eq!(maj.query(&PointVector::from_bits(&[0, 0, 1]).unwrap()), -1.0);

        let rs = QueryHandle::synthetic("random-sparse:8,2,5", 10).unwrap();
        let expect = synth::random_spectrum(10, 8, 2, 5).unwrap();
        let x = synth::random_points(10, 1, 2).pop().unwrap();
        assert_eq!(rs.query(&x), expect.evaluate(&x).unwrap());

        assert!(QueryHandle::synthetic("nope", 4).is_err());
    }

    #[test]
    fn truth_table_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let mut text = String::from("b0,b1,value\n");
        for idx in 0..4u64 {
            let x = PointVector::from_truth_table_index(2, idx);
            let bits = x.bits();
            text.push_str(&format!("{},{},{}\n", bits[0], bits[1], idx as f64 * 0.5));
        }
        std::fs::write(&path, text).unwrap();
        let handle = QueryHandle::from_truth_table_csv(&path).unwrap();
        for idx in 0..4u64 {
            let x = PointVector::from_truth_table_index(2, idx);
            assert_eq!(handle.query(&x), idx as f64 * 0.5);
        }
    }
}
