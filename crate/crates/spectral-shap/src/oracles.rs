//! Independent ground-truth engines: the exponential-sum Shapley formula
//! and a KernelSHAP-style weighted least squares estimator. Both exist to
//! check the closed-form engine, so neither shares code with it.

use std::time::Instant;

use rand::Rng;

use crate::bits::BitWords;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::predictor::Predictor;
use crate::shap::BackgroundDataset;
use crate::spectrum::{binomial, PointVector};
use crate::synth::seeded_rng;

/// Hard guard for the exponential-sum oracle: `2^n` coalition values are
/// materialized.
pub const BRUTEFORCE_DIM_GUARD: usize = 20;

/// The interventional value function
/// `v(S) = (1/|D|) sum_{x in D} h(q_S (+) x_{[n] \ S})`:
/// coordinates in the coalition come from the query, the rest from each
/// background row in turn.
pub struct ValueFunction<'a> {
    predictor: &'a dyn Predictor,
    query: &'a PointVector,
    background: &'a BackgroundDataset,
}

impl<'a> ValueFunction<'a> {
    pub fn new(
        predictor: &'a dyn Predictor,
        query: &'a PointVector,
        background: &'a BackgroundDataset,
    ) -> Result<Self> {
        let n = predictor.dim();
        if query.n() != n {
            return Err(Error::dim("query", n, query.n()));
        }
        if background.n() != n {
            return Err(Error::dim("background", n, background.n()));
        }
        Ok(ValueFunction {
            predictor,
            query,
            background,
        })
    }

    pub fn n(&self) -> usize {
        self.predictor.dim()
    }

    /// `v(S)` for a coalition given as ascending feature indices.
    pub fn eval_indices(&self, coalition: &[usize]) -> Result<f64> {
        let mask =
            BitWords::from_set_indices(self.n(), coalition).ok_or(Error::InvalidParameter {
                name: "coalition",
                message: "index out of range".into(),
            })?;
        Ok(self.eval_mask(&mask))
    }

    pub(crate) fn eval_mask(&self, coalition: &BitWords) -> f64 {
        let w = coalition.words().len();
        let qw = self.query.words().words();
        let mut acc = 0.0;
        let mut hybrid = vec![0u64; w];
        for x in self.background.points() {
            let xw = x.words().words();
            for j in 0..w {
                let s = coalition.words()[j];
                hybrid[j] = (qw[j] & s) | (xw[j] & !s);
            }
            let point = PointVector::from_words(BitWords::from_raw_words(
                self.query.n(),
                hybrid.clone(),
            ));
            acc += self.predictor.predict(&point);
        }
        acc / self.background.len() as f64
    }
}

/// Shapley values by full subset enumeration:
///
/// ```text
/// phi_i = (1/n) sum_{S not containing i} (v(S u {i}) - v(S)) / C(n-1, |S|)
/// ```
///
/// Weights are exact integers converted to float once per subset size. All
/// `2^n` coalition values are memoized first, so the cost is
/// `2^n |D|` predictor calls plus `n 2^(n-1)` table lookups.
pub fn exact_shap_bruteforce(
    h: &dyn Predictor,
    query: &PointVector,
    background: &BackgroundDataset,
) -> Result<Vec<f64>> {
    let n = h.dim();
    if n == 0 || n > BRUTEFORCE_DIM_GUARD {
        return Err(Error::ResourceGuard(format!(
            "brute-force oracle supports 1 <= n <= {BRUTEFORCE_DIM_GUARD}, got {n}"
        )));
    }
    if query.n() != n {
        return Err(Error::dim("query", n, query.n()));
    }
    if background.n() != n {
        return Err(Error::dim("background", n, background.n()));
    }

    let size = 1usize << n;
    let inv_rows = 1.0 / background.len() as f64;
    let qw = query.words().words()[0];
    let bg: Vec<u64> = background
        .points()
        .iter()
        .map(|x| x.words().words()[0])
        .collect();

    let mut v = vec![0.0f64; size];
    for (s, slot) in v.iter_mut().enumerate() {
        let sw = s as u64;
        let mut acc = 0.0;
        for &xw in &bg {
            let hybrid = (qw & sw) | (xw & !sw);
            let point = PointVector::from_words(BitWords::from_raw_words(n, vec![hybrid]));
            acc += h.predict(&point);
        }
        *slot = acc * inv_rows;
    }

    let mut weights = vec![0.0f64; n];
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / ((n as u128 * binomial(n as u64 - 1, s as u64)) as f64);
    }

    let mut phi = vec![0.0f64; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut by_size = vec![0.0f64; n];
        for s in 0..size {
            if s & bit == 0 {
                by_size[s.count_ones() as usize] += v[s | bit] - v[s];
            }
        }
        *phi_i = by_size
            .iter()
            .zip(&weights)
            .map(|(sum, w)| sum * w)
            .sum();
    }
    Ok(phi)
}

/// Sampling and solver budget for [`kernel_shap`].
#[derive(Debug, Clone)]
pub struct KernelShapConfig {
    /// Explicit row budget; when unset the budget is
    /// `round(sample_factor * (2n + 2048))`.
    pub num_subset_samples: Option<usize>,
    /// Draw each coalition together with its complement.
    pub paired_sampling: bool,
    pub sample_factor: f64,
    pub rng_seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        KernelShapConfig {
            num_subset_samples: None,
            paired_sampling: true,
            sample_factor: 1.0,
            rng_seed: 0,
        }
    }
}

impl KernelShapConfig {
    pub fn effective_samples(&self, n: usize) -> usize {
        self.num_subset_samples
            .unwrap_or_else(|| (self.sample_factor * (2 * n + 2048) as f64).round() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone)]
pub struct KernelShapDiagnostics {
    pub samples_used: usize,
    pub condition_estimate: f64,
    /// True when the budget covered every proper non-empty coalition and
    /// the exact kernel weights were used instead of sampling.
    pub enumerated: bool,
    pub retries: u32,
}

/// KernelSHAP: solves the least-squares characterization of Shapley values
///
/// ```text
/// min sum_{0 < |S| < n} w(S) (b0 + sum_{i in S} b_i - v(S))^2
/// s.t. b0 = v({}),  b0 + sum_i b_i = v([n])
/// w(S) = (n-1) / (C(n,|S|) |S| (n-|S|))
/// ```
///
/// with both constraints eliminated analytically and the reduced normal
/// equations solved exactly (ridge jitter 1e-10). When the budget covers
/// all `2^n - 2` proper coalitions the sum is enumerated with its exact
/// weights; otherwise coalition sizes are drawn with probability
/// proportional to `(n-1)/(s(n-s))` and a uniform subset of that size.
pub fn kernel_shap(
    h: &dyn Predictor,
    query: &PointVector,
    background: &BackgroundDataset,
    config: &KernelShapConfig,
) -> Result<(Vec<f64>, KernelShapDiagnostics)> {
    let n = h.dim();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            message: format!("kernel_shap needs n >= 2, got {n}"),
        });
    }
    if config.sample_factor.is_nan() || config.sample_factor <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sample_factor",
            message: format!("{} is not positive", config.sample_factor),
        });
    }
    let vf = ValueFunction::new(h, query, background)?;
    let v_empty = vf.eval_mask(&BitWords::zeros(n));
    let v_full = h.predict(query);
    let span = v_full - v_empty;

    let budget = config.effective_samples(n);
    let enumerate = n <= 25 && (budget as u128) >= (1u128 << n) - 2;

    let mut retries = 0u32;
    loop {
        let rows = if enumerate {
            enumerate_rows(n)
        } else {
            sample_rows(n, budget, config, retries)
        };

        match solve_rows(&vf, &rows, n, v_empty, span) {
            Some((phi, condition_estimate)) => {
                return Ok((
                    phi,
                    KernelShapDiagnostics {
                        samples_used: rows.len(),
                        condition_estimate,
                        enumerated: enumerate,
                        retries,
                    },
                ));
            }
            None if enumerate => {
                // Enumeration cannot be resampled; the system itself is bad.
                return Err(Error::DegenerateSystem { retries });
            }
            None => {
                retries += 1;
                if retries >= 3 {
                    return Err(Error::DegenerateSystem { retries });
                }
            }
        }
    }
}

struct KernelRow {
    mask: BitWords,
    weight: f64,
}

fn enumerate_rows(n: usize) -> Vec<KernelRow> {
    let full = (1u64 << n) - 1;
    let mut rows = Vec::with_capacity((1usize << n) - 2);
    for s in 1..full {
        let size = s.count_ones() as u64;
        let weight = (n as f64 - 1.0)
            / (binomial(n as u64, size) as f64 * size as f64 * (n as u64 - size) as f64);
        rows.push(KernelRow {
            mask: BitWords::from_raw_words(n, vec![s]),
            weight,
        });
    }
    rows
}

fn sample_rows(n: usize, budget: usize, config: &KernelShapConfig, retry: u32) -> Vec<KernelRow> {
    let mut rng = seeded_rng(
        config
            .rng_seed
            .wrapping_add((retry as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    // Size distribution: total kernel weight of size s is (n-1)/(s(n-s)).
    let size_weights: Vec<f64> = (1..n)
        .map(|s| (n as f64 - 1.0) / ((s * (n - s)) as f64))
        .collect();
    let total: f64 = size_weights.iter().sum();

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(budget + 1);
    while rows.len() < budget {
        let mut u = rng.random::<f64>() * total;
        let mut size = 1;
        for (s, w) in size_weights.iter().enumerate() {
            if u < *w {
                size = s + 1;
                break;
            }
            u -= w;
            size = s + 1;
        }
        // Partial Fisher-Yates draw of a uniform subset of that size.
        for j in 0..size {
            let pick = rng.random_range(j..n);
            indices.swap(j, pick);
        }
        let mask = BitWords::from_set_indices(n, &indices[..size]).expect("indices in range");
        if config.paired_sampling {
            let mut complement = BitWords::zeros(n);
            for i in 0..n {
                if !mask.get(i) {
                    complement.set(i, true);
                }
            }
            rows.push(KernelRow {
                mask,
                weight: 1.0,
            });
            rows.push(KernelRow {
                mask: complement,
                weight: 1.0,
            });
        } else {
            rows.push(KernelRow { mask, weight: 1.0 });
        }
    }
    rows
}

/// Eliminates `b0 = v({})` and the full-sum constraint (substituting the
/// last coordinate), then solves the reduced weighted normal equations.
fn solve_rows(
    vf: &ValueFunction<'_>,
    rows: &[KernelRow],
    n: usize,
    v_empty: f64,
    span: f64,
) -> Option<(Vec<f64>, f64)> {
    // Degenerate draw: every sampled coalition identical.
    if rows.len() < 2 || rows.iter().all(|r| r.mask == rows[0].mask) {
        return None;
    }

    let p = n - 1;
    let mut normal = vec![0.0f64; p * p];
    let mut rhs = vec![0.0f64; p];
    let mut a = vec![0.0f64; p];
    for row in rows {
        let v_s = vf.eval_mask(&row.mask);
        let z_last = f64::from(row.mask.get(n - 1));
        for (i, slot) in a.iter_mut().enumerate() {
            *slot = f64::from(row.mask.get(i)) - z_last;
        }
        let target = v_s - v_empty - z_last * span;
        for i in 0..p {
            if a[i] == 0.0 {
                continue;
            }
            let wa = row.weight * a[i];
            for j in 0..p {
                normal[i * p + j] += wa * a[j];
            }
            rhs[i] += wa * target;
        }
    }
    for i in 0..p {
        normal[i * p + i] += 1e-10;
    }

    let (beta, condition) = cholesky_solve(&normal, &rhs, p)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let mut phi = beta;
    let rest: f64 = phi.iter().sum();
    phi.push(span - rest);
    Some((phi, condition))
}

/// Coefficient of determination of `estimate` against `truth`:
/// `1 - sum (e_i - t_i)^2 / sum (t_i - mean(t))^2`. Returns 1.0 when both
/// residual sums vanish and negative infinity when the truth has zero
/// variance but the residual does not.
pub fn r2_vector(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::dim("r2_vector", truth.len(), estimate.len()));
    }
    if truth.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "truth",
            message: "need at least 2 entries".into(),
        });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// One row of the convergence report CSV.
#[derive(Debug, Clone)]
pub struct ConvergencePoint {
    pub sample_factor: f64,
    pub wall_time_s: f64,
    pub r2_vs_exact: f64,
}

/// Runs [`kernel_shap`] at each sample factor over a set of seeds and
/// reports mean wall time and mean R-squared against the exponential-sum
/// oracle.
pub fn convergence_sweep(
    h: &dyn Predictor,
    query: &PointVector,
    background: &BackgroundDataset,
    factors: &[f64],
    seeds: &[u64],
) -> Result<Vec<ConvergencePoint>> {
    let exact = exact_shap_bruteforce(h, query, background)?;
    let mut out = Vec::with_capacity(factors.len());
    for &factor in factors {
        let mut time_total = 0.0;
        let mut r2_total = 0.0;
        for &seed in seeds {
            let config = KernelShapConfig {
                sample_factor: factor,
                rng_seed: seed,
                ..KernelShapConfig::default()
            };
            let start = Instant::now();
            let (phi, _) = kernel_shap(h, query, background, &config)?;
            time_total += start.elapsed().as_secs_f64();
            r2_total += r2_vector(&phi, &exact)?;
        }
        out.push(ConvergencePoint {
            sample_factor: factor,
            wall_time_s: time_total / seeds.len() as f64,
            r2_vs_exact: r2_total / seeds.len() as f64,
        });
    }
    Ok(out)
}
