//! Closed-form interventional SHAP values from a sparse Walsh-Hadamard
//! spectrum.
//!
//! For a single basis function `Psi_f(x) = (-1)^<f, x>`, a query `x*` and a
//! background dataset `D`, the SHAP value of feature `i` is
//!
//! ```text
//! phi_i = -(2 f_i / |D|) * sum_{x in D} 1[x_i != x*_i] (-1)^<f, x> w(|A|)
//! A     = { j != i : x_j != x*_j, f_j = 1 }
//! w(m)  = ((m+1) mod 2) / (m+1)
//! ```
//!
//! and the value for a sparse function is the coefficient-weighted sum over
//! its support, at a cost of `Theta(n |D| k)` flops per query. Because the
//! sum is over `(f, x)` pairs only, the transform pays the exponential cost
//! once and every explanation afterwards is a linear pass.
//!
//! Four variants compute the same sum with different loop structures; they
//! agree to 1e-10 and each is bitwise deterministic: frequencies are
//! processed in canonical order, background rows in row order, and parallel
//! execution combines fixed-size chunk partials in chunk order, so results
//! do not depend on the thread count.

use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectrum::{Frequency, PointVector, SparseSpectrum};

/// Frequencies per reduction chunk. Partial sums are combined in chunk
/// order whatever the parallel schedule.
pub const REDUCTION_CHUNK: usize = 1024;

/// Rows with uniform dimension defining the empirical marginal. Duplicate
/// rows are legal and simply weight the marginal.
#[derive(Debug, Clone)]
pub struct BackgroundDataset {
    n: usize,
    points: Vec<PointVector>,
    labels: Option<Vec<f64>>,
}

impl BackgroundDataset {
    pub fn new(n: usize, points: Vec<PointVector>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter {
                name: "points",
                message: "background dataset must be non-empty".into(),
            });
        }
        for (r, p) in points.iter().enumerate() {
            if p.n() != n {
                return Err(Error::dim(format!("background row {r}"), n, p.n()));
            }
        }
        Ok(BackgroundDataset {
            n,
            points,
            labels: None,
        })
    }

    /// Labels ride along for reporting; the attribution math ignores them.
    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::dim("labels", self.points.len(), labels.len()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PointVector] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }
}

/// Per-query attribution vector with its reconstruction metadata.
#[derive(Debug, Clone)]
pub struct ShapResult {
    pub query: PointVector,
    pub attributions: Vec<f64>,
    /// Mean spectrum evaluation over the background dataset.
    pub base_value: f64,
    /// Spectrum evaluation at the query.
    pub prediction: f64,
}

impl ShapResult {
    pub fn sum_phi(&self) -> f64 {
        self.attributions.iter().sum()
    }

    /// `sum(phi) - (prediction - base_value)`; zero up to roundoff by the
    /// efficiency axiom.
    pub fn efficiency_residual(&self) -> f64 {
        self.sum_phi() - (self.prediction - self.base_value)
    }
}

/// The four loop structures. All produce identical results to 1e-10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Direct triple loop over frequencies, rows and coordinates.
    Base,
    /// Base with `(-1)^<f, x>` and `f & x` cached per (frequency, row);
    /// the cache is query-independent, so batches reuse it.
    Precompute,
    /// Skips coordinates outside the frequency mask and rows whose A-set
    /// parity zeroes the weight.
    Sparse,
    /// Groups frequencies by affected coordinate and computes each phi_i
    /// independently.
    Positional,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Base,
        Variant::Precompute,
        Variant::Sparse,
        Variant::Positional,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Precompute => "precompute",
            Variant::Sparse => "sparse",
            Variant::Positional => "positional",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "precompute" => Ok(Variant::Precompute),
            "sparse" => Ok(Variant::Sparse),
            "positional" => Ok(Variant::Positional),
            other => Err(Error::InvalidParameter {
                name: "variant",
                message: format!("unknown variant {other:?}"),
            }),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `table[m] = ((m+1) mod 2) / (m+1)` for `m = 0..=max_a`:
/// 1, 0, 1/3, 0, 1/5, ...
pub fn weight_table(max_a: usize) -> Vec<f64> {
    (0..=max_a)
        .map(|m| {
            if (m + 1) % 2 == 0 {
                0.0
            } else {
                1.0 / (m + 1) as f64
            }
        })
        .collect()
}

/// SHAP value of a single basis function for one coordinate, straight from
/// the closed form. Zero whenever `f_i = 0`.
pub fn shap_single_frequency(
    f: &Frequency,
    i: usize,
    query: &PointVector,
    background: &BackgroundDataset,
) -> Result<f64> {
    let n = background.n();
    if f.n() != n {
        return Err(Error::dim("frequency", n, f.n()));
    }
    if query.n() != n {
        return Err(Error::dim("query", n, query.n()));
    }
    if i >= n {
        return Err(Error::InvalidParameter {
            name: "i",
            message: format!("feature index {i} out of range for n={n}"),
        });
    }
    if !f.contains(i) {
        return Ok(0.0);
    }
    let rows = background.len() as f64;
    let mut acc = 0.0;
    for x in background.points() {
        if x.get(i) == query.get(i) {
            continue;
        }
        // i is in the A-tilde set here, so |A| = popcount(diff & f) - 1.
        let diff = x.words().xor(query.words());
        let t = diff.and_count_ones(f.mask());
        let weight = if t % 2 == 0 { 0.0 } else { 1.0 / t as f64 };
        acc += f.sign_at(x) * weight;
    }
    Ok(-2.0 * acc / rows)
}

/// Amortized SHAP evaluation: construct once per (spectrum, background)
/// pair, then explain any number of queries.
pub struct ShapEngine {
    spectrum: SparseSpectrum,
    background: BackgroundDataset,
    base_value: f64,
    words_per: usize,
    /// Background rows as flat packed words, row-major.
    bg_words: Vec<u64>,
    /// Indexed by |A|; the diagnostics suite may deliberately corrupt it.
    pub(crate) table: Vec<f64>,
    precompute: OnceLock<PrecomputeCache>,
    groups: OnceLock<Vec<Vec<u32>>>,
}

struct PrecomputeCache {
    /// `(-1)^<f, x>` per (frequency, row).
    signs: Vec<f64>,
    /// `f & x` packed words per (frequency, row).
    masked: Vec<u64>,
}

impl ShapEngine {
    pub fn new(spectrum: SparseSpectrum, background: BackgroundDataset) -> Result<Self> {
        if spectrum.n() != background.n() {
            return Err(Error::dim(
                "spectrum vs background",
                spectrum.n(),
                background.n(),
            ));
        }
        let mut base = 0.0;
        for x in background.points() {
            base += spectrum.evaluate(x)?;
        }
        let base_value = base / background.len() as f64;
        let words_per = background.points()[0].words().words().len();
        let mut bg_words = Vec::with_capacity(words_per * background.len());
        for x in background.points() {
            bg_words.extend_from_slice(x.words().words());
        }
        let table = weight_table(spectrum.n().saturating_sub(1));
        Ok(ShapEngine {
            spectrum,
            background,
            base_value,
            words_per,
            bg_words,
            table,
            precompute: OnceLock::new(),
            groups: OnceLock::new(),
        })
    }

    pub fn spectrum(&self) -> &SparseSpectrum {
        &self.spectrum
    }

    pub fn background(&self) -> &BackgroundDataset {
        &self.background
    }

    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    pub fn shap_values(&self, query: &PointVector, variant: Variant) -> Result<ShapResult> {
        self.shap_values_chunked(query, variant, REDUCTION_CHUNK)
    }

    /// Explains queries in parallel; each query's reduction is identical to
    /// a lone [`ShapEngine::shap_values`] call, so batches match per-query
    /// calls bitwise. Errors carry the offending query index.
    pub fn batch_explain(
        &self,
        queries: &[PointVector],
        variant: Variant,
    ) -> Result<Vec<ShapResult>> {
        if matches!(variant, Variant::Precompute) {
            self.precompute_cache(); // build once, outside the query loop
        }
        queries
            .par_iter()
            .enumerate()
            .map(|(index, q)| {
                self.shap_values(q, variant)
                    .map_err(|e| Error::QueryFailed {
                        index,
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    pub(crate) fn shap_values_chunked(
        &self,
        query: &PointVector,
        variant: Variant,
        chunk_size: usize,
    ) -> Result<ShapResult> {
        let n = self.spectrum.n();
        if query.n() != n {
            return Err(Error::dim("query", n, query.n()));
        }
        let prediction = self.spectrum.evaluate(query)?;
        let k = self.spectrum.support_size();
        let rows = self.background.len();

        let mut phi = if k == 0 {
            vec![0.0; n]
        } else {
            let diffs = self.query_diffs(query);
            match variant {
                Variant::Positional => self.positional(&diffs),
                _ => {
                    let num_chunks = k.div_ceil(chunk_size);
                    let partials: Vec<Vec<f64>> = (0..num_chunks)
                        .into_par_iter()
                        .map(|ci| {
                            let lo = ci * chunk_size;
                            let hi = (lo + chunk_size).min(k);
                            match variant {
                                Variant::Base => self.chunk_base(lo..hi, &diffs),
                                Variant::Precompute => self.chunk_precompute(lo..hi, query),
                                Variant::Sparse => self.chunk_sparse(lo..hi, &diffs),
                                Variant::Positional => unreachable!(),
                            }
                        })
                        .collect();
                    let mut acc = vec![0.0; n];
                    for partial in partials {
                        for (a, p) in acc.iter_mut().zip(&partial) {
                            *a += p;
                        }
                    }
                    acc
                }
            }
        };

        let scale = -2.0 / rows as f64;
        for v in &mut phi {
            *v *= scale;
        }
        Ok(ShapResult {
            query: query.clone(),
            attributions: phi,
            base_value: self.base_value,
            prediction,
        })
    }

    /// `x_r XOR query` as flat packed words, row-major.
    fn query_diffs(&self, query: &PointVector) -> Vec<u64> {
        let w = self.words_per;
        let qw = query.words().words();
        let mut out = vec![0u64; self.bg_words.len()];
        for r in 0..self.background.len() {
            for j in 0..w {
                out[r * w + j] = self.bg_words[r * w + j] ^ qw[j];
            }
        }
        out
    }

    fn chunk_base(&self, range: std::ops::Range<usize>, diffs: &[u64]) -> Vec<f64> {
        let n = self.spectrum.n();
        let w = self.words_per;
        let rows = self.background.len();
        let mut phi = vec![0.0; n];
        for (f, c) in &self.spectrum.terms()[range] {
            let fw = f.mask().words();
            for r in 0..rows {
                let xw = &self.bg_words[r * w..(r + 1) * w];
                let dw = &diffs[r * w..(r + 1) * w];
                let sign = sign_of_parity(and_xor_fold(fw, xw));
                let t = and_popcount(fw, dw) as usize;
                let weight = if t == 0 { 0.0 } else { self.table[t - 1] };
                let factor = c * sign * weight;
                for (i, slot) in phi.iter_mut().enumerate() {
                    let word = i / 64;
                    let bit = 1u64 << (i % 64);
                    if fw[word] & dw[word] & bit != 0 {
                        *slot += factor;
                    }
                }
            }
        }
        phi
    }

    fn chunk_precompute(&self, range: std::ops::Range<usize>, query: &PointVector) -> Vec<f64> {
        let n = self.spectrum.n();
        let w = self.words_per;
        let rows = self.background.len();
        let cache = self.precompute_cache();
        let qw = query.words().words();
        let mut phi = vec![0.0; n];
        let mut fq = vec![0u64; w];
        let mut atilde = vec![0u64; w];
        for (fi, (f, c)) in self.spectrum.terms()[range.clone()].iter().enumerate() {
            let fidx = range.start + fi;
            let fw = f.mask().words();
            for (j, word) in fq.iter_mut().enumerate() {
                *word = fw[j] & qw[j];
            }
            for r in 0..rows {
                let entry = (fidx * rows + r) * w;
                let masked = &cache.masked[entry..entry + w];
                // A-tilde = f & (x XOR q) = (f & x) XOR (f & q).
                let mut t = 0u32;
                for j in 0..w {
                    atilde[j] = masked[j] ^ fq[j];
                    t += atilde[j].count_ones();
                }
                let t = t as usize;
                let weight = if t == 0 { 0.0 } else { self.table[t - 1] };
                let factor = c * cache.signs[fidx * rows + r] * weight;
                for i in 0..n {
                    if atilde[i / 64] & (1u64 << (i % 64)) != 0 {
                        phi[i] += factor;
                    }
                }
            }
        }
        phi
    }

    fn chunk_sparse(&self, range: std::ops::Range<usize>, diffs: &[u64]) -> Vec<f64> {
        let n = self.spectrum.n();
        let w = self.words_per;
        let rows = self.background.len();
        let mut phi = vec![0.0; n];
        for (f, c) in &self.spectrum.terms()[range] {
            let fw = f.mask().words();
            for r in 0..rows {
                let xw = &self.bg_words[r * w..(r + 1) * w];
                let dw = &diffs[r * w..(r + 1) * w];
                let t = and_popcount(fw, dw) as usize;
                if t == 0 {
                    continue;
                }
                let weight = self.table[t - 1];
                if weight == 0.0 {
                    continue;
                }
                let val = c * sign_of_parity(and_xor_fold(fw, xw)) * weight;
                for (j, (fwj, dwj)) in fw.iter().zip(dw).enumerate() {
                    let mut bits = fwj & dwj;
                    while bits != 0 {
                        let i = j * 64 + bits.trailing_zeros() as usize;
                        phi[i] += val;
                        bits &= bits - 1;
                    }
                }
            }
        }
        phi
    }

    fn positional(&self, diffs: &[u64]) -> Vec<f64> {
        let n = self.spectrum.n();
        let w = self.words_per;
        let rows = self.background.len();
        let k = self.spectrum.support_size();
        let groups = self.coordinate_groups();

        // Shared per-(frequency, row) tables, built once per query.
        let mut signs = vec![0.0f64; k * rows];
        let mut counts = vec![0u32; k * rows];
        let mut atilde = vec![0u64; k * rows * w];
        for (fidx, (f, _)) in self.spectrum.terms().iter().enumerate() {
            let fw = f.mask().words();
            for r in 0..rows {
                let xw = &self.bg_words[r * w..(r + 1) * w];
                let dw = &diffs[r * w..(r + 1) * w];
                let entry = (fidx * rows + r) * w;
                let mut t = 0u32;
                for j in 0..w {
                    let a = fw[j] & dw[j];
                    atilde[entry + j] = a;
                    t += a.count_ones();
                }
                signs[fidx * rows + r] = sign_of_parity(and_xor_fold(fw, xw));
                counts[fidx * rows + r] = t;
            }
        }

        (0..n)
            .into_par_iter()
            .map(|i| {
                let word = i / 64;
                let bit = 1u64 << (i % 64);
                let mut acc = 0.0;
                for &fidx in &groups[i] {
                    let fidx = fidx as usize;
                    let c = self.spectrum.terms()[fidx].1;
                    for r in 0..rows {
                        let idx = fidx * rows + r;
                        if atilde[idx * w + word] & bit != 0 {
                            // bit i set means t >= 1
                            acc += c * signs[idx] * self.table[(counts[idx] - 1) as usize];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    fn precompute_cache(&self) -> &PrecomputeCache {
        self.precompute.get_or_init(|| {
            let w = self.words_per;
            let rows = self.background.len();
            let k = self.spectrum.support_size();
            let mut signs = vec![0.0f64; k * rows];
            let mut masked = vec![0u64; k * rows * w];
            for (fidx, (f, _)) in self.spectrum.terms().iter().enumerate() {
                let fw = f.mask().words();
                for r in 0..rows {
                    let xw = &self.bg_words[r * w..(r + 1) * w];
                    let entry = (fidx * rows + r) * w;
                    for j in 0..w {
                        masked[entry + j] = fw[j] & xw[j];
                    }
                    signs[fidx * rows + r] = sign_of_parity(and_xor_fold(fw, xw));
                }
            }
            PrecomputeCache { signs, masked }
        })
    }

    /// For each coordinate, the frequencies whose mask contains it.
    fn coordinate_groups(&self) -> &Vec<Vec<u32>> {
        self.groups.get_or_init(|| {
            let mut groups = vec![Vec::new(); self.spectrum.n()];
            for (fidx, (f, _)) in self.spectrum.terms().iter().enumerate() {
                for i in f.indices() {
                    groups[i].push(fidx as u32);
                }
            }
            groups
        })
    }
}

#[inline]
fn and_xor_fold(a: &[u64], b: &[u64]) -> u64 {
    let mut acc = 0u64;
    for (x, y) in a.iter().zip(b) {
        acc ^= x & y;
    }
    acc
}

#[inline]
fn sign_of_parity(folded: u64) -> f64 {
    if folded.count_ones() & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

#[inline]
fn and_popcount(a: &[u64], b: &[u64]) -> u32 {
    let mut acc = 0u32;
    for (x, y) in a.iter().zip(b) {
        acc += (x & y).count_ones();
    }
    acc
}

/// One-shot convenience wrapper over [`ShapEngine`].
pub fn shap_values(
    spectrum: &SparseSpectrum,
    query: &PointVector,
    background: &BackgroundDataset,
    variant: Variant,
) -> Result<ShapResult> {
    ShapEngine::new(spectrum.clone(), background.clone())?.shap_values(query, variant)
}

/// One-shot convenience wrapper; building the engine once via
/// [`ShapEngine::batch_explain`] is what amortizes the cost.
pub fn batch_explain(
    spectrum: &SparseSpectrum,
    queries: &[PointVector],
    background: &BackgroundDataset,
    variant: Variant,
) -> Result<Vec<ShapResult>> {
    ShapEngine::new(spectrum.clone(), background.clone())?.batch_explain(queries, variant)
}
