//! Sparse Walsh-Hadamard spectra over `{0,1}^n`: representation, evaluation,
//! the dense transform, and energy pruning.
//!
//! The stored convention is the unnormalized +/-1 basis,
//!
//! ```text
//! h(x) = sum_f c_f * (-1)^<f, x>
//! ```
//!
//! so coefficients feed the closed-form SHAP expression directly. The
//! orthonormal convention differs by a factor of `sqrt(2^n)`: an orthonormal
//! coefficient equals `sqrt(2^n) * c_f`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::bits::BitWords;
use crate::error::{Error, Result};

/// Largest dimension accepted by the dense transform by default. The
/// transform materializes `2^n` doubles.
pub const DEFAULT_DIMENSION_CAP: usize = 24;

/// Coefficients smaller than this in magnitude are dropped after transforms.
pub const ZERO_DROP_THRESHOLD: f64 = 1e-15;

const SPECTRUM_CONVENTION: &str = "pm1_unnormalized";

/// A data instance on `{0,1}^n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PointVector(BitWords);

impl PointVector {
    pub fn zeros(n: usize) -> Self {
        PointVector(BitWords::zeros(n))
    }

    /// Builds from a slice of 0/1 cells.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut words = BitWords::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => words.set(i, true),
                other => {
                    return Err(Error::InvalidParameter {
                        name: "bits",
                        message: format!("entry {i} is {other}, expected 0 or 1"),
                    })
                }
            }
        }
        Ok(PointVector(words))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        PointVector(BitWords::from_bools(bits))
    }

    pub(crate) fn from_words(words: BitWords) -> Self {
        PointVector(words)
    }

    /// Point whose truth-table row index is `index` (feature 0 is the most
    /// significant index bit).
    pub fn from_truth_table_index(n: usize, index: u64) -> Self {
        PointVector(BitWords::from_truth_table_index(n, index))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0.get(i)
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.n()).map(|i| u8::from(self.0.get(i))).collect()
    }

    pub fn truth_table_index(&self) -> Option<u64> {
        self.0.truth_table_index()
    }

    pub(crate) fn words(&self) -> &BitWords {
        &self.0
    }
}

impl fmt::Debug for PointVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PointVector({:?})", self.0)
    }
}

/// A Walsh-Hadamard basis index: a binary mask with its popcount cached as
/// the degree.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Frequency {
    mask: BitWords,
    degree: u32,
}

impl Frequency {
    pub fn empty(n: usize) -> Self {
        Frequency {
            mask: BitWords::zeros(n),
            degree: 0,
        }
    }

    pub fn single(n: usize, index: usize) -> Result<Self> {
        Self::from_indices(n, &[index])
    }

    /// Builds from the set-bit indices of the mask.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mask = BitWords::from_set_indices(n, indices).ok_or_else(|| Error::InvalidParameter {
            name: "indices",
            message: format!("index out of range for dimension {n}"),
        })?;
        Ok(Self::from_mask(mask))
    }

    pub fn from_mask(mask: BitWords) -> Self {
        let degree = mask.count_ones() as u32;
        Frequency { mask, degree }
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    /// Number of ones in the mask.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i)
    }

    /// Ascending indices of set bits.
    pub fn indices(&self) -> Vec<usize> {
        self.mask.ones().collect()
    }

    /// Copy with bit `i` toggled (the XOR-shift used by the tree transform).
    pub fn toggled(&self, i: usize) -> Frequency {
        Frequency::from_mask(self.mask.toggled(i))
    }

    /// Parity of `<f, x>`; the basis function value is `-1` when odd.
    pub fn parity_with(&self, x: &PointVector) -> bool {
        self.mask.parity_and(&x.0)
    }

    /// `(-1)^<f, x>` as a float.
    pub fn sign_at(&self, x: &PointVector) -> f64 {
        if self.parity_with(x) {
            -1.0
        } else {
            1.0
        }
    }

    pub(crate) fn mask(&self) -> &BitWords {
        &self.mask
    }
}

impl fmt::Debug for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frequency({:?})", self.mask)
    }
}

impl PartialOrd for Frequency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frequency {
    /// Masks compare as little-endian packed integers (feature 0 is the
    /// lowest-order bit).
    fn cmp(&self, other: &Self) -> Ordering {
        self.mask.cmp_numeric(&other.mask)
    }
}

/// Canonical term order for spectra and artifacts: degree first, then mask
/// order.
pub fn canonical_cmp(a: &Frequency, b: &Frequency) -> Ordering {
    a.degree.cmp(&b.degree).then_with(|| a.cmp(b))
}

/// A pseudo-boolean function as a finite map from frequencies to
/// coefficients, kept sorted in canonical order with no zero entries.
#[derive(Clone, PartialEq)]
pub struct SparseSpectrum {
    n: usize,
    terms: Vec<(Frequency, f64)>,
}

impl SparseSpectrum {
    pub fn empty(n: usize) -> Self {
        SparseSpectrum { n, terms: vec![] }
    }

    /// Validates dimensions and duplicates, drops exactly-zero coefficients,
    /// and sorts canonically.
    pub fn from_terms(n: usize, terms: Vec<(Frequency, f64)>) -> Result<Self> {
        let mut kept = Vec::with_capacity(terms.len());
        for (f, c) in terms {
            if f.n() != n {
                return Err(Error::dim("spectrum term", n, f.n()));
            }
            if !c.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "coefficient",
                    message: format!("non-finite coefficient {c}"),
                });
            }
            if c != 0.0 {
                kept.push((f, c));
            }
        }
        kept.sort_by(|a, b| canonical_cmp(&a.0, &b.0));
        for pair in kept.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidParameter {
                    name: "terms",
                    message: format!("duplicate frequency {:?}", pair[0].0),
                });
            }
        }
        Ok(SparseSpectrum { n, terms: kept })
    }

    /// Builds from an accumulator map, dropping magnitudes below `drop_tol`
    /// (exact zeros are always dropped).
    pub fn from_map(n: usize, map: HashMap<Frequency, f64>, drop_tol: f64) -> Result<Self> {
        let terms: Vec<(Frequency, f64)> = map
            .into_iter()
            .filter(|(_, c)| c.abs() >= drop_tol && *c != 0.0)
            .collect();
        Self::from_terms(n, terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support_size(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum term degree; 0 for the empty spectrum.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(f, _)| f.degree()).max().unwrap_or(0)
    }

    /// Terms in canonical order (degree, then mask order).
    pub fn terms(&self) -> &[(Frequency, f64)] {
        &self.terms
    }

    pub fn coefficient(&self, f: &Frequency) -> Option<f64> {
        self.terms
            .iter()
            .find(|(g, _)| g == f)
            .map(|(_, c)| *c)
    }

    /// Sum of squared coefficients.
    pub fn energy(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum()
    }

    /// `h(x) = sum_f c_f * (-1)^<f, x>`, exact for exactly-represented
    /// functions.
    pub fn evaluate(&self, x: &PointVector) -> Result<f64> {
        if x.n() != self.n {
            return Err(Error::dim("evaluate", self.n, x.n()));
        }
        let mut acc = 0.0;
        for (f, c) in &self.terms {
            if f.parity_with(x) {
                acc -= c;
            } else {
                acc += c;
            }
        }
        Ok(acc)
    }

    /// Termwise `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &SparseSpectrum, b: f64) -> Result<SparseSpectrum> {
        if other.n != self.n {
            return Err(Error::dim("linear_combination", self.n, other.n));
        }
        let mut map: HashMap<Frequency, f64> = HashMap::with_capacity(self.terms.len() + other.terms.len());
        for (f, c) in &self.terms {
            *map.entry(f.clone()).or_insert(0.0) += a * c;
        }
        for (f, c) in &other.terms {
            *map.entry(f.clone()).or_insert(0.0) += b * c;
        }
        SparseSpectrum::from_map(self.n, map, 0.0)
    }

    pub fn scaled(&self, a: f64) -> SparseSpectrum {
        let terms = self
            .terms
            .iter()
            .filter(|(_, c)| a * c != 0.0)
            .map(|(f, c)| (f.clone(), a * c))
            .collect();
        SparseSpectrum { n: self.n, terms }
    }

    /// Synthesizes the full truth table in natural order (guarded by the
    /// dimension cap). The butterfly is the transform's own inverse up to
    /// scale, so this is `O(n 2^n)`.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        self.to_dense_with_cap(DEFAULT_DIMENSION_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<Vec<f64>> {
        if self.n > cap {
            return Err(Error::ResourceGuard(format!(
                "dense synthesis of dimension {} exceeds cap {}",
                self.n, cap
            )));
        }
        let len = 1usize << self.n;
        let mut buf = vec![0.0; len];
        for (f, c) in &self.terms {
            let idx = f
                .mask
                .truth_table_index()
                .expect("dimension cap keeps indices in range");
            buf[idx as usize] += c;
        }
        butterfly(&mut buf);
        Ok(buf)
    }
}

impl fmt::Debug for SparseSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseSpectrum(n={}, k={}, degree={})",
            self.n,
            self.support_size(),
            self.degree()
        )
    }
}

/// In-place unnormalized Walsh-Hadamard butterfly:
/// `out[f] = sum_x in[x] * (-1)^popcount(f & x)`.
fn butterfly(buf: &mut [f64]) {
    let len = buf.len();
    let mut h = 1;
    while h < len {
        for chunk in buf.chunks_mut(2 * h) {
            for i in 0..h {
                let a = chunk[i];
                let b = chunk[i + h];
                chunk[i] = a + b;
                chunk[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Dense Walsh-Hadamard analysis of a full truth table in natural order
/// (feature 0 is the most significant index bit). Returns
/// `c_f = 2^-n * sum_x h(x) (-1)^<f, x>` with magnitudes below
/// [`ZERO_DROP_THRESHOLD`] dropped.
pub fn dense_wht(values: &[f64]) -> Result<SparseSpectrum> {
    dense_wht_with_cap(values, DEFAULT_DIMENSION_CAP)
}

pub fn dense_wht_with_cap(values: &[f64], cap: usize) -> Result<SparseSpectrum> {
    let len = values.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidParameter {
            name: "values",
            message: format!("length {len} is not a power of two"),
        });
    }
    let n = len.trailing_zeros() as usize;
    if n > cap {
        return Err(Error::ResourceGuard(format!(
            "dense transform of dimension {n} exceeds cap {cap}"
        )));
    }
    let mut buf = values.to_vec();
    butterfly(&mut buf);
    let scale = 1.0 / len as f64;
    let mut terms = Vec::new();
    for (idx, value) in buf.into_iter().enumerate() {
        let c = value * scale;
        if c.abs() >= ZERO_DROP_THRESHOLD {
            let mask = BitWords::from_truth_table_index(n, idx as u64);
            terms.push((Frequency::from_mask(mask), c));
        }
    }
    SparseSpectrum::from_terms(n, terms)
}

/// Energy accounting emitted by [`prune`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub total_energy: f64,
    pub kept_energy: f64,
    pub dropped_count: usize,
}

/// Keeps the largest-magnitude terms until they cover `energy_fraction` of
/// the total squared-coefficient mass, never dropping a term with magnitude
/// at least `min_amplitude`. Ties in magnitude break by frequency order and
/// the result is canonically sorted.
///
/// With parameters paired so that terms below `min_amplitude` hold less than
/// `1 - energy_fraction` of the energy (true of the preset pair
/// `(0.9995, 0.005)` on the spectra it targets), the kept set collapses to
/// the amplitude rule and pruning is idempotent.
pub fn prune(
    spectrum: &SparseSpectrum,
    energy_fraction: f64,
    min_amplitude: f64,
) -> Result<(SparseSpectrum, EnergyReport)> {
    if energy_fraction.is_nan() || energy_fraction <= 0.0 || energy_fraction > 1.0 {
        return Err(Error::InvalidParameter {
            name: "energy_fraction",
            message: format!("{energy_fraction} outside (0, 1]"),
        });
    }
    if min_amplitude.is_nan() || min_amplitude < 0.0 {
        return Err(Error::InvalidParameter {
            name: "min_amplitude",
            message: format!("{min_amplitude} is negative"),
        });
    }

    let m = spectrum.terms.len();
    if m == 0 {
        return Ok((
            spectrum.clone(),
            EnergyReport {
                total_energy: 0.0,
                kept_energy: 0.0,
                dropped_count: 0,
            },
        ));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ca = spectrum.terms[a].1.abs();
        let cb = spectrum.terms[b].1.abs();
        cb.partial_cmp(&ca)
            .unwrap()
            .then_with(|| spectrum.terms[a].0.cmp(&spectrum.terms[b].0))
    });

    // Total and cumulative sums share one summation order so that
    // energy_fraction == 1.0 keeps everything exactly.
    let sq: Vec<f64> = order
        .iter()
        .map(|&i| spectrum.terms[i].1 * spectrum.terms[i].1)
        .collect();
    let total: f64 = sq.iter().sum();
    let target = energy_fraction * total;

    let mut kept_len = 0;
    let mut cum = 0.0;
    while kept_len < m && cum < target {
        cum += sq[kept_len];
        kept_len += 1;
    }
    while kept_len < m && spectrum.terms[order[kept_len]].1.abs() >= min_amplitude {
        cum += sq[kept_len];
        kept_len += 1;
    }

    let kept_terms: Vec<(Frequency, f64)> = order[..kept_len]
        .iter()
        .map(|&i| spectrum.terms[i].clone())
        .collect();
    let report = EnergyReport {
        total_energy: total,
        kept_energy: cum,
        dropped_count: m - kept_len,
    };
    Ok((SparseSpectrum::from_terms(spectrum.n, kept_terms)?, report))
}

/// Number of frequencies of degree at most `d` over `n` variables:
/// `sum_{i=0}^{d} C(n, i)`, exact up to `n = 64`.
pub fn degree_support_count(n: usize, d: usize) -> Result<u128> {
    if d > n || n > 64 {
        return Err(Error::InvalidParameter {
            name: "degree_support_count",
            message: format!("need d <= n <= 64, got n={n}, d={d}"),
        });
    }
    let mut sum: u128 = 0;
    let mut binom: u128 = 1;
    for i in 0..=d {
        sum += binom;
        if i < n {
            binom = binom * (n as u128 - i as u128) / (i as u128 + 1);
        }
    }
    Ok(sum)
}

/// Exact binomial coefficient in u128; callers keep arguments small enough
/// not to overflow (n <= 64 everywhere in this crate).
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

// ---------------------------------------------------------------------------
// Spectrum file format
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SpectrumFileTerm {
    freq: Vec<usize>,
    coef: f64,
}

#[derive(Serialize)]
struct SpectrumFile {
    n: usize,
    convention: &'static str,
    terms: Vec<SpectrumFileTerm>,
}

/// Serializes in the artifact format:
/// `{"n", "convention": "pm1_unnormalized", "terms": [{"freq", "coef"}]}`
/// with terms sorted by (degree, mask order). Round-trips f64 bit-exactly.
pub fn spectrum_to_json(spectrum: &SparseSpectrum) -> String {
    let file = SpectrumFile {
        n: spectrum.n(),
        convention: SPECTRUM_CONVENTION,
        terms: spectrum
            .terms()
            .iter()
            .map(|(f, c)| SpectrumFileTerm {
                freq: f.indices(),
                coef: *c,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("spectrum serialization cannot fail")
}

pub fn write_spectrum_file(path: &Path, spectrum: &SparseSpectrum) -> Result<()> {
    std::fs::write(path, spectrum_to_json(spectrum)).map_err(|e| Error::io(path, e))
}

pub fn spectrum_from_json(text: &str) -> Result<SparseSpectrum> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::schema("", e.to_string()))?;
    spectrum_from_value(&value)
}

pub fn read_spectrum_file(path: &Path) -> Result<SparseSpectrum> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    spectrum_from_json(&text)
}

fn spectrum_from_value(value: &Value) -> Result<SparseSpectrum> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("", "expected a JSON object"))?;
    let n = obj
        .get("n")
        .ok_or_else(|| Error::schema("/n", "missing field"))?
        .as_u64()
        .ok_or_else(|| Error::schema("/n", "expected a non-negative integer"))? as usize;
    let convention = obj
        .get("convention")
        .ok_or_else(|| Error::schema("/convention", "missing field"))?
        .as_str()
        .ok_or_else(|| Error::schema("/convention", "expected a string"))?;
    if convention != SPECTRUM_CONVENTION {
        return Err(Error::schema(
            "/convention",
            format!("expected {SPECTRUM_CONVENTION:?}, got {convention:?}"),
        ));
    }
    let terms_value = obj
        .get("terms")
        .ok_or_else(|| Error::schema("/terms", "missing field"))?
        .as_array()
        .ok_or_else(|| Error::schema("/terms", "expected an array"))?;

    let mut terms = Vec::with_capacity(terms_value.len());
    for (ti, term) in terms_value.iter().enumerate() {
        let pointer = format!("/terms/{ti}");
        let term = term
            .as_object()
            .ok_or_else(|| Error::schema(&pointer, "expected an object"))?;
        let freq = term
            .get("freq")
            .ok_or_else(|| Error::schema(format!("{pointer}/freq"), "missing field"))?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{pointer}/freq"), "expected an array"))?;
        let mut indices = Vec::with_capacity(freq.len());
        for (fi, idx) in freq.iter().enumerate() {
            let ptr = format!("{pointer}/freq/{fi}");
            let idx = idx
                .as_u64()
                .ok_or_else(|| Error::schema(&ptr, "expected a non-negative integer"))?
                as usize;
            if idx >= n {
                return Err(Error::schema(&ptr, format!("index {idx} >= n={n}")));
            }
            if let Some(&prev) = indices.last() {
                if idx <= prev {
                    return Err(Error::schema(&ptr, "indices must be strictly ascending"));
                }
            }
            indices.push(idx);
        }
        let coef = term
            .get("coef")
            .ok_or_else(|| Error::schema(format!("{pointer}/coef"), "missing field"))?
            .as_f64()
            .ok_or_else(|| Error::schema(format!("{pointer}/coef"), "expected a number"))?;
        if !coef.is_finite() || coef == 0.0 {
            return Err(Error::schema(
                format!("{pointer}/coef"),
                "coefficient must be finite and nonzero",
            ));
        }
        terms.push((Frequency::from_indices(n, &indices)?, coef));
    }
    let spectrum = SparseSpectrum::from_terms(n, terms)
        .map_err(|e| Error::schema("/terms", e.to_string()))?;
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freq(n: usize, idx: &[usize]) -> Frequency {
        Frequency::from_indices(n, idx).unwrap()
    }

    #[test]
    fn evaluate_constant() {
        let s = SparseSpectrum::from_terms(4, vec![(Frequency::empty(4), 3.5)]).unwrap();
        let x = PointVector::from_bits(&[1, 0, 1, 1]).unwrap();
        assert_eq!(s.evaluate(&x).unwrap(), 3.5);
    }

    #[test]
    fn evaluate_single_parity_term() {
        let s = SparseSpectrum::from_terms(2, vec![(freq(2, &[0]), 1.0)]).unwrap();
        let x = PointVector::from_bits(&[1, 0]).unwrap();
        assert_eq!(s.evaluate(&x).unwrap(), -1.0);
    }

    #[test]
    fn evaluate_two_terms_by_hand() {
        // {(1,1) -> 2, (0,0) -> 1} at x=(1,0): 1 + 2*(-1)^1 = -1
        let s = SparseSpectrum::from_terms(
            2,
            vec![(freq(2, &[0, 1]), 2.0), (Frequency::empty(2), 1.0)],
        )
        .unwrap();
        let x = PointVector::from_bits(&[1, 0]).unwrap();
        assert_eq!(s.evaluate(&x).unwrap(), -1.0);
    }

    #[test]
    fn evaluate_dimension_mismatch() {
        let s = SparseSpectrum::empty(3);
        let x = PointVector::zeros(2);
        assert!(matches!(
            s.evaluate(&x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dense_wht_constant() {
        let s = dense_wht(&[5.0; 8]).unwrap();
        assert_eq!(s.support_size(), 1);
        assert_eq!(s.coefficient(&Frequency::empty(3)), Some(5.0));
    }

    #[test]
    fn dense_wht_pure_basis_function() {
        // h(x) = (-1)^{x_0} over n=2 in natural order (feature 0 most
        // significant): (1, 1, -1, -1) -> {(1,0) -> 1.0}.
        let s = dense_wht(&[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(s.support_size(), 1);
        assert_eq!(s.coefficient(&freq(2, &[0])), Some(1.0));
    }

    #[test]
    fn dense_wht_round_trip_random() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
        let s = dense_wht(&values).unwrap();
        for idx in 0..8u64 {
            let x = PointVector::from_truth_table_index(3, idx);
            let got = s.evaluate(&x).unwrap();
            assert!((got - values[idx as usize]).abs() <= 1e-12);
        }
    }

    #[test]
    fn dense_wht_rejects_bad_lengths() {
        assert!(matches!(
            dense_wht(&[1.0, 2.0, 3.0]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            dense_wht_with_cap(&[0.0; 16], 3),
            Err(Error::ResourceGuard(_))
        ));
    }

    #[test]
    fn prune_full_fraction_is_identity() {
        let s = SparseSpectrum::from_terms(
            3,
            vec![(freq(3, &[0]), 0.5), (freq(3, &[1, 2]), -2.0)],
        )
        .unwrap();
        let (p, report) = prune(&s, 1.0, 0.0).unwrap();
        assert_eq!(p, s);
        assert_eq!(report.dropped_count, 0);
        assert_eq!(report.kept_energy, report.total_energy);
    }

    #[test]
    fn prune_drops_small_term() {
        let s = SparseSpectrum::from_terms(
            2,
            vec![(freq(2, &[0]), 3.0), (freq(2, &[1]), 0.001)],
        )
        .unwrap();
        let (p, report) = prune(&s, 0.9995, 0.005).unwrap();
        assert_eq!(p.support_size(), 1);
        assert_eq!(p.coefficient(&freq(2, &[0])), Some(3.0));
        assert_eq!(report.dropped_count, 1);
        assert!(report.kept_energy >= 0.9995 * report.total_energy);
    }

    #[test]
    fn prune_min_amplitude_guard_keeps_terms() {
        let s = SparseSpectrum::from_terms(
            2,
            vec![(freq(2, &[0]), 3.0), (freq(2, &[1]), 0.01)],
        )
        .unwrap();
        // Tiny fraction would drop the 0.01 term, but min_amplitude saves it.
        let (p, report) = prune(&s, 0.5, 0.005).unwrap();
        assert_eq!(p.support_size(), 2);
        assert_eq!(report.dropped_count, 0);
    }

    #[test]
    fn prune_is_idempotent_at_preset_parameters() {
        // Head terms above the amplitude guard, a genuine sub-amplitude tail
        // holding well under 0.05% of the energy.
        let mut terms = vec![
            (freq(6, &[0]), 2.0),
            (freq(6, &[1]), -0.9),
            (freq(6, &[0, 1]), 0.31),
            (freq(6, &[2]), 0.05),
        ];
        for i in 2..6 {
            terms.push((freq(6, &[i, i - 1]), 1e-4 * i as f64));
        }
        let s = SparseSpectrum::from_terms(6, terms).unwrap();
        let (once, report) = prune(&s, 0.9995, 0.005).unwrap();
        assert!(report.dropped_count > 0);
        assert!(report.kept_energy >= 0.9995 * report.total_energy);
        let (twice, second) = prune(&once, 0.9995, 0.005).unwrap();
        assert_eq!(once, twice);
        assert_eq!(second.dropped_count, 0);
    }

    #[test]
    fn degree_support_count_examples() {
        assert_eq!(degree_support_count(10, 2).unwrap(), 56);
        assert_eq!(degree_support_count(13, 3).unwrap(), 378);
        assert_eq!(degree_support_count(8, 8).unwrap(), 256);
        assert_eq!(degree_support_count(64, 64).unwrap(), 1u128 << 64);
        assert!(degree_support_count(10, 11).is_err());
    }

    #[test]
    fn parseval_holds_for_random_table() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = dense_wht(&values).unwrap();
        let lhs: f64 = values.iter().map(|v| v * v).sum();
        let rhs = 64.0 * s.energy();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn spectrum_json_round_trip_bit_exact() {
        let s = SparseSpectrum::from_terms(
            5,
            vec![
                (Frequency::empty(5), 0.1 + 0.2),
                (freq(5, &[1, 3]), -1.0 / 3.0),
                (freq(5, &[0]), 5e-13),
            ],
        )
        .unwrap();
        let text = spectrum_to_json(&s);
        let back = spectrum_from_json(&text).unwrap();
        assert_eq!(back.n(), s.n());
        assert_eq!(back.support_size(), s.support_size());
        for ((fa, ca), (fb, cb)) in s.terms().iter().zip(back.terms()) {
            assert_eq!(fa, fb);
            assert_eq!(ca.to_bits(), cb.to_bits());
        }
    }

    #[test]
    fn spectrum_json_reports_pointer_on_bad_term() {
        let text = r#"{"n": 3, "convention": "pm1_unnormalized",
                       "terms": [{"freq": [0], "coef": 1.0},
                                 {"freq": [2, 1], "coef": 0.5}]}"#;
        let err = spectrum_from_json(text).unwrap_err();
        match err {
            Error::SchemaViolation { pointer, .. } => {
                assert_eq!(pointer, "/terms/1/freq/1");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn to_dense_matches_evaluate() {
        let s = SparseSpectrum::from_terms(
            3,
            vec![(freq(3, &[0, 2]), 1.25), (freq(3, &[1]), -0.5)],
        )
        .unwrap();
        let dense = s.to_dense().unwrap();
        for idx in 0..8u64 {
            let x = PointVector::from_truth_table_index(3, idx);
            assert!((dense[idx as usize] - s.evaluate(&x).unwrap()).abs() <= 1e-12);
        }
    }
}
