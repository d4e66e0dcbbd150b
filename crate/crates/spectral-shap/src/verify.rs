//! Randomized property suites behind the `verify` subcommand: the closed
//! form against the exponential-sum oracle, the Shapley axioms, variant
//! agreement, and the combinatorial identity underlying the weight table.

use crate::error::{Error, Result};
use crate::oracles::exact_shap_bruteforce;
use crate::shap::{BackgroundDataset, ShapEngine, Variant};
use crate::spectrum::binomial;
use crate::synth;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Dimension; the oracle legs cap this at 12.
    pub n: usize,
    /// Support size of the random spectra.
    pub k: usize,
    pub max_degree: usize,
    pub trials: usize,
    pub seed: u64,
    /// Diagnostic hook: corrupt the engine weight table so the suites must
    /// detect the failure.
    pub corrupt_weight_table: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: 10,
            k: 32,
            max_degree: 3,
            trials: 20,
            seed: 0,
            corrupt_weight_table: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Seed reproducing the worst case.
    pub worst_seed: u64,
}

impl SuiteResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        SuiteResult {
            name,
            cases: 0,
            max_deviation: 0.0,
            tolerance,
            pass: true,
            worst_seed: 0,
        }
    }

    fn record(&mut self, deviation: f64, seed: u64) {
        self.cases += 1;
        if deviation > self.max_deviation {
            self.max_deviation = deviation;
            self.worst_seed = seed;
        }
        if deviation > self.tolerance {
            self.pass = false;
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    pub fn first_failure(&self) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| !s.pass)
    }
}

struct Instance {
    engine: ShapEngine,
    background: BackgroundDataset,
    query: crate::spectrum::PointVector,
    spectrum: crate::spectrum::SparseSpectrum,
    seed: u64,
}

fn build_instance(config: &VerifyConfig, trial: usize) -> Result<Instance> {
    let seed = config
        .seed
        .wrapping_add(1 + trial as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let spectrum = synth::random_spectrum(config.n, config.k, config.max_degree, seed)?;
    let mut rng = synth::seeded_rng(seed ^ 0xABCD);
    let rows = 1 + (trial % 20);
    let background = BackgroundDataset::new(
        config.n,
        (0..rows).map(|_| synth::random_point(config.n, &mut rng)).collect(),
    )?;
    let query = synth::random_point(config.n, &mut rng);
    let mut engine = ShapEngine::new(spectrum.clone(), background.clone())?;
    if config.corrupt_weight_table {
        engine.table[0] = 0.5;
    }
    Ok(Instance {
        engine,
        background,
        query,
        spectrum,
        seed,
    })
}

/// Runs every suite and reports per-suite maxima. Efficiency runs first so
/// a corrupted weight table is named as an efficiency violation.
pub fn run_suites(config: &VerifyConfig) -> Result<VerifyReport> {
    if config.n < 2 || config.n > 12 {
        return Err(Error::ResourceGuard(format!(
            "verify needs 2 <= n <= 12 for the brute-force legs, got {}",
            config.n
        )));
    }
    if config.trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            message: "need at least one trial".into(),
        });
    }

    let mut efficiency = SuiteResult::new("efficiency", 1e-9);
    let mut dummy = SuiteResult::new("dummy", 0.0);
    let mut background_match = SuiteResult::new("background-match", 0.0);
    let mut linearity = SuiteResult::new("linearity", 1e-10);
    let mut oracle = SuiteResult::new("oracle-equivalence", 1e-9);
    let mut variants = SuiteResult::new("variant-agreement", 1e-10);

    for trial in 0..config.trials {
        let inst = build_instance(config, trial)?;
        let n = config.n;

        // Efficiency: sum(phi) == prediction - base_value.
        let result = inst.engine.shap_values(&inst.query, Variant::Base)?;
        efficiency.record(result.efficiency_residual().abs(), inst.seed);

        // Dummy: a feature absent from every frequency gets exactly zero.
        let dropped = trial % n;
        let reduced_terms: Vec<_> = inst
            .spectrum
            .terms()
            .iter()
            .filter(|(f, _)| !f.contains(dropped))
            .cloned()
            .collect();
        let reduced = crate::spectrum::SparseSpectrum::from_terms(n, reduced_terms)?;
        let mut reduced_engine = ShapEngine::new(reduced.clone(), inst.background.clone())?;
        if config.corrupt_weight_table {
            reduced_engine.table[0] = 0.5;
        }
        let r = reduced_engine.shap_values(&inst.query, Variant::Base)?;
        dummy.record(r.attributions[dropped].abs(), inst.seed);

        // Background match: force one coordinate of every row to the query.
        let matched = (trial + 1) % n;
        let forced: Vec<_> = inst
            .background
            .points()
            .iter()
            .map(|p| {
                let mut bits = p.bits();
                bits[matched] = u8::from(inst.query.get(matched));
                crate::spectrum::PointVector::from_bits(&bits).expect("bits are 0/1")
            })
            .collect();
        let forced_bg = BackgroundDataset::new(n, forced)?;
        let forced_engine = ShapEngine::new(inst.spectrum.clone(), forced_bg)?;
        let r = forced_engine.shap_values(&inst.query, Variant::Base)?;
        background_match.record(r.attributions[matched].abs(), inst.seed);

        // Linearity over the explained function.
        let other = synth::random_spectrum(n, config.k.min(16), config.max_degree, inst.seed ^ 0x55)?;
        let combo = inst.spectrum.linear_combination(1.75, &other, -0.5)?;
        let ra = inst.engine.shap_values(&inst.query, Variant::Base)?;
        let rb = ShapEngine::new(other, inst.background.clone())?
            .shap_values(&inst.query, Variant::Base)?;
        let rc = ShapEngine::new(combo, inst.background.clone())?
            .shap_values(&inst.query, Variant::Base)?;
        let dev = (0..n)
            .map(|i| {
                (rc.attributions[i] - (1.75 * ra.attributions[i] - 0.5 * rb.attributions[i])).abs()
            })
            .fold(0.0f64, f64::max);
        linearity.record(dev, inst.seed);

        // Oracle equivalence against the exponential sum.
        let exact = exact_shap_bruteforce(&inst.spectrum, &inst.query, &inst.background)?;
        let dev = result
            .attributions
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        oracle.record(dev, inst.seed);

        // Variant agreement, pairwise.
        let all: Vec<Vec<f64>> = Variant::ALL
            .iter()
            .map(|&v| {
                inst.engine
                    .shap_values(&inst.query, v)
                    .map(|r| r.attributions)
            })
            .collect::<Result<_>>()?;
        let mut dev = 0.0f64;
        for (a, phi_a) in all.iter().enumerate() {
            for phi_b in &all[a + 1..] {
                for (x, y) in phi_a.iter().zip(phi_b) {
                    dev = dev.max((x - y).abs());
                }
            }
        }
        variants.record(dev, inst.seed);
    }

    // Exact integer identity behind the closed-form weight:
    // sum_b C(a+b, a) C(n-a-b-1, |A|-a) == C(n, |A|+1).
    let mut identity = SuiteResult::new("combinatorial-identity", 0.0);
    let n_max = config.n.min(12);
    for n in 1..=n_max {
        for a_size in 0..n {
            for a in 0..=a_size {
                let mut sum: u128 = 0;
                for b in 0..=(n - a_size - 1) {
                    sum += binomial((a + b) as u64, a as u64)
                        * binomial((n - a - b - 1) as u64, (a_size - a) as u64);
                }
                let expect = binomial(n as u64, (a_size + 1) as u64);
                identity.record(if sum == expect { 0.0 } else { 1.0 }, n as u64);
            }
        }
    }

    Ok(VerifyReport {
        suites: vec![
            efficiency,
            dummy,
            background_match,
            linearity,
            oracle,
            variants,
            identity,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let config = VerifyConfig {
            trials: 6,
            ..VerifyConfig::default()
        };
        let report = run_suites(&config).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.suites.len(), 7);
        let oracle = report
            .suites
            .iter()
            .find(|s| s.name == "oracle-equivalence")
            .unwrap();
        assert!(oracle.max_deviation <= 1e-9);
    }

    #[test]
    fn corrupted_weight_table_fails_efficiency_first() {
        let config = VerifyConfig {
            trials: 3,
            corrupt_weight_table: true,
            ..VerifyConfig::default()
        };
        let report = run_suites(&config).unwrap();
        assert!(!report.all_pass());
        assert_eq!(report.first_failure().unwrap().name, "efficiency");
    }

    #[test]
    fn guards_reject_large_n() {
        let config = VerifyConfig {
            n: 13,
            ..VerifyConfig::default()
        };
        assert!(matches!(
            run_suites(&config),
            Err(Error::ResourceGuard(_))
        ));
    }
}
