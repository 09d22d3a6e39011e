//! Synthetic dataset generation.
//!
//! Each row starts from a latent pair (a, x) drawn from a zero-mean
//! unit-variance bivariate Gaussian with covariance `cov_ax`, plus `d`
//! independent standard-normal predictors k. The protected column is
//! z = 1{a >= 0}, the systematic utility V is a linear or quadratic
//! function of (x, k) with signed half-unit weights, and the outcome is
//! Bernoulli(sigmoid(V)). Generation rejects and re-draws any dataset
//! whose minority outcome class falls below 40% of the rows.

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tabular::Dataset;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Covariance of the latent (a, x) pair, in [0, 1].
    pub cov_ax: f64,
    /// Number of k-predictors, d.
    pub n_predictors: usize,
    pub sample_size: usize,
    pub scenario: Scenario,
    pub seed: u64,
    pub max_rejections: u32,
}

impl SyntheticConfig {
    pub fn new(
        cov_ax: f64,
        n_predictors: usize,
        sample_size: usize,
        scenario: Scenario,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&cov_ax) {
            return Err(Error::Config(format!("cov_ax {cov_ax} must be in [0, 1]")));
        }
        if sample_size == 0 {
            return Err(Error::Config("sample_size must be >= 1".into()));
        }
        Ok(Self {
            cov_ax,
            n_predictors,
            sample_size,
            scenario,
            seed,
            max_rejections: 100,
        })
    }
}

/// Coefficients of the true utility function. The k-entry signs are
/// drawn once per dataset; the quadratic-only fields are empty in the
/// linear scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub alpha: f64,
    pub beta_x1: f64,
    pub beta_x2: f64,
    pub beta_k1: Vec<f64>,
    pub beta_k2: Vec<f64>,
}

impl UtilityWeights {
    /// Draw the signed half-unit k-weights for one dataset.
    pub fn draw(scenario: Scenario, d: usize, rng: &mut ChaCha8Rng) -> UtilityWeights {
        let mut signs = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.gen::<bool>() { 0.5 } else { -0.5 })
                .collect()
        };
        match scenario {
            Scenario::Linear => UtilityWeights {
                alpha: 0.0,
                beta_x1: 1.0,
                beta_x2: 0.0,
                beta_k1: signs(d),
                beta_k2: Vec::new(),
            },
            Scenario::Quadratic => UtilityWeights {
                alpha: -0.5,
                beta_x1: 1.0,
                beta_x2: 0.5,
                beta_k1: signs(d),
                beta_k2: signs(d),
            },
        }
    }
}

/// One generated row before assembly into a Dataset.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub a: f64,
    pub x: f64,
    pub k: Vec<f64>,
    pub z: u8,
    pub v: f64,
    pub y: u8,
}

/// Draw the latent base variables for every row: (a, x) correlated
/// bivariate normal via the 2x2 Cholesky factor, k independent
/// standard normal.
pub fn sample_base(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<(f64, f64, Vec<f64>)> {
    let rho = config.cov_ax;
    let tail = (1.0 - rho * rho).max(0.0).sqrt();
    (0..config.sample_size)
        .map(|_| {
            let u1: f64 = rng.sample(StandardNormal);
            let u2: f64 = rng.sample(StandardNormal);
            let a = u1;
            let x = rho * u1 + tail * u2;
            let k = (0..config.n_predictors)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            (a, x, k)
        })
        .collect()
}

/// z = 1 exactly when a >= 0 (boundary inclusive).
pub fn threshold_protected(a: f64) -> u8 {
    u8::from(a >= 0.0)
}

/// Systematic utility V for one row.
pub fn systematic_utility(
    x: f64,
    k: &[f64],
    w: &UtilityWeights,
    scenario: Scenario,
) -> Result<f64> {
    if k.len() != w.beta_k1.len() {
        return Err(Error::DimensionMismatch(format!(
            "k has {} entries, beta_k1 has {}",
            k.len(),
            w.beta_k1.len()
        )));
    }
    let linear: f64 = w.alpha + x * w.beta_x1 + k.iter().zip(&w.beta_k1).map(|(k, b)| k * b).sum::<f64>();
    match scenario {
        Scenario::Linear => Ok(linear),
        Scenario::Quadratic => {
            if k.len() != w.beta_k2.len() {
                return Err(Error::DimensionMismatch(format!(
                    "k has {} entries, beta_k2 has {}",
                    k.len(),
                    w.beta_k2.len()
                )));
            }
            Ok(linear
                + x * x * w.beta_x2
                + k.iter().zip(&w.beta_k2).map(|(k, b)| k * k * b).sum::<f64>())
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli outcome with probability sigmoid(v).
pub fn sample_outcome(v: f64, rng: &mut ChaCha8Rng) -> u8 {
    u8::from(rng.gen::<f64>() < sigmoid(v))
}

/// Metadata recorded alongside a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SyntheticConfig,
    pub weights: UtilityWeights,
    pub rejections: u32,
    pub minority_fraction: f64,
    pub empirical_cov_zx: f64,
    pub empirical_mean_z: f64,
    pub empirical_mean_v: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub meta: SynthMeta,
}

fn generate_once(config: &SyntheticConfig, seed: u64) -> Result<GeneratedDataset> {
    let mut rng = stream(seed);
    // Weights are fixed per dataset, drawn before any row.
    let weights = UtilityWeights::draw(config.scenario, config.n_predictors, &mut rng);
    let base = sample_base(config, &mut rng);
    let n = config.sample_size;
    let d = config.n_predictors;

    let mut rows: Vec<RawRow> = Vec::with_capacity(n);
    for (a, x, k) in base {
        let z = threshold_protected(a);
        let v = systematic_utility(x, &k, &weights, config.scenario)?;
        let y = sample_outcome(v, &mut rng);
        rows.push(RawRow { a, x, k, z, v, y });
    }

    // Feature layout: [z, x, k1..kd]; z doubles as the protected column.
    let p = 2 + d;
    let mut features = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    let mut protected = Vec::with_capacity(n);
    let mut sum_z = 0.0;
    let mut sum_x = 0.0;
    let mut sum_zx = 0.0;
    let mut sum_v = 0.0;
    for (i, row) in rows.iter().enumerate() {
        features[[i, 0]] = row.z as f64;
        features[[i, 1]] = row.x;
        for (j, &kj) in row.k.iter().enumerate() {
            features[[i, 2 + j]] = kj;
        }
        labels.push(row.y);
        protected.push(row.z);
        sum_z += row.z as f64;
        sum_x += row.x;
        sum_zx += row.z as f64 * row.x;
        sum_v += row.v;
    }
    let nf = n as f64;
    let mean_z = sum_z / nf;
    let mean_x = sum_x / nf;
    let cov_zx = sum_zx / nf - mean_z * mean_x;

    let mut names = vec!["z".to_string(), "x".to_string()];
    names.extend((1..=d).map(|j| format!("k{j}")));
    let dataset = Dataset::new(
        features,
        labels,
        protected,
        vec![1.0; n],
        names,
        "z".to_string(),
    )?;
    let minority_fraction = dataset.minority_fraction();
    Ok(GeneratedDataset {
        meta: SynthMeta {
            config: config.clone(),
            weights,
            rejections: 0,
            minority_fraction,
            empirical_cov_zx: cov_zx,
            empirical_mean_z: mean_z,
            empirical_mean_v: sum_v / nf,
        },
        dataset,
    })
}

/// Full generation pipeline with the class-balance rejection loop:
/// datasets whose minority outcome class is below 40% are discarded and
/// regenerated from sub-seed `seed + rejection_count`.
pub fn generate_dataset(config: &SyntheticConfig) -> Result<GeneratedDataset> {
    let mut last_fraction = f64::NAN;
    for attempt in 0..config.max_rejections {
        let mut generated = generate_once(config, config.seed.wrapping_add(attempt as u64))?;
        last_fraction = generated.meta.minority_fraction;
        if last_fraction >= 0.40 {
            generated.meta.rejections = attempt;
            return Ok(generated);
        }
    }
    Err(Error::GenerationFailed {
        attempts: config.max_rejections,
        last_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
        let vb = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn base_sample_moments() {
        for &rho in &[0.0, 0.5] {
            let cfg = SyntheticConfig::new(rho, 2, 100_000, Scenario::Linear, 42).unwrap();
            let mut rng = stream(cfg.seed);
            let rows = sample_base(&cfg, &mut rng);
            let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
            assert!((corr(&a, &x) - rho).abs() < 0.02, "rho {rho}");
            assert!((a.iter().sum::<f64>() / a.len() as f64).abs() < 0.02);
            assert!((x.iter().sum::<f64>() / x.len() as f64).abs() < 0.02);
            for j in 0..2 {
                let kj: Vec<f64> = rows.iter().map(|r| r.2[j]).collect();
                assert!((kj.iter().sum::<f64>() / kj.len() as f64).abs() < 0.02);
            }
        }
    }

    #[test]
    fn threshold_sign_cases() {
        assert_eq!(threshold_protected(0.7), 1);
        assert_eq!(threshold_protected(-0.3), 0);
        // boundary is inclusive
        assert_eq!(threshold_protected(0.0), 1);
    }

    #[test]
    fn utility_hand_values() {
        let linear = UtilityWeights {
            alpha: 0.0,
            beta_x1: 1.0,
            beta_x2: 0.0,
            beta_k1: vec![-0.5],
            beta_k2: vec![],
        };
        assert_eq!(
            systematic_utility(0.0, &[0.0], &linear, Scenario::Linear).unwrap(),
            0.0
        );
        assert_eq!(
            systematic_utility(2.0, &[1.0], &linear, Scenario::Linear).unwrap(),
            1.5
        );
        let quad = UtilityWeights {
            alpha: -0.5,
            beta_x1: 1.0,
            beta_x2: 0.5,
            beta_k1: vec![],
            beta_k2: vec![],
        };
        // -0.5 + 1 + 0.5 = 1.0
        assert_eq!(
            systematic_utility(1.0, &[], &quad, Scenario::Quadratic).unwrap(),
            1.0
        );
    }

    #[test]
    fn utility_dimension_mismatch() {
        let w = UtilityWeights {
            alpha: 0.0,
            beta_x1: 1.0,
            beta_x2: 0.0,
            beta_k1: vec![0.5, 0.5],
            beta_k2: vec![],
        };
        assert!(systematic_utility(0.0, &[1.0], &w, Scenario::Linear).is_err());
    }

    #[test]
    fn outcome_rates() {
        let n = 100_000;
        let mut rng = stream(7);
        let rate = |v: f64, rng: &mut ChaCha8Rng| {
            (0..n).filter(|_| sample_outcome(v, rng) == 1).count() as f64 / n as f64
        };
        assert!((rate(0.0, &mut rng) - 0.5).abs() < 0.01);
        assert!(rate(50.0, &mut rng) > 0.999);
        // 1/(1+e^-1) = 0.73106
        assert!((rate(1.0, &mut rng) - 0.731).abs() < 0.01);
    }

    #[test]
    fn generated_dataset_balanced_and_deterministic() {
        let cfg = SyntheticConfig::new(0.0, 5, 100_000, Scenario::Linear, 3).unwrap();
        let a = generate_dataset(&cfg).unwrap();
        let frac = a.meta.minority_fraction;
        assert!((0.40..=0.50).contains(&frac), "minority fraction {frac}");
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a.dataset.features, b.dataset.features);
        assert_eq!(a.dataset.labels, b.dataset.labels);
    }

    #[test]
    fn cov_zx_matches_closed_form() {
        // Independent oracle: for standard bivariate normals,
        // E[x * 1{a>=0}] = rho * phi(0), so Cov(z, x) = rho / sqrt(2*pi).
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for &rho in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let cfg = SyntheticConfig::new(rho, 2, 100_000, Scenario::Linear, 17).unwrap();
            let g = generate_dataset(&cfg).unwrap();
            let expected = rho * phi0;
            assert!(
                (g.meta.empirical_cov_zx - expected).abs() < 0.01,
                "rho {rho}: cov {} vs {}",
                g.meta.empirical_cov_zx,
                expected
            );
            assert!((g.meta.empirical_mean_z - 0.5).abs() < 0.02);
            assert!(g.meta.empirical_mean_v.abs() < 0.05);
        }
    }

    #[test]
    fn z_independent_of_k() {
        let cfg = SyntheticConfig::new(0.75, 3, 100_000, Scenario::Linear, 23).unwrap();
        let g = generate_dataset(&cfg).unwrap();
        let z: Vec<f64> = g.dataset.protected.iter().map(|&z| z as f64).collect();
        for j in 0..3 {
            let k: Vec<f64> = g.dataset.features.column(2 + j).to_vec();
            assert!(super::tests::corr(&z, &k).abs() < 0.02);
        }
    }

    #[test]
    fn protected_column_included_in_features() {
        let cfg = SyntheticConfig::new(0.5, 1, 1000, Scenario::Quadratic, 5).unwrap();
        let g = generate_dataset(&cfg).unwrap();
        assert_eq!(g.dataset.feature_names[0], "z");
        for (i, &z) in g.dataset.protected.iter().enumerate() {
            assert_eq!(g.dataset.features[[i, 0]], z as f64);
        }
    }
}
