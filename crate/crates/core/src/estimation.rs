//! Sampling oracles, Hoeffding sample sizes and relative-entropy estimates.
//!
//! Randomness comes from ChaCha8 keyed by a `u64` seed. Trial `i` of an
//! experiment uses stream `i` of that key (see [`trial_rng`]), so results do not
//! depend on scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmat::{classical_relative_entropy, ThermalContext};

pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// ⌈(d ln 2 + ln(1/δ)) / (2η²)⌉.
pub fn hoeffding_sample_size(d_alphabet: usize, eta: f64, delta: f64) -> Result<u64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0,1], got {eta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1), got {delta}")));
    }
    let v = (d_alphabet as f64 * std::f64::consts::LN_2 + (1.0 / delta).ln()) / (2.0 * eta * eta);
    Ok(v.ceil() as u64)
}

/// Radius guaranteed by m samples at confidence 1−δ (inverse of [`hoeffding_sample_size`]).
pub fn hoeffding_radius(d_alphabet: usize, m: u64, delta: f64) -> f64 {
    ((d_alphabet as f64 * std::f64::consts::LN_2 + (1.0 / delta).ln()) / (2.0 * m.max(1) as f64)).sqrt()
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * l1_distance(p, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone)]
pub struct SamplingOracle {
    pub distribution: Vec<f64>,
    pub mode: SamplingMode,
}

impl SamplingOracle {
    pub fn new(distribution: Vec<f64>, mode: SamplingMode) -> Result<Self> {
        let s: f64 = distribution.iter().sum();
        if distribution.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("oracle distribution must be a probability vector".into()));
        }
        Ok(SamplingOracle { distribution, mode })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    pub counts: Vec<u64>,
    pub m: u64,
    pub p_hat: Vec<f64>,
}

/// Multinomial counts through successive conditional binomials.
pub fn sample_counts<R: Rng + ?Sized>(p: &[f64], m: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0; p.len()];
    let mut left = m;
    let mut mass = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() || mass <= 0.0 {
            counts[i] = left;
            break;
        }
        let q = (pi / mass).clamp(0.0, 1.0);
        let draw = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        counts[i] = draw;
        left -= draw;
        mass -= pi;
    }
    counts
}

/// Draw m i.i.d. symbols (sampled mode) or return p itself (exact mode).
pub fn sample_types(oracle: &SamplingOracle, m: u64, seed: u64) -> Result<EmpiricalDistribution> {
    let mut rng = trial_rng(seed, 0);
    sample_types_with(oracle, m, &mut rng)
}

pub fn sample_types_with<R: Rng + ?Sized>(oracle: &SamplingOracle, m: u64, rng: &mut R) -> Result<EmpiricalDistribution> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    match oracle.mode {
        SamplingMode::Exact => {
            // largest-remainder rounding keeps Σ counts = m; p̂ is p itself
            let raw: Vec<f64> = oracle.distribution.iter().map(|p| p * m as f64).collect();
            let mut counts: Vec<u64> = raw.iter().map(|x| x.floor() as u64).collect();
            let mut rest = m - counts.iter().sum::<u64>();
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
            for i in order {
                if rest == 0 {
                    break;
                }
                counts[i] += 1;
                rest -= 1;
            }
            Ok(EmpiricalDistribution { counts, m, p_hat: oracle.distribution.clone() })
        }
        SamplingMode::Sampled => {
            let counts = sample_counts(&oracle.distribution, m, rng);
            let p_hat = counts.iter().map(|&c| c as f64 / m as f64).collect();
            Ok(EmpiricalDistribution { counts, m, p_hat })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    /// D(p̂‖t^k)/k in nats per copy.
    pub estimate: f64,
    /// ℓ1 confidence radius of p̂.
    pub radius: f64,
    /// (1 + k(βE_max + ln Z)/√2)·r/k.
    pub error_bar: f64,
    pub confidence: f64,
    pub k: usize,
}

pub fn estimate_relative_entropy(
    p_hat: &[f64],
    thermal_k: &[f64],
    ctx: &ThermalContext,
    k: usize,
    radius: f64,
    confidence: f64,
) -> Result<EstimatorReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let d = classical_relative_entropy(p_hat, thermal_k)?;
    Ok(EstimatorReport {
        estimate: d / k as f64,
        radius,
        error_bar: (ctx.continuity_constant(k) * radius / k as f64).max(0.0),
        confidence,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::thermal_diagonal;

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_sample_size(2, 0.1, 0.05).unwrap(), 220);
        let ln20 = 20f64.ln();
        assert_eq!(hoeffding_sample_size(3, 1.0, 0.05).unwrap(), ((3.0 * std::f64::consts::LN_2 + ln20) / 2.0).ceil() as u64);
        let mut prev = 0;
        for d in [1, 2, 4, 8, 16] {
            let m = hoeffding_sample_size(d, 0.1, 0.05).unwrap();
            assert!(m > prev);
            prev = m;
        }
        assert!(hoeffding_sample_size(2, 0.0, 0.05).is_err());
        assert!(hoeffding_sample_size(2, 0.1, 1.0).is_err());
        assert!(hoeffding_radius(2, 220, 0.05) <= 0.1);
    }

    #[test]
    fn sampling_examples() {
        let exact = SamplingOracle::new(vec![0.25, 0.75], SamplingMode::Exact).unwrap();
        let e = sample_types(&exact, 10, 1).unwrap();
        assert_eq!(e.p_hat, vec![0.25, 0.75]);
        assert_eq!(e.counts.iter().sum::<u64>(), 10);
        let det = SamplingOracle::new(vec![1.0, 0.0], SamplingMode::Sampled).unwrap();
        assert_eq!(sample_types(&det, 37, 5).unwrap().counts, vec![37, 0]);
        let s = SamplingOracle::new(vec![0.2, 0.3, 0.5], SamplingMode::Sampled).unwrap();
        let a = sample_types(&s, 1000, 42).unwrap();
        let b = sample_types(&s, 1000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn coverage_in_total_variation() {
        let m = hoeffding_sample_size(2, 0.1, 0.05).unwrap();
        let p = [0.5, 0.5];
        let oracle = SamplingOracle::new(p.to_vec(), SamplingMode::Sampled).unwrap();
        let bad = (0..1000u64)
            .filter(|&i| {
                let mut rng = trial_rng(7, i);
                total_variation(&sample_types_with(&oracle, m, &mut rng).unwrap().p_hat, &p) > 0.1
            })
            .count();
        assert!(bad as f64 / 1000.0 <= 0.05);
    }

    #[test]
    fn estimator_examples() {
        let ctx = ThermalContext::qubit(1.0);
        let t = thermal_diagonal(&ctx, 1).unwrap();
        let r = estimate_relative_entropy(&t, &t, &ctx, 1, 0.1, 0.95).unwrap();
        assert!(r.estimate.abs() < 1e-15);
        assert!((ctx.continuity_constant(1) - 1.92869).abs() < 1e-4);
        // gap within the bar whenever the ℓ1 distance is within the radius
        let truth = [0.8, 0.2];
        let d_true = classical_relative_entropy(&truth, &t).unwrap();
        let oracle = SamplingOracle::new(truth.to_vec(), SamplingMode::Sampled).unwrap();
        for seed in 0..200 {
            let e = sample_types(&oracle, 300, seed).unwrap();
            let radius = l1_distance(&e.p_hat, &truth);
            let rep = estimate_relative_entropy(&e.p_hat, &t, &ctx, 1, radius, 0.95).unwrap();
            assert!((rep.estimate - d_true).abs() <= rep.error_bar + 1e-12);
        }
    }
}
