//! Method-of-types combinatorics in the log domain with exact integer fallbacks.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial as statrs_ln_factorial;

use crate::error::{Error, Result};

pub const DEFAULT_ITERATION_CAP: u128 = 10_000_000;

/// Occupation numbers of a type class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FreqVector {
    counts: Vec<u64>,
}

impl FreqVector {
    pub fn new(counts: Vec<u64>) -> Self {
        FreqVector { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Zero-sum integer shift of the joint type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftFunction {
    shifts: Vec<i64>,
}

impl ShiftFunction {
    pub fn new(shifts: Vec<i64>) -> Result<Self> {
        if shifts.iter().sum::<i64>() != 0 {
            return Err(Error::InvalidArgument(format!("shift {shifts:?} does not sum to zero")));
        }
        Ok(ShiftFunction { shifts })
    }

    pub fn zero(d: usize) -> Self {
        ShiftFunction { shifts: vec![0; d] }
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }

    pub fn is_zero(&self) -> bool {
        self.shifts.iter().all(|&h| h == 0)
    }

    /// W = Σ h(i) E_i.
    pub fn work(&self, levels: &[Rational64]) -> Rational64 {
        self.shifts.iter().zip(levels).fold(Rational64::zero(), |acc, (&h, e)| acc + e * h)
    }
}

/// Natural-log probability; `-inf` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct LogProb(pub f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn add(self, other: LogProb) -> LogProb {
        LogProb(log_add_exp(self.0, other.0))
    }
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn ln_factorial(n: u64) -> f64 {
    statrs_ln_factorial(n)
}

/// ln |Freq(n, f)| = ln n! − Σ ln f_i!.
pub fn log_freq_count(f: &FreqVector) -> f64 {
    ln_factorial(f.n()) - f.counts.iter().map(|&c| ln_factorial(c)).sum::<f64>()
}

pub fn exact_freq_count(f: &FreqVector) -> BigUint {
    let mut acc = BigUint::one();
    let mut seen: u64 = 0;
    for &c in &f.counts {
        for j in 1..=c {
            acc *= BigUint::from(seen + j);
            acc /= BigUint::from(j);
        }
        seen += c;
    }
    acc
}

/// C(n+d−1, d−1), saturating.
pub fn freq_class_count(n: u64, d: usize) -> u128 {
    if d == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for j in 1..d as u128 {
        acc = match acc.checked_mul(n as u128 + j) {
            Some(v) => v / j,
            None => return u128::MAX,
        };
    }
    acc
}

/// Colexicographic enumeration of all types of length-n strings over d letters.
pub struct FreqIter {
    n: u64,
    current: Option<Vec<u64>>,
}

impl Iterator for FreqIter {
    type Item = FreqVector;
    fn next(&mut self) -> Option<FreqVector> {
        let cur = self.current.clone()?;
        let d = cur.len();
        let mut nxt = cur.clone();
        let mut advanced = false;
        for j in 1..d {
            let tail: u64 = nxt[1..].iter().sum();
            if tail < self.n {
                nxt[j] += 1;
                advanced = true;
                break;
            }
            nxt[j] = 0;
        }
        self.current = if advanced {
            nxt[0] = self.n - nxt[1..].iter().sum::<u64>();
            Some(nxt)
        } else {
            None
        };
        Some(FreqVector { counts: cur })
    }
}

pub fn enumerate_freqs(n: u64, d: usize) -> Result<FreqIter> {
    enumerate_freqs_capped(n, d, DEFAULT_ITERATION_CAP)
}

pub fn enumerate_freqs_capped(n: u64, d: usize, cap: u128) -> Result<FreqIter> {
    if d == 0 {
        return Err(Error::InvalidArgument("alphabet must be non-empty".into()));
    }
    let count = freq_class_count(n, d);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut start = vec![0; d];
    start[0] = n;
    Ok(FreqIter { n, current: Some(start) })
}

// ---------------------------------------------------------------- exact comparisons

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return vec![];
    }
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i as u64).collect()
}

fn legendre(mut n: u64, p: u64) -> i64 {
    let mut e = 0i64;
    while n > 0 {
        n /= p;
        e += n as i64;
    }
    e
}

fn product_tree(mut factors: Vec<BigUint>) -> BigUint {
    if factors.is_empty() {
        return BigUint::one();
    }
    while factors.len() > 1 {
        let mut next = Vec::with_capacity(factors.len().div_ceil(2));
        let mut it = factors.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a * b),
                None => next.push(a),
            }
        }
        factors = next;
    }
    factors.pop().unwrap()
}

/// Exact comparison of ∏ a_i! against ∏ b_j! via prime exponents.
pub fn compare_factorial_products(a: &[u64], b: &[u64]) -> Ordering {
    let max = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for p in primes_up_to(max) {
        let e: i64 = a.iter().map(|&x| legendre(x, p)).sum::<i64>() - b.iter().map(|&x| legendre(x, p)).sum::<i64>();
        match e.cmp(&0) {
            Ordering::Greater => num.push(BigUint::from(p).pow(e as u32)),
            Ordering::Less => den.push(BigUint::from(p).pow((-e) as u32)),
            Ordering::Equal => {}
        }
    }
    product_tree(num).cmp(&product_tree(den))
}

/// ln|Freq(n+l, f+g−h)| − ln|Freq(n,f)| − ln|Freq(l,g)|, or `None` when f+g−h has a negative entry.
pub fn injection_margin(f: &FreqVector, g: &FreqVector, h: &ShiftFunction) -> Option<f64> {
    let target = joint_target(f, g, h)?;
    Some(
        ln_factorial(f.n() + g.n()) - ln_factorial(f.n()) - ln_factorial(g.n())
            + f.counts.iter().zip(&g.counts).zip(&target).map(|((&a, &b), &t)| ln_factorial(a) + ln_factorial(b) - ln_factorial(t)).sum::<f64>(),
    )
}

pub fn joint_target(f: &FreqVector, g: &FreqVector, h: &ShiftFunction) -> Option<Vec<u64>> {
    if f.d() != g.d() || f.d() != h.shifts.len() {
        return None;
    }
    f.counts
        .iter()
        .zip(&g.counts)
        .zip(&h.shifts)
        .map(|((&a, &b), &s)| {
            let v = a as i64 + b as i64 - s;
            (v >= 0).then_some(v as u64)
        })
        .collect()
}

/// Slack below which log-domain decisions are re-checked exactly.
pub fn log_slack(total: u64) -> f64 {
    1e-9 + 64.0 * f64::EPSILON * ln_factorial(total).abs()
}

/// |Freq(n,f)|·|Freq(l,g)| ≤ |Freq(n+l, f+g−h)|.
pub fn injection_feasible(f: &FreqVector, g: &FreqVector, h: &ShiftFunction) -> bool {
    let Some(target) = joint_target(f, g, h) else { return false };
    let margin = injection_margin(f, g, h).expect("target defined");
    if margin.abs() > log_slack(f.n() + g.n()) {
        return margin > 0.0;
    }
    let mut lhs: Vec<u64> = vec![f.n(), g.n()];
    lhs.extend(&target);
    let mut rhs: Vec<u64> = vec![f.n() + g.n()];
    rhs.extend(f.counts.iter().chain(&g.counts));
    compare_factorial_products(&lhs, &rhs) != Ordering::Greater
}

/// ln[|Freq(n,f)| ∏ p_i^{f_i}].
pub fn type_log_probability(f: &FreqVector, p: &[f64]) -> LogProb {
    let mut acc = log_freq_count(f);
    for (&c, &pi) in f.counts.iter().zip(p) {
        if c == 0 {
            continue;
        }
        if pi <= 0.0 {
            return LogProb::ZERO;
        }
        acc += c as f64 * pi.ln();
    }
    LogProb(acc.min(0.0))
}

/// δ-strongly typical types of a distribution p.
#[derive(Debug, Clone)]
pub struct TypicalSet {
    pub p: Vec<f64>,
    pub n: u64,
    pub delta: f64,
}

impl TypicalSet {
    pub fn contains(&self, f: &FreqVector) -> bool {
        f.n() == self.n
            && f.counts.iter().zip(&self.p).all(|(&c, &pi)| {
                if pi <= 0.0 {
                    c == 0
                } else {
                    (c as f64 / self.n as f64 - pi).abs() <= self.delta
                }
            })
    }
}

pub fn typical_mass(p: &[f64], n: u64, delta: f64) -> Result<f64> {
    let set = TypicalSet { p: p.to_vec(), n, delta };
    let logs = enumerate_freqs(n, p.len())?.filter(|f| set.contains(f)).map(|f| type_log_probability(&f, p).0);
    Ok(log_sum_exp(logs).exp().min(1.0))
}

// ---------------------------------------------------------------- binomial shells

pub fn binomial_log_pmf(trials: u64, p: f64, k: u64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == trials { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_factorial(trials) - ln_factorial(k) - ln_factorial(trials - k) + k as f64 * p.ln() + (trials - k) as f64 * (1.0 - p).ln()
}

/// Smallest interval [lo, hi] with at most `tail/2` binomial mass on each side.
pub fn binomial_window(trials: u64, p: f64, tail: f64) -> (u64, u64) {
    if p <= 0.0 {
        return (0, 0);
    }
    if p >= 1.0 {
        return (trials, trials);
    }
    let half = tail / 2.0;
    let mut lo = 0;
    let mut acc = 0.0;
    while lo < trials {
        let m = binomial_log_pmf(trials, p, lo).exp();
        if acc + m > half {
            break;
        }
        acc += m;
        lo += 1;
    }
    let mut hi = trials;
    acc = 0.0;
    while hi > lo {
        let m = binomial_log_pmf(trials, p, hi).exp();
        if acc + m > half {
            break;
        }
        acc += m;
        hi -= 1;
    }
    (lo, hi)
}

/// Binomial mass outside [lo, hi].
pub fn binomial_mass_outside(trials: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let below: f64 = (0..lo.min(trials + 1)).map(|k| binomial_log_pmf(trials, p, k).exp()).sum();
    let above: f64 = (hi.saturating_add(1)..=trials).map(|k| binomial_log_pmf(trials, p, k).exp()).sum();
    (below + above).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(c: &[u64]) -> FreqVector {
        FreqVector::new(c.to_vec())
    }

    fn sh(c: &[i64]) -> ShiftFunction {
        ShiftFunction::new(c.to_vec()).unwrap()
    }

    #[test]
    fn log_count_examples() {
        assert!(log_freq_count(&fv(&[7, 0, 0])).abs() < 1e-12);
        assert!((log_freq_count(&fv(&[2, 2])) - 6f64.ln()).abs() < 1e-12);
        assert!((log_freq_count(&fv(&[1, 1, 1])) - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn enumeration_examples() {
        let v: Vec<Vec<u64>> = enumerate_freqs(2, 2).unwrap().map(|f| f.counts().to_vec()).collect();
        assert_eq!(v, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate_freqs(3, 2).unwrap().count(), 4);
        assert_eq!(enumerate_freqs(4, 3).unwrap().count(), 15);
        assert!(matches!(enumerate_freqs_capped(100, 5, 1000), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn injection_examples() {
        assert!(injection_feasible(&fv(&[0, 1]), &fv(&[1, 0]), &sh(&[-1, 1])));
        assert!(!injection_feasible(&fv(&[1, 1]), &fv(&[1, 0]), &sh(&[-1, 1])));
        assert!(!injection_feasible(&fv(&[1, 0]), &fv(&[1, 0]), &sh(&[3, -3])));
        for f in enumerate_freqs(5, 3).unwrap() {
            for g in enumerate_freqs(4, 3).unwrap() {
                assert!(injection_feasible(&f, &g, &ShiftFunction::zero(3)));
            }
        }
    }

    #[test]
    fn exact_factorial_comparison() {
        assert_eq!(compare_factorial_products(&[5], &[5]), Ordering::Equal);
        assert_eq!(compare_factorial_products(&[2, 2], &[3]), Ordering::Less);
        assert_eq!(compare_factorial_products(&[4, 3], &[5]), Ordering::Greater);
        assert_eq!(compare_factorial_products(&[3, 3], &[6, 1]), Ordering::Less);
    }

    #[test]
    fn type_probability_examples() {
        assert_eq!(type_log_probability(&fv(&[5, 0]), &[1.0, 0.0]).0, 0.0);
        assert!(type_log_probability(&fv(&[4, 1]), &[1.0, 0.0]).is_zero());
        assert!((type_log_probability(&fv(&[1, 1]), &[0.5, 0.5]).0 - 0.5f64.ln()).abs() < 1e-12);
        let p = [0.2, 0.3, 0.5];
        let total = log_sum_exp(enumerate_freqs(50, 3).unwrap().map(|f| type_log_probability(&f, &p).0));
        assert!(total.abs() < 1e-9);
    }

    #[test]
    fn typical_mass_examples() {
        assert!((typical_mass(&[0.3, 0.7], 40, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((typical_mass(&[1.0, 0.0], 40, 0.01).unwrap() - 1.0).abs() < 1e-12);
        let m100 = typical_mass(&[0.9, 0.1], 100, 0.05).unwrap();
        let m200 = typical_mass(&[0.9, 0.1], 200, 0.05).unwrap();
        assert!(m100 > 0.9 && m100 < 1.0);
        assert!(m200 > m100);
        let mut prev = 0.0;
        for n in [25, 50, 100, 200] {
            let mut prev_delta = 0.0;
            for delta in [0.02, 0.05, 0.1] {
                let m = typical_mass(&[0.7, 0.3], n, delta).unwrap();
                assert!(m + 1e-12 >= prev_delta);
                prev_delta = m;
            }
            let m = typical_mass(&[0.7, 0.3], n, 0.1).unwrap();
            assert!(m + 1e-12 >= prev);
            prev = m;
        }
    }

    #[test]
    fn binomial_window_covers_mass() {
        let (lo, hi) = binomial_window(1000, 0.27, 1e-6);
        let out = binomial_mass_outside(1000, 0.27, lo, hi);
        assert!(out <= 1e-6);
        assert!(lo > 150 && hi < 400);
        assert_eq!(binomial_window(50, 0.0, 1e-3), (0, 0));
        assert_eq!(binomial_window(50, 1.0, 1e-3), (50, 50));
    }

    #[test]
    fn shift_work_and_validation() {
        let levels = [Rational64::from_integer(0), Rational64::new(3, 2)];
        assert_eq!(sh(&[-2, 2]).work(&levels), Rational64::from_integer(3));
        assert!(ShiftFunction::new(vec![1, 0]).is_err());
    }

    #[test]
    fn monotone_in_bath_size_report() {
        // empirical monotonicity of feasibility in l, reported rather than asserted
        let f = fv(&[20, 0]);
        let h = sh(&[-3, 3]);
        let mut flips = 0;
        let mut prev = false;
        for l in 1..200u64 {
            let g0 = (l as f64 * 0.73).round() as u64;
            let feas = injection_feasible(&f, &fv(&[g0, l - g0]), &h);
            if prev && !feas {
                flips += 1;
            }
            prev = feas;
        }
        assert!(prev, "large baths must admit the shift");
        eprintln!("feasibility inversions along l: {flips}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn log_counts_match_exact(counts in proptest::collection::vec(0u64..8, 1..4)) {
            let f = FreqVector::new(counts);
            prop_assume!(f.n() <= 20);
            let exact = exact_freq_count(&f);
            let approx = log_freq_count(&f).exp().round();
            prop_assert_eq!(exact.to_string(), format!("{approx}"));
        }

        #[test]
        fn feasibility_matches_bigint(
            f in proptest::collection::vec(0u64..10, 2..4),
            g in proptest::collection::vec(0u64..10, 2..4),
            a in -4i64..5,
        ) {
            prop_assume!(f.len() == g.len());
            let d = f.len();
            let mut hs = vec![0i64; d];
            hs[0] = -a;
            hs[d - 1] += a;
            let f = FreqVector::new(f);
            let g = FreqVector::new(g);
            let h = ShiftFunction::new(hs).unwrap();
            let expected = match joint_target(&f, &g, &h) {
                None => false,
                Some(t) => exact_freq_count(&f) * exact_freq_count(&g) <= exact_freq_count(&FreqVector::new(t)),
            };
            prop_assert_eq!(injection_feasible(&f, &g, &h), expected);
        }

        #[test]
        fn colex_count(n in 0u64..12, d in 1usize..5) {
            let all: Vec<FreqVector> = enumerate_freqs(n, d).unwrap().collect();
            prop_assert_eq!(all.len() as u128, freq_class_count(n, d));
            let mut sorted = all.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), all.len());
            prop_assert!(all.iter().all(|f| f.n() == n));
        }
    }
}
