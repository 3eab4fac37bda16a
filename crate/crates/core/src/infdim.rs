//! Truncated infinite-dimensional systems: tail-decay states on a level ladder,
//! cutoff schedules, renormalized free energy and the finite-candidate protocol.
//!
//! Levels are 1-indexed (i = 1, 2, …). Infinite sums are partial sums plus a
//! tail bound; every series value carries its remainder bound.

use num_rational::Rational64;
use num_traits::{CheckedMul, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{hoeffding_sample_size, l1_distance, sample_counts, trial_rng};
use crate::extraction::{build_classical_plan, choose_shift, run_classical_plan, Alphabet, CopiesConsumed, PlanSettings, ProtocolOutcome};
use crate::pinching::energy_pinching;
use crate::qmat::{checked_power_dim, eigh, kron, trace_norm, CMat, ThermalContext};
use crate::typeclass::{enumerate_freqs_capped, freq_class_count, type_log_probability};

const PARTIAL_TERMS: usize = 2000;
const EQUIVALENCE_TOL: f64 = 1e-12;
const CONVERSE_TOL: f64 = 1e-8;
const MISID_ENUM_CAP: u128 = 2_000_000;

// ---------------------------------------------------------------- series helpers

/// Σ_{i>N} i^{−s} by Euler–Maclaurin with its remainder bound. x^{−s} is
/// completely monotone, so the error is at most the first omitted term.
fn zeta_tail_from(s: f64, n: f64) -> (f64, f64) {
    let em = n.powf(1.0 - s) / (s - 1.0) - 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0;
    let rem = s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0;
    (em, rem)
}

/// Σ_{i>d} i^{−s}: exact terms up to d + PARTIAL_TERMS, then the Euler–Maclaurin tail.
fn power_tail(s: f64, d: usize) -> (f64, f64) {
    let stop = d + PARTIAL_TERMS;
    let head: f64 = (d + 1..=stop).rev().map(|i| (i as f64).powf(-s)).sum();
    let (tail, width) = zeta_tail_from(s, stop as f64);
    (head + tail, width)
}

/// Bound on Σ_{i>N} i^{−a} for a > 1.
fn power_sum_bound(a: f64, n: usize) -> f64 {
    (n as f64).powf(1.0 - a) / (a - 1.0)
}

/// ∫_N^∞ x^{−s} ln x dx, an upper bound on Σ_{i>N} i^{−s} ln i for N ≥ 3.
fn log_power_sum_bound(s: f64, n: usize) -> f64 {
    let n = n as f64;
    n.powf(1.0 - s) * (n.ln() / (s - 1.0) + 1.0 / ((s - 1.0) * (s - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub remainder_bound: f64,
}

// ---------------------------------------------------------------- context

/// E_i = scale · (i − 1)^power, power ≥ 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRule {
    #[serde(with = "rational_str")]
    pub scale: Rational64,
    pub power: u32,
}

mod rational_str {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let s = String::deserialize(d)?;
        crate::qmat::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

impl Default for LevelRule {
    fn default() -> Self {
        LevelRule { scale: Rational64::from_integer(1), power: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InfiniteContext {
    pub rule: LevelRule,
    pub beta: f64,
    pub log_z: SeriesValue,
}

impl InfiniteContext {
    pub fn new(rule: LevelRule, beta: f64) -> Result<Self> {
        if rule.power == 0 || rule.scale <= Rational64::zero() {
            return Err(Error::InvalidContext("level rule needs scale > 0 and power ≥ 1".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidContext(format!("partition function diverges at beta = {beta}")));
        }
        let bs = beta * rule.scale.to_f64().unwrap_or(f64::NAN);
        let log_z = if rule.power == 1 {
            SeriesValue { value: -(-(-bs).exp()).ln_1p(), remainder_bound: 0.0 }
        } else {
            // E_i ≥ scale·(i−1), so the remainder after N terms is at most e^{−βsN}/(1 − e^{−βs})
            let mut z = 0.0;
            let mut i = 1usize;
            loop {
                let e = bs * ((i - 1) as f64).powi(rule.power as i32);
                z += (-e).exp();
                let rem = (-bs * i as f64).exp() / -(-bs).exp_m1();
                if rem < 1e-17 * z || i > 1_000_000 {
                    break SeriesValue { value: z.ln(), remainder_bound: rem / z };
                }
                i += 1;
            }
        };
        Ok(InfiniteContext { rule, beta, log_z })
    }

    /// Harmonic ladder E_i = i − 1.
    pub fn ladder(beta: f64) -> Result<Self> {
        Self::new(LevelRule::default(), beta)
    }

    pub fn energy(&self, i: usize) -> Result<Rational64> {
        let base = i64::try_from(i - 1).ok().and_then(|b| b.checked_pow(self.rule.power));
        base.and_then(|b| self.rule.scale.checked_mul(&Rational64::from_integer(b)))
            .ok_or_else(|| Error::Numerical(format!("energy of level {i} overflows")))
    }

    pub fn energy_f64(&self, i: usize) -> f64 {
        self.rule.scale.to_f64().unwrap_or(f64::NAN) * ((i - 1) as f64).powi(self.rule.power as i32)
    }

    /// ln τ_i.
    pub fn log_gibbs(&self, i: usize) -> f64 {
        -self.beta * self.energy_f64(i) - self.log_z.value
    }

    /// First d levels as a finite context (its Gibbs state is τ_d / Tr τ_d).
    pub fn truncated_context(&self, d: usize) -> Result<ThermalContext> {
        let levels = (1..=d).map(|i| self.energy(i)).collect::<Result<Vec<_>>>()?;
        ThermalContext::new(levels, self.beta)
    }

    /// Tr τ_d.
    pub fn gibbs_head_mass(&self, d: usize) -> f64 {
        if self.rule.power == 1 {
            let q = (-self.beta * self.rule.scale.to_f64().unwrap_or(f64::NAN)).exp();
            -(d as f64 * q.ln()).exp_m1()
        } else {
            (1..=d).map(|i| self.log_gibbs(i).exp()).sum()
        }
    }
}

// ---------------------------------------------------------------- states

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailRule {
    /// ρ_ii = i^{−s} / ζ(s), s > 2.
    PowerLaw { exponent: f64 },
    /// ρ_ii = (1 − r) r^{i−1}.
    Geometric { ratio: f64 },
    /// Finite support.
    Explicit { weights: Vec<f64> },
}

/// Diagonal tail-decay state, optionally with a coherent block on the first levels.
#[derive(Debug, Clone, Serialize)]
pub struct TailState {
    pub rule: TailRule,
    /// ζ(s) for power laws, 1 otherwise.
    pub normalizer: SeriesValue,
    #[serde(skip)]
    pub block: Option<CMat>,
}

impl TailState {
    pub fn new(rule: TailRule) -> Result<Self> {
        let normalizer = match &rule {
            TailRule::PowerLaw { exponent: s } => {
                if !(*s > 2.0 && s.is_finite()) {
                    return Err(Error::InvalidState(format!("tail exponent {s} must exceed 2")));
                }
                let (tail, width) = power_tail(*s, 0);
                SeriesValue { value: tail, remainder_bound: width }
            }
            TailRule::Geometric { ratio } => {
                if !(*ratio >= 0.0 && *ratio < 1.0) {
                    return Err(Error::InvalidState(format!("geometric ratio {ratio} must lie in [0, 1)")));
                }
                SeriesValue { value: 1.0, remainder_bound: 0.0 }
            }
            TailRule::Explicit { weights } => {
                let s: f64 = weights.iter().sum();
                if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidState(format!("explicit weights must be non-negative and sum to 1 (sum {s})")));
                }
                SeriesValue { value: 1.0, remainder_bound: 0.0 }
            }
        };
        if normalizer.remainder_bound > 1e-9 * normalizer.value {
            return Err(Error::Numerical("normalization not certified to 1e-9".into()));
        }
        Ok(TailState { rule, normalizer, block: None })
    }

    pub fn power_law(exponent: f64) -> Result<Self> {
        Self::new(TailRule::PowerLaw { exponent })
    }

    pub fn geometric(ratio: f64) -> Result<Self> {
        Self::new(TailRule::Geometric { ratio })
    }

    pub fn explicit(weights: Vec<f64>) -> Result<Self> {
        Self::new(TailRule::Explicit { weights })
    }

    /// Attach a coherent block on the first b levels; its diagonal must match the rule.
    pub fn with_block(mut self, block: CMat) -> Result<Self> {
        let b = block.nrows();
        if block.ncols() != b || b == 0 {
            return Err(Error::InvalidState("coherent block must be square".into()));
        }
        for i in 0..b {
            if (block[(i, i)].re - self.weight(i + 1)).abs() > 1e-12 {
                return Err(Error::InvalidState(format!("block diagonal entry {} does not match the tail rule", i + 1)));
            }
        }
        if crate::qmat::hermitian_deviation(&block) > 1e-10 || crate::qmat::min_eigenvalue(&block) < -1e-9 {
            return Err(Error::InvalidState("coherent block must be Hermitian and positive semidefinite".into()));
        }
        self.block = Some(block);
        Ok(self)
    }

    pub fn is_diagonal(&self) -> bool {
        self.block.as_ref().is_none_or(|b| crate::qmat::is_diagonal(b, 0.0))
    }

    /// ρ_ii.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.rule {
            TailRule::PowerLaw { exponent } => (i as f64).powf(-exponent) / self.normalizer.value,
            TailRule::Geometric { ratio } => (1.0 - ratio) * ratio.powi(i as i32 - 1),
            TailRule::Explicit { weights } => weights.get(i - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn head(&self, d: usize) -> Vec<f64> {
        (1..=d).map(|i| self.weight(i)).collect()
    }

    /// 1 − Tr[ρ_d], evaluated without cancellation.
    pub fn tail_mass(&self, d: usize) -> f64 {
        match &self.rule {
            TailRule::PowerLaw { exponent } => power_tail(*exponent, d).0 / self.normalizer.value,
            TailRule::Geometric { ratio } => ratio.powi(d as i32),
            TailRule::Explicit { weights } => weights.iter().skip(d).sum(),
        }
    }

    /// Declared ε in ρ_ii = O(i^{−(2+ε)}); None for faster-than-polynomial decay.
    pub fn tail_epsilon(&self) -> Option<f64> {
        match &self.rule {
            TailRule::PowerLaw { exponent } => Some(exponent - 2.0),
            _ => None,
        }
    }

    /// Top-left d × d corner of ρ.
    pub fn truncated_matrix(&self, d: usize) -> CMat {
        let mut m = crate::qmat::diag_matrix(&self.head(d));
        if let Some(b) = &self.block {
            let s = b.nrows().min(d);
            m.view_mut((0, 0), (s, s)).copy_from(&b.view((0, 0), (s, s)));
        }
        m
    }

    /// Σ λ ln λ over the first b levels minus the diagonal version, for the coherent block.
    fn block_entropy_correction(&self) -> f64 {
        let Some(b) = &self.block else { return 0.0 };
        let xlogx = |x: f64| if x > 1e-300 { x * x.ln() } else { 0.0 };
        let eig: f64 = eigh(b).0.into_iter().map(xlogx).sum();
        let diag: f64 = (0..b.nrows()).map(|i| xlogx(b[(i, i)].re)).sum();
        eig - diag
    }
}

// ---------------------------------------------------------------- truncation

#[derive(Debug, Clone, Serialize)]
pub struct Truncation {
    pub d: usize,
    pub head: Vec<f64>,
    /// Tr[ρ_d].
    pub success_mass: f64,
    pub tail_mass: f64,
}

impl Truncation {
    /// ln Tr[ρ_d]^n.
    pub fn log_success(&self, n: u64) -> f64 {
        n as f64 * (-self.tail_mass).ln_1p()
    }

    pub fn success_probability(&self, n: u64) -> f64 {
        self.log_success(n).exp()
    }

    pub fn normalized(&self) -> Vec<f64> {
        let s: f64 = self.head.iter().sum();
        self.head.iter().map(|x| x / s).collect()
    }
}

pub fn truncate(rho: &TailState, d: usize) -> Result<Truncation> {
    if d == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let tail = rho.tail_mass(d);
    Ok(Truncation { d, head: rho.head(d), success_mass: 1.0 - tail, tail_mass: tail })
}

/// ρ_d as a dense subnormalized operator (coherent block included).
pub fn truncated_operator(rho: &TailState, d: usize) -> Result<crate::qmat::SubnormalizedState> {
    checked_power_dim(d, 1)?;
    crate::qmat::SubnormalizedState::new(rho.truncated_matrix(d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffSchedule {
    /// d_n = ⌈n^a⌉.
    Power { exponent: f64 },
    Constant { d: usize },
}

impl CutoffSchedule {
    /// d_n = ⌈n^{1/(1+ε/2)}⌉.
    pub fn default_for(epsilon: f64) -> Self {
        CutoffSchedule::Power { exponent: 1.0 / (1.0 + epsilon / 2.0) }
    }

    pub fn d_at(&self, n: u64) -> usize {
        match self {
            CutoffSchedule::Power { exponent } => {
                let x = (n.max(1) as f64).powf(*exponent);
                let r = x.round();
                // n^a that is an integer up to rounding should not step past it
                let v = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
                (v as usize).max(1)
            }
            CutoffSchedule::Constant { d } => (*d).max(1),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuccessRow {
    pub n: u64,
    pub d_n: usize,
    pub success: f64,
    pub log_success: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuccessCurve {
    pub rows: Vec<SuccessRow>,
    /// First grid point with success ≥ 1/2.
    pub n0: Option<u64>,
    /// Non-decreasing from n0 on.
    pub monotone_after_n0: bool,
}

pub fn schedule_success_curve(rho: &TailState, schedule: &CutoffSchedule, n_grid: &[u64]) -> Result<SuccessCurve> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let d = schedule.d_at(n);
        let t = truncate(rho, d)?;
        let ls = t.log_success(n);
        rows.push(SuccessRow { n, d_n: d, success: ls.exp(), log_success: ls });
    }
    let start = rows.iter().position(|r| r.success >= 0.5);
    let monotone = start.is_some_and(|s| rows[s..].windows(2).all(|w| w[1].success >= w[0].success));
    Ok(SuccessCurve { n0: start.map(|s| rows[s].n), rows, monotone_after_n0: monotone })
}

// ---------------------------------------------------------------- free energy

/// D(ρ‖τ) as a series with certified remainder.
pub fn free_energy_limit(rho: &TailState, ctx: &InfiniteContext) -> Result<SeriesValue> {
    let term = |i: usize| {
        let w = rho.weight(i);
        if w > 0.0 {
            w * (w.ln() - ctx.log_gibbs(i))
        } else {
            0.0
        }
    };
    let correction = rho.block_entropy_correction();
    let bs = ctx.beta * ctx.rule.scale.to_f64().unwrap_or(f64::NAN);
    let base = match &rho.rule {
        TailRule::Explicit { weights } => {
            SeriesValue { value: (1..=weights.len()).map(term).sum(), remainder_bound: ctx.log_z.remainder_bound }
        }
        TailRule::Geometric { ratio } if ctx.rule.power == 1 => {
            let r = *ratio;
            let q = (-bs).exp();
            let mean = r / (1.0 - r);
            let lr = if r > 0.0 { mean * (r.ln() - q.ln()) } else { 0.0 };
            SeriesValue { value: (1.0 - r).ln() - (1.0 - q).ln() + lr, remainder_bound: 1e-15 }
        }
        TailRule::Geometric { ratio } => {
            let r = *ratio;
            if r == 0.0 {
                return Ok(SeriesValue { value: term(1) + correction, remainder_bound: ctx.log_z.remainder_bound });
            }
            // term_i ≤ (1−r) r^{i−1} (βs (i−1)^p + |ln(1−r)| + (i−1)|ln r| + |ln Z|); the ratio of
            // consecutive bounds is ≤ r·(1 + 1/N)^p once i > N
            let p = ctx.rule.power as f64;
            let n = ((2.0 * p / -r.ln()).ceil() as usize).max(PARTIAL_TERMS);
            let value: f64 = (1..=n).map(term).sum();
            let x = n as f64;
            let first = (1.0 - r) * r.powf(x) * (bs * x.powf(p) + (1.0 - r).ln().abs() + x * r.ln().abs() + ctx.log_z.value.abs());
            let ratio = r * (1.0 + 1.0 / x).powf(p);
            SeriesValue { value, remainder_bound: first / (1.0 - ratio) + ctx.log_z.remainder_bound }
        }
        TailRule::PowerLaw { exponent: s } => {
            let p = ctx.rule.power as f64;
            if *s - p <= 1.0 {
                return Err(Error::InvalidState(format!("mean energy diverges: tail exponent {s} with level power {p}")));
            }
            let n = 200_000usize;
            let value: f64 = (1..=n).rev().map(term).sum();
            let zeta = rho.normalizer.value;
            let bound = (s * log_power_sum_bound(*s, n)
                + (zeta.ln().abs() + ctx.log_z.value.abs()) * power_sum_bound(*s, n)
                + bs * power_sum_bound(s - p, n))
                / zeta;
            SeriesValue { value, remainder_bound: bound + ctx.log_z.remainder_bound }
        }
    };
    Ok(SeriesValue { value: base.value + correction, remainder_bound: base.remainder_bound })
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormalizedFreeEnergy {
    pub d: usize,
    /// D(ρ_d/Tr ρ_d ‖ τ_d/Tr τ_d) evaluated directly.
    pub direct: f64,
    /// Same quantity through D_L(ρ_d‖τ_d)/Tr ρ_d + ln(Tr τ_d/Tr ρ_d) − (Tr τ_d − Tr ρ_d)/Tr ρ_d.
    pub via_lindblad: f64,
    pub lindblad: f64,
    pub rho_mass: f64,
    pub tau_mass: f64,
    pub limit: SeriesValue,
    /// |direct − limit|.
    pub gap: f64,
}

pub fn renormalized_free_energy(rho: &TailState, ctx: &InfiniteContext, d: usize) -> Result<RenormalizedFreeEnergy> {
    let t = truncate(rho, d)?;
    let xlogx = |x: f64| if x > 1e-300 { x * x.ln() } else { 0.0 };
    // eigenvalues of ρ_d: block eigenvalues then the remaining diagonal
    let (eig, b) = match &rho.block {
        Some(bl) => {
            let s = bl.nrows().min(d);
            (eigh(&bl.view((0, 0), (s, s)).into_owned()).0, s)
        }
        None => (Vec::new(), 0),
    };
    let rho_mass = t.success_mass;
    let tau_mass = ctx.gibbs_head_mass(d);
    let log_tau: Vec<f64> = (1..=d).map(|i| ctx.log_gibbs(i)).collect();
    let self_term: f64 = eig.iter().map(|&x| xlogx(x.max(0.0))).sum::<f64>() + t.head[b..].iter().map(|&x| xlogx(x)).sum::<f64>();
    let cross: f64 = t.head.iter().zip(&log_tau).map(|(w, lt)| w * lt).sum();
    // direct: normalize first, then evaluate
    let self_n: f64 =
        eig.iter().map(|&x| xlogx(x.max(0.0) / rho_mass)).sum::<f64>() + t.head[b..].iter().map(|&x| xlogx(x / rho_mass)).sum::<f64>();
    let cross_n: f64 = t.head.iter().zip(&log_tau).map(|(w, lt)| (w / rho_mass) * (lt - tau_mass.ln())).sum();
    let direct = self_n - cross_n;
    let lindblad = self_term - cross + tau_mass - rho_mass;
    let via = lindblad / rho_mass + tau_mass.ln() - rho_mass.ln() - (tau_mass - rho_mass) / rho_mass;
    let limit = free_energy_limit(rho, ctx)?;
    Ok(RenormalizedFreeEnergy { d, direct, via_lindblad: via, lindblad, rho_mass, tau_mass, gap: (direct - limit.value).abs(), limit })
}

// ---------------------------------------------------------------- candidates

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistinguishSettings {
    pub d_cap: usize,
    /// Minimum ℓ1 separation ξ̃_min.
    pub xi_min: f64,
}

impl Default for DistinguishSettings {
    fn default() -> Self {
        DistinguishSettings { d_cap: 4, xi_min: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    /// ‖Π 𝒫(ρ^{⊗d}) Π − Π 𝒫(σ^{⊗d}) Π‖₁ for d = 1..=d_cap.
    pub distances: Vec<f64>,
    /// ℓ1 distance of the energy-basis statistics (with the truncation-failure outcome).
    pub statistic_distances: Vec<f64>,
    pub equivalent: bool,
    pub separated_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistinguishingReport {
    pub d_tilde: Option<usize>,
    /// Smallest separation among non-equivalent pairs at d̃.
    pub xi_tilde: Option<f64>,
    pub pairs: Vec<PairRecord>,
    pub inconclusive: Vec<(usize, usize)>,
    pub cap_binding: bool,
}

/// Outcome distribution of measuring d copies in the energy basis after
/// truncation: strings in [d]^d, then one failure outcome.
pub fn block_statistics(rho: &TailState, d: usize) -> Result<Vec<f64>> {
    let dim = checked_power_dim(d, d)?;
    let h = rho.head(d);
    let mut out = Vec::with_capacity(dim + 1);
    for x in 0..dim {
        out.push(crate::qmat::index_digits(x, d, d).iter().map(|&i| h[i]).product());
    }
    let s: f64 = out.iter().sum();
    out.push((1.0 - s).max(0.0));
    Ok(out)
}

fn pinched_block(rho: &TailState, ctx: &ThermalContext, d: usize) -> Result<CMat> {
    let m = rho.truncated_matrix(d);
    let mut acc = m.clone();
    for _ in 1..d {
        acc = kron(&acc, &m);
    }
    energy_pinching(ctx, d)?.apply_matrix(&acc)
}

pub fn distinguishing_dimension(set: &[TailState], ctx: &InfiniteContext, settings: &DistinguishSettings) -> Result<DistinguishingReport> {
    if settings.d_cap == 0 {
        return Err(Error::InvalidArgument("d_cap must be positive".into()));
    }
    let all_diag = set.iter().all(TailState::is_diagonal);
    let mut stats: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut blocks: Vec<Vec<CMat>> = Vec::new();
    for d in 1..=settings.d_cap {
        stats.push(set.iter().map(|r| block_statistics(r, d)).collect::<Result<_>>()?);
        if !all_diag {
            let tctx = ctx.truncated_context(d)?;
            blocks.push(set.iter().map(|r| pinched_block(r, &tctx, d)).collect::<Result<_>>()?);
        }
    }
    let mut pairs = Vec::new();
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            let mut distances = Vec::new();
            let mut sdist = Vec::new();
            for k in 0..settings.d_cap {
                // the failure outcome is not part of the truncated operator
                let (a, b) = (&stats[k][i], &stats[k][j]);
                let sd = l1_distance(a, b);
                sdist.push(sd);
                let od = if all_diag {
                    l1_distance(&a[..a.len() - 1], &b[..b.len() - 1])
                } else {
                    trace_norm(&(&blocks[k][i] - &blocks[k][j]))
                };
                distances.push(od);
            }
            let equivalent = distances.iter().all(|&x| x <= EQUIVALENCE_TOL);
            let separated_at = distances.iter().position(|&x| x >= settings.xi_min).map(|k| k + 1);
            pairs.push(PairRecord { i, j, distances, statistic_distances: sdist, equivalent, separated_at });
        }
    }
    let live: Vec<&PairRecord> = pairs.iter().filter(|p| !p.equivalent).collect();
    let d_tilde = (1..=settings.d_cap).find(|&d| live.iter().all(|p| p.distances[d - 1] >= settings.xi_min));
    let inconclusive: Vec<(usize, usize)> =
        if d_tilde.is_some() { Vec::new() } else { live.iter().filter(|p| p.separated_at.is_none()).map(|p| (p.i, p.j)).collect() };
    let xi_tilde = d_tilde.and_then(|d| live.iter().map(|p| p.distances[d - 1]).reduce(f64::min));
    let cap_binding = d_tilde.is_none_or(|d| d == settings.d_cap && settings.d_cap > 1);
    Ok(DistinguishingReport { d_tilde, xi_tilde, pairs, inconclusive, cap_binding })
}

// ---------------------------------------------------------------- semiuniversal protocol

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemiuniversalSettings {
    pub distinguish: DistinguishSettings,
    /// Target misidentification probability for the Hoeffding sample count.
    pub delta: f64,
    /// Identification may use at most this fraction of n.
    pub max_budget_fraction: f64,
    /// Cutoff schedule; defaults to ⌈n^{1/(1+ε/2)}⌉ with the smallest ε in the set.
    pub schedule: Option<CutoffSchedule>,
    #[serde(skip)]
    pub plan: PlanSettings,
}

impl Default for SemiuniversalSettings {
    fn default() -> Self {
        SemiuniversalSettings {
            distinguish: DistinguishSettings::default(),
            delta: 1e-2,
            max_budget_fraction: 0.1,
            schedule: None,
            plan: PlanSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiuniversalOutcome {
    pub identified: usize,
    pub correct: bool,
    pub d_tilde: usize,
    pub id_samples: u64,
    pub id_copies: u64,
    pub misid_probability: f64,
    pub misid_is_bound: bool,
    pub d_n: usize,
    pub truncation_success: f64,
    pub outcome: ProtocolOutcome,
}

fn nearest(stats: &[Vec<f64>], reps: &[usize], p_hat: &[f64]) -> usize {
    let mut best = (f64::INFINITY, reps[0]);
    for &r in reps {
        let dist = l1_distance(&stats[r], p_hat);
        if dist < best.0 {
            best = (dist, r);
        }
    }
    best.1
}

/// Exact probability that nearest-candidate decoding from m samples of `truth` lands
/// outside `truth`'s equivalence class, when the types are enumerable.
fn misid_probability(stats: &[Vec<f64>], reps: &[usize], class_of: &[usize], truth: usize, m: u64) -> Result<Option<f64>> {
    let a = stats[truth].len();
    if freq_class_count(m, a) > MISID_ENUM_CAP {
        return Ok(None);
    }
    let mut wrong = 0.0;
    for f in enumerate_freqs_capped(m, a, MISID_ENUM_CAP)? {
        let lp = type_log_probability(&f, &stats[truth]);
        if lp.is_zero() {
            continue;
        }
        let p_hat = f.frequencies();
        if class_of[nearest(stats, reps, &p_hat)] != class_of[truth] {
            wrong += lp.prob();
        }
    }
    Ok(Some(wrong.min(1.0)))
}

/// Identify the candidate from energy-basis block statistics, then truncate with
/// the cutoff schedule and run the classical plan designed for the identified
/// candidate on the remaining copies.
///
/// Only energy-pinched statistics are used (one copy per block in the
/// extraction stage), so coherent candidates contribute their diagonal.
pub fn semiuniversal_protocol(
    set: &[TailState],
    true_index: usize,
    ctx: &InfiniteContext,
    n: u64,
    seed: u64,
    settings: &SemiuniversalSettings,
) -> Result<SemiuniversalOutcome> {
    if set.is_empty() || true_index >= set.len() {
        return Err(Error::InvalidArgument(format!("true index {true_index} outside a set of {} candidates", set.len())));
    }
    let truth = &set[true_index];
    let (d_tilde, identified, id_samples, misid, misid_is_bound) = if set.len() == 1 {
        (1, 0, 0, 0.0, false)
    } else {
        let report = distinguishing_dimension(set, ctx, &settings.distinguish)?;
        let Some(dt) = report.d_tilde else {
            return Err(Error::InvalidArgument(format!("candidates not distinguishable up to d = {}: {:?}", settings.distinguish.d_cap, report.inconclusive)));
        };
        // equivalence classes by pinched statistics; lowest index represents a class
        let mut class_of: Vec<usize> = (0..set.len()).collect();
        for p in report.pairs.iter().filter(|p| p.equivalent) {
            class_of[p.j] = class_of[p.j].min(class_of[p.i]);
        }
        let reps: Vec<usize> = (0..set.len()).filter(|&i| class_of[i] == i).collect();
        let stats: Vec<Vec<f64>> = set.iter().map(|r| block_statistics(r, dt)).collect::<Result<_>>()?;
        let sep = report
            .pairs
            .iter()
            .filter(|p| !p.equivalent)
            .map(|p| p.statistic_distances[dt - 1])
            .fold(f64::INFINITY, f64::min);
        if reps.len() == 1 {
            (dt, 0, 0, 0.0, false)
        } else {
            if !(sep >= settings.distinguish.xi_min) {
                return Err(Error::InvalidArgument(format!("energy-basis statistics separate candidates only by {sep:.3e}")));
            }
            // nearest-candidate decoding is correct once TV(p̂, p) < sep/4
            let m = hoeffding_sample_size(stats[0].len(), sep / 4.0, settings.delta)?;
            let mut rng = trial_rng(seed, 0);
            let counts = sample_counts(&stats[true_index], m, &mut rng);
            let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            let id = nearest(&stats, &reps, &p_hat);
            let (mp, bound) = match misid_probability(&stats, &reps, &class_of, true_index, m)? {
                Some(v) => (v, false),
                None => (settings.delta, true),
            };
            (dt, id, m, mp, bound)
        }
    };
    let id_copies = id_samples * d_tilde as u64;
    if id_copies as f64 > settings.max_budget_fraction * n as f64 {
        return Err(Error::InvalidArgument(format!(
            "identification needs {id_copies} copies, more than {} of n = {n}",
            settings.max_budget_fraction
        )));
    }
    let n_run = n - id_copies;
    let schedule = settings.schedule.clone().unwrap_or_else(|| {
        let eps = set.iter().filter_map(TailState::tail_epsilon).fold(2.0, f64::min);
        CutoffSchedule::default_for(eps)
    });
    let d = schedule.d_at(n_run);
    let tctx = ctx.truncated_context(d)?;
    let alphabet = Alphabet::from_context(&tctx);
    let t_true = truncate(truth, d)?;
    let p_true = t_true.normalized();
    let p_design = truncate(&set[identified], d)?.normalized();
    let l = settings.plan.bath_size(n_run);
    let search = choose_shift(&p_design, &alphabet, n_run, l, 0.0, &settings.plan)?;
    let plan = build_classical_plan(&p_design, &alphabet, n_run, l, &search.h, &settings.plan)?;
    let mut out = run_classical_plan(&plan, &p_true)?;
    let success = t_true.success_probability(n_run);
    let target = free_energy_limit(truth, ctx)?.value;
    let rate = ctx.beta * out.extracted_work / n as f64;
    out.mode = "semiuniversal".into();
    out.n = n;
    out.rate_nats = rate;
    out.target_rate = target;
    out.pinched_rate_nats = crate::qmat::classical_relative_entropy(&p_true, &alphabet.thermal)?;
    out.fidelity *= success;
    out.xi = 1.0 - out.fidelity;
    out.success_prob = success;
    out.copies = CopiesConsumed { pinched: n_run, measured: id_copies, discarded: 0 };
    out.converse_holds = rate <= target + CONVERSE_TOL;
    out.seed = Some(seed);
    Ok(SemiuniversalOutcome {
        identified,
        correct: identified == true_index || set.len() == 1,
        d_tilde,
        id_samples,
        id_copies,
        misid_probability: misid,
        misid_is_bound,
        d_n: d,
        truncation_success: success,
        outcome: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{c, lindblad_relative_entropy, SubnormalizedState};

    const ZETA4: f64 = 1.082_323_233_711_138_2;

    #[test]
    fn zeta_normalizer() {
        let r = TailState::power_law(4.0).unwrap();
        assert!((r.normalizer.value - ZETA4).abs() < 1e-13);
        let tail: f64 = r.tail_mass(0);
        assert!((tail - 1.0).abs() < 1e-13);
    }

    #[test]
    fn truncation_examples() {
        let g = TailState::explicit(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(truncate(&g, 3).unwrap().success_mass, 1.0);
        assert_eq!(truncate(&g, 1).unwrap().success_mass, 0.5);
        let r = TailState::power_law(4.0).unwrap();
        let t = truncate(&r, 10).unwrap();
        let direct: f64 = (1..=10).map(|i| (i as f64).powi(-4)).sum::<f64>() / ZETA4;
        assert!((t.success_mass - direct).abs() < 1e-13);
        assert!((t.success_mass - 0.999_735_152_855_955_3).abs() < 1e-12);
        assert!((t.success_probability(100) - 0.973_859_513_666_876_6).abs() < 1e-10);
        assert!(truncate(&r, 0).is_err());
    }

    #[test]
    fn log_domain_matches_direct_power() {
        let r = TailState::geometric(0.3).unwrap();
        for d in 1..6 {
            let t = truncate(&r, d).unwrap();
            for n in 1..8u64 {
                let direct = t.success_mass.powi(n as i32);
                assert!((t.success_probability(n) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn schedule_curves() {
        let r = TailState::power_law(4.0).unwrap();
        let sched = CutoffSchedule::default_for(2.0);
        assert_eq!(sched.d_at(1_000_000), 1000);
        let grid = [10, 100, 1000, 10_000, 100_000, 1_000_000];
        let curve = schedule_success_curve(&r, &sched, &grid).unwrap();
        assert!(curve.rows.last().unwrap().success >= 0.999);
        assert!(curve.monotone_after_n0);
        let flat = schedule_success_curve(&r, &CutoffSchedule::Constant { d: 3 }, &grid).unwrap();
        let t3 = truncate(&r, 3).unwrap().success_mass;
        for row in &flat.rows {
            assert!((row.log_success - row.n as f64 * t3.ln()).abs() < 1e-9 * row.n as f64);
        }
        assert!(flat.rows.last().unwrap().success < 1e-100);
        let fin = schedule_success_curve(&TailState::explicit(vec![1.0]).unwrap(), &sched, &grid).unwrap();
        assert!(fin.rows.iter().all(|r| r.success == 1.0));
    }

    #[test]
    fn thermal_state_has_zero_free_energy() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let tau = TailState::geometric((-1.0f64).exp()).unwrap();
        for d in [1, 10, 50, 200] {
            let f = renormalized_free_energy(&tau, &ctx, d).unwrap();
            assert!(f.direct.abs() < 1e-12, "d={d} {}", f.direct);
        }
        assert!(free_energy_limit(&tau, &ctx).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn geometric_state_converges_to_closed_form() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let r = (-2.0f64).exp();
        let rho = TailState::geometric(r).unwrap();
        let q = (-1.0f64).exp();
        // two geometric series
        let closed = (1.0 - r).ln() - (1.0 - q).ln() + r / (1.0 - r) * (r.ln() - q.ln());
        let lim = free_energy_limit(&rho, &ctx).unwrap();
        assert!((lim.value - closed).abs() < 1e-14);
        for d in [10, 50, 200] {
            let f = renormalized_free_energy(&rho, &ctx, d).unwrap();
            assert!((f.direct - f.via_lindblad).abs() <= 1e-10);
            if d == 200 {
                assert!(f.gap <= 1e-3);
            }
        }
    }

    #[test]
    fn lindblad_matches_dense() {
        let ctx = InfiniteContext::ladder(0.7).unwrap();
        let rho = TailState::power_law(3.5).unwrap();
        let d = 12;
        let f = renormalized_free_energy(&rho, &ctx, d).unwrap();
        let tau: Vec<f64> = (1..=d).map(|i| ctx.log_gibbs(i).exp()).collect();
        let dense = lindblad_relative_entropy(&truncated_operator(&rho, d).unwrap(), &SubnormalizedState::diagonal(&tau).unwrap()).unwrap();
        assert!((f.lindblad - dense).abs() < 1e-10);
    }

    #[test]
    fn power_law_limit_is_certified() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let rho = TailState::power_law(4.0).unwrap();
        let lim = free_energy_limit(&rho, &ctx).unwrap();
        assert!(lim.remainder_bound < 1e-8);
        let mut prev_gap = f64::INFINITY;
        for d in [10, 100, 1000] {
            let f = renormalized_free_energy(&rho, &ctx, d).unwrap();
            assert!(f.gap < prev_gap);
            prev_gap = f.gap;
        }
        assert!(prev_gap < 1e-3);
        // mean energy Σ i^{−2.5}(i−1)² diverges on a quadratic spectrum
        let quad = InfiniteContext::new(LevelRule { scale: Rational64::from_integer(1), power: 2 }, 1.0).unwrap();
        assert!(free_energy_limit(&TailState::power_law(2.5).unwrap(), &quad).is_err());
    }

    #[test]
    fn superlinear_levels() {
        let ctx = InfiniteContext::new(LevelRule { scale: Rational64::new(1, 2), power: 2 }, 1.0).unwrap();
        let z: f64 = (0..200).map(|j| (-0.5 * (j * j) as f64).exp()).sum();
        assert!((ctx.log_z.value - z.ln()).abs() < 1e-14);
        let rho = TailState::geometric(0.5).unwrap();
        let lim = free_energy_limit(&rho, &ctx).unwrap();
        let f = renormalized_free_energy(&rho, &ctx, 60).unwrap();
        assert!(lim.remainder_bound < 1e-12 && f.gap < 1e-12);
    }

    #[test]
    fn distinguishing_examples() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let ground = TailState::explicit(vec![1.0]).unwrap();
        let tau = TailState::geometric((-1.0f64).exp()).unwrap();
        let r = distinguishing_dimension(&[ground, tau], &ctx, &DistinguishSettings::default()).unwrap();
        assert_eq!(r.d_tilde, Some(1));

        let mk = |sign: f64| {
            let b = CMat::from_fn(2, 2, |i, j| c(if i == j { 0.5 } else { 0.5 * sign }));
            TailState::explicit(vec![0.5, 0.5]).unwrap().with_block(b).unwrap()
        };
        let r = distinguishing_dimension(&[mk(1.0), mk(-1.0)], &ctx, &DistinguishSettings { d_cap: 3, xi_min: 0.05 }).unwrap();
        assert!(r.pairs[0].equivalent);
        assert_eq!(r.d_tilde, Some(1));
        assert!(r.xi_tilde.is_none());

        let three = [TailState::geometric(0.05).unwrap(), TailState::geometric(0.5).unwrap(), TailState::power_law(3.0).unwrap()];
        let r = distinguishing_dimension(&three, &ctx, &DistinguishSettings::default()).unwrap();
        assert_eq!(r.d_tilde, Some(1));
        assert!(r.xi_tilde.unwrap() > 0.1);
    }

    #[test]
    fn inconclusive_is_reported() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let a = TailState::explicit(vec![0.5, 0.5]).unwrap();
        let b = TailState::explicit(vec![0.5, 0.49, 0.01]).unwrap();
        let r = distinguishing_dimension(&[a, b], &ctx, &DistinguishSettings { d_cap: 2, xi_min: 0.1 }).unwrap();
        assert_eq!(r.d_tilde, None);
        assert_eq!(r.inconclusive, vec![(0, 1)]);
        assert!(r.cap_binding);
    }

    #[test]
    fn semiuniversal_single_candidate_is_state_aware() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let ground = TailState::explicit(vec![1.0]).unwrap();
        let out = semiuniversal_protocol(&[ground], 0, &ctx, 400, 1, &SemiuniversalSettings::default()).unwrap();
        assert_eq!(out.id_copies, 0);
        assert!(out.outcome.converse_holds);
        assert!(out.outcome.rate_nats > 0.0);
    }

    #[test]
    fn semiuniversal_ground_vs_thermal() {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let set = [TailState::explicit(vec![1.0]).unwrap(), TailState::geometric((-1.0f64).exp()).unwrap()];
        let s = SemiuniversalSettings::default();
        let out = semiuniversal_protocol(&set, 0, &ctx, 1000, 7, &s).unwrap();
        assert!(out.correct);
        assert!(out.misid_probability <= 1e-3);
        assert!(out.outcome.converse_holds);
        let aware = semiuniversal_protocol(&set[..1], 0, &ctx, 1000 - out.id_copies, 7, &s).unwrap();
        let expect = aware.outcome.rate_nats * (1000 - out.id_copies) as f64 / 1000.0;
        assert!((out.outcome.rate_nats - expect).abs() < 1e-12);
        let th = semiuniversal_protocol(&set, 1, &ctx, 1000, 7, &s).unwrap();
        assert!(th.correct);
        assert_eq!(th.outcome.rate_nats, 0.0);
        assert!(th.outcome.fidelity > 0.99);
    }
}
