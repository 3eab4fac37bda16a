//! State-agnostic extraction: Schur-pinch, learn the type distribution from m
//! blocks, then run a classical plan on the remaining q − m blocks.

use num_rational::Rational64;
use num_traits::Zero;
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::plan::{build_classical_plan, choose_shift, PlanSettings};
use super::{Alphabet, CopiesConsumed, ProtocolOutcome, CONVERSE_TOL};
use crate::error::{Error, Result};
use crate::estimation::{estimate_relative_entropy, sample_types_with, trial_rng, SamplingMode, SamplingOracle};
use crate::qmat::{checked_power_dim, relative_entropy, tensor_power, thermal_state, DensityMatrix, ThermalContext};
use crate::schur::{build_schur_basis, enumerate_young_diagrams, irrep_dimensions, kostka_number, weights_desc};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct UniversalParams {
    pub n: u64,
    pub k: usize,
    pub q: u64,
    pub m: u64,
    pub eps: f64,
    pub delta_prime: f64,
    /// ℓ1 radius at the realized m.
    pub radius: f64,
    pub bath_coefficient: f64,
    pub radius_scale: f64,
    /// Margin = margin_factor · α_k · r per block.
    pub margin_factor: f64,
    /// Cap m ≤ ⌊m_frac · q⌋.
    pub m_frac: f64,
    /// r_n is chosen so that margin_split · α_k · r ≤ δ'.
    pub margin_split: f64,
    pub mode: SamplingMode,
}

impl UniversalParams {
    /// Default schedule: k = ⌊ln n / (3 ln d)⌋ (at least 1), ε = e^{−n^{1/3}}, δ' = n^{−1/6}.
    pub fn schedule(n: u64, ctx: &ThermalContext, mode: SamplingMode) -> Result<Self> {
        let d = ctx.dim();
        let k = if d < 2 { 1 } else { (((n as f64).ln() / (3.0 * (d as f64).ln())).floor() as usize).max(1) };
        Self::with_k(n, k, ctx, mode)
    }

    pub fn with_k(n: u64, k: usize, ctx: &ThermalContext, mode: SamplingMode) -> Result<Self> {
        let mut p = UniversalParams {
            n,
            k,
            q: 0,
            m: 0,
            eps: 0.0,
            delta_prime: 0.0,
            radius: 0.0,
            bath_coefficient: 1.0,
            radius_scale: 1.0,
            margin_factor: 2.0,
            m_frac: 0.5,
            margin_split: 3.0,
            mode,
        };
        p.recompute(ctx)?;
        Ok(p)
    }

    /// Recompute q, m, ε, δ' and r from (n, k) and the tuning fields.
    pub fn recompute(&mut self, ctx: &ThermalContext) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if !(self.m_frac > 0.0 && self.m_frac < 1.0) {
            return Err(Error::InvalidArgument(format!("m_frac must lie in (0,1), got {}", self.m_frac)));
        }
        self.q = self.n / self.k as u64;
        if self.q < 2 {
            return Err(Error::InvalidArgument(format!("n={} leaves fewer than two blocks of k={}", self.n, self.k)));
        }
        let n = self.n as f64;
        let cube = n.cbrt();
        self.eps = (-cube).exp();
        self.delta_prime = n.powf(-1.0 / 6.0);
        let alpha = ctx.continuity_constant(self.k);
        let r_target = self.delta_prime / (self.margin_split * alpha);
        let letters = (ctx.dim() as f64).powi(self.k as i32);
        // ln(2/ε) written out so large n does not underflow ε
        let numer = letters * std::f64::consts::LN_2 + std::f64::consts::LN_2 + cube;
        let hoeffding = (numer / (2.0 * r_target * r_target)).ceil();
        let cap = ((self.m_frac * self.q as f64).floor()).max(1.0);
        self.m = hoeffding.min(cap) as u64;
        self.radius = self.radius_scale * (numer / (2.0 * self.m as f64)).sqrt();
        Ok(())
    }

    /// Fix the number of measured blocks and recompute the radius at that m.
    pub fn set_m(&mut self, m: u64, ctx: &ThermalContext) -> Result<()> {
        self.recompute(ctx)?;
        if m == 0 || m >= self.q {
            return Err(Error::InvalidArgument(format!("m={m} must lie in 1..{}", self.q)));
        }
        let letters = (ctx.dim() as f64).powi(self.k as i32);
        let numer = letters * std::f64::consts::LN_2 + std::f64::consts::LN_2 + (self.n as f64).cbrt();
        self.m = m;
        self.radius = self.radius_scale * (numer / (2.0 * m as f64)).sqrt();
        Ok(())
    }

    pub fn n_eff(&self) -> u64 {
        self.q - self.m
    }

    pub fn margin_nats(&self, ctx: &ThermalContext) -> f64 {
        self.margin_factor * ctx.continuity_constant(self.k) * self.radius
    }
}

/// Exact energies of the Schur-basis columns of k copies, without building the basis.
pub fn schur_column_energies(ctx: &ThermalContext, k: usize) -> Result<Vec<Rational64>> {
    let d = ctx.dim();
    checked_power_dim(d, k)?;
    let weights = weights_desc(k, d);
    let mut out = Vec::new();
    for lambda in enumerate_young_diagrams(k, d) {
        let (_, sym) = irrep_dimensions(&lambda, d)?;
        let mut block = Vec::new();
        for w in &weights {
            let e = w.iter().zip(ctx.levels()).fold(Rational64::zero(), |acc, (&c, l)| acc + l * c as i64);
            for _ in 0..kostka_number(lambda.rows(), w) {
                block.push(e);
            }
        }
        for _ in 0..sym {
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

/// Everything the protocol fixes before any state-dependent data arrives.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolDescription {
    pub context: ThermalContext,
    pub params: UniversalParams,
    pub plan_settings: PlanSettings,
    pub alphabet: Alphabet,
    pub l: u64,
    pub margin_nats: f64,
    pub steps: Vec<String>,
}

impl ProtocolDescription {
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("description serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct UniversalProtocol {
    pub description: ProtocolDescription,
    hash: String,
}

/// Distribution of Schur-basis outcomes on one block of k copies.
#[derive(Debug, Clone)]
pub struct SchurPinchedSource {
    pub p: Vec<f64>,
    /// D(ρ‖τ) per copy.
    pub target_rate: f64,
}

impl SchurPinchedSource {
    /// diag(S† ρ^{⊗k} S) in the fixed Schur basis.
    pub fn from_state(rho: &DensityMatrix, ctx: &ThermalContext, k: usize) -> Result<Self> {
        if rho.dim() != ctx.dim() {
            return Err(Error::DimensionMismatch { expected: ctx.dim(), found: rho.dim() });
        }
        let basis = build_schur_basis(k, ctx.dim())?;
        let rho_k = tensor_power(rho, k)?;
        let inner = basis.to_schur(rho_k.matrix());
        let raw: Vec<f64> = (0..inner.nrows()).map(|i| inner[(i, i)].re.max(0.0)).collect();
        let s: f64 = raw.iter().sum();
        Ok(SchurPinchedSource { p: raw.into_iter().map(|x| x / s).collect(), target_rate: relative_entropy(rho, &thermal_state(ctx))? })
    }

    /// Diagonal ρ: no density matrix needed, outcome probabilities are products.
    pub fn from_diagonal(p1: &[f64], ctx: &ThermalContext, k: usize) -> Result<Self> {
        if p1.len() != ctx.dim() {
            return Err(Error::DimensionMismatch { expected: ctx.dim(), found: p1.len() });
        }
        let rho = DensityMatrix::diagonal(p1)?;
        let target = relative_entropy(&rho, &thermal_state(ctx))?;
        let d = ctx.dim();
        let weights = weights_desc(k, d);
        let mut out = Vec::new();
        for lambda in enumerate_young_diagrams(k, d) {
            let (_, sym) = irrep_dimensions(&lambda, d)?;
            let mut block = Vec::new();
            for w in &weights {
                // every basis vector of weight w sits inside the w type class
                let prob: f64 = w.iter().zip(p1).map(|(&c, &pi)| if c == 0 { 1.0 } else { pi.powi(c as i32) }).product();
                for _ in 0..kostka_number(lambda.rows(), w) {
                    block.push(prob);
                }
            }
            for _ in 0..sym {
                out.extend_from_slice(&block);
            }
        }
        let s: f64 = out.iter().sum();
        Ok(SchurPinchedSource { p: out.into_iter().map(|x| x / s).collect(), target_rate: target })
    }
}

impl UniversalProtocol {
    /// Synthesize the protocol from (context, parameters) alone.
    pub fn synthesize(ctx: &ThermalContext, params: UniversalParams, plan_settings: PlanSettings) -> Result<Self> {
        let energies = schur_column_energies(ctx, params.k)?;
        let alphabet = Alphabet::from_energies(energies, ctx, params.k);
        let mut plan_settings = plan_settings;
        plan_settings.bath_coefficient = params.bath_coefficient;
        let l = plan_settings.bath_size(params.n_eff());
        let margin = params.margin_nats(ctx);
        let steps = vec![
            format!("discard {} copies", params.n - params.k as u64 * params.q),
            format!("schur-pinch {} blocks of {} copies", params.q, params.k),
            format!("measure {} blocks in the schur basis ({:?})", params.m, params.mode),
            format!("choose shift on {} blocks with bath {} and margin {:.12e}", params.n_eff(), l, margin),
            "apply type-class plan".to_string(),
        ];
        let description =
            ProtocolDescription { context: ctx.clone(), params, plan_settings, alphabet, l, margin_nats: margin, steps };
        let hash = description.hash();
        Ok(UniversalProtocol { description, hash })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn execute(&self, source: &SchurPinchedSource, seed: u64) -> Result<ProtocolOutcome> {
        let mut rng = trial_rng(seed, 0);
        let mut out = self.execute_with(source, &mut rng)?;
        out.seed = Some(seed);
        Ok(out)
    }

    pub fn execute_with<R: Rng + ?Sized>(&self, source: &SchurPinchedSource, rng: &mut R) -> Result<ProtocolOutcome> {
        let desc = &self.description;
        let params = &desc.params;
        let ctx = &desc.context;
        desc.alphabet.check_distribution(&source.p)?;
        let oracle = SamplingOracle::new(source.p.clone(), params.mode)?;
        let emp = sample_types_with(&oracle, params.m, rng)?;
        let report =
            estimate_relative_entropy(&emp.p_hat, &desc.alphabet.thermal, ctx, params.k, params.radius, 1.0 - params.eps / 2.0)?;
        let n_eff = params.n_eff();
        let search = choose_shift(&emp.p_hat, &desc.alphabet, n_eff, desc.l, desc.margin_nats, &desc.plan_settings)?;
        let plan = build_classical_plan(&emp.p_hat, &desc.alphabet, n_eff, desc.l, &search.h, &desc.plan_settings)?;
        let (xi, bound) = plan.atypical_mass(&source.p)?;
        let w = plan.work_f64();
        let rate = desc.alphabet.beta * w / params.n as f64;
        let pinched = crate::qmat::classical_relative_entropy(&source.p, &desc.alphabet.thermal)? / params.k as f64;
        let success = 1.0 - params.eps / 2.0;
        Ok(ProtocolOutcome {
            mode: "universal".into(),
            n: params.n,
            k: params.k,
            m: params.m,
            l: desc.l,
            shift: plan.h.shifts().to_vec(),
            work_exact: plan.work.to_string(),
            extracted_work: w,
            rate_nats: rate,
            target_rate: source.target_rate,
            pinched_rate_nats: pinched,
            xi,
            xi_is_bound: bound,
            fidelity: success * (1.0 - xi),
            success_prob: success,
            copies: CopiesConsumed {
                pinched: params.k as u64 * params.q,
                measured: params.m,
                discarded: params.n - params.k as u64 * params.q,
            },
            converse_holds: rate <= source.target_rate + CONVERSE_TOL,
            description_hash: Some(self.hash.clone()),
            estimate: Some(report),
            sample_cost: None,
            seed: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let ctx = ThermalContext::qubit(1.0);
        let p = UniversalParams::schedule(10_000, &ctx, SamplingMode::Exact).unwrap();
        assert_eq!(p.k, 4);
        assert_eq!(p.q, 2500);
        assert_eq!(p.m, 1250);
        assert!((p.eps - (-(1e4f64).cbrt()).exp()).abs() < 1e-20);
        let small = UniversalParams::schedule(100, &ctx, SamplingMode::Exact).unwrap();
        assert_eq!(small.k, 2);
        assert!(UniversalParams::with_k(3, 2, &ctx, SamplingMode::Exact).is_err());
    }

    #[test]
    fn column_energies_match_basis() {
        for (levels, k) in [("0,1", 3usize), ("0,1,5/2", 2), ("0,1,3", 3)] {
            let ctx = ThermalContext::parse(levels, 1.0).unwrap();
            let basis = build_schur_basis(k, ctx.dim()).unwrap();
            assert_eq!(schur_column_energies(&ctx, k).unwrap(), basis.column_energies(&ctx));
        }
    }

    #[test]
    fn diagonal_source_matches_dense() {
        let ctx = ThermalContext::parse("0,1,2", 0.7).unwrap();
        let p1 = [0.5, 0.3, 0.2];
        let a = SchurPinchedSource::from_diagonal(&p1, &ctx, 3).unwrap();
        let b = SchurPinchedSource::from_state(&DensityMatrix::diagonal(&p1).unwrap(), &ctx, 3).unwrap();
        for (x, y) in a.p.iter().zip(&b.p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_input_extracts_nothing() {
        let ctx = ThermalContext::qubit(1.0);
        let params = UniversalParams::schedule(2000, &ctx, SamplingMode::Sampled).unwrap();
        let proto = UniversalProtocol::synthesize(&ctx, params.clone(), PlanSettings::default()).unwrap();
        let src = SchurPinchedSource::from_state(&thermal_state(&ctx), &ctx, params.k).unwrap();
        for seed in 0..5 {
            let out = proto.execute(&src, seed).unwrap();
            assert_eq!(out.rate_nats, 0.0);
            assert!(out.converse_holds);
        }
    }

    #[test]
    fn description_is_state_independent() {
        let ctx = ThermalContext::qubit(1.0);
        let params = UniversalParams::schedule(500, &ctx, SamplingMode::Sampled).unwrap();
        let a = UniversalProtocol::synthesize(&ctx, params.clone(), PlanSettings::default()).unwrap();
        let b = UniversalProtocol::synthesize(&ctx, params.clone(), PlanSettings::default()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let s1 = SchurPinchedSource::from_state(&DensityMatrix::plus(), &ctx, params.k).unwrap();
        let s2 = SchurPinchedSource::from_diagonal(&[1.0, 0.0], &ctx, params.k).unwrap();
        let o1 = a.execute(&s1, 9).unwrap();
        let o2 = a.execute(&s2, 9).unwrap();
        assert_eq!(o1.description_hash, o2.description_hash);
        assert_eq!(o1.copies, o2.copies);
    }

    #[test]
    fn ground_state_at_ten_thousand() {
        let ctx = ThermalContext::qubit(1.0);
        let params = UniversalParams::schedule(10_000, &ctx, SamplingMode::Exact).unwrap();
        let proto = UniversalProtocol::synthesize(&ctx, params.clone(), PlanSettings::default()).unwrap();
        let src = SchurPinchedSource::from_diagonal(&[1.0, 0.0], &ctx, params.k).unwrap();
        let out = proto.execute(&src, 0).unwrap();
        assert!(out.rate_nats > 0.0 && out.rate_nats < 0.31326168751822286, "rate {}", out.rate_nats);
        assert!(out.fidelity >= (1.0 - params.eps / 2.0) * (1.0 - out.xi) - 1e-15);
        assert!(out.converse_holds);
    }
}
