//! State-aware extraction (known state description) and the tomography variant.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use rand::Rng;
use serde::Serialize;

use super::plan::{build_classical_plan, choose_shift, PlanSettings};
use super::{Alphabet, CopiesConsumed, ProtocolOutcome, CONVERSE_TOL};
use crate::error::{Error, Result};
use crate::estimation::trial_rng;
use crate::pinching::{dephasing_channel, energy_pinching, PinchingChannel};
use crate::qmat::{
    c, checked_power_dim, classical_relative_entropy, eigh, relative_entropy, tensor_power, thermal_state, trace_norm,
    CMat, DensityMatrix, ThermalContext,
};

#[derive(Debug, Clone, Default, Serialize)]
pub struct AwareSettings {
    pub plan: PlanSettings,
}

/// Eigenbasis of an energy-block-diagonal matrix, refined inside each energy
/// eigenspace. Returns (basis columns, their energies, diagonal weights).
pub fn energy_block_letters(pinched: &CMat, energies: &[Rational64]) -> Result<(CMat, Vec<Rational64>, Vec<f64>)> {
    let dim = pinched.nrows();
    if energies.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: energies.len() });
    }
    let mut distinct: Vec<Rational64> = energies.to_vec();
    distinct.sort();
    distinct.dedup();
    let mut basis = CMat::zeros(dim, dim);
    let mut labels = Vec::with_capacity(dim);
    let mut weights = Vec::with_capacity(dim);
    let mut col = 0;
    for e in distinct {
        let idx: Vec<usize> = (0..dim).filter(|&i| energies[i] == e).collect();
        let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| pinched[(idx[a], idx[b])]);
        let (vals, vecs) = eigh(&block);
        // descending weight inside a block
        for j in (0..idx.len()).rev() {
            for (a, &row) in idx.iter().enumerate() {
                basis[(row, col)] = vecs[(a, j)];
            }
            labels.push(e);
            weights.push(vals[j].max(0.0));
            col += 1;
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok((basis, labels, weights))
}

fn pinched_copies(rho: &DensityMatrix, ctx: &ThermalContext, k: usize) -> Result<(PinchingChannel, CMat)> {
    if rho.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch { expected: ctx.dim(), found: rho.dim() });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    checked_power_dim(ctx.dim(), k)?;
    let channel = energy_pinching(ctx, k)?;
    let rho_k = tensor_power(rho, k)?;
    let sigma = channel.apply_matrix(rho_k.matrix())?;
    Ok((channel, sigma))
}

fn check_copies(n: u64, k: usize) -> Result<u64> {
    let q = n / k as u64;
    if q == 0 {
        return Err(Error::InvalidArgument(format!("n={n} is smaller than the block size k={k}")));
    }
    Ok(q)
}

#[allow(clippy::too_many_arguments)]
fn run_on_letters(
    mode: &str,
    p_design: &[f64],
    p_true: &[f64],
    alphabet: &Alphabet,
    n: u64,
    k: usize,
    q: u64,
    margin: f64,
    target: f64,
    settings: &PlanSettings,
) -> Result<ProtocolOutcome> {
    let l = settings.bath_size(q);
    let search = choose_shift(p_design, alphabet, q, l, margin, settings)?;
    let plan = build_classical_plan(p_design, alphabet, q, l, &search.h, settings)?;
    let (xi, bound) = plan.atypical_mass(p_true)?;
    let w = plan.work_f64();
    let rate = alphabet.beta * w / n as f64;
    let pinched = classical_relative_entropy(p_true, &alphabet.thermal)? / k as f64;
    Ok(ProtocolOutcome {
        mode: mode.into(),
        n,
        k,
        m: 0,
        l,
        shift: plan.h.shifts().to_vec(),
        work_exact: plan.work.to_string(),
        extracted_work: w,
        rate_nats: rate,
        target_rate: target,
        pinched_rate_nats: pinched,
        xi,
        xi_is_bound: bound,
        fidelity: 1.0 - xi,
        success_prob: 1.0,
        copies: CopiesConsumed { pinched: k as u64 * q, measured: 0, discarded: n - k as u64 * q },
        converse_holds: rate <= target + CONVERSE_TOL,
        description_hash: None,
        estimate: None,
        sample_cost: None,
        seed: None,
    })
}

/// Energy-pinch blocks of k copies, dephase in the (known) eigenbasis of each
/// energy block and run the classical plan on q = ⌊n/k⌋ super-letters.
pub fn state_aware_protocol(
    rho: &DensityMatrix,
    ctx: &ThermalContext,
    n: u64,
    k: usize,
    settings: &AwareSettings,
) -> Result<ProtocolOutcome> {
    let q = check_copies(n, k)?;
    let (channel, sigma) = pinched_copies(rho, ctx, k)?;
    let (_, labels, p) = energy_block_letters(&sigma, &channel.energies)?;
    let alphabet = Alphabet::from_energies(labels, ctx, k);
    let target = relative_entropy(rho, &thermal_state(ctx))?;
    run_on_letters("aware", &p, &p, &alphabet, n, k, q, 0.0, target, &settings.plan)
}

#[derive(Debug, Clone, Serialize)]
pub struct TomographyParams {
    /// Trace-norm error of the simulated estimate.
    pub eta: f64,
    pub seed: u64,
}

/// Seeded traceless Hermitian perturbation, block diagonal in energy, with unit trace norm.
fn block_perturbation(energies: &[Rational64], seed: u64) -> CMat {
    let dim = energies.len();
    let mut rng = trial_rng(seed, 0);
    let mut m = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            if energies[i] != energies[j] {
                continue;
            }
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = if i == j { 0.0 } else { rng.random_range(-1.0..1.0) };
            m[(i, j)] = Complex64::new(re, im);
            m[(j, i)] = Complex64::new(re, -im);
        }
    }
    let shift = crate::qmat::trace(&m).re / dim as f64;
    for i in 0..dim {
        m[(i, i)] -= c(shift);
    }
    let norm = trace_norm(&m);
    if norm > 0.0 {
        m *= c(1.0 / norm);
    }
    m
}

/// Tomography-based variant: the eigenbasis comes from a simulated estimate
/// ρ̂ = 𝒫(ρ^{⊗k}) + ηΔ rather than from the state description.
///
/// The plan is designed on the (clipped) spectrum of ρ̂ with margin 2α_k·η and
/// evaluated under the true weights of 𝒫(ρ^{⊗k}) in that basis. The tomography
/// sample cost (Σ_E d_E²/η² blocks) is reported but not deducted from n.
pub fn tomographic_universal_protocol(
    rho: &DensityMatrix,
    ctx: &ThermalContext,
    n: u64,
    k: usize,
    params: &TomographyParams,
    settings: &AwareSettings,
) -> Result<(ProtocolOutcome, f64)> {
    if !(params.eta >= 0.0 && params.eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be non-negative, got {}", params.eta)));
    }
    let q = check_copies(n, k)?;
    let (channel, sigma) = pinched_copies(rho, ctx, k)?;
    let estimate = if params.eta > 0.0 {
        &sigma + block_perturbation(&channel.energies, params.seed) * c(params.eta)
    } else {
        sigma.clone()
    };
    let (basis, labels, p_design) = energy_block_letters(&estimate, &channel.energies)?;
    let dephase = dephasing_channel(basis.clone(), labels.clone())?;
    let gibbs_dev = dephase.gibbs_deviation(&crate::qmat::thermal_diagonal(ctx, k)?)?;
    let in_basis = basis.adjoint() * &sigma * &basis;
    let total: f64 = (0..in_basis.nrows()).map(|i| in_basis[(i, i)].re.max(0.0)).sum();
    let p_true: Vec<f64> = (0..in_basis.nrows()).map(|i| in_basis[(i, i)].re.max(0.0) / total).collect();
    let alphabet = Alphabet::from_energies(labels, ctx, k);
    let target = relative_entropy(rho, &thermal_state(ctx))?;
    let margin = 2.0 * ctx.continuity_constant(k) * params.eta;
    let mut out = run_on_letters("tomo", &p_design, &p_true, &alphabet, n, k, q, margin, target, &settings.plan)?;
    if params.eta > 0.0 {
        let mut counts = std::collections::BTreeMap::new();
        for e in &channel.energies {
            *counts.entry(*e).or_insert(0usize) += 1;
        }
        let cost: usize = counts.values().map(|d| d * d).sum();
        out.sample_cost = Some(cost as f64 / (params.eta * params.eta));
    }
    out.seed = Some(params.seed);
    Ok((out, gibbs_dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::plan::{build_classical_plan, run_classical_plan};

    #[test]
    fn plus_state_targets() {
        let ctx = ThermalContext::qubit(1.0);
        let plus = DensityMatrix::plus();
        let s = AwareSettings::default();
        let o1 = state_aware_protocol(&plus, &ctx, 60, 1, &s).unwrap();
        assert!((o1.pinched_rate_nats - 0.120115).abs() < 1e-5);
        let o3 = state_aware_protocol(&plus, &ctx, 60, 3, &s).unwrap();
        assert!(o3.pinched_rate_nats > o1.pinched_rate_nats + 1e-3);
        for o in [&o1, &o3] {
            assert!(o.converse_holds);
            assert!((0.0..=1.0).contains(&o.fidelity));
        }
    }

    #[test]
    fn diagonal_state_reduces_to_classical() {
        let ctx = ThermalContext::qubit(1.0);
        let rho = DensityMatrix::diagonal(&[0.9, 0.1]).unwrap();
        let s = AwareSettings::default();
        let aware = state_aware_protocol(&rho, &ctx, 80, 1, &s).unwrap();
        let a = Alphabet::from_context(&ctx);
        let l = s.plan.bath_size(80);
        let h = choose_shift(&[0.9, 0.1], &a, 80, l, 0.0, &s.plan).unwrap().h;
        let plan = build_classical_plan(&[0.9, 0.1], &a, 80, l, &h, &s.plan).unwrap();
        let classical = run_classical_plan(&plan, &[0.9, 0.1]).unwrap();
        assert_eq!(aware.shift, classical.shift);
        assert_eq!(aware.rate_nats, classical.rate_nats);
        assert_eq!(aware.xi, classical.xi);
    }

    #[test]
    fn perfect_tomography_matches_aware() {
        let ctx = ThermalContext::qubit(1.0);
        let plus = DensityMatrix::plus();
        let s = AwareSettings::default();
        let aware = state_aware_protocol(&plus, &ctx, 40, 2, &s).unwrap();
        let (tomo, gibbs) = tomographic_universal_protocol(&plus, &ctx, 40, 2, &TomographyParams { eta: 0.0, seed: 3 }, &s).unwrap();
        assert_eq!(tomo.rate_nats, aware.rate_nats);
        assert_eq!(tomo.xi, aware.xi);
        assert!(gibbs < 1e-12);
        assert!(tomo.sample_cost.is_none());
    }

    #[test]
    fn noisy_tomography_deficit_bounded() {
        let ctx = ThermalContext::qubit(1.0);
        let plus = DensityMatrix::plus();
        let s = AwareSettings::default();
        let aware = state_aware_protocol(&plus, &ctx, 40, 2, &s).unwrap();
        let (tomo, gibbs) = tomographic_universal_protocol(&plus, &ctx, 40, 2, &TomographyParams { eta: 0.1, seed: 3 }, &s).unwrap();
        assert!(gibbs < 1e-9);
        assert!(aware.rate_nats - tomo.rate_nats <= 2.0 * ctx.continuity_constant(2) * 0.1 + 1e-12);
        assert!(tomo.converse_holds);
        assert!(tomo.sample_cost.unwrap() > 0.0);
    }

    #[test]
    fn perturbation_is_traceless_unit_norm() {
        let e: Vec<Rational64> = ["0", "1", "1", "2"].iter().map(|s| s.parse().unwrap()).collect();
        let d = block_perturbation(&e, 11);
        assert!(crate::qmat::trace(&d).norm() < 1e-12);
        assert!((trace_norm(&d) - 1.0).abs() < 1e-10);
        assert_eq!(d[(0, 1)], Complex64::new(0.0, 0.0));
    }
}
