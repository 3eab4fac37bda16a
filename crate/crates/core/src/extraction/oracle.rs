//! Dense density-matrix simulation of a classical plan on system ⊗ bath ⊗ storage.
//!
//! The extraction unitary is an energy-conserving permutation of product basis
//! states. Served blocks (f, g) with storage |0⟩ go to strings of joint type
//! f + g − h with storage |W⟩; unserved storage-|0⟩ states stay put; whatever is
//! left is paired inside each exact energy class.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_rational::Rational64;
use num_traits::Zero;
use serde::Serialize;

use super::plan::ExtractionPlan;
use crate::error::{Error, Result};
use crate::qmat::{checked_power_dim, diag_matrix, index_digits, kron, tensor_power, CMat, DensityMatrix};

const ORACLE_MAX_SITES: u64 = 9;

#[derive(Debug, Clone)]
pub struct EnergyPermutation {
    /// image[i] = index of U|i⟩.
    pub image: Vec<usize>,
    pub sites: usize,
    pub d: usize,
}

fn counts_of(digits: &[usize], d: usize) -> Vec<u64> {
    let mut c = vec![0u64; d];
    for &x in digits {
        c[x] += 1;
    }
    c
}

/// Permutation on (d^{n+l}) × {0, W}; index = 2·x + s with the system first in x.
pub fn build_extraction_unitary(plan: &ExtractionPlan) -> Result<EnergyPermutation> {
    let n = plan.n as usize;
    let l = plan.l as usize;
    let d = plan.alphabet.len();
    if plan.n + plan.l > ORACLE_MAX_SITES {
        return Err(Error::InvalidArgument(format!("oracle simulation limited to n + l ≤ {ORACLE_MAX_SITES}")));
    }
    let states = checked_power_dim(d, n + l)?;
    let total = 2 * states;
    let levels = &plan.alphabet.energies;
    let work = plan.work;
    let energy = |idx: usize| -> Rational64 {
        let x = idx / 2;
        let e = index_digits(x, d, n + l).iter().fold(Rational64::zero(), |acc, &i| acc + levels[i]);
        if idx % 2 == 1 {
            e + work
        } else {
            e
        }
    };
    let served: HashSet<(Vec<u64>, Vec<u64>)> = match &plan.mode {
        super::plan::PlanMode::Identity => HashSet::new(),
        super::plan::PlanMode::Enumerated { .. } => plan
            .served_blocks()
            .unwrap_or_default()
            .into_iter()
            .map(|(f, g)| (f.counts().to_vec(), g.counts().to_vec()))
            .collect(),
        super::plan::PlanMode::CertifiedBox { .. } => {
            return Err(Error::InvalidArgument("oracle needs an enumerated plan".into()));
        }
    };
    let h = plan.h.shifts();
    let mut image = vec![usize::MAX; total];
    let mut used = vec![false; total];
    // free target strings per joint type, in increasing index order
    let mut pools: HashMap<Vec<u64>, std::vec::IntoIter<usize>> = HashMap::new();
    if !plan.h.is_zero() {
        let mut by_type: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for x in 0..states {
            by_type.entry(counts_of(&index_digits(x, d, n + l), d)).or_default().push(2 * x + 1);
        }
        pools = by_type.into_iter().map(|(k, v)| (k, v.into_iter())).collect();
    }
    for x in 0..states {
        let digits = index_digits(x, d, n + l);
        let f = counts_of(&digits[..n], d);
        let g = counts_of(&digits[n..], d);
        let src = 2 * x;
        if plan.h.is_zero() {
            // W = 0: both storage levels are degenerate, every block is served
            image[src] = src + 1;
            used[src + 1] = true;
            continue;
        }
        if served.contains(&(f.clone(), g.clone())) {
            let target: Vec<u64> = (0..d).map(|i| (f[i] + g[i]) as i64 - h[i]).map(|v| v as u64).collect();
            let dst = pools
                .get_mut(&target)
                .and_then(|p| p.next())
                .ok_or(Error::CapacityExceeded { target: target.iter().map(|&v| v as i64).collect() })?;
            image[src] = dst;
            used[dst] = true;
        } else {
            image[src] = src;
            used[src] = true;
        }
    }
    // complete inside each energy class
    let mut free_dom: BTreeMap<Rational64, Vec<usize>> = BTreeMap::new();
    let mut free_cod: BTreeMap<Rational64, Vec<usize>> = BTreeMap::new();
    for i in 0..total {
        if image[i] == usize::MAX {
            free_dom.entry(energy(i)).or_default().push(i);
        }
        if !used[i] {
            free_cod.entry(energy(i)).or_default().push(i);
        }
    }
    for (e, dom) in free_dom {
        let cod = free_cod.remove(&e).unwrap_or_default();
        if cod.len() != dom.len() {
            return Err(Error::Numerical(format!("energy class {e} cannot be completed")));
        }
        for (a, b) in dom.into_iter().zip(cod) {
            image[a] = b;
        }
    }
    Ok(EnergyPermutation { image, sites: n + l, d })
}

impl EnergyPermutation {
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.image.len()];
        for &j in &self.image {
            if j >= seen.len() || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        true
    }

    pub fn conserves(&self, levels: &[Rational64], work: Rational64) -> bool {
        let energy = |idx: usize| {
            let e = index_digits(idx / 2, self.d, self.sites).iter().fold(Rational64::zero(), |acc, &i| acc + levels[i]);
            if idx % 2 == 1 {
                e + work
            } else {
                e
            }
        };
        self.image.iter().enumerate().all(|(i, &j)| energy(i) == energy(j))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutcome {
    pub dim: usize,
    pub work: f64,
    /// ⟨W|σ_X|W⟩ of the storage marginal.
    pub fidelity: f64,
    pub xi: f64,
    pub bijective: bool,
    pub energy_conserving: bool,
}

/// Apply the plan's permutation to ρ^{⊗n} ⊗ τ^{⊗l} ⊗ |0⟩⟨0| as a dense matrix.
pub fn simulate_plan_density(plan: &ExtractionPlan, rho: &DensityMatrix) -> Result<OracleOutcome> {
    let d = plan.alphabet.len();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    let perm = build_extraction_unitary(plan)?;
    let sys = tensor_power(rho, plan.n as usize)?;
    let bath = tensor_power(&DensityMatrix::diagonal(&plan.alphabet.thermal)?, plan.l as usize)?;
    let storage = diag_matrix(&[1.0, 0.0]);
    let input: CMat = kron(&kron(sys.matrix(), bath.matrix()), &storage);
    let dim = input.nrows();
    let mut out = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(perm.image[i], perm.image[j])] = input[(i, j)];
        }
    }
    let fidelity: f64 = (0..dim / 2).map(|x| out[(2 * x + 1, 2 * x + 1)].re).sum();
    Ok(OracleOutcome {
        dim,
        work: plan.work_f64(),
        fidelity,
        xi: 1.0 - fidelity,
        bijective: perm.is_bijection(),
        energy_conserving: perm.conserves(&plan.alphabet.energies, plan.work),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::plan::{build_classical_plan, run_classical_plan, PlanSettings};
    use crate::extraction::Alphabet;
    use crate::qmat::ThermalContext;
    use crate::typeclass::ShiftFunction;

    #[test]
    fn dense_matches_distribution_level() {
        let ctx = ThermalContext::qubit(1.0);
        let a = Alphabet::from_context(&ctx);
        for (n, l, x, p0) in [(6u64, 3u64, 1i64, 1.0), (4, 4, 1, 0.9), (4, 4, 2, 0.9), (5, 4, 1, 0.7), (3, 3, 0, 0.6)] {
            let p = [p0, 1.0 - p0];
            let h = ShiftFunction::new(vec![-x, x]).unwrap();
            let plan = build_classical_plan(&p, &a, n, l, &h, &PlanSettings::default()).unwrap();
            let dist = run_classical_plan(&plan, &p).unwrap();
            let dense = simulate_plan_density(&plan, &DensityMatrix::diagonal(&p).unwrap()).unwrap();
            assert!(dense.bijective && dense.energy_conserving);
            assert!((dense.fidelity - dist.fidelity).abs() < 1e-9, "n={n} l={l} h={x}: {} vs {}", dense.fidelity, dist.fidelity);
            assert_eq!(dense.work, dist.extracted_work);
        }
    }

    #[test]
    fn box_plans_rejected() {
        let ctx = ThermalContext::qubit(1.0);
        let a = Alphabet::from_context(&ctx);
        let settings = PlanSettings { enumeration_cap: 1, ..PlanSettings::default() };
        let plan = build_classical_plan(&[0.5, 0.5], &a, 4, 4, &ShiftFunction::new(vec![-1, 1]).unwrap(), &settings).unwrap();
        assert!(simulate_plan_density(&plan, &DensityMatrix::maximally_mixed(2)).is_err());
    }
}
