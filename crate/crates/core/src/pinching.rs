//! Pinching channels 𝒫(ρ) = Σ_j Π_j ρ Π_j and their thermodynamic checks.

use num_complex::Complex64;
use num_rational::Rational64;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::qmat::{
    c, checked_power_dim, is_diagonal, max_abs, min_eigenvalue, rational_to_f64, relative_entropy, CMat, DensityMatrix,
    ThermalContext,
};
use crate::schur::SchurBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PinchingKind {
    Energy,
    Schur,
    Coarse,
    Dephasing,
}

/// Orthogonal projectors stored as a unitary whose columns are grouped by projector.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    dim: usize,
    basis: CMat,
    labels: Vec<usize>,
    count: usize,
    computational: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub idempotence: f64,
    pub orthogonality: f64,
    pub completeness: f64,
    pub commutation: f64,
}

impl FamilyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.idempotence <= tol && self.orthogonality <= tol && self.completeness <= tol && self.commutation <= tol
    }
}

impl ProjectorFamily {
    /// Projectors spanned by computational basis vectors; `labels[i]` is the projector of |i⟩.
    pub fn computational(labels: Vec<usize>) -> Result<Self> {
        let count = labels.iter().max().map_or(0, |&m| m + 1);
        let dim = labels.len();
        for j in 0..count {
            if !labels.contains(&j) {
                return Err(Error::InvalidArgument(format!("projector {j} is empty")));
            }
        }
        Ok(ProjectorFamily { dim, basis: CMat::identity(dim, dim), labels, count, computational: true })
    }

    /// Projectors onto groups of columns of a unitary.
    pub fn from_unitary(basis: CMat, labels: Vec<usize>) -> Result<Self> {
        let dim = basis.nrows();
        if basis.ncols() != dim || labels.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: labels.len() });
        }
        let dev = max_abs(&(basis.adjoint() * &basis - CMat::identity(dim, dim)));
        if dev > 1e-9 {
            return Err(Error::InvalidArgument(format!("projector basis is not unitary (deviation {dev:.3e})")));
        }
        let count = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(ProjectorFamily { dim, basis, labels, count, computational: false })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.count];
        for &l in &self.labels {
            r[l] += 1;
        }
        r
    }

    pub fn projector(&self, j: usize) -> CMat {
        let cols: Vec<usize> = (0..self.dim).filter(|&i| self.labels[i] == j).collect();
        let mut v = CMat::zeros(self.dim, cols.len());
        for (k, &col) in cols.iter().enumerate() {
            v.set_column(k, &self.basis.column(col));
        }
        &v * v.adjoint()
    }

    pub fn projectors(&self) -> Vec<CMat> {
        (0..self.count).map(|j| self.projector(j)).collect()
    }

    /// Checks the family against a diagonal Hamiltonian with the given spectrum.
    pub fn validate(&self, energies: &[f64]) -> FamilyReport {
        let ps = self.projectors();
        let mut idem = 0.0f64;
        let mut orth = 0.0f64;
        let mut comm = 0.0f64;
        let mut sum = CMat::zeros(self.dim, self.dim);
        for (i, p) in ps.iter().enumerate() {
            idem = idem.max(max_abs(&(p * p - p))).max(crate::qmat::hermitian_deviation(p));
            for q in &ps[i + 1..] {
                orth = orth.max(max_abs(&(p * q)));
            }
            for a in 0..self.dim {
                for b in 0..self.dim {
                    comm = comm.max((p[(a, b)] * (energies[b] - energies[a])).norm());
                }
            }
            sum += p;
        }
        let completeness = max_abs(&(sum - CMat::identity(self.dim, self.dim)));
        FamilyReport { idempotence: idem, orthogonality: orth, completeness, commutation: comm }
    }
}

#[derive(Debug, Clone)]
pub struct PinchingChannel {
    pub family: ProjectorFamily,
    pub kind: PinchingKind,
    /// Diagonal of the Hamiltonian the projectors commute with.
    pub energies: Vec<Rational64>,
}

fn group_by_energy(energies: &[Rational64]) -> Vec<usize> {
    let distinct: BTreeMap<Rational64, usize> =
        energies.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().enumerate().map(|(i, e)| (e, i)).collect();
    energies.iter().map(|e| distinct[e]).collect()
}

/// One projector per distinct total energy of H^{×n}, in increasing energy.
pub fn energy_pinching(ctx: &ThermalContext, n: usize) -> Result<PinchingChannel> {
    let energies = ctx.hamiltonian(n).spectrum()?;
    let family = ProjectorFamily::computational(group_by_energy(&energies))?;
    Ok(PinchingChannel { family, kind: PinchingKind::Energy, energies })
}

/// Energy eigenspaces inside every Schur-Weyl block, ordered by block then energy.
pub fn schur_pinching(ctx: &ThermalContext, n: usize, basis: &SchurBasis) -> Result<PinchingChannel> {
    if basis.n != n || basis.d != ctx.dim() {
        return Err(Error::InvalidArgument(format!(
            "Schur basis is for (n={}, d={}), channel needs (n={n}, d={})",
            basis.n,
            basis.d,
            ctx.dim()
        )));
    }
    let col_energy = basis.column_energies(ctx);
    let mut labels = vec![0; basis.dim()];
    let mut next = 0;
    for blk in &basis.blocks {
        let local: std::collections::BTreeSet<Rational64> = blk.columns().map(|c| col_energy[c]).collect();
        let index: BTreeMap<Rational64, usize> = local.into_iter().enumerate().map(|(i, e)| (e, next + i)).collect();
        for col in blk.columns() {
            labels[col] = index[&col_energy[col]];
        }
        next += index.len();
    }
    let family = ProjectorFamily::from_unitary(basis.change_of_basis.clone(), labels)?;
    let energies = ctx.hamiltonian(n).spectrum()?;
    Ok(PinchingChannel { family, kind: PinchingKind::Schur, energies })
}

/// Two-block pinching {Π_{d_cut}, I − Π_{d_cut}} on the levels of `ctx`.
pub fn coarse_pinching(d_cut: usize, ctx: &ThermalContext) -> Result<PinchingChannel> {
    let dim = ctx.dim();
    if d_cut == 0 || d_cut >= dim {
        return Err(Error::InvalidArgument(format!("cut {d_cut} must lie in 1..{dim}")));
    }
    let labels = (0..dim).map(|i| usize::from(i >= d_cut)).collect();
    Ok(PinchingChannel {
        family: ProjectorFamily::computational(labels)?,
        kind: PinchingKind::Coarse,
        energies: ctx.levels().to_vec(),
    })
}

/// Rank-one dephasing in an energy-respecting orthonormal basis.
pub fn dephasing_channel(basis: CMat, energies: Vec<Rational64>) -> Result<PinchingChannel> {
    let dim = basis.nrows();
    let family = ProjectorFamily::from_unitary(basis, (0..dim).collect())?;
    Ok(PinchingChannel { family, kind: PinchingKind::Dephasing, energies })
}

impl PinchingChannel {
    pub fn dim(&self) -> usize {
        self.family.dim
    }

    pub fn projector_count(&self) -> usize {
        self.family.len()
    }

    pub fn energies_f64(&self) -> Vec<f64> {
        self.energies.iter().map(rational_to_f64).collect()
    }

    pub fn apply_matrix(&self, rho: &CMat) -> Result<CMat> {
        if rho.nrows() != self.dim() || rho.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho.nrows() });
        }
        let labels = &self.family.labels;
        if self.family.computational {
            return Ok(CMat::from_fn(self.dim(), self.dim(), |i, j| {
                if labels[i] == labels[j] {
                    rho[(i, j)]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }));
        }
        let s = &self.family.basis;
        let mut inner = s.adjoint() * rho * s;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if labels[i] != labels[j] {
                    inner[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(s * inner * s.adjoint())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_matrix(rho.matrix())?;
        let herm = (&out + out.adjoint()) * c(0.5);
        Ok(DensityMatrix::from_trusted(herm))
    }

    /// The J unitaries U_k = Σ_j exp(2πi jk/J) Π_j, k = 1..J.
    pub fn mixture_realization(&self) -> Vec<CMat> {
        let j_count = self.family.len();
        let s = &self.family.basis;
        (1..=j_count)
            .map(|k| {
                let phases: Vec<Complex64> = self
                    .family
                    .labels
                    .iter()
                    .map(|&j| {
                        let angle = 2.0 * std::f64::consts::PI * ((j + 1) * k) as f64 / j_count as f64;
                        Complex64::from_polar(1.0, angle)
                    })
                    .collect();
                let mut scaled = s.clone();
                for (col, ph) in phases.iter().enumerate() {
                    for row in 0..self.dim() {
                        scaled[(row, col)] *= ph;
                    }
                }
                scaled * s.adjoint()
            })
            .collect()
    }

    /// max ‖[U, H]‖ entrywise for a matrix against the diagonal Hamiltonian.
    pub fn commutator_with_hamiltonian(&self, u: &CMat) -> f64 {
        let e = self.energies_f64();
        let mut dev = 0.0f64;
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                dev = dev.max((u[(a, b)] * (e[b] - e[a])).norm());
            }
        }
        dev
    }

    pub fn validate(&self) -> FamilyReport {
        self.family.validate(&self.energies_f64())
    }

    /// Choi matrix Σ_{ij} |i⟩⟨j| ⊗ 𝒫(|i⟩⟨j|); available for dimension ≤ 8.
    pub fn choi_matrix(&self) -> Result<CMat> {
        let d = self.dim();
        if d > 8 {
            return Err(Error::DimensionCap { dim: (d * d) as u128, cap: 64 });
        }
        let mut choi = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut unit = CMat::zeros(d, d);
                unit[(i, j)] = c(1.0);
                let out = self.apply_matrix(&unit)?;
                for a in 0..d {
                    for b in 0..d {
                        choi[(i * d + a, j * d + b)] = out[(a, b)];
                    }
                }
            }
        }
        Ok(choi)
    }

    /// max |𝒫∘𝒫(X) − 𝒫(X)| over matrix units (or 64 units spread over the matrix when large).
    pub fn idempotence_deviation(&self) -> Result<f64> {
        let d = self.dim();
        let step = ((d * d) / 64).max(1);
        let mut dev = 0.0f64;
        for u in (0..d * d).step_by(step) {
            let mut unit = CMat::zeros(d, d);
            unit[(u / d, u % d)] = c(1.0);
            let once = self.apply_matrix(&unit)?;
            let twice = self.apply_matrix(&once)?;
            dev = dev.max(max_abs(&(twice - once)));
        }
        Ok(dev)
    }

    /// Gibbs preservation deviation max|𝒫(τ^{⊗n}) − τ^{⊗n}|.
    pub fn gibbs_deviation(&self, thermal_diag: &[f64]) -> Result<f64> {
        let tau = crate::qmat::diag_matrix(thermal_diag);
        Ok(max_abs(&(self.apply_matrix(&tau)? - tau)))
    }

    /// D(ρ‖𝒫(ρ)).
    pub fn loss_nats(&self, rho: &DensityMatrix) -> Result<f64> {
        relative_entropy(rho, &self.apply(rho)?)
    }
}

/// Minimum eigenvalue of 𝒫(ρ_k) − ρ_k/multiplier and whether it clears −1e-9.
pub fn pinching_inequality_check(channel: &PinchingChannel, rho_k: &DensityMatrix, multiplier: f64) -> Result<(f64, bool)> {
    let pinched = channel.apply_matrix(rho_k.matrix())?;
    let diff = pinched - rho_k.matrix() * c(1.0 / multiplier);
    let min = if is_diagonal(&diff, 0.0) { (0..diff.nrows()).map(|i| diff[(i, i)].re).fold(f64::INFINITY, f64::min) } else { min_eigenvalue(&diff) };
    Ok((min, min >= -1e-9))
}

/// Projector-count bound (k+1)^{2(d−1)} for Schur pinching.
pub fn schur_projector_bound(k: usize, d: usize) -> f64 {
    ((k + 1) as f64).powi(2 * (d as i32 - 1))
}

/// Per-copy relative-entropy loss bound (2(d−1)/k) ln(k+1).
pub fn schur_loss_bound(k: usize, d: usize) -> f64 {
    2.0 * (d as f64 - 1.0) / k as f64 * ((k + 1) as f64).ln()
}

/// Convenience: the Schur pinching for k copies of `ctx`, building the basis.
pub fn schur_pinching_for(ctx: &ThermalContext, k: usize) -> Result<PinchingChannel> {
    checked_power_dim(ctx.dim(), k)?;
    let basis = crate::schur::build_schur_basis(k, ctx.dim())?;
    schur_pinching(ctx, k, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{random_density, tensor_power, thermal_diagonal, thermal_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubit() -> ThermalContext {
        ThermalContext::qubit(1.0)
    }

    #[test]
    fn energy_pinching_examples() {
        let one = energy_pinching(&qubit(), 1).unwrap();
        assert_eq!(one.family.ranks(), vec![1, 1]);
        let two = energy_pinching(&qubit(), 2).unwrap();
        assert_eq!(two.family.ranks(), vec![1, 2, 1]);
        let deg = energy_pinching(&ThermalContext::parse("0,0", 1.0).unwrap(), 2).unwrap();
        assert_eq!(deg.family.ranks(), vec![4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_density(4, &mut rng);
        assert!(max_abs(&(deg.apply(&r).unwrap().matrix() - r.matrix())) < 1e-15);
        let plus = one.apply(&DensityMatrix::plus()).unwrap();
        assert!(max_abs(&(plus.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-15);
    }

    #[test]
    fn schur_pinching_examples() {
        let three = schur_pinching_for(&qubit(), 3).unwrap();
        assert_eq!(three.family.ranks(), vec![1, 1, 1, 1, 2, 2]);
        let two = schur_pinching_for(&qubit(), 2).unwrap();
        assert_eq!(two.family.ranks(), vec![1, 1, 1, 1]);
        let single = schur_pinching_for(&ThermalContext::parse("0,1,5/2", 1.0).unwrap(), 1).unwrap();
        assert_eq!(single.family.ranks(), vec![1, 1, 1]);
    }

    #[test]
    fn coarse_examples() {
        let ctx = ThermalContext::parse("0,1,2,3", 1.0).unwrap();
        assert!(coarse_pinching(4, &ctx).is_err());
        assert!(coarse_pinching(0, &ctx).is_err());
        let ch = coarse_pinching(3, &ctx).unwrap();
        assert_eq!(ch.family.ranks(), vec![3, 1]);
        let diag = DensityMatrix::diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(ch.apply(&diag).unwrap(), diag);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_density(4, &mut rng);
        let out = ch.apply(&r).unwrap();
        assert_eq!(out.matrix()[(0, 3)], Complex64::new(0.0, 0.0));
        assert_eq!(out.matrix()[(1, 2)], r.matrix()[(1, 2)]);
        assert!((crate::qmat::trace(out.matrix()).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_examples() {
        let deg = energy_pinching(&ThermalContext::parse("0,0", 1.0).unwrap(), 1).unwrap();
        let us = deg.mixture_realization();
        assert_eq!(us.len(), 1);
        assert!(max_abs(&(&us[0] - CMat::identity(2, 2))) < 1e-12);
        let q = energy_pinching(&qubit(), 1).unwrap();
        let us = q.mixture_realization();
        assert_eq!(us.len(), 2);
        assert!(max_abs(&(&us[0] - crate::qmat::diag_matrix(&[-1.0, 1.0]))) < 1e-12);
    }

    #[test]
    fn channel_properties_small() {
        let ctx = ThermalContext::parse("0,1,3/2", 0.7).unwrap();
        for ch in [energy_pinching(&qubit(), 3).unwrap(), schur_pinching_for(&qubit(), 3).unwrap(), energy_pinching(&ctx, 1).unwrap(), schur_pinching_for(&ctx, 1).unwrap()] {
            assert!(ch.validate().passes(1e-10));
            let choi = ch.choi_matrix().unwrap();
            assert!(min_eigenvalue(&choi) >= -1e-10);
            assert!(ch.idempotence_deviation().unwrap() < 1e-10);
            let d = ch.dim();
            let id = ch.apply_matrix(&CMat::identity(d, d)).unwrap();
            assert!(max_abs(&(id - CMat::identity(d, d))) < 1e-10);
        }
        let ch = schur_pinching_for(&qubit(), 3).unwrap();
        let t = thermal_diagonal(&qubit(), 3).unwrap();
        assert!(ch.gibbs_deviation(&t).unwrap() < 1e-12);
    }

    #[test]
    fn inequality_examples() {
        let ch = energy_pinching(&qubit(), 1).unwrap();
        let diag = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        assert!(pinching_inequality_check(&ch, &diag, 2.0).unwrap().1);
        let sp = schur_pinching_for(&qubit(), 2).unwrap();
        let p2 = tensor_power(&DensityMatrix::plus(), 2).unwrap();
        assert!(pinching_inequality_check(&sp, &p2, schur_projector_bound(2, 2)).unwrap().1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn data_processing(seed in 0u64..10_000, qutrit in any::<bool>()) {
            let ctx = if qutrit { ThermalContext::parse("0,1,2", 1.0).unwrap() } else { qubit() };
            let d = ctx.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_density(d, &mut rng);
            let b = random_density(d, &mut rng);
            let ch = energy_pinching(&ctx, 1).unwrap();
            let before = relative_entropy(&a, &b).unwrap();
            let after = relative_entropy(&ch.apply(&a).unwrap(), &ch.apply(&b).unwrap()).unwrap();
            prop_assert!(after <= before + 1e-8);
            let tau = thermal_state(&ctx);
            prop_assert!(max_abs(&(ch.apply(&tau).unwrap().matrix() - tau.matrix())) < 1e-12);
        }

        #[test]
        fn schur_loss_within_bound(seed in 0u64..10_000, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(2, &mut rng);
            let ch = schur_pinching_for(&qubit(), k).unwrap();
            prop_assert!((ch.projector_count() as f64) <= schur_projector_bound(k, 2));
            let rk = tensor_power(&rho, k).unwrap();
            let loss = ch.loss_nats(&rk).unwrap() / k as f64;
            prop_assert!(loss <= schur_loss_bound(k, 2) + 1e-8);
        }
    }
}
