//! Dense complex matrices, density operators, Gibbs states and entropic functionals.
//!
//! All logarithms are natural. Matrix functions go through a Hermitian
//! eigendecomposition; eigenvalues at or below [`KERNEL_TOL`] count as kernel.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const KERNEL_TOL: f64 = 1e-12;
pub const SUPPORT_TOL: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Dense dimension cap, overridable through `THERMOFLUX_DIM_CAP`.
pub fn dim_cap() -> usize {
    std::env::var("THERMOFLUX_DIM_CAP")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DIM_CAP)
}

/// `d^n` with overflow detection, checked against [`dim_cap`].
pub fn checked_power_dim(d: usize, n: usize) -> Result<usize> {
    let cap = dim_cap();
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(d as u128);
        if acc > cap as u128 {
            return Err(Error::DimensionCap { dim: acc, cap });
        }
    }
    Ok(acc as usize)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Parse an exact energy: integer, `p/q`, or finite decimal such as `0.25`.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let t = s.trim();
    let err = || Error::Parse(format!("not an exact rational energy: {s:?}"));
    if t.is_empty() {
        return Err(err());
    }
    if let Some((a, b)) = t.split_once('/') {
        let num: i64 = a.trim().parse().map_err(|_| err())?;
        let den: i64 = b.trim().parse().map_err(|_| err())?;
        if den == 0 {
            return Err(err());
        }
        return Ok(Rational64::new(num, den));
    }
    if let Some((int_part, frac_part)) = t.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) || frac_part.len() > 15 {
            return Err(err());
        }
        let neg = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        let int_val: i64 = if int_digits.is_empty() { 0 } else { int_digits.parse().map_err(|_| err())? };
        let den = 10i64.pow(frac_part.len() as u32);
        let frac_val: i64 = frac_part.parse().map_err(|_| err())?;
        let mag = int_val
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(err)?;
        return Ok(Rational64::new(if neg { -mag } else { mag }, den));
    }
    let v: i64 = t.parse().map_err(|_| err())?;
    Ok(Rational64::from_integer(v))
}

pub fn rational_to_f64(r: &Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- matrix helpers

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn is_diagonal(m: &CMat, tol: f64) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)].norm() > tol {
                return false;
            }
        }
    }
    true
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * c(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vecs.set_column(new, &eig.eigenvectors.column(old));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if is_diagonal(m, 0.0) {
        return (0..m.nrows()).map(|i| m[(i, i)].re).fold(f64::INFINITY, f64::min);
    }
    eigh(m).0.first().copied().unwrap_or(0.0)
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    if is_diagonal(m, 0.0) {
        return (0..m.nrows()).map(|i| m[(i, i)].re.abs()).sum();
    }
    eigh(m).0.iter().map(|v| v.abs()).sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn diag_matrix(v: &[f64]) -> CMat {
    let mut m = CMat::zeros(v.len(), v.len());
    for (i, &x) in v.iter().enumerate() {
        m[(i, i)] = c(x);
    }
    m
}

pub fn outer(psi: &[Complex64]) -> CMat {
    let n = psi.len();
    CMat::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

/// Hermitian matrix function `f` applied through the spectrum.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let fv = c(f(vals[j]));
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

// ---------------------------------------------------------------- thermal context

/// Single-system Hamiltonian spectrum with inverse temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContextRepr", into = "ContextRepr")]
pub struct ThermalContext {
    levels: Vec<Rational64>,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextRepr {
    levels: Vec<String>,
    beta: f64,
}

impl TryFrom<ContextRepr> for ThermalContext {
    type Error = Error;
    fn try_from(r: ContextRepr) -> Result<Self> {
        let levels = r.levels.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        ThermalContext::new(levels, r.beta)
    }
}

impl From<ThermalContext> for ContextRepr {
    fn from(c: ThermalContext) -> Self {
        ContextRepr { levels: c.levels.iter().map(|r| r.to_string()).collect(), beta: c.beta }
    }
}

impl ThermalContext {
    pub fn new(levels: Vec<Rational64>, beta: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidContext("no energy levels".into()));
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidContext("levels must be sorted non-decreasing".into()));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidContext(format!("beta must be finite and non-negative, got {beta}")));
        }
        Ok(ThermalContext { levels, beta })
    }

    pub fn from_strs(levels: &[&str], beta: f64) -> Result<Self> {
        let lv = levels.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        Self::new(lv, beta)
    }

    /// Parses a comma separated level list such as `0,1,3/2`.
    pub fn parse(levels: &str, beta: f64) -> Result<Self> {
        let parts: Vec<&str> = levels.split(',').collect();
        Self::from_strs(&parts, beta)
    }

    /// Qubit with levels (0, 1).
    pub fn qubit(beta: f64) -> Self {
        Self::new(vec![Rational64::zero(), Rational64::from_integer(1)], beta).expect("valid qubit context")
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Rational64] {
        &self.levels
    }

    pub fn levels_f64(&self) -> Vec<f64> {
        self.levels.iter().map(rational_to_f64).collect()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn e_min(&self) -> f64 {
        rational_to_f64(&self.levels[0])
    }

    pub fn e_max(&self) -> f64 {
        rational_to_f64(self.levels.last().expect("non-empty"))
    }

    /// ln Z, evaluated relative to the ground level for stability.
    pub fn log_partition(&self) -> f64 {
        let e0 = self.e_min();
        let s: f64 = self.levels_f64().iter().map(|e| (-self.beta * (e - e0)).exp()).sum();
        -self.beta * e0 + s.ln()
    }

    pub fn partition_function(&self) -> f64 {
        self.log_partition().exp()
    }

    pub fn gibbs_weights(&self) -> Vec<f64> {
        let e0 = self.e_min();
        let w: Vec<f64> = self.levels_f64().iter().map(|e| (-self.beta * (e - e0)).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    /// Continuity constant 1 + (βE_max + ln Z)/√2 at k copies: 1 + k(βE_max + ln Z)/√2.
    pub fn continuity_constant(&self, k: usize) -> f64 {
        1.0 + k as f64 * (self.beta * self.e_max() + self.log_partition()) / std::f64::consts::SQRT_2
    }

    pub fn hamiltonian(&self, copies: usize) -> HamiltonianOperator {
        HamiltonianOperator { context: self.clone(), copies }
    }
}

/// Non-interacting sum H^{×n} over `copies` systems.
#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    pub context: ThermalContext,
    pub copies: usize,
}

impl HamiltonianOperator {
    /// Exact energy of every computational basis string (first factor most significant).
    pub fn spectrum(&self) -> Result<Vec<Rational64>> {
        let d = self.context.dim();
        let dim = checked_power_dim(d, self.copies)?;
        let mut out = vec![Rational64::zero(); dim];
        for (idx, e) in out.iter_mut().enumerate() {
            let mut x = idx;
            for _ in 0..self.copies {
                *e += self.context.levels[x % d];
                x /= d;
            }
        }
        Ok(out)
    }

    pub fn matrix(&self) -> Result<CMat> {
        let spec: Vec<f64> = self.spectrum()?.iter().map(rational_to_f64).collect();
        Ok(diag_matrix(&spec))
    }
}

/// Decode a computational basis index into per-factor digits.
pub fn index_digits(mut idx: usize, d: usize, n: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    for pos in (0..n).rev() {
        digits[pos] = idx % d;
        idx /= d;
    }
    digits
}

pub fn digits_index(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &x| acc * d + x)
}

// ---------------------------------------------------------------- states

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

/// Positive semidefinite operator with trace in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SubnormalizedState {
    mat: CMat,
}

fn validate_operator(mat: &CMat) -> Result<f64> {
    if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
        return Err(Error::InvalidState(format!("matrix is {}x{}, expected square", mat.nrows(), mat.ncols())));
    }
    if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let herm = hermitian_deviation(mat);
    if herm > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
    }
    let min = min_eigenvalue(mat);
    if min < -PSD_TOL {
        return Err(Error::InvalidState(format!("not positive semidefinite (min eigenvalue {min:.3e})")));
    }
    Ok(trace(mat).re)
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let tr = validate_operator(&mat)?;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        Ok(DensityMatrix { mat })
    }

    /// Construct without validation; callers guarantee the invariants.
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        DensityMatrix { mat }
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        if p.iter().any(|&x| !(x >= -PSD_TOL) || !x.is_finite()) {
            return Err(Error::InvalidState("negative or non-finite probability".into()));
        }
        Self::new(diag_matrix(p))
    }

    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("state vector norm² {norm} differs from 1")));
        }
        Ok(DensityMatrix { mat: outer(psi) })
    }

    pub fn basis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::InvalidArgument(format!("basis index {i} out of range for dimension {d}")));
        }
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        Self::diagonal(&p)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix { mat: diag_matrix(&vec![1.0 / d as f64; d]) }
    }

    /// |+⟩⟨+| on a qubit.
    pub fn plus() -> Self {
        DensityMatrix { mat: CMat::from_element(2, 2, c(0.5)) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.mat, 1e-14)
    }

    pub fn trace_distance_l1(&self, other: &DensityMatrix) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(trace_norm(&(&self.mat - &other.mat)))
    }
}

impl SubnormalizedState {
    pub fn new(mat: CMat) -> Result<Self> {
        let tr = validate_operator(&mat)?;
        if !(tr > 0.0 && tr <= 1.0 + TRACE_TOL) {
            return Err(Error::InvalidState(format!("trace {tr} outside (0,1]")));
        }
        Ok(SubnormalizedState { mat })
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        Self::new(diag_matrix(p))
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }
}

impl From<DensityMatrix> for SubnormalizedState {
    fn from(d: DensityMatrix) -> Self {
        SubnormalizedState { mat: d.mat }
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn thermal_state(ctx: &ThermalContext) -> DensityMatrix {
    DensityMatrix::from_trusted(diag_matrix(&ctx.gibbs_weights()))
}

/// τ^{⊗n} as its diagonal in the computational basis.
pub fn thermal_diagonal(ctx: &ThermalContext, n: usize) -> Result<Vec<f64>> {
    let w = ctx.gibbs_weights();
    let d = ctx.dim();
    let dim = checked_power_dim(d, n)?;
    Ok((0..dim)
        .map(|idx| index_digits(idx, d, n).iter().map(|&x| w[x]).product())
        .collect())
}

// ---------------------------------------------------------------- entropies

/// Tr[a ln a] − Tr[a ln b] for PSD a, b with the support check.
fn relative_entropy_terms(a: &CMat, b: &CMat) -> Result<f64> {
    check_dims(a.nrows(), b.nrows())?;
    if is_diagonal(a, 0.0) && is_diagonal(b, 0.0) {
        let mut acc = 0.0;
        let mut outside = 0.0;
        for i in 0..a.nrows() {
            let p = a[(i, i)].re;
            let q = b[(i, i)].re;
            if q <= KERNEL_TOL {
                outside += p.max(0.0);
                continue;
            }
            if p > KERNEL_TOL {
                acc += p * (p.ln() - q.ln());
            }
        }
        if outside >= SUPPORT_TOL {
            return Err(Error::SupportViolation { mass: outside });
        }
        return Ok(acc);
    }
    let (la, _) = eigh(a);
    let (lb, vb) = eigh(b);
    let mut outside = 0.0;
    let mut cross = 0.0;
    for (j, &mu) in lb.iter().enumerate() {
        let v = vb.column(j);
        let w = (v.adjoint() * a * v)[(0, 0)].re;
        if mu <= KERNEL_TOL {
            outside += w.max(0.0);
        } else {
            cross += w * mu.ln();
        }
    }
    if outside >= SUPPORT_TOL {
        return Err(Error::SupportViolation { mass: outside });
    }
    let self_term: f64 = la.iter().filter(|&&x| x > KERNEL_TOL).map(|&x| x * x.ln()).sum();
    Ok(self_term - cross)
}

/// Umegaki relative entropy D(ρ‖σ) in nats.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    relative_entropy_terms(&rho.mat, &sigma.mat).map(|v| v.max(0.0))
}

/// Relative entropy of two probability vectors in nats.
pub fn classical_relative_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let mut acc = 0.0;
    let mut outside = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if b <= 0.0 {
            outside += a.max(0.0);
        } else if a > 0.0 {
            acc += a * (a.ln() - b.ln());
        }
    }
    if outside >= SUPPORT_TOL {
        return Err(Error::SupportViolation { mass: outside });
    }
    Ok(acc.max(0.0))
}

/// Lindblad extension D_L(ρ‖σ) = Tr[ρ ln ρ − ρ ln σ] + Tr σ − Tr ρ.
pub fn lindblad_relative_entropy(rho: &SubnormalizedState, sigma: &SubnormalizedState) -> Result<f64> {
    Ok(relative_entropy_terms(&rho.mat, &sigma.mat)? + sigma.trace() - rho.trace())
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    let vals = if rho.is_diagonal() { rho.diagonal_entries() } else { eigh(&rho.mat).0 };
    -vals.iter().filter(|&&x| x > KERNEL_TOL).map(|&x| x * x.ln()).sum::<f64>()
}

/// ⟨ψ|ρ|ψ⟩, the squared-overlap fidelity with a pure target.
pub fn fidelity_to_pure(rho: &DensityMatrix, psi: &[Complex64]) -> Result<f64> {
    check_dims(rho.dim(), psi.len())?;
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > TRACE_TOL {
        return Err(Error::InvalidArgument(format!("target vector norm² {norm} differs from 1")));
    }
    let mut acc = Complex64::zero();
    for i in 0..psi.len() {
        for j in 0..psi.len() {
            acc += psi[i].conj() * rho.mat[(i, j)] * psi[j];
        }
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

pub fn tensor_power(rho: &DensityMatrix, n: usize) -> Result<DensityMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power needs n ≥ 1".into()));
    }
    checked_power_dim(rho.dim(), n)?;
    let mut acc = rho.mat.clone();
    for _ in 1..n {
        acc = kron(&acc, &rho.mat);
    }
    Ok(DensityMatrix::from_trusted(acc))
}

pub fn tensor_product(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    let dim = (a.dim() as u128) * (b.dim() as u128);
    if dim > dim_cap() as u128 {
        return Err(Error::DimensionCap { dim, cap: dim_cap() });
    }
    Ok(DensityMatrix::from_trusted(kron(&a.mat, &b.mat)))
}

/// Partial trace of an operator on ⊗ dims, keeping the listed subsystems in order.
pub fn partial_trace_matrix(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    check_dims(total, m.nrows())?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidArgument(format!("invalid keep set {keep:?} for {} subsystems", dims.len())));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let kdims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&i| dims[i]).collect();
    let kdim: usize = kdims.iter().product();
    let tdim: usize = tdims.iter().product();
    let compose = |kd: &[usize], td: &[usize]| -> usize {
        let mut digits = vec![0; dims.len()];
        for (slot, &i) in kept.iter().enumerate() {
            digits[i] = kd[slot];
        }
        for (slot, &i) in traced.iter().enumerate() {
            digits[i] = td[slot];
        }
        digits.iter().zip(dims).fold(0, |acc, (&x, &dd)| acc * dd + x)
    };
    let split = |mut idx: usize, ds: &[usize]| -> Vec<usize> {
        let mut out = vec![0; ds.len()];
        for pos in (0..ds.len()).rev() {
            out[pos] = idx % ds[pos];
            idx /= ds[pos];
        }
        out
    };
    let mut out = CMat::zeros(kdim, kdim);
    for t in 0..tdim {
        let td = split(t, &tdims);
        let full: Vec<usize> = (0..kdim).map(|k| compose(&split(k, &kdims), &td)).collect();
        for i in 0..kdim {
            for j in 0..kdim {
                out[(i, j)] += m[(full[i], full[j])];
            }
        }
    }
    Ok(out)
}

pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_trusted(partial_trace_matrix(&rho.mat, dims, keep)?))
}

// ---------------------------------------------------------------- serialization

/// `{dim, re, im}` matrix encoding used for state files and golden outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let n = m.nrows();
        MatrixJson {
            dim: n,
            re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.dim;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !shape_ok(&self.re) || (!self.im.is_empty() && !shape_ok(&self.im)) {
            return Err(Error::Parse(format!("matrix rows do not match dim {n}")));
        }
        Ok(CMat::from_fn(n, n, |i, j| {
            Complex64::new(self.re[i][j], if self.im.is_empty() { 0.0 } else { self.im[i][j] })
        }))
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.to_matrix()?)
    }
}

// ---------------------------------------------------------------- random states

/// Ginibre-ensemble mixed state G G† / Tr.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let m = &g * g.adjoint();
    let tr = trace(&m).re;
    DensityMatrix::from_trusted(m / c(tr))
}

/// Haar-random unit vector from normalized complex Gaussians.
pub fn random_pure_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}
