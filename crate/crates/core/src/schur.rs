//! Schur-Weyl decomposition of (C^d)^{⊗n}.
//!
//! Columns of the change of basis are ordered by diagram (descending
//! lexicographic), then multiplicity copy, then weight vector. Weights are
//! count vectors in descending lexicographic order, so for qubits the energy
//! within a copy increases along the columns.
//!
//! The reference copy of each Weyl module is the image of the Young symmetrizer
//! of the row-reading tableau (row symmetrization followed by column
//! antisymmetrization), orthonormalized weight space by weight space with the
//! first nonzero amplitude made positive. The remaining copies are images of the
//! reference copy under position permutations, orthonormalized with a single
//! coefficient matrix, so every copy carries the same GL(d) action.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmat::{c, checked_power_dim, digits_index, index_digits, CMat, ThermalContext};

const GS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct YoungDiagram {
    rows: Vec<usize>,
}

impl YoungDiagram {
    pub fn new(rows: Vec<usize>) -> Result<Self> {
        if rows.contains(&0) {
            return Err(Error::InvalidArgument("Young diagram rows must be positive".into()));
        }
        if rows.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!("rows {rows:?} are not non-increasing")));
        }
        Ok(YoungDiagram { rows })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.iter().sum()
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    /// Column lengths (conjugate partition).
    pub fn columns(&self) -> Vec<usize> {
        let w = self.rows.first().copied().unwrap_or(0);
        (0..w).map(|j| self.rows.iter().filter(|&&r| r > j).count()).collect()
    }

    pub fn hook_lengths(&self) -> Vec<usize> {
        let cols = self.columns();
        let mut hooks = Vec::with_capacity(self.n());
        for (i, &r) in self.rows.iter().enumerate() {
            for j in 0..r {
                hooks.push((r - j - 1) + (cols[j] - i - 1) + 1);
            }
        }
        hooks
    }
}

impl std::fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.rows.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Partitions of `n` with at most `d` rows, descending lexicographic order.
pub fn enumerate_young_diagrams(n: usize, d: usize) -> Vec<YoungDiagram> {
    fn rec(remaining: usize, max_part: usize, depth_left: usize, cur: &mut Vec<usize>, out: &mut Vec<YoungDiagram>) {
        if remaining == 0 {
            out.push(YoungDiagram { rows: cur.clone() });
            return;
        }
        if depth_left == 0 {
            return;
        }
        for part in (1..=max_part.min(remaining)).rev() {
            cur.push(part);
            rec(remaining - part, part, depth_left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 || d == 0 {
        return out;
    }
    rec(n, n, d, &mut Vec::new(), &mut out);
    out
}

/// (n_λ, m_λ): Weyl dimension of the GL(d) irrep and hook-length dimension of the S_n irrep.
pub fn irrep_dimensions(lambda: &YoungDiagram, d: usize) -> Result<(u128, u128)> {
    if lambda.depth() > d {
        return Err(Error::InvalidArgument(format!("diagram {lambda} deeper than d={d}")));
    }
    let mut lam = lambda.rows.clone();
    lam.resize(d, 0);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..d {
        for j in i + 1..d {
            num *= BigUint::from((lam[i] + j) - (lam[j] + i));
            den *= BigUint::from(j - i);
        }
    }
    let weyl = num / den;
    let mut fact = BigUint::one();
    for k in 2..=lambda.n() {
        fact *= BigUint::from(k);
    }
    let hooks = lambda.hook_lengths().into_iter().fold(BigUint::one(), |acc, h| acc * BigUint::from(h));
    let sym = fact / hooks;
    let conv = |b: BigUint| b.to_u128().ok_or_else(|| Error::Numerical("irrep dimension overflows u128".into()));
    Ok((conv(weyl)?, conv(sym)?))
}

/// Number of semistandard tableaux of shape λ and content μ.
pub fn kostka_number(lambda: &[usize], mu: &[usize]) -> u64 {
    fn rec(lam: &[usize], mu: &[usize]) -> u64 {
        let total: usize = lam.iter().sum();
        match mu.split_last() {
            None => u64::from(total == 0),
            Some((&last, rest)) => {
                if total != rest.iter().sum::<usize>() + last {
                    return 0;
                }
                let mut acc = 0;
                let mut nu = lam.to_vec();
                strips(lam, 0, last, &mut nu, &mut |nu| acc += rec(&trim(nu), rest));
                acc
            }
        }
    }
    fn trim(v: &[usize]) -> Vec<usize> {
        let mut out = v.to_vec();
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }
    fn strips(lam: &[usize], i: usize, left: usize, nu: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i == lam.len() {
            if left == 0 {
                f(nu);
            }
            return;
        }
        let lower = lam.get(i + 1).copied().unwrap_or(0);
        let max_take = (lam[i] - lower).min(left);
        for take in 0..=max_take {
            nu[i] = lam[i] - take;
            strips(lam, i + 1, left - take, nu, f);
        }
        nu[i] = lam[i];
    }
    rec(lambda, mu)
}

// ---------------------------------------------------------------- permutations

/// Permutation of tensor positions; `images[i]` is where position `i` is sent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &x in &images {
            if x >= images.len() || seen[x] {
                return Err(Error::InvalidArgument(format!("{images:?} is not a permutation")));
            }
            seen[x] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { images: (0..n).collect() }
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(a, b);
        Permutation { images }
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Acts on a string: the letter at position i moves to position π(i).
    pub fn apply_digits(&self, x: &[usize]) -> Vec<usize> {
        let mut y = vec![0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            y[self.images[i]] = xi;
        }
        y
    }
}

/// Image index of every computational basis state under V_π.
pub fn permuted_indices(pi: &Permutation, d: usize) -> Result<Vec<usize>> {
    let n = pi.len();
    let dim = checked_power_dim(d, n)?;
    Ok((0..dim).map(|idx| digits_index(&pi.apply_digits(&index_digits(idx, d, n)), d)).collect())
}

/// Unitary V_π on (C^d)^{⊗n}.
pub fn permutation_operator(pi: &Permutation, n: usize, d: usize) -> Result<CMat> {
    if pi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
    }
    let map = permuted_indices(pi, d)?;
    let dim = map.len();
    let mut m = CMat::zeros(dim, dim);
    for (x, &y) in map.iter().enumerate() {
        m[(y, x)] = c(1.0);
    }
    Ok(m)
}

// ---------------------------------------------------------------- tableaux

/// Standard Young tableaux of shape λ (entries 0..n), sorted by row-reading word.
pub fn standard_tableaux(lambda: &YoungDiagram) -> Vec<Vec<Vec<usize>>> {
    fn rec(shape: &[usize], filled: &mut Vec<Vec<usize>>, next: usize, n: usize, out: &mut Vec<Vec<Vec<usize>>>) {
        if next == n {
            out.push(filled.clone());
            return;
        }
        for r in 0..shape.len() {
            let len = filled[r].len();
            if len < shape[r] && (r == 0 || filled[r - 1].len() > len) {
                filled[r].push(next);
                rec(shape, filled, next + 1, n, out);
                filled[r].pop();
            }
        }
    }
    let mut out = Vec::new();
    let mut filled = vec![Vec::new(); lambda.depth()];
    rec(&lambda.rows, &mut filled, 0, lambda.n(), &mut out);
    out.sort_by_key(|t| t.concat());
    out
}

fn row_reading_tableau(lambda: &YoungDiagram) -> Vec<Vec<usize>> {
    let mut next = 0;
    lambda
        .rows
        .iter()
        .map(|&r| {
            let row: Vec<usize> = (next..next + r).collect();
            next += r;
            row
        })
        .collect()
}

/// Permutation sending each cell's entry in `from` to the entry of the same cell in `to`.
fn tableau_permutation(from: &[Vec<usize>], to: &[Vec<usize>], n: usize) -> Permutation {
    let mut images = vec![0; n];
    for (rf, rt) in from.iter().zip(to) {
        for (&a, &b) in rf.iter().zip(rt) {
            images[a] = b;
        }
    }
    Permutation { images }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All permutations of `items` paired with their signs.
fn signed_permutations(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    fn rec(items: &mut Vec<usize>, k: usize, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == items.len() {
            out.push((items.clone(), sign));
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            rec(items, k + 1, if i == k { sign } else { -sign }, out);
            items.swap(k, i);
        }
    }
    let mut out = Vec::new();
    rec(&mut items.to_vec(), 0, 1.0, &mut out);
    out
}

/// Young symmetrizer of tableau `t` applied to the basis string `x`.
fn young_symmetrize(t: &[Vec<usize>], x: &[usize], d: usize, dim: usize) -> Vec<f64> {
    let n = x.len();
    // distinct rearrangements of the letters within each row
    let mut row_strings: Vec<Vec<usize>> = vec![x.to_vec()];
    for row in t {
        let mut letters: Vec<usize> = row.iter().map(|&p| x[p]).collect();
        letters.sort_unstable();
        let mut arrangements = Vec::new();
        loop {
            arrangements.push(letters.clone());
            if !next_permutation(&mut letters) {
                break;
            }
        }
        let mut next = Vec::with_capacity(row_strings.len() * arrangements.len());
        for s in &row_strings {
            for a in &arrangements {
                let mut y = s.clone();
                for (&p, &l) in row.iter().zip(a) {
                    y[p] = l;
                }
                next.push(y);
            }
        }
        row_strings = next;
    }
    let cols: Vec<Vec<usize>> = {
        let width = t.first().map_or(0, |r| r.len());
        (0..width).map(|j| t.iter().filter(|r| r.len() > j).map(|r| r[j]).collect()).collect()
    };
    let col_perms: Vec<Vec<(Vec<usize>, f64)>> = cols.iter().map(|col| signed_permutations(col)).collect();
    let mut out = vec![0.0; dim];
    for s in &row_strings {
        let mut partial: Vec<(Vec<usize>, f64)> = vec![(s.clone(), 1.0)];
        for (col, perms) in cols.iter().zip(&col_perms) {
            let mut next = Vec::with_capacity(partial.len() * perms.len());
            for (y, sign) in &partial {
                for (target, sg) in perms {
                    let mut z = y.clone();
                    for (&src, &dst) in col.iter().zip(target) {
                        z[dst] = y[src];
                    }
                    next.push((z, sign * sg));
                }
            }
            partial = next;
        }
        for (z, sign) in partial {
            debug_assert_eq!(z.len(), n);
            out[digits_index(&z, d)] += sign;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_sign(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    let first = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
    let s = if first < 0.0 { -1.0 } else { 1.0 } / norm;
    for x in v.iter_mut() {
        *x *= s;
    }
}

/// Count vectors of length d summing to n, descending lexicographic order.
pub fn weights_desc(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(left - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------- basis

#[derive(Debug, Clone)]
pub struct SchurBlock {
    pub diagram: YoungDiagram,
    pub weyl_dim: usize,
    pub sym_dim: usize,
    /// Reference copy of the Weyl module, real amplitudes in the computational basis.
    pub weyl_basis: Vec<Vec<f64>>,
    /// Count vector (type) supporting each reference vector.
    pub weights: Vec<Vec<usize>>,
    /// First column of this block in the change of basis.
    pub offset: usize,
}

impl SchurBlock {
    pub fn energy_labels(&self, ctx: &ThermalContext) -> Vec<Rational64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(ctx.levels()).fold(Rational64::zero(), |acc, (&k, e)| acc + e * (k as i64)))
            .collect()
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weyl_dim * self.sym_dim
    }

    /// Column of weight vector `a` in multiplicity copy `s`.
    pub fn column(&self, s: usize, a: usize) -> usize {
        self.offset + s * self.weyl_dim + a
    }
}

#[derive(Debug, Clone)]
pub struct SchurBasis {
    pub n: usize,
    pub d: usize,
    pub blocks: Vec<SchurBlock>,
    pub change_of_basis: CMat,
}

pub fn build_schur_basis(n: usize, d: usize) -> Result<SchurBasis> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let dim = checked_power_dim(d, n)?;
    let weights = weights_desc(n, d);
    let mut blocks = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for diagram in enumerate_young_diagrams(n, d) {
        let (weyl, sym) = irrep_dimensions(&diagram, d)?;
        let (weyl_dim, sym_dim) = (weyl as usize, sym as usize);
        let t0 = row_reading_tableau(&diagram);
        let mut reference = Vec::with_capacity(weyl_dim);
        let mut ref_weights = Vec::with_capacity(weyl_dim);
        for mu in &weights {
            let target = kostka_number(diagram.rows(), mu) as usize;
            if target == 0 {
                continue;
            }
            let mut found: Vec<Vec<f64>> = Vec::with_capacity(target);
            for idx in 0..dim {
                if found.len() == target {
                    break;
                }
                let x = index_digits(idx, d, n);
                let mut counts = vec![0; d];
                for &l in &x {
                    counts[l] += 1;
                }
                if &counts != mu {
                    continue;
                }
                let mut v = young_symmetrize(&t0, &x, d, dim);
                let scale = dot(&v, &v).sqrt();
                if scale < GS_TOL {
                    continue;
                }
                v.iter_mut().for_each(|z| *z /= scale);
                for _ in 0..2 {
                    for u in &found {
                        let p = dot(u, &v);
                        v.iter_mut().zip(u).for_each(|(z, w)| *z -= p * w);
                    }
                }
                if dot(&v, &v).sqrt() > GS_TOL {
                    normalize_sign(&mut v);
                    found.push(v);
                }
            }
            if found.len() != target {
                return Err(Error::Numerical(format!(
                    "weight space {mu:?} of {diagram}: found {} of {target} vectors",
                    found.len()
                )));
            }
            for v in found {
                reference.push(v);
                ref_weights.push(mu.clone());
            }
        }
        if reference.len() != weyl_dim {
            return Err(Error::Numerical(format!("Weyl module {diagram}: {} vectors, expected {weyl_dim}", reference.len())));
        }
        let copies = multiplicity_copies(&diagram, &t0, &reference[0], sym_dim, d)?;
        let offset = columns.len();
        for (perms, coeffs) in copies.iter() {
            for w in &reference {
                let mut v = vec![0.0; dim];
                for (pi, &cf) in perms.iter().zip(coeffs) {
                    for (idx, &amp) in w.iter().enumerate() {
                        if amp != 0.0 {
                            v[pi[idx]] += cf * amp;
                        }
                    }
                }
                columns.push(v);
            }
        }
        blocks.push(SchurBlock { diagram, weyl_dim, sym_dim, weyl_basis: reference, weights: ref_weights, offset });
    }
    if columns.len() != dim {
        return Err(Error::Numerical(format!("Schur basis has {} columns, expected {dim}", columns.len())));
    }
    let change_of_basis = DMatrix::from_fn(dim, dim, |i, j| Complex64::new(columns[j][i], 0.0));
    Ok(SchurBasis { n, d, blocks, change_of_basis })
}

type CopySpec = (Vec<Vec<usize>>, Vec<f64>);

/// Orthonormal multiplicity copies as linear combinations of permuted reference copies.
fn multiplicity_copies(
    diagram: &YoungDiagram,
    t0: &[Vec<usize>],
    w0: &[f64],
    sym_dim: usize,
    d: usize,
) -> Result<Vec<CopySpec>> {
    let n = diagram.n();
    let mut candidates: Vec<Permutation> =
        standard_tableaux(diagram).iter().map(|t| tableau_permutation(t0, t, n)).collect();
    let mut chosen: Vec<Vec<usize>> = Vec::new();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    let consider = |pi: &Permutation,
                        chosen: &mut Vec<Vec<usize>>,
                        ortho: &mut Vec<Vec<f64>>,
                        coeffs: &mut Vec<Vec<f64>>|
     -> Result<()> {
        let map = permuted_indices(pi, d)?;
        let mut u = vec![0.0; w0.len()];
        for (idx, &amp) in w0.iter().enumerate() {
            u[map[idx]] += amp;
        }
        let mut r = u.clone();
        let mut cf = vec![0.0; chosen.len() + 1];
        cf[chosen.len()] = 1.0;
        for _ in 0..2 {
            for (e, ce) in ortho.iter().zip(coeffs.iter()) {
                let p = dot(e, &r);
                r.iter_mut().zip(e).for_each(|(z, w)| *z -= p * w);
                cf.iter_mut().zip(ce).for_each(|(z, w)| *z -= p * w);
            }
        }
        let norm = dot(&r, &r).sqrt();
        if norm > GS_TOL {
            r.iter_mut().for_each(|z| *z /= norm);
            cf.iter_mut().for_each(|z| *z /= norm);
            for prev in coeffs.iter_mut() {
                prev.push(0.0);
            }
            chosen.push(map);
            ortho.push(r);
            coeffs.push(cf);
        }
        Ok(())
    };
    for pi in candidates.drain(..) {
        if chosen.len() == sym_dim {
            break;
        }
        consider(&pi, &mut chosen, &mut ortho, &mut coeffs)?;
    }
    if chosen.len() < sym_dim {
        // standard tableaux can be linearly dependent for n ≥ 5; fall back to all permutations
        let mut images: Vec<usize> = (0..n).collect();
        loop {
            if chosen.len() == sym_dim {
                break;
            }
            consider(&Permutation { images: images.clone() }, &mut chosen, &mut ortho, &mut coeffs)?;
            if !next_permutation(&mut images) {
                break;
            }
        }
    }
    if chosen.len() != sym_dim {
        return Err(Error::Numerical(format!("found {} copies of {diagram}, expected {sym_dim}", chosen.len())));
    }
    Ok(coeffs.into_iter().map(|cf| (chosen.clone(), cf)).collect())
}

impl SchurBasis {
    pub fn dim(&self) -> usize {
        self.change_of_basis.nrows()
    }

    /// Column amplitudes of a Schur basis vector.
    pub fn vector(&self, column: usize) -> Vec<f64> {
        self.change_of_basis.column(column).iter().map(|z| z.re).collect()
    }

    /// Exact energy of every column of the change of basis.
    pub fn column_energies(&self, ctx: &ThermalContext) -> Vec<Rational64> {
        let mut out = vec![Rational64::zero(); self.dim()];
        for b in &self.blocks {
            let labels = b.energy_labels(ctx);
            for s in 0..b.sym_dim {
                for (a, e) in labels.iter().enumerate() {
                    out[b.column(s, a)] = *e;
                }
            }
        }
        out
    }

    /// S† A S.
    pub fn to_schur(&self, a: &CMat) -> CMat {
        self.change_of_basis.adjoint() * a * &self.change_of_basis
    }
}

/// Largest deviation of A from invariance under adjacent transpositions.
pub fn permutation_invariance_deviation(a: &CMat, n: usize, d: usize) -> Result<f64> {
    let mut dev = 0.0f64;
    for k in 0..n.saturating_sub(1) {
        let map = permuted_indices(&Permutation::transposition(n, k, k + 1), d)?;
        for i in 0..map.len() {
            for j in 0..map.len() {
                dev = dev.max((a[(map[i], map[j])] - a[(i, j)]).norm());
            }
        }
    }
    Ok(dev)
}

/// Blocks A_λ of a permutation-invariant operator, A = S(⊕ A_λ ⊗ I_{m_λ})S†.
pub fn decompose_permutation_invariant(a: &CMat, basis: &SchurBasis) -> Result<Vec<(YoungDiagram, CMat)>> {
    if a.nrows() != basis.dim() || a.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: a.nrows() });
    }
    let dev = permutation_invariance_deviation(a, basis.n, basis.d)?;
    if dev > 1e-9 {
        return Err(Error::NotPermutationInvariant { deviation: dev });
    }
    let b = basis.to_schur(a);
    let mut reassembled = CMat::zeros(b.nrows(), b.ncols());
    let mut out = Vec::with_capacity(basis.blocks.len());
    for blk in &basis.blocks {
        let nl = blk.weyl_dim;
        let al = b.view((blk.offset, blk.offset), (nl, nl)).into_owned();
        for s in 0..blk.sym_dim {
            let o = blk.offset + s * nl;
            reassembled.view_mut((o, o), (nl, nl)).copy_from(&al);
        }
        out.push((blk.diagram.clone(), al));
    }
    let err = crate::qmat::max_abs(&(&reassembled - &b));
    if err > 1e-9 * crate::qmat::max_abs(a).max(1.0) {
        return Err(Error::Numerical(format!("block reassembly deviates by {err:.3e}")));
    }
    Ok(out)
}
