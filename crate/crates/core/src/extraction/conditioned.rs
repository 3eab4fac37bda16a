//! Measurement-conditioned channels: an incoherent measurement on A selects a
//! Gibbs-preserving branch acting on B.

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pinching::ProjectorFamily;
use crate::qmat::{c, diag_matrix, max_abs, rational_to_f64, CMat, ThermalContext};

const INCOHERENCE_TOL: f64 = 1e-10;
const GIBBS_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Branch {
    pub kraus: Vec<CMat>,
}

impl Branch {
    pub fn identity(dim: usize) -> Self {
        Branch { kraus: vec![CMat::identity(dim, dim)] }
    }

    /// Thermal operation from an energy-conserving unitary on B ⊗ E with E in the state `env`.
    pub fn from_unitary(u: &CMat, env: &[f64], dim_b: usize) -> Result<Self> {
        let de = env.len();
        if u.nrows() != dim_b * de {
            return Err(Error::DimensionMismatch { expected: dim_b * de, found: u.nrows() });
        }
        let mut kraus = Vec::new();
        for i in 0..de {
            for j in 0..de {
                if env[j] <= 0.0 {
                    continue;
                }
                let w = env[j].sqrt();
                let k = CMat::from_fn(dim_b, dim_b, |a, b| u[(a * de + i, b * de + j)] * w);
                if max_abs(&k) > 0.0 {
                    kraus.push(k);
                }
            }
        }
        Ok(Branch { kraus })
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        self.kraus.iter().fold(CMat::zeros(x.nrows(), x.ncols()), |acc, k| acc + k * x * k.adjoint())
    }

    pub fn trace_deviation(&self) -> f64 {
        let d = self.kraus.first().map_or(0, |k| k.ncols());
        let sum = self.kraus.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        max_abs(&(sum - CMat::identity(d, d)))
    }
}

#[derive(Debug, Clone)]
pub struct ConditionedProtocol {
    pub measurement: ProjectorFamily,
    pub branches: Vec<Branch>,
    pub energies_a: Vec<Rational64>,
    pub energies_b: Vec<Rational64>,
    pub beta: f64,
}

impl ConditionedProtocol {
    /// A holds `copies_a` copies and B holds `copies_b` copies of the system in `ctx`.
    pub fn new(ctx: &ThermalContext, copies_a: usize, copies_b: usize, measurement: ProjectorFamily, branches: Vec<Branch>) -> Result<Self> {
        let energies_a = ctx.hamiltonian(copies_a).spectrum()?;
        let energies_b = ctx.hamiltonian(copies_b).spectrum()?;
        if measurement.dim() != energies_a.len() {
            return Err(Error::DimensionMismatch { expected: energies_a.len(), found: measurement.dim() });
        }
        if branches.len() != measurement.len() {
            return Err(Error::InvalidArgument(format!(
                "{} measurement outcomes but {} branches",
                measurement.len(),
                branches.len()
            )));
        }
        Ok(ConditionedProtocol { measurement, branches, energies_a, energies_b, beta: ctx.beta() })
    }

    fn gibbs(&self, energies: &[Rational64]) -> Vec<f64> {
        let w: Vec<f64> = energies.iter().map(|e| (-self.beta * rational_to_f64(e)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Σ_a E_a(Tr_A[(M_a ⊗ I) X]) for X on A ⊗ B.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        let da = self.energies_a.len();
        let db = self.energies_b.len();
        if x.nrows() != da * db {
            return Err(Error::DimensionMismatch { expected: da * db, found: x.nrows() });
        }
        let mut out = CMat::zeros(db, db);
        for (a, branch) in self.branches.iter().enumerate() {
            let m = self.measurement.projector(a);
            let mut reduced = CMat::zeros(db, db);
            for i in 0..da {
                for j in 0..da {
                    if m[(j, i)].norm() == 0.0 {
                        continue;
                    }
                    for p in 0..db {
                        for q in 0..db {
                            reduced[(p, q)] += m[(j, i)] * x[(i * db + p, j * db + q)];
                        }
                    }
                }
            }
            out += branch.apply(&reduced);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionedReport {
    pub incoherence: Vec<f64>,
    pub branch_gibbs: Vec<f64>,
    pub branch_trace: Vec<f64>,
    pub composite_gibbs: f64,
    pub violations: Vec<String>,
}

impl ConditionedReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_conditioned_protocol(cp: &ConditionedProtocol) -> Result<ConditionedReport> {
    let ea: Vec<f64> = cp.energies_a.iter().map(rational_to_f64).collect();
    let tau_a = diag_matrix(&cp.gibbs(&cp.energies_a));
    let tau_b = diag_matrix(&cp.gibbs(&cp.energies_b));
    let mut violations = Vec::new();
    let mut incoherence = Vec::new();
    for (a, m) in cp.measurement.projectors().iter().enumerate() {
        let mut dev = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if cp.energies_a[i] != cp.energies_a[j] {
                    dev = dev.max(m[(i, j)].norm());
                }
            }
        }
        // commutator with the A Hamiltonian, entrywise
        let comm = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| (m[(i, j)] * (ea[j] - ea[i])).norm())
            .fold(0.0, f64::max);
        let dev = dev.max(comm);
        if dev > INCOHERENCE_TOL {
            violations.push(format!("measurement element {a} is not energy-incoherent (deviation {dev:.3e})"));
        }
        incoherence.push(dev);
    }
    let mut branch_gibbs = Vec::new();
    let mut branch_trace = Vec::new();
    for (a, b) in cp.branches.iter().enumerate() {
        let g = max_abs(&(b.apply(&tau_b) - &tau_b));
        let t = b.trace_deviation();
        if g > GIBBS_TOL {
            violations.push(format!("branch {a} does not preserve the Gibbs state (deviation {g:.3e})"));
        }
        if t > GIBBS_TOL {
            violations.push(format!("branch {a} is not trace preserving (deviation {t:.3e})"));
        }
        branch_gibbs.push(g);
        branch_trace.push(t);
    }
    let joint = crate::qmat::kron(&tau_a, &tau_b);
    let composite = max_abs(&(cp.apply(&joint)? - &tau_b));
    if composite > GIBBS_TOL {
        violations.push(format!("composite channel does not preserve the Gibbs state (deviation {composite:.3e})"));
    }
    Ok(ConditionedReport { incoherence, branch_gibbs, branch_trace, composite_gibbs: composite, violations })
}

/// Learning + execution at one measured copy and one processed copy: the
/// computational-basis outcome on A decides whether B is swapped with a
/// thermal bath copy or left alone.
pub fn learning_execution_composite(ctx: &ThermalContext) -> Result<ConditionedProtocol> {
    let d = ctx.dim();
    let measurement = ProjectorFamily::computational((0..d).collect())?;
    let tau = ctx.gibbs_weights();
    let mut swap = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            swap[(j * d + i, i * d + j)] = c(1.0);
        }
    }
    let thermalize = Branch::from_unitary(&swap, &tau, d)?;
    let branches = (0..d).map(|a| if a == 0 { Branch::identity(d) } else { thermalize.clone() }).collect();
    ConditionedProtocol::new(ctx, 1, 1, measurement, branches)
}
