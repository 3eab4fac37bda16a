//! Work-extraction protocols: type-class plans, state-aware and universal
//! pipelines, measure-and-prepare, tomography-based extraction, and the
//! density-matrix oracle used to validate the distribution-level simulation.

mod aware;
mod conditioned;
mod mnp;
mod oracle;
mod plan;
mod universal;

pub use aware::{energy_block_letters, state_aware_protocol, tomographic_universal_protocol, AwareSettings, TomographyParams};
pub use conditioned::{learning_execution_composite, verify_conditioned_protocol, Branch, ConditionedProtocol, ConditionedReport};
pub use mnp::{assign_block, measure_and_prepare_protocol, BatteryLevel, BatterySpec, BlockPartition, MnpSummary};
pub use oracle::{build_extraction_unitary, simulate_plan_density, EnergyPermutation, OracleOutcome};
pub use plan::{
    build_classical_plan, choose_shift, classical_protocol, run_classical_plan, ExtractionPlan, PlanMode, PlanSettings, ShiftSearch,
};
pub use universal::{schur_column_energies, ProtocolDescription, SchurPinchedSource, UniversalParams, UniversalProtocol};

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmat::{rational_to_f64, ThermalContext};

/// Letters of a classical source: exact energies with their thermal weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alphabet {
    #[serde(serialize_with = "ser_rationals")]
    pub energies: Vec<Rational64>,
    pub thermal: Vec<f64>,
    pub beta: f64,
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&r.to_string())?;
    }
    seq.end()
}

impl Alphabet {
    pub fn from_context(ctx: &ThermalContext) -> Self {
        Alphabet { energies: ctx.levels().to_vec(), thermal: ctx.gibbs_weights(), beta: ctx.beta() }
    }

    /// Letters of k-copy energy eigenvectors; thermal weight e^{−βE}/Z^k.
    pub fn from_energies(energies: Vec<Rational64>, ctx: &ThermalContext, k: usize) -> Self {
        let log_z = ctx.log_partition() * k as f64;
        let thermal = energies.iter().map(|e| (-ctx.beta() * rational_to_f64(e) - log_z).exp()).collect();
        Alphabet { energies, thermal, beta: ctx.beta() }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies_f64(&self) -> Vec<f64> {
        self.energies.iter().map(rational_to_f64).collect()
    }

    pub(crate) fn check_distribution(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: p.len() });
        }
        let s: f64 = p.iter().sum();
        if p.iter().any(|&x| !(x >= -1e-12)) || (s - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("not a probability vector (sum {s})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct CopiesConsumed {
    pub pinched: u64,
    pub measured: u64,
    pub discarded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolOutcome {
    pub mode: String,
    pub n: u64,
    pub k: usize,
    pub m: u64,
    pub l: u64,
    pub shift: Vec<i64>,
    /// Exact W = Σ h(i) E_i.
    pub work_exact: String,
    pub extracted_work: f64,
    pub rate_nats: f64,
    pub target_rate: f64,
    /// Per-copy D of the dephased/pinched source the classical stage sees.
    pub pinched_rate_nats: f64,
    pub xi: f64,
    pub xi_is_bound: bool,
    pub fidelity: f64,
    pub success_prob: f64,
    pub copies: CopiesConsumed,
    pub converse_holds: bool,
    pub description_hash: Option<String>,
    pub estimate: Option<crate::estimation::EstimatorReport>,
    pub sample_cost: Option<f64>,
    pub seed: Option<u64>,
}

pub(crate) const CONVERSE_TOL: f64 = 1e-8;
