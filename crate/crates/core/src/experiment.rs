//! Experiment configuration, single-run dispatch, seeded sweeps and the Haar check.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{trial_rng, SamplingMode};
use crate::extraction::{
    assign_block, classical_protocol, measure_and_prepare_protocol, state_aware_protocol, tomographic_universal_protocol, Alphabet,
    AwareSettings, PlanSettings, ProtocolOutcome, SchurPinchedSource, TomographyParams, UniversalParams, UniversalProtocol,
};
use crate::qmat::{c, random_pure_vector, thermal_state, DensityMatrix, MatrixJson, ThermalContext};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classical,
    Aware,
    Universal,
    Mnp,
    Tomo,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
            .map_err(|_| Error::Parse(format!("unknown mode {s:?} (classical, aware, universal, mnp, tomo)")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Aware => "aware",
            Mode::Universal => "universal",
            Mode::Mnp => "mnp",
            Mode::Tomo => "tomo",
        }
    }
}

/// Preset name, `diag:p1,p2,…`, a path to a matrix JSON file, or an inline matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Diagonal { diagonal: Vec<f64> },
    Matrix { matrix: MatrixJson },
}

impl StateSpec {
    pub fn resolve(&self, ctx: &ThermalContext) -> Result<DensityMatrix> {
        let d = ctx.dim();
        let rho = match self {
            StateSpec::Diagonal { diagonal } => DensityMatrix::diagonal(diagonal)?,
            StateSpec::Matrix { matrix } => matrix.to_density()?,
            StateSpec::Named(name) => match name.as_str() {
                "ground" => DensityMatrix::basis(d, 0)?,
                "excited" => DensityMatrix::basis(d, d - 1)?,
                "thermal" => thermal_state(ctx),
                "mixed" => DensityMatrix::maximally_mixed(d),
                "plus" => {
                    if d < 2 {
                        return Err(Error::InvalidState("plus needs at least two levels".into()));
                    }
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    let mut psi = vec![c(0.0); d];
                    psi[0] = c(s);
                    psi[1] = c(s);
                    DensityMatrix::pure(&psi)?
                }
                other => {
                    if let Some(list) = other.strip_prefix("diag:") {
                        let p = list
                            .split(',')
                            .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad probability {x:?}"))))
                            .collect::<Result<Vec<_>>>()?;
                        DensityMatrix::diagonal(&p)?
                    } else if other.ends_with(".json") {
                        let text = std::fs::read_to_string(other).map_err(|e| Error::Parse(format!("{other}: {e}")))?;
                        let m: MatrixJson = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{other}: {e}")))?;
                        m.to_density()?
                    } else {
                        return Err(Error::Parse(format!(
                            "unknown state {other:?} (ground, excited, thermal, mixed, plus, diag:…, file.json)"
                        )));
                    }
                }
            },
        };
        if rho.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamOverrides {
    pub k: Option<usize>,
    pub m: Option<u64>,
    /// Bath size coefficient c in l = ⌈c · n^{3/2}⌉.
    pub c: Option<f64>,
    pub margin_factor: Option<f64>,
    pub radius_scale: Option<f64>,
    pub m_frac: Option<f64>,
    /// Grid resolution M for measure-and-prepare; default ⌈√n⌉.
    pub resolution: Option<u64>,
    /// Tomography error η.
    pub eta: Option<f64>,
    pub sampling: Option<SamplingMode>,
}

impl ParamOverrides {
    fn plan_settings(&self) -> PlanSettings {
        let mut s = PlanSettings::default();
        if let Some(c) = self.c {
            s.bath_coefficient = c;
        }
        s
    }

    pub fn universal_params(&self, n: u64, ctx: &ThermalContext) -> Result<UniversalParams> {
        let mode = self.sampling.unwrap_or(SamplingMode::Sampled);
        let mut p = match self.k {
            Some(k) => UniversalParams::with_k(n, k, ctx, mode)?,
            None => UniversalParams::schedule(n, ctx, mode)?,
        };
        if let Some(v) = self.c {
            p.bath_coefficient = v;
        }
        if let Some(v) = self.margin_factor {
            p.margin_factor = v;
        }
        if let Some(v) = self.radius_scale {
            p.radius_scale = v;
        }
        if let Some(v) = self.m_frac {
            p.m_frac = v;
        }
        match self.m {
            Some(m) => p.set_m(m, ctx)?,
            None => p.recompute(ctx)?,
        }
        Ok(p)
    }
}

/// Run one protocol on one (n, seed).
pub fn run_mode(mode: Mode, rho: &DensityMatrix, ctx: &ThermalContext, n: u64, seed: u64, params: &ParamOverrides) -> Result<ProtocolOutcome> {
    let settings = AwareSettings { plan: params.plan_settings() };
    let mut out = match mode {
        Mode::Classical => {
            // the classical protocol sees the energy-basis statistics
            let p = rho.diagonal_entries();
            let (_, out) = classical_protocol(&p, &Alphabet::from_context(ctx), n, &settings.plan)?;
            out
        }
        Mode::Aware => state_aware_protocol(rho, ctx, n, params.k.unwrap_or(1), &settings)?,
        Mode::Universal => {
            let up = params.universal_params(n, ctx)?;
            let source = if rho.is_diagonal() {
                SchurPinchedSource::from_diagonal(&rho.diagonal_entries(), ctx, up.k)?
            } else {
                SchurPinchedSource::from_state(rho, ctx, up.k)?
            };
            UniversalProtocol::synthesize(ctx, up, settings.plan.clone())?.execute(&source, seed)?
        }
        Mode::Mnp => {
            let p = rho.diagonal_entries();
            let m = params.resolution.unwrap_or_else(|| (n as f64).sqrt().ceil() as u64);
            // boundary inputs are rejected, not silently assigned
            assign_block(&p, m)?;
            measure_and_prepare_protocol(m, &Alphabet::from_context(ctx), n, &p)?.1
        }
        Mode::Tomo => {
            let tp = TomographyParams { eta: params.eta.unwrap_or(0.05), seed };
            tomographic_universal_protocol(rho, ctx, n, params.k.unwrap_or(1), &tp, &settings)?.0
        }
    };
    out.seed = Some(seed);
    Ok(out)
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub state: StateSpec,
    /// Comma separated exact levels, e.g. `0,1`.
    pub levels: String,
    pub beta: f64,
    pub n_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub output: Option<OutputPaths>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = self.context()?;
        self.state.resolve(&ctx)?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidArgument("n_grid must be non-empty with positive entries".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn context(&self) -> Result<ThermalContext> {
        ThermalContext::parse(&self.levels, self.beta)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mode: String,
    pub n: u64,
    pub k: usize,
    pub m: u64,
    pub l: u64,
    pub rate_nats: f64,
    pub target_nats: f64,
    pub xi: f64,
    pub fidelity: f64,
    pub success_prob: f64,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NSummary {
    pub n: u64,
    pub runs: usize,
    pub failures: usize,
    pub mean_rate: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    pub mean_fidelity: f64,
    pub min_fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub code_version: String,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<NSummary>,
}

pub const SWEEP_COLUMNS: [&str; 12] =
    ["mode", "n", "k", "m", "l", "rate_nats", "target_nats", "xi", "fidelity", "success_prob", "seed", "error"];

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ctx = cfg.context()?;
    let rho = cfg.state.resolve(&ctx)?;
    let jobs: Vec<(u64, u64)> = cfg.n_grid.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(n, seed)| match run_mode(cfg.mode, &rho, &ctx, n, seed, &cfg.params) {
            Ok(o) => SweepRow {
                mode: cfg.mode.name().into(),
                n,
                k: o.k,
                m: o.m,
                l: o.l,
                rate_nats: o.rate_nats,
                target_nats: o.target_rate,
                xi: o.xi,
                fidelity: o.fidelity,
                success_prob: o.success_prob,
                seed,
                error: None,
            },
            Err(e) => SweepRow {
                mode: cfg.mode.name().into(),
                n,
                k: 0,
                m: 0,
                l: 0,
                rate_nats: f64::NAN,
                target_nats: f64::NAN,
                xi: f64::NAN,
                fidelity: f64::NAN,
                success_prob: f64::NAN,
                seed,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut by_n: BTreeMap<u64, Vec<&SweepRow>> = BTreeMap::new();
    for r in &rows {
        by_n.entry(r.n).or_default().push(r);
    }
    let summary = by_n
        .into_iter()
        .map(|(n, rs)| {
            let ok: Vec<&&SweepRow> = rs.iter().filter(|r| r.error.is_none()).collect();
            let rates: Vec<f64> = ok.iter().map(|r| r.rate_nats).collect();
            let fids: Vec<f64> = ok.iter().map(|r| r.fidelity).collect();
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            NSummary {
                n,
                runs: rs.len(),
                failures: rs.len() - ok.len(),
                mean_rate: mean(&rates),
                min_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
                max_rate: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_fidelity: mean(&fids),
                min_fidelity: fids.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(SweepResult { config_hash: cfg.hash(), code_version: CODE_VERSION.into(), rows, summary })
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.12e}")
    }
}

impl SweepResult {
    /// CSV with a provenance comment line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.mode.clone(),
                r.n.to_string(),
                r.k.to_string(),
                r.m.to_string(),
                r.l.to_string(),
                fmt_f(r.rate_nats),
                fmt_f(r.target_nats),
                fmt_f(r.xi),
                fmt_f(r.fidelity),
                fmt_f(r.success_prob),
                r.seed.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(format!("# config_hash={} version={}\n{body}", self.config_hash, self.code_version))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

// ---------------------------------------------------------------- Haar average

#[derive(Debug, Clone, Serialize)]
pub struct HaarReport {
    pub n_qubits: usize,
    pub samples: usize,
    pub mean_energy: f64,
    /// Tr[H^{×n}] / d^n.
    pub target: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub pass: bool,
    /// β times the mean free energy; pure states have zero entropy.
    pub mean_beta_free_energy: f64,
}

pub const HAAR_SIGMAS: f64 = 3.0;

/// Haar-random pure states on n copies of `ctx`; compares the sampled mean energy
/// with Tr[H^{×n}]/d^n.
pub fn haar_experiment(ctx: &ThermalContext, n_qubits: usize, samples: usize, seed: u64) -> Result<HaarReport> {
    if n_qubits == 0 || n_qubits > 6 {
        return Err(Error::InvalidArgument(format!("haar experiment supports 1..=6 systems, got {n_qubits}")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let energies: Vec<f64> = ctx.hamiltonian(n_qubits).spectrum()?.iter().map(crate::qmat::rational_to_f64).collect();
    let dim = energies.len();
    let target = energies.iter().sum::<f64>() / dim as f64;
    let values: Vec<f64> = (0..samples)
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let psi = random_pure_vector(dim, &mut rng);
            psi.iter().zip(&energies).map(|(a, e)| a.norm_sqr() * e).sum()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = if samples > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64 } else { 0.0 };
    let se = (var / samples as f64).sqrt();
    let z = if se > 0.0 { (mean - target) / se } else { 0.0 };
    Ok(HaarReport {
        n_qubits,
        samples,
        mean_energy: mean,
        target,
        std_error: se,
        z_score: z,
        pass: z.abs() <= HAAR_SIGMAS,
        mean_beta_free_energy: ctx.beta() * mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: Mode, state: &str, grid: Vec<u64>, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            state: StateSpec::Named(state.into()),
            levels: "0,1".into(),
            beta: 1.0,
            n_grid: grid,
            seeds,
            params: ParamOverrides::default(),
            output: None,
        }
    }

    #[test]
    fn haar_examples() {
        let ctx = ThermalContext::qubit(1.0);
        let r = haar_experiment(&ctx, 3, 2000, 11).unwrap();
        assert_eq!(r.target, 1.5);
        assert!(r.pass, "z = {}", r.z_score);
        assert_eq!(haar_experiment(&ctx, 1, 10, 1).unwrap().target, 0.5);
        let one = haar_experiment(&ctx, 3, 1, 5).unwrap();
        assert_eq!(one.mean_energy, haar_experiment(&ctx, 3, 1, 5).unwrap().mean_energy);
        assert!((0.0..=3.0).contains(&one.mean_energy));
        assert!(haar_experiment(&ctx, 7, 10, 1).is_err());
    }

    #[test]
    fn thermal_sweep_is_trivial() {
        let r = run_sweep(&cfg(Mode::Classical, "thermal", vec![20, 40], vec![1, 2])).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows {
            assert_eq!(row.rate_nats, 0.0);
            assert!((row.fidelity - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let c = cfg(Mode::Universal, "ground", vec![200, 400], vec![3, 4, 5]);
        let a = run_sweep(&c).unwrap().to_csv().unwrap();
        let b = run_sweep(&c).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(&format!("# config_hash={}", c.hash())));
        // parallel rows equal serial execution
        let ctx = c.context().unwrap();
        let rho = c.state.resolve(&ctx).unwrap();
        let serial = run_mode(Mode::Universal, &rho, &ctx, 400, 5, &c.params).unwrap();
        let par = run_sweep(&c).unwrap();
        assert_eq!(par.rows[5].rate_nats, serial.rate_nats);
    }

    #[test]
    fn row_failures_are_recorded() {
        let mut c = cfg(Mode::Mnp, "diag:0.875,0.125", vec![16], vec![1]);
        c.params.resolution = Some(4);
        let r = run_sweep(&c).unwrap();
        assert!(r.rows[0].error.as_deref().unwrap().contains("boundary"));
        assert_eq!(r.summary[0].failures, 1);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let good = r#"{"mode":"classical","state":"ground","levels":"0,1","beta":1.0,"n_grid":[10],"seeds":[1]}"#;
        assert!(ExperimentConfig::from_json(good).is_ok());
        let bad = r#"{"mode":"classical","state":"ground","levels":"0,1","beta":1.0,"n_grid":[10],"seeds":[1],"extra":2}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let bad_state = r#"{"mode":"classical","state":"nope","levels":"0,1","beta":1.0,"n_grid":[10],"seeds":[1]}"#;
        assert!(ExperimentConfig::from_json(bad_state).is_err());
        let inline = r#"{"mode":"aware","state":{"diagonal":[0.7,0.3]},"levels":"0,1","beta":1.0,"n_grid":[10],"seeds":[1],"params":{"k":2}}"#;
        assert!(ExperimentConfig::from_json(inline).is_ok());
    }

    #[test]
    fn modes_run() {
        let ctx = ThermalContext::qubit(1.0);
        let rho = StateSpec::Named("plus".into()).resolve(&ctx).unwrap();
        for mode in [Mode::Classical, Mode::Aware, Mode::Universal, Mode::Mnp, Mode::Tomo] {
            let o = run_mode(mode, &rho, &ctx, 300, 1, &ParamOverrides::default()).unwrap();
            assert!(o.converse_holds || mode == Mode::Mnp, "{mode:?}");
            assert_eq!(o.seed, Some(1));
        }
        assert_eq!(Mode::parse("MNP").unwrap(), Mode::Mnp);
        assert!(Mode::parse("x").is_err());
    }
}
