//! The acceptance suite: twelve finite-n criteria with configurable tolerances.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{hoeffding_sample_size, sample_types_with, total_variation, trial_rng, SamplingMode, SamplingOracle};
use crate::experiment::{haar_experiment, run_mode, Mode, ParamOverrides};
use crate::extraction::{
    assign_block, build_classical_plan, classical_protocol, measure_and_prepare_protocol, run_classical_plan, simulate_plan_density,
    Alphabet, PlanSettings, SchurPinchedSource, UniversalParams, UniversalProtocol,
};
use crate::infdim::{renormalized_free_energy, schedule_success_curve, CutoffSchedule, InfiniteContext, TailState};
use crate::pinching::{pinching_inequality_check, schur_loss_bound, schur_pinching_for, schur_projector_bound};
use crate::qmat::{
    c, classical_relative_entropy, max_abs, outer, random_density, relative_entropy, tensor_power, thermal_diagonal, thermal_state,
    CMat, DensityMatrix, ThermalContext,
};
use crate::schur::{irrep_dimensions, YoungDiagram};
use crate::typeclass::ShiftFunction;

/// ln(1 + e^{−1}).
const QUBIT_LIMIT: f64 = 0.313_261_687_518_222_86;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub golden: f64,
    pub mixture: f64,
    pub eigenvalue: f64,
    pub loss: f64,
    pub converse: f64,
    pub xi_max_at_400: f64,
    pub deficit_max_at_400: f64,
    pub coverage_sigmas: f64,
    pub continuity: f64,
    pub qubit_constant: f64,
    pub gibbs: f64,
    pub success_min: f64,
    pub free_energy: f64,
    pub dual_path: f64,
    pub haar_sigmas: f64,
    pub oracle: f64,
    /// Multiplier on every runtime limit.
    pub runtime_scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            golden: 1e-12,
            mixture: 1e-10,
            eigenvalue: 1e-9,
            loss: 1e-8,
            converse: 1e-8,
            xi_max_at_400: 0.05,
            deficit_max_at_400: 0.15,
            coverage_sigmas: 3.0,
            continuity: 1e-8,
            qubit_constant: 1e-4,
            gibbs: 1e-12,
            success_min: 0.999,
            free_energy: 1e-3,
            dual_path: 1e-10,
            haar_sigmas: 3.0,
            oracle: 1e-9,
            runtime_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceConfig {
    pub name: String,
    pub tolerances: Tolerances,
    /// Criteria this configuration is designed to fail.
    pub expect_fail: Vec<u32>,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig { name: "default".into(), tolerances: Tolerances::default(), expect_fail: Vec::new() }
    }
}

impl AcceptanceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("acceptance config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Criterion {
    pub id: u32,
    pub group: &'static str,
    pub name: &'static str,
    pub max_seconds: f64,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, group: "pinching", name: "three-qubit schur pinching golden projectors", max_seconds: 1.0 },
    Criterion { id: 2, group: "pinching", name: "schur pinching mixture realization", max_seconds: 5.0 },
    Criterion { id: 3, group: "pinching", name: "pinching inequality and loss bound", max_seconds: 120.0 },
    Criterion { id: 4, group: "pinching", name: "free-energy recovery under schur pinching", max_seconds: 60.0 },
    Criterion { id: 5, group: "classical", name: "classical protocol convergence", max_seconds: 300.0 },
    Criterion { id: 6, group: "universal", name: "universal protocol end to end", max_seconds: 600.0 },
    Criterion { id: 7, group: "estimation", name: "hoeffding coverage", max_seconds: 10.0 },
    Criterion { id: 8, group: "estimation", name: "relative-entropy continuity", max_seconds: 10.0 },
    Criterion { id: 9, group: "mnp", name: "measure-and-prepare battery", max_seconds: 120.0 },
    Criterion { id: 10, group: "infdim", name: "infinite-dimensional truncation", max_seconds: 30.0 },
    Criterion { id: 11, group: "haar", name: "haar average energy", max_seconds: 10.0 },
    Criterion { id: 12, group: "oracle", name: "dense oracle equivalence", max_seconds: 60.0 },
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub group: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.2}s) {}",
            self.id,
            self.group,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub config: String,
    pub results: Vec<CriterionResult>,
    pub all_passed: bool,
    /// Failures outside `expect_fail`, and expected failures that passed.
    pub unexpected: Vec<u32>,
}

/// Select criteria by group name or numeric id; empty selects all.
pub fn select(only: &[String]) -> Result<Vec<Criterion>> {
    if only.is_empty() {
        return Ok(CRITERIA.to_vec());
    }
    let mut out = Vec::new();
    for key in only {
        let hits: Vec<Criterion> = CRITERIA.iter().filter(|c| c.group == key || c.id.to_string() == *key).copied().collect();
        if hits.is_empty() {
            return Err(Error::InvalidArgument(format!("no acceptance criterion matches {key:?}")));
        }
        out.extend(hits);
    }
    out.sort_by_key(|c| c.id);
    out.dedup_by_key(|c| c.id);
    Ok(out)
}

pub fn run_criterion(c: &Criterion, tol: &Tolerances) -> CriterionResult {
    let start = Instant::now();
    let res = match c.id {
        1 => golden_projectors(tol),
        2 => mixture_realization(tol),
        3 => pinching_inequality(tol),
        4 => free_energy_recovery(tol),
        5 => classical_convergence(tol),
        6 => universal_end_to_end(tol),
        7 => hoeffding_coverage(tol),
        8 => continuity(tol),
        9 => measure_and_prepare(tol),
        10 => infinite_dimensional(tol),
        11 => haar(tol),
        12 => oracle(tol),
        _ => Err(Error::InvalidArgument(format!("unknown criterion {}", c.id))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let limit = c.max_seconds * tol.runtime_scale;
    let (mut passed, mut detail) = match res {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    if seconds > limit {
        passed = false;
        detail = format!("{detail}; runtime {seconds:.1}s over {limit:.0}s");
    }
    CriterionResult { id: c.id, group: c.group.into(), name: c.name.into(), passed, detail, seconds }
}

pub fn run_acceptance(cfg: &AcceptanceConfig, only: &[String]) -> Result<AcceptanceReport> {
    let selected = select(only)?;
    let results: Vec<CriterionResult> = selected.iter().map(|c| run_criterion(c, &cfg.tolerances)).collect();
    let unexpected =
        results.iter().filter(|r| r.passed == cfg.expect_fail.contains(&r.id)).map(|r| r.id).collect();
    Ok(AcceptanceReport { config: cfg.name.clone(), all_passed: results.iter().all(|r| r.passed), results, unexpected })
}

type Check = Result<(bool, String)>;

fn qubit() -> ThermalContext {
    ThermalContext::qubit(1.0)
}

fn ket(bits: &[(usize, f64)]) -> Vec<num_complex::Complex64> {
    let mut v = vec![c(0.0); 8];
    for &(i, a) in bits {
        v[i] = c(a);
    }
    v
}

fn golden_projectors(tol: &Tolerances) -> Check {
    let ch = schur_pinching_for(&qubit(), 3)?;
    let s3 = 1.0 / 3f64.sqrt();
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s6 = 1.0 / 6f64.sqrt();
    // |abc⟩ with the first factor most significant
    let v = [
        ket(&[(0, 1.0)]),
        ket(&[(1, s3), (2, s3), (4, s3)]),
        ket(&[(3, s3), (5, s3), (6, s3)]),
        ket(&[(7, 1.0)]),
    ];
    let u = [
        ket(&[(4, s2), (2, -s2)]),
        ket(&[(5, s2), (3, -s2)]),
        ket(&[(1, 2.0 * s6), (2, -s6), (4, -s6)]),
        ket(&[(6, 2.0 * s6), (5, -s6), (3, -s6)]),
    ];
    let golden: Vec<CMat> = vec![
        outer(&v[0]),
        outer(&v[1]),
        outer(&v[2]),
        outer(&v[3]),
        outer(&u[0]) + outer(&u[2]),
        outer(&u[1]) + outer(&u[3]),
    ];
    let ours = ch.family.projectors();
    if ours.len() != golden.len() {
        return Ok((false, format!("{} projectors, expected 6", ours.len())));
    }
    let dev = ours.iter().zip(&golden).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max);
    let dims = [
        irrep_dimensions(&YoungDiagram::new(vec![3])?, 2)?,
        irrep_dimensions(&YoungDiagram::new(vec![2, 1])?, 2)?,
    ];
    let dims_ok = dims == [(4, 1), (2, 2)];
    Ok((dev <= tol.golden && dims_ok, format!("max deviation {dev:.2e}, dims {dims:?}")))
}

fn mixture_realization(tol: &Tolerances) -> Check {
    let ctx = qubit();
    let ch = schur_pinching_for(&ctx, 3)?;
    let us = ch.mixture_realization();
    let j = us.len() as f64;
    let comm = us.iter().map(|u| ch.commutator_with_hamiltonian(u)).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = trial_rng(2, i);
        let rho = random_density(8, &mut rng);
        let mix = us.iter().fold(CMat::zeros(8, 8), |acc, u| acc + u * rho.matrix() * u.adjoint()) * c(1.0 / j);
        worst = worst.max(max_abs(&(mix - ch.apply_matrix(rho.matrix())?)));
    }
    Ok((us.len() == 6 && worst <= tol.mixture && comm <= tol.mixture, format!("J={}, mixture {worst:.2e}, commutator {comm:.2e}", us.len())))
}

fn pinching_inequality(tol: &Tolerances) -> Check {
    let qutrit = ThermalContext::parse("0,1,5/2", 1.0)?;
    let mut min_eig = f64::INFINITY;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut cases = Vec::new();
    for k in [2usize, 3, 4] {
        cases.push((qubit(), k, 50u64));
    }
    cases.push((qutrit, 2, 20));
    for (ctx, k, count) in cases {
        let d = ctx.dim();
        let ch = schur_pinching_for(&ctx, k)?;
        for i in 0..count {
            let mut rng = trial_rng(3 + k as u64 * 10 + d as u64, i);
            let rho = random_density(d, &mut rng);
            let rk = tensor_power(&rho, k)?;
            let (e, _) = pinching_inequality_check(&ch, &rk, schur_projector_bound(k, d))?;
            min_eig = min_eig.min(e);
            let loss = ch.loss_nats(&rk)? / k as f64;
            worst_slack = worst_slack.max(loss - schur_loss_bound(k, d));
        }
    }
    let ok = min_eig >= -tol.eigenvalue && worst_slack <= tol.loss;
    Ok((ok, format!("min eigenvalue {min_eig:.2e}, worst loss − bound {worst_slack:.3e}")))
}

fn free_energy_recovery(tol: &Tolerances) -> Check {
    let ctx = qubit();
    let plus = DensityMatrix::plus();
    let full = relative_entropy(&plus, &thermal_state(&ctx))?;
    let mut prev = f64::NEG_INFINITY;
    let mut ok = true;
    let mut rates = Vec::new();
    for k in 1..=6usize {
        let ch = schur_pinching_for(&ctx, k)?;
        let pinched = ch.apply(&tensor_power(&plus, k)?)?;
        let tau_k = DensityMatrix::diagonal(&thermal_diagonal(&ctx, k)?)?;
        let r = relative_entropy(&pinched, &tau_k)? / k as f64;
        ok &= r >= prev - tol.converse && full - r <= schur_loss_bound(k, 2) + tol.converse;
        prev = r;
        rates.push(format!("{r:.5}"));
    }
    Ok((ok, format!("D={full:.5}, rates [{}]", rates.join(", "))))
}

fn classical_convergence(tol: &Tolerances) -> Check {
    let a = Alphabet::from_context(&qubit());
    let mut prev = f64::NEG_INFINITY;
    let mut ok = true;
    let mut last = (0.0, 0.0);
    for n in [50u64, 100, 200, 400] {
        let (_, out) = classical_protocol(&[1.0, 0.0], &a, n, &PlanSettings::default())?;
        ok &= out.rate_nats >= prev && out.rate_nats <= QUBIT_LIMIT + tol.converse;
        prev = out.rate_nats;
        last = (out.rate_nats, out.xi);
    }
    let deficit = QUBIT_LIMIT - last.0;
    ok &= last.1 <= tol.xi_max_at_400 && deficit <= tol.deficit_max_at_400;
    Ok((ok, format!("rate(400)={:.5}, xi(400)={:.2e}, deficit {deficit:.4}", last.0, last.1)))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn universal_end_to_end(tol: &Tolerances) -> Check {
    let ctx = qubit();
    let ground = DensityMatrix::basis(2, 0)?;
    let plus = DensityMatrix::plus();
    let target = relative_entropy(&ground, &thermal_state(&ctx))?;
    let mut ok = true;
    let mut medians = Vec::new();
    for n in [1_000u64, 10_000] {
        let params = UniversalParams::schedule(n, &ctx, SamplingMode::Sampled)?;
        let eps = params.eps;
        let proto = UniversalProtocol::synthesize(&ctx, params.clone(), PlanSettings::default())?;
        let src = SchurPinchedSource::from_diagonal(&[1.0, 0.0], &ctx, params.k)?;
        let other = SchurPinchedSource::from_state(&plus, &ctx, params.k)?;
        let mut rates = Vec::new();
        for seed in 0..20u64 {
            let out = proto.execute(&src, seed)?;
            ok &= out.rate_nats <= target + tol.converse;
            ok &= out.fidelity >= 1.0 - 2.0 * eps - out.xi;
            let alt = proto.execute(&other, seed)?;
            ok &= alt.description_hash == out.description_hash;
            rates.push(out.rate_nats);
        }
        medians.push(median(&mut rates));
    }
    ok &= medians[1] > medians[0];
    // the same hash must come out of an independent synthesis through the sweep path
    let via = run_mode(Mode::Universal, &ground, &ctx, 1000, 0, &ParamOverrides::default())?;
    let direct = UniversalProtocol::synthesize(&ctx, UniversalParams::schedule(1000, &ctx, SamplingMode::Sampled)?, PlanSettings::default())?;
    ok &= via.description_hash.as_deref() == Some(direct.hash());
    Ok((ok, format!("median rate n=1e3 {:.5}, n=1e4 {:.5}", medians[0], medians[1])))
}

fn hoeffding_coverage(tol: &Tolerances) -> Check {
    let m = hoeffding_sample_size(2, 0.1, 0.05)?;
    let p = [0.5, 0.5];
    let oracle = SamplingOracle::new(p.to_vec(), SamplingMode::Sampled)?;
    let trials = 1000u64;
    let mut bad = 0u64;
    for i in 0..trials {
        let mut rng = trial_rng(7, i);
        if total_variation(&sample_types_with(&oracle, m, &mut rng)?.p_hat, &p) > 0.1 {
            bad += 1;
        }
    }
    let frac = bad as f64 / trials as f64;
    let allowed = 0.05 + tol.coverage_sigmas * (0.05 * 0.95 / trials as f64).sqrt();
    Ok((m == 220 && frac <= allowed, format!("m={m}, exceedance {frac:.3} (allowed {allowed:.3}, total variation)")))
}

fn continuity(tol: &Tolerances) -> Check {
    let contexts = [qubit(), ThermalContext::parse("0,1,5/2", 1.0)?];
    let constant = qubit().continuity_constant(1);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..200u64 {
        let ctx = &contexts[(i % 2) as usize];
        let d = ctx.dim();
        let mut rng = trial_rng(8, i);
        let a = random_density(d, &mut rng);
        let b = random_density(d, &mut rng);
        let tau = thermal_state(ctx);
        let gap = (relative_entropy(&a, &tau)? - relative_entropy(&b, &tau)?).abs();
        worst = worst.max(gap - ctx.continuity_constant(1) * a.trace_distance_l1(&b)?);
    }
    let ok = worst <= tol.continuity && (constant - 1.92869).abs() <= tol.qubit_constant;
    Ok((ok, format!("qubit constant {constant:.5}, worst gap − bound {worst:.3e}")))
}

fn measure_and_prepare(tol: &Tolerances) -> Check {
    let ctx = qubit();
    let a = Alphabet::from_context(&ctx);
    let mut ok = true;
    let mut prev = 0.0;
    let mut gibbs = 0.0f64;
    let mut rates = Vec::new();
    for n in [50u64, 100, 200, 400, 800] {
        let m = (n as f64).sqrt().ceil() as u64;
        let (s, _) = measure_and_prepare_protocol(m, &a, n, &[1.0, 0.0])?;
        gibbs = gibbs.max(s.battery.gibbs_deviation);
        // every type lands in exactly one block, so the thermal masses must sum to one
        let total: f64 = s.battery.levels.iter().map(|l| l.log_thermal_mass.exp()).sum();
        gibbs = gibbs.max((total - 1.0).abs());
        ok &= s.dominant_rate > prev && s.dominant_rate <= QUBIT_LIMIT;
        prev = s.dominant_rate;
        rates.push(format!("{:.4}", s.dominant_rate));
    }
    let flagged = matches!(assign_block(&[0.875, 0.125], 4), Err(Error::BlockBoundary { .. }));
    let params = ParamOverrides { resolution: Some(4), ..ParamOverrides::default() };
    let refused = run_mode(Mode::Mnp, &DensityMatrix::diagonal(&[0.875, 0.125])?, &ctx, 16, 0, &params).is_err();
    ok &= gibbs <= tol.gibbs && flagged && refused;
    Ok((ok, format!("gibbs deviation {gibbs:.2e}, dominant rates [{}], boundary flagged {flagged}", rates.join(", "))))
}

fn infinite_dimensional(tol: &Tolerances) -> Check {
    let rho = TailState::power_law(4.0)?;
    let curve = schedule_success_curve(&rho, &CutoffSchedule::default_for(2.0), &[1_000_000])?;
    let success = curve.rows[0].success;
    let ctx = InfiniteContext::ladder(1.0)?;
    let geo = TailState::geometric((-2.0f64).exp())?;
    let mut dual = 0.0f64;
    let mut gap = 0.0;
    for d in [10usize, 50, 200] {
        let f = renormalized_free_energy(&geo, &ctx, d)?;
        dual = dual.max((f.direct - f.via_lindblad).abs());
        if d == 200 {
            gap = f.gap + f.limit.remainder_bound;
        }
    }
    let ok = success >= tol.success_min && gap <= tol.free_energy && dual <= tol.dual_path;
    Ok((ok, format!("success(1e6) {success:.6}, d=200 gap {gap:.2e}, dual-path {dual:.2e}")))
}

fn haar(tol: &Tolerances) -> Check {
    let r = haar_experiment(&qubit(), 3, 2000, 11)?;
    let ok = r.target == 1.5 && r.z_score.abs() <= tol.haar_sigmas;
    Ok((ok, format!("mean {:.4} ± {:.4} vs 1.5 (z={:.2})", r.mean_energy, r.std_error, r.z_score)))
}

fn oracle(tol: &Tolerances) -> Check {
    let a = Alphabet::from_context(&qubit());
    let mut worst = 0.0f64;
    let mut ok = true;
    for (n, l, x, p0) in [(6u64, 3u64, 1i64, 1.0), (4, 4, 1, 0.9), (4, 4, 2, 0.9), (5, 4, 1, 0.7), (3, 3, 0, 0.6), (6, 3, 2, 0.95)] {
        let p = [p0, 1.0 - p0];
        let h = ShiftFunction::new(vec![-x, x])?;
        let plan = build_classical_plan(&p, &a, n, l, &h, &PlanSettings::default())?;
        let dist = run_classical_plan(&plan, &p)?;
        let dense = simulate_plan_density(&plan, &DensityMatrix::diagonal(&p)?)?;
        ok &= dense.bijective && dense.energy_conserving;
        worst = worst.max((dense.work - dist.extracted_work).abs());
        worst = worst.max((dense.xi - dist.xi).abs());
        worst = worst.max((dense.fidelity - dist.fidelity).abs());
    }
    ok &= worst <= tol.oracle;
    Ok((ok, format!("max |Δ| over (W, xi, fidelity) {worst:.2e}")))
}

/// D(p‖t) helper kept next to the criteria that quote it.
pub fn qubit_ground_limit() -> f64 {
    classical_relative_entropy(&[1.0, 0.0], &qubit().gibbs_weights()).unwrap_or(f64::NAN)
}
