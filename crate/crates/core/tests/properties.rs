//! Cross-module invariants as property tests.

use proptest::prelude::*;

use thermoflux::estimation::{trial_rng, SamplingMode};
use thermoflux::experiment::{run_mode, run_sweep, ExperimentConfig, Mode, ParamOverrides, StateSpec};
use thermoflux::extraction::{
    build_classical_plan, classical_protocol, run_classical_plan, simulate_plan_density, state_aware_protocol, Alphabet, AwareSettings,
    PlanSettings, SchurPinchedSource, UniversalParams, UniversalProtocol,
};
use thermoflux::infdim::{free_energy_limit, renormalized_free_energy, truncate, InfiniteContext, TailState};
use thermoflux::pinching::{energy_pinching, schur_pinching_for};
use thermoflux::qmat::{classical_relative_entropy, max_abs, random_density, relative_entropy, tensor_power, thermal_diagonal, thermal_state};
use thermoflux::typeclass::ShiftFunction;
use thermoflux::{DensityMatrix, ThermalContext};

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classical_rate_never_beats_relative_entropy(a in 0.05f64..1.0, b in 0.05f64..1.0, n in 10u64..200, beta in 0.3f64..2.0) {
        let ctx = ThermalContext::parse("0,1", beta).unwrap();
        let alphabet = Alphabet::from_context(&ctx);
        let p = simplex(&[a, b]);
        let (_, out) = classical_protocol(&p, &alphabet, n, &PlanSettings::default()).unwrap();
        let d = classical_relative_entropy(&p, &alphabet.thermal).unwrap();
        prop_assert!(out.rate_nats <= d + 1e-8);
        prop_assert!(out.converse_holds);
        prop_assert!((out.fidelity + out.xi - 1.0).abs() < 1e-9 || out.xi_is_bound);
    }

    #[test]
    fn pinching_preserves_gibbs_and_commutes(seed in 0u64..1000, k in 1usize..4) {
        let ctx = ThermalContext::qubit(1.0);
        for ch in [schur_pinching_for(&ctx, k).unwrap(), energy_pinching(&ctx, k).unwrap()] {
            let t = thermal_diagonal(&ctx, k).unwrap();
            prop_assert!(ch.gibbs_deviation(&t).unwrap() <= 1e-12);
            let rho = tensor_power(&random_density(2, &mut trial_rng(seed, 0)), k).unwrap();
            let out = ch.apply(&rho).unwrap();
            prop_assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
            // idempotent
            prop_assert!(max_abs(&(ch.apply(&out).unwrap().matrix() - out.matrix())) < 1e-10);
            // data processing against τ^{⊗k}
            let tau = DensityMatrix::diagonal(&t).unwrap();
            prop_assert!(relative_entropy(&out, &tau).unwrap() <= relative_entropy(&rho, &tau).unwrap() + 1e-9);
        }
    }

    #[test]
    fn dense_oracle_matches_distribution(p0 in 0.55f64..1.0, n in 2u64..6, l in 2u64..5, x in 0i64..3) {
        let alphabet = Alphabet::from_context(&ThermalContext::qubit(1.0));
        let p = [p0, 1.0 - p0];
        let h = ShiftFunction::new(vec![-x, x]).unwrap();
        if let Ok(plan) = build_classical_plan(&p, &alphabet, n, l, &h, &PlanSettings::default()) {
            let dist = run_classical_plan(&plan, &p).unwrap();
            let dense = simulate_plan_density(&plan, &DensityMatrix::diagonal(&p).unwrap()).unwrap();
            prop_assert!(dense.bijective && dense.energy_conserving);
            prop_assert!((dense.work - dist.extracted_work).abs() <= 1e-9);
            prop_assert!((dense.xi - dist.xi).abs() <= 1e-9);
            prop_assert!((dense.fidelity - dist.fidelity).abs() <= 1e-9);
        }
    }

    #[test]
    fn truncation_success_in_log_domain(s in 2.2f64..6.0, d in 1usize..40, n in 1u64..50) {
        let t = truncate(&TailState::power_law(s).unwrap(), d).unwrap();
        let direct = t.success_mass.powi(n as i32);
        prop_assert!((t.success_probability(n) - direct).abs() <= 1e-12 * direct.max(1e-300));
        prop_assert!((t.success_mass + t.tail_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalized_free_energy_stays_below_limit(r in 0.05f64..0.6, d in 2usize..60) {
        let ctx = InfiniteContext::ladder(1.0).unwrap();
        let rho = TailState::geometric(r).unwrap();
        let f = renormalized_free_energy(&rho, &ctx, d).unwrap();
        let lim = free_energy_limit(&rho, &ctx).unwrap();
        prop_assert!((f.direct - f.via_lindblad).abs() <= 1e-10);
        prop_assert!(f.direct <= lim.value + lim.remainder_bound + 1e-9);
    }
}

#[test]
fn universal_description_is_state_independent() {
    let ctx = ThermalContext::qubit(1.0);
    let params = UniversalParams::schedule(2000, &ctx, SamplingMode::Sampled).unwrap();
    let k = params.k;
    let proto = UniversalProtocol::synthesize(&ctx, params, PlanSettings::default()).unwrap();
    let mut hashes = Vec::new();
    for seed in 0..5u64 {
        let rho = random_density(2, &mut trial_rng(seed, 9));
        let src = SchurPinchedSource::from_state(&rho, &ctx, k).unwrap();
        let out = proto.execute(&src, seed).unwrap();
        assert!(out.rate_nats <= relative_entropy(&rho, &thermal_state(&ctx)).unwrap() + 1e-8);
        hashes.push(out.description_hash.unwrap());
    }
    hashes.dedup();
    assert_eq!(hashes.len(), 1);
}

#[test]
fn aware_protocol_on_thermal_input_extracts_nothing() {
    let ctx = ThermalContext::parse("0,1,5/2", 0.7).unwrap();
    let out = state_aware_protocol(&thermal_state(&ctx), &ctx, 60, 1, &AwareSettings::default()).unwrap();
    assert_eq!(out.rate_nats, 0.0);
    assert!((out.fidelity - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_matches_serial_execution() {
    let cfg = ExperimentConfig::from_json(
        r#"{"mode":"aware","state":"plus","levels":"0,1","beta":1.0,"n_grid":[40,80],"seeds":[3,4],"params":{"k":2}}"#,
    )
    .unwrap();
    let parallel = run_sweep(&cfg).unwrap();
    let ctx = cfg.context().unwrap();
    let rho = StateSpec::Named("plus".into()).resolve(&ctx).unwrap();
    let mut i = 0;
    for &n in &cfg.n_grid {
        for &seed in &cfg.seeds {
            let o = run_mode(Mode::Aware, &rho, &ctx, n, seed, &ParamOverrides { k: Some(2), ..Default::default() }).unwrap();
            let r = &parallel.rows[i];
            assert_eq!((r.n, r.seed), (n, seed));
            assert_eq!(r.rate_nats.to_bits(), o.rate_nats.to_bits());
            assert_eq!(r.fidelity.to_bits(), o.fidelity.to_bits());
            i += 1;
        }
    }
    assert_eq!(parallel.to_csv().unwrap(), run_sweep(&cfg).unwrap().to_csv().unwrap());
}

#[test]
fn sweep_records_row_failures_and_continues() {
    // p = (1/2, 1/2) sits on a block boundary of the M = 3 grid (n = 9) but not of M = 2 (n = 4)
    let cfg = ExperimentConfig::from_json(
        r#"{"mode":"mnp","state":"mixed","levels":"0,1","beta":1.0,"n_grid":[9,4],"seeds":[0]}"#,
    )
    .unwrap();
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.rows[0].error.is_some());
    assert!(r.rows[1].error.is_none());
    assert!(r.rows[0].error.as_deref().unwrap().contains("boundary"));
    assert_eq!(r.summary.iter().map(|s| s.failures).sum::<usize>(), 1);
}
