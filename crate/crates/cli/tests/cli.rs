use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thermoflux"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("thermoflux-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn acceptance_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("acceptance")
}

#[test]
fn haar_single_qubit_target() {
    let o = run(&["haar", "--qubits", "1", "--samples", "1", "--seed", "4"]);
    assert!(o.status.success());
    let v = json_out(&o);
    assert_eq!(v["target"], 0.5);
    let e = v["mean_energy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&e));
}

#[test]
fn schur_three_qubits() {
    let o = run(&["schur", "--n", "3"]);
    assert!(o.status.success());
    let v = json_out(&o);
    let blocks = v["blocks"].as_array().unwrap();
    let dims: Vec<(u64, u64)> = blocks.iter().map(|b| (b["n_lambda"].as_u64().unwrap(), b["m_lambda"].as_u64().unwrap())).collect();
    assert_eq!(dims, vec![(4, 1), (2, 2)]);
    let total: usize = blocks.iter().map(|b| b["vectors"].as_array().unwrap().len()).sum();
    assert_eq!(total, 8);
}

#[test]
fn dimension_cap_from_environment() {
    let o = bin().args(["schur", "--n", "3"]).env("THERMOFLUX_DIM_CAP", "4").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn pinch_thermal_is_lossless() {
    let o = run(&["pinch", "--state", "thermal", "--kind", "energy", "--k", "2"]);
    assert!(o.status.success());
    let v = json_out(&o);
    assert_eq!(v["projector_count"], 3);
    assert!(v["loss_nats"].as_f64().unwrap().abs() < 1e-10);
    let o = run(&["pinch", "--state", "plus", "--k", "3"]);
    let v = json_out(&o);
    assert!(v["loss_nats"].as_f64().unwrap() <= v["bound_nats"].as_f64().unwrap());
}

#[test]
fn extract_appends_csv_rows() {
    let path = scratch("extract.csv");
    let _ = std::fs::remove_file(&path);
    for n in ["50", "100"] {
        let o = run(&["extract", "--mode", "classical", "--state", "ground", "--n", n, "--csv", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json_out(&o)["mode"], "classical");
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,k,m,l,W,rate_nats,target_nats,xi,fidelity,seed,mode");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("50,1,0,354,7,0.14,"));
}

#[test]
fn validation_errors_exit_two() {
    assert_eq!(run(&["extract", "--n", "10", "--state", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["extract", "--n", "10", "--mode", "teleport"]).status.code(), Some(2));
    assert_eq!(run(&["extract", "--n", "0"]).status.code(), Some(2));
    assert_eq!(run(&["extract", "--n", "10", "--levels", "0,x"]).status.code(), Some(2));
    assert_eq!(run(&["infdim", "--state", "power:1.5"]).status.code(), Some(2));
    // boundary input for the measure-and-prepare grid
    assert_eq!(run(&["extract", "--mode", "mnp", "--state", "diag:0.875,0.125", "--n", "16"]).status.code(), Some(2));
}

#[test]
fn sweep_is_byte_identical_and_rejects_unknown_keys() {
    let cfg = scratch("sweep.json");
    std::fs::write(&cfg, r#"{"mode":"classical","state":"thermal","levels":"0,1","beta":1.0,"n_grid":[20,40],"seeds":[0,1,2]}"#).unwrap();
    let a = scratch("a.csv");
    let b = scratch("b.csv");
    for p in [&a, &b] {
        let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--csv", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# config_hash="));
    let mut rows = csv_rows(&text);
    assert_eq!(rows.len(), 6);
    for r in rows.drain(..) {
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[8].parse::<f64>().unwrap(), 1.0);
    }
    std::fs::write(&cfg, r#"{"mode":"classical","state":"ground","levels":"0,1","beta":1.0,"n_grid":[20],"seeds":[0],"colour":1}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn infdim_with_candidates() {
    let cands = scratch("candidates.json");
    std::fs::write(&cands, r#"[{"kind":"explicit","weights":[1.0]},{"kind":"geometric","ratio":0.36787944117144233}]"#).unwrap();
    let o = run(&["infdim", "--state", "explicit:1", "--candidates", cands.to_str().unwrap(), "--n-grid", "1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,d_n,success,rate,target");
    let f: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(f[2], 1.0);
    assert!(f[3] > 0.0 && f[3] <= f[4]);
}

#[test]
fn acceptance_filter_runs_only_pinching() {
    let o = run(&["acceptance", "--config", acceptance_dir().to_str().unwrap(), "--only", "pinching"]);
    assert!(o.status.success());
    let v = json_out(&o);
    let ids: Vec<u64> = v["results"].as_array().unwrap().iter().map(|r| r["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 2, 3, 4]);
    assert_eq!(run(&["acceptance", "--only", "nothing"]).status.code(), Some(2));
}

#[test]
fn negative_control_fails_designated_criterion() {
    let cfg = acceptance_dir().join("negative_control.json");
    let o = run(&["acceptance", "--config", cfg.to_str().unwrap(), "--only", "classical,oracle"]);
    assert_eq!(o.status.code(), Some(3));
    let v = json_out(&o);
    let failed: Vec<u64> =
        v["results"].as_array().unwrap().iter().filter(|r| r["passed"] == false).map(|r| r["id"].as_u64().unwrap()).collect();
    assert_eq!(failed, vec![5]);
    assert!(v["unexpected"].as_array().unwrap().is_empty());
}
