//! End-to-end tests of the `gmesp` binary: exit codes, output schemas and
//! the documented command examples.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmesp::instance::{brute_force, load_instance, random_instance, Instance};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmesp"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(p).expect("golden file")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_instance(dir: &Path, name: &str, inst: &Instance) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, inst.to_json()).unwrap();
    p
}

#[test]
fn gen_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inst.json");
    let o = run(&["gen", "--n", "9", "--s", "4", "--t", "2", "--m", "2", "--seed", "17", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = load_instance(&out).unwrap();
    let direct = random_instance(9, 4, 2, 2, 17).unwrap();
    assert_eq!(read.cov, direct.cov);
    assert_eq!(read.a, direct.a);
    assert_eq!(read.b, direct.b);
    let again = write_instance(dir.path(), "again.json", &read);
    assert_eq!(load_instance(&again).unwrap().cov, direct.cov);
}

#[test]
fn six_var_glinx_bound() {
    let o = run(&["bound", "--instance", fixture("six_var.json").to_str().unwrap(), "--bound", "glinx", "--region", "no-soc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let certified = v[0]["certified"].as_f64().unwrap();
    assert!((certified - 11.8044).abs() < 2e-3, "certified {certified}");
}

#[test]
fn spectral_on_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("diag.json");
    let e = std::f64::consts::E;
    let text = serde_json::json!({"n": 3, "s": 2, "t": 2, "C": [[e * e, 0.0, 0.0], [0.0, e, 0.0], [0.0, 0.0, 1.0]]});
    std::fs::write(&p, text.to_string()).unwrap();
    let o = run(&["bound", "--instance", p.to_str().unwrap(), "--bound", "spectral"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v[0]["primal"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn gap_columns_populated_with_heuristic_lb() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "i.json", &random_instance(10, 5, 3, 0, 4).unwrap());
    let o = run(&["bound", "--instance", p.to_str().unwrap(), "--bound", "ddgfact,glinx", "--lb", "heuristic", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(",") + "\n", golden("bound_header.csv"));
    let gap = header.iter().position(|h| h == "gap").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let g: f64 = r[gap].parse().expect("gap is numeric");
        assert!(g >= -1e-8, "negative gap {g}");
    }
}

#[test]
fn bound_json_keys_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "i.json", &random_instance(7, 3, 2, 0, 2).unwrap());
    let o = run(&["bound", "--instance", p.to_str().unwrap(), "--bound", "glinx", "--lb", "heuristic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let obj = v[0].as_object().unwrap();
    let keys = golden("bound_keys.txt");
    for line in keys.lines() {
        let (key, optional) = match line.strip_suffix('?') {
            Some(k) => (k, true),
            None => (line, false),
        };
        assert!(optional || obj.contains_key(key), "missing key {key}");
    }
    let allowed: Vec<&str> = keys.lines().map(|l| l.trim_end_matches('?')).collect();
    for k in obj.keys() {
        assert!(allowed.contains(&k.as_str()), "unexpected key {k}");
    }
}

#[test]
fn sweep_csv_header_is_stable() {
    let o = run(&["sweep", "--n", "8", "--count", "1", "--kappa", "0,1", "--s-values", "4", "--bound", "spectral,glinx"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap().to_string() + "\n", golden("sweep_header.csv"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn bad_region_is_a_parse_error() {
    let o = run(&["bound", "--instance", fixture("six_var.json").to_str().unwrap(), "--region", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bound", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsupported_matrix_market_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.mtx"), "%%MatrixMarket matrix coordinate complex hermitian\n2 2 1\n1 1 1.0 0.0\n").unwrap();
    let p = dir.path().join("i.json");
    std::fs::write(&p, r#"{"n": 2, "s": 1, "t": 1, "C_file": "c.mtx"}"#).unwrap();
    let o = run(&["bound", "--instance", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn infeasible_boxes_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("i.json");
    let c = [[2.0, 0.5, 0.0, 0.0], [0.5, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let text = serde_json::json!({"n": 4, "s": 2, "t": 1, "C": c, "l": [1.0, 1.0, 1.0, 0.0]});
    std::fs::write(&p, text.to_string()).unwrap();
    assert_eq!(run(&["bound", "--instance", p.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(&["solve", "--instance", p.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn solve_six_var_instance() {
    let o = run(&["solve", "--instance", fixture("six_var.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["support"].as_array().unwrap().len(), 4);
    assert!((v["value"].as_f64().unwrap() - 11.67922).abs() < 1e-4);
    assert_eq!(v["optimal"], Value::Bool(true));
}

#[test]
fn solve_oracle_check_matches() {
    let dir = tempfile::tempdir().unwrap();
    let inst = random_instance(10, 4, 2, 2, 31).unwrap();
    let p = write_instance(dir.path(), "i.json", &inst);
    let o = run(&["solve", "--instance", p.to_str().unwrap(), "--oracle-check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).lines().any(|l| l == "MATCH"), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - brute_force(&inst).unwrap().value).abs() < 1e-8);
}

#[test]
fn certify_supplied_dual() {
    let o = run(&[
        "certify",
        "--instance",
        fixture("six_var.json").to_str().unwrap(),
        "--point",
        fixture("six_var_dual.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["certified"].as_f64().unwrap() - 11.80435231).abs() < 1e-5);
}

#[test]
fn certify_perturbed_dual_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(fixture("six_var_dual.json")).unwrap()).unwrap();
    v["dual"]["upsilon"][0] = Value::from(-1.0);
    let p = dir.path().join("bad.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = run(&["certify", "--instance", fixture("six_var.json").to_str().unwrap(), "--point", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("violated:"), "{}", stderr(&o));
}

#[test]
fn certify_solver_point_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let inst = random_instance(8, 4, 2, 0, 12).unwrap();
    let p = write_instance(dir.path(), "i.json", &inst);
    let o = run(&["bound", "--instance", p.to_str().unwrap(), "--bound", "glinx"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v[0]["certified"].as_f64().unwrap() >= brute_force(&inst).unwrap().value - 1e-8);
}

#[test]
fn explicit_gamma_implies_o_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "i.json", &random_instance(8, 4, 3, 0, 5).unwrap());
    let o = run(&["bound", "--instance", p.to_str().unwrap(), "--bound", "glinx", "--gamma", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let gamma = v[0]["scaling"]["gamma"].as_f64().unwrap();
    assert_eq!(gamma, 0.5, "{}", v[0]["scaling"]);
}
