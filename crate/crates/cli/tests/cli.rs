use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const RHO: &str = r#"{"dim":2,"entries":[[0.25,0],[0.1,0],[0.1,0],[0.75,0]]}"#;
const LOWERING: &str = r#"{"dim":2,"entries":[[0,0],[1,0],[0,0],[0,0]]}"#;
const DAMPING: &str = r#"{"dim":2,"hamiltonian":{"dim":2,"entries":[[0,0],[0,0],[0,0],[0,0]]},
  "jumps":[{"a":{"dim":2,"entries":[[0,0],[1,0],[0,0],[0,0]]},"rate":1.0}]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lindreach"))
}

fn put(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    serde_json::from_slice(&out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_matches_closed_form_decay() {
    let dir = TempDir::new().unwrap();
    let l = put(&dir, "l.json", DAMPING);
    let rho = put(&dir, "rho.json", RHO);
    let csv = dir.path().join("pop.csv");
    let out = ok_json(&run(&[
        "simulate", "--lindblad", s(&l), "--rho", s(&rho), "--t", "1", "--steps", "4", "--csv", s(&csv),
    ]));
    // excited population decays as e^{-2t}
    let p1 = out["entries"][3][0].as_f64().unwrap();
    assert!((p1 - 0.75 * (-2.0f64).exp()).abs() < 1e-12);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "t,p0,p1");
    assert_eq!(lines.len(), 6);
    let last: Vec<f64> = lines[5].split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[2] - p1).abs() < 1e-12);
}

#[test]
fn lift_and_certify_tangent() {
    let dir = TempDir::new().unwrap();
    let rho = put(&dir, "rho.json", r#"{"dim":2,"entries":[[1,0],[0,0],[0,0],[0,0]]}"#);
    // moving population into an empty level is first-order admissible
    let x = put(&dir, "x.json", r#"{"dim":2,"entries":[[-1,0],[0,0],[0,0],[1,0]]}"#);
    let cert = ok_json(&run(&["lift", "--rho", s(&rho), "--x", s(&x)]));
    assert!(cert["residual"].as_f64().unwrap() < 1e-9);
    let tan = ok_json(&run(&["certify-tangent", "--rho", s(&rho), "--x", s(&x)]));
    assert_eq!(tan["in_cone"], true);

    // pulling population out of an empty level is not
    let y = put(&dir, "y.json", r#"{"dim":2,"entries":[[1,0],[0,0],[0,0],[-1,0]]}"#);
    let tan = ok_json(&run(&["certify-tangent", "--rho", s(&rho), "--x", s(&y)]));
    assert_eq!(tan["in_cone"], false);
    let e = err_json(&run(&["lift", "--rho", s(&rho), "--x", s(&y)]), 2);
    assert!(e["code"].is_string() && e["message"].is_string());
}

fn decay_path(dir: &TempDir, n: usize) -> PathBuf {
    let dt = 0.5 / n as f64;
    let states: Vec<String> = (0..=n)
        .map(|i| {
            let p1 = 0.75 * (-2.0 * dt * i as f64).exp();
            format!(r#"{{"dim":2,"entries":[[{},0],[0,0],[0,0],[{},0]]}}"#, 1.0 - p1, p1)
        })
        .collect();
    let times: Vec<String> = (0..=n).map(|i| format!("{}", dt * i as f64)).collect();
    let body = format!(r#"{{"times":[{}],"states":[{}]}}"#, times.join(","), states.join(","));
    put(dir, &format!("path{n}.json"), &body)
}

#[test]
fn lift_path_error_shrinks_with_sampling() {
    let dir = TempDir::new().unwrap();
    let coarse = ok_json(&run(&["lift-path", "--path", s(&decay_path(&dir, 10))]));
    assert_eq!(coarse["generators"].as_array().unwrap().len(), 10);
    let fine = ok_json(&run(&["lift-path", "--path", s(&decay_path(&dir, 40))]));
    let e1 = coarse["reconstruction_error"].as_f64().unwrap();
    let e2 = fine["reconstruction_error"].as_f64().unwrap();
    // left-endpoint generators: first order in the step
    assert!(e2 < e1 / 3.0, "{e1} {e2}");
}

fn replacer_set(dir: &TempDir) -> PathBuf {
    // amplitude damping toward the ground state
    put(
        dir,
        "k.json",
        r#"{"generators":[{"dim":2,"hamiltonian":{"dim":2,"entries":[[0,0],[0,0],[0,0],[0,0]]},
          "jumps":[{"a":{"dim":2,"entries":[[0,0],[1,0],[0,0],[0,0]]},"rate":1.0}]}]}"#,
    )
}

#[test]
fn reach_writes_trajectory_csv() {
    let dir = TempDir::new().unwrap();
    let k = replacer_set(&dir);
    let rho = put(&dir, "rho.json", RHO);
    let sigma = put(&dir, "sigma.json", r#"{"dim":2,"entries":[[1,0],[0,0],[0,0],[0,0]]}"#);
    let csv = dir.path().join("traj.csv");
    let out = ok_json(&run(&[
        "reach", "--K", s(&k), "--rho", s(&rho), "--sigma", s(&sigma), "--p", "2", "--dt", "0.1", "--t-max",
        "3", "--csv", s(&csv),
    ]));
    assert!(out["final_state"].is_object());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,trace_distance,chosen_generator\n"));
    let dists: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(dists.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn porcupine_is_reproducible_across_threads() {
    let dir = TempDir::new().unwrap();
    let k = replacer_set(&dir);
    let sigma = put(&dir, "sigma.json", r#"{"dim":2,"entries":[[0,0],[0,0],[0,0],[1,0]]}"#);
    let args = [
        "porcupine", "--K", s(&k), "--sigma", s(&sigma), "--epsilon", "0.1", "--n-samples", "200", "--seed", "7",
    ];
    let a = bin().args(args).env("LINDREACH_THREADS", "1").output().unwrap();
    let b = bin().args(args).env("LINDREACH_THREADS", "3").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rep: Value = serde_json::from_slice(&a.stdout).unwrap();
    // lowering pushes every neighbour of the excited state away from it
    assert_eq!(rep["obstruction_evidence"], true);

    let bad = bin().args(args).env("LINDREACH_THREADS", "zero").output().unwrap();
    err_json(&bad, 2);
}

#[test]
fn plan_and_run_plan_reach_target() {
    let dir = TempDir::new().unwrap();
    let plan = dir.path().join("plan.json");
    let out = run(&["--out", s(&plan), "plan", "--k", "2", "--lambda", "0.1,0.2,0.3,0.4", "--mu", "0.4,0.3,0.2,0.1"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let csv = dir.path().join("run.csv");
    let last = ok_json(&run(&["run-plan", "--plan", s(&plan), "--lambda", "0.1,0.2,0.3,0.4", "--csv", s(&csv)]));
    let mu = [0.4, 0.3, 0.2, 0.1];
    for (i, m) in mu.iter().enumerate() {
        let v = last["entries"][i * 5][0].as_f64().unwrap();
        assert!((v - m).abs() < 1e-8, "{i}: {v}");
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("step,p0,p1,p2,p3\n"));

    // plan files survive a round trip unchanged
    let raw = std::fs::read_to_string(&plan).unwrap();
    let v: Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", raw);
}

#[test]
fn plan_rejects_unnormalized_unless_asked() {
    let e = err_json(&run(&["plan", "--k", "1", "--lambda", "1,1", "--mu", "0.5,0.5"]), 2);
    assert_eq!(e["context"]["argument"], "lambda");
    let out = run(&["plan", "--k", "1", "--lambda", "1,1", "--mu", "0.5,0.5", "--normalize"]);
    assert!(out.status.success());
    err_json(&run(&["plan", "--k", "2", "--lambda", "0.5,0.5", "--mu", "0.5,0.5"]), 2);
}

#[test]
fn full_state_plan() {
    let dir = TempDir::new().unwrap();
    let rho = put(&dir, "rho.json", RHO);
    let sigma = put(&dir, "sigma.json", r#"{"dim":2,"entries":[[0.6,0],[0,0.2],[0,-0.2],[0.4,0]]}"#);
    let plan = dir.path().join("plan.json");
    let out = run(&["--out", s(&plan), "plan", "--rho", s(&rho), "--sigma", s(&sigma), "--hormander-unitaries"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last = ok_json(&run(&["run-plan", "--plan", s(&plan), "--rho", s(&rho)]));
    assert!((last["entries"][1][1].as_f64().unwrap() - 0.2).abs() < 1e-8);
}

#[test]
fn hormander_closure_and_probe() {
    let out = ok_json(&run(&["check-hormander", "--standard", "2", "--max-depth", "12"]));
    assert_eq!(out["is_hormander"], true);
    assert_eq!(out["dim_found"], 15);

    let dir = TempDir::new().unwrap();
    let set = put(
        &dir,
        "set.json",
        r#"{"dim":2,"elements":[{"dim":2,"entries":[[0,0],[1,0],[1,0],[0,0]]}]}"#,
    );
    let a = put(&dir, "a.json", LOWERING);
    let out = ok_json(&run(&[
        "check-hormander", "--set", s(&set), "--orbit", s(&a), "--samples", "20", "--seed", "1",
    ]));
    assert_eq!(out["is_hormander"], false);
    assert!(out["orbit_probe"].is_object());
}

#[test]
fn dilate_reports_convergence() {
    let dir = TempDir::new().unwrap();
    let a = put(&dir, "a.json", LOWERING);
    let csv = dir.path().join("err.csv");
    let out = ok_json(&run(&["dilate", "--a", s(&a), "--t", "0.5", "--n", "32,64,128", "--csv", s(&csv)]));
    let slope = out["slope"].as_f64().unwrap();
    assert!(slope < -0.8, "{slope}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("n,error\n"));
}

#[test]
fn gamma_check_modes() {
    let dir = TempDir::new().unwrap();
    let l = put(&dir, "l.json", DAMPING);
    let a = put(&dir, "a.json", LOWERING);
    let out = ok_json(&run(&["gamma-check", "--lindblad", s(&l), "--x", s(&a), "--y", s(&a)]));
    assert_eq!(out["gamma"]["dim"], 2);

    let basis = put(&dir, "basis.json", &format!("[{LOWERING}]"));
    let out = ok_json(&run(&["gamma-check", "--a", s(&a), "--basis", s(&basis)]));
    assert_eq!(out["in_span"], true);
    let raising = put(&dir, "r.json", r#"{"dim":2,"entries":[[0,0],[0,0],[1,0],[0,0]]}"#);
    let out = ok_json(&run(&["gamma-check", "--a", s(&raising), "--basis", s(&basis)]));
    assert_eq!(out["in_span"], false);
}

#[test]
fn malformed_json_reports_position() {
    let dir = TempDir::new().unwrap();
    let body = "{\"dim\":2,\n \"entries\": [[1,0],,]}";
    let bad = put(&dir, "bad.json", body);
    let x = put(&dir, "x.json", LOWERING);
    let e = err_json(&run(&["lift", "--rho", s(&bad), "--x", s(&x)]), 2);
    assert_eq!(e["code"], "malformed_json");
    assert_eq!(e["context"]["line"], 2);
    let offset = e["context"]["byte_offset"].as_u64().unwrap() as usize;
    assert_eq!(&body[offset - 1..offset], ",");
}

#[test]
fn invalid_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let not_psd = put(&dir, "r.json", r#"{"dim":2,"entries":[[2,0],[0,0],[0,0],[-1,0]]}"#);
    let x = put(&dir, "x.json", LOWERING);
    let e = err_json(&run(&["certify-tangent", "--rho", s(&not_psd), "--x", s(&x)]), 2);
    assert_eq!(e["code"], "invalid_input");

    let e = err_json(&run(&["frobnicate"]), 2);
    assert_eq!(e["code"], "usage");
    err_json(&run(&["simulate", "--t", "1"]), 2);
    assert!(run(&["--help"]).status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = put(&dir, "a.json", LOWERING);
    let args = ["dilate", "--a", s(&a), "--t", "0.3", "--n", "8,16"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let args = ["plan", "--k", "3", "--lambda", "0.3,0.1,0.1,0.1,0.1,0.1,0.1,0.1", "--mu", "0.05,0.05,0.1,0.1,0.1,0.1,0.2,0.3"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}
