use std::process::{Command, Output};

use serde_json::Value;

fn absorb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absorb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_example1_certificate() {
    let out = absorb(&["solve", "examples/example1.json", "--epsilon", "0.05"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], "absorb/v1/solve");
    assert_eq!(v["result"]["solution"]["kind"], "certificate");
    let gamma = v["result"]["eval"]["gamma"].as_array().unwrap();
    for g in gamma {
        assert!((g.as_f64().unwrap() - 0.5).abs() <= 1e-12);
    }
    assert_eq!(v["config"]["epsilon"], 0.05);
    assert_eq!(v["instance_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn analyze_example2_records_failure() {
    let out = absorb(&["analyze", "example2"]);
    assert!(out.status.success());
    let v = json(&out);
    let comps = v["result"]["structure"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 3);
    let rect = comps.iter().filter(|c| c["rectangular"] == true).count();
    assert_eq!(rect, 2);
    assert_eq!(v["result"]["precondition"]["passed"], false);
}

#[test]
fn precondition_failure_exits_2() {
    let out = absorb(&["solve", "example2"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["schema"], "absorb/v1/error");
    assert_eq!(v["error"], "RectangularComponentFound");
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn missing_instance_exits_4() {
    let out = absorb(&["solve", "no/such/game.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["error"], "Io");
}

#[test]
fn bad_delta_is_a_config_error() {
    let out = absorb(&["solve", "ex1_hard", "--delta", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "Config");
}

#[test]
fn gen_is_deterministic_and_valid() {
    let a = absorb(&["gen", "--players", "2", "--actions", "4", "--seed", "7"]);
    let b = absorb(&["gen", "--players", "2", "--actions", "4", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let g = absorb_core::Game::from_json(&text).unwrap();
    let s = absorb_core::structure::build_structure(&g);
    assert!(!s.components.is_empty());
    assert!(s.components.iter().all(|c| !c.rectangular));
}

#[test]
fn reports_are_byte_identical() {
    let args = ["orbit", "ex1_hard", "--delta", "0.4", "--sequential"];
    let a = absorb(&args);
    let b = absorb(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["result"]["k0"], 26);
}

#[test]
fn classify_reports_case() {
    let out = absorb(&["classify", "ex1_hard", "--w", "0.9,0.9"]);
    assert!(out.status.success());
    let v = json(&out);
    let case = v["result"]["classification"]["witness"]["case"].as_str().unwrap();
    assert!(["CaseW", "CaseWH", "CaseWL"].contains(&case));
    assert!(v["result"]["mu"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_and_simulate_small() {
    let dir = std::env::temp_dir().join(format!("absorb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let solved = dir.join("solve.json");
    let out = absorb(&["solve", "example1", "--epsilon", "0.05", "--output", solved.to_str().unwrap()]);
    assert!(out.status.success());
    let s = solved.to_str().unwrap();
    let out = absorb(&[
        "verify", "example1", "--epsilon", "0.05", "--strategy", s, "--deviations", "d1,d4", "--episodes", "2000",
        "--player", "1",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["players"].as_array().unwrap().len(), 1);
    assert_eq!(v["result"]["families"], serde_json::json!(["d1", "d4"]));
    let out = absorb(&["simulate", "example1", "--epsilon", "0.05", "--strategy", s, "--episodes", "2000"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["result"]["agrees"], true);
    std::fs::remove_dir_all(&dir).ok();
}
