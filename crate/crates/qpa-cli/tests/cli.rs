use std::io::Write;
use std::process::{Command, Output, Stdio};

use qpa::io;
use serde_json::Value;

fn qpa(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qpa"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn generated_families_round_trip() {
    for args in [
        vec!["gen", "dim2"],
        vec!["gen", "dim3"],
        vec!["gen", "dim3", "--seed", "4"],
        vec!["gen", "standard", "--n", "4"],
        vec!["gen", "standard", "--n", "3", "--seed", "2"],
    ] {
        let out = qpa(&args, "");
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        let text = stdout(&out);
        let f = io::parse_assignment_set(&text).unwrap();
        assert_eq!(io::assignment_set_to_string(&f), text.trim_end(), "{args:?}");
        let g = io::parse_assignment_set(&io::assignment_set_to_string(&f)).unwrap();
        assert_eq!(f, g);
    }
}

#[test]
fn file_and_stdin_inputs_agree() {
    let family = stdout(&qpa(&["gen", "standard", "--n", "3"], ""));
    let path = std::env::temp_dir().join(format!("qpa-cli-test-{}.json", std::process::id()));
    std::fs::write(&path, &family).unwrap();
    let from_file = report(&qpa(&["check", path.to_str().unwrap()], ""));
    let from_stdin = report(&qpa(&["check", "-"], &family));
    std::fs::remove_file(&path).ok();
    assert_eq!(from_file["result"], from_stdin["result"]);
    assert_eq!(from_file["result"]["verdict"], "Consistent");
}

#[test]
fn exit_codes_follow_verdicts() {
    let dim2 = stdout(&qpa(&["gen", "dim2"], ""));
    assert_eq!(qpa(&["check", "-"], &dim2).status.code(), Some(2));
    assert_eq!(qpa(&["audit", "-", "--size", "3"], &dim2).status.code(), Some(0));
    assert_eq!(qpa(&["audit", "-", "--size", "4"], &dim2).status.code(), Some(2));
    let consistent = stdout(&qpa(&["gen", "dim3"], ""));
    assert_eq!(qpa(&["check", "-"], &consistent).status.code(), Some(0));
}

#[test]
fn malformed_input_exits_one_and_names_the_problem() {
    let out = qpa(&["check", "-"], "{\"dimension\": 2, \"assignments\": [{\"basis\": {\"label\": \"b\", \"vectors\": [[1, 0], [0.6, 0.8]]}, \"probs\": [0.5, 0.5]}]}");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("orthogonal"), "{err}");
    assert_eq!(qpa(&["check", "-"], "not json").status.code(), Some(1));
    assert_eq!(qpa(&["check", "--budget"], "").status.code(), Some(1));
    assert_eq!(qpa(&["rn", "--n", "1"], "").status.code(), Some(1));
}

#[test]
fn failed_construction_exits_four() {
    let out = qpa(&["gen", "counterexample", "--n", "3", "--seed", "0"], "");
    assert_eq!(out.status.code(), Some(4));
    assert!(out.stdout.is_empty());
}

#[test]
fn reports_are_deterministic_apart_from_elapsed() {
    let args = ["share-demo", "--n", "3", "--k1", "4", "--lambda", "0.05", "--shots", "500", "--trials", "20", "--seed", "3"];
    let mut a = report(&qpa(&args, ""));
    let mut b = report(&qpa(&args, ""));
    assert!(a["elapsed"].is_f64());
    a.as_object_mut().unwrap().remove("elapsed");
    b.as_object_mut().unwrap().remove("elapsed");
    assert_eq!(a, b);
    assert_eq!(a["command"], "share-demo");
    assert_eq!(a["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(a["inputs_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn rank_pair_and_rn_report_numbers() {
    let dim3 = stdout(&qpa(&["gen", "dim3"], ""));
    let r = report(&qpa(&["rank", "-", "--order", "7,0,1,2,3,4,5,6"], &dim3));
    assert_eq!(r["result"]["ranks"], serde_json::json!([3, 5, 6, 7, 8, 9, 9, 9]));
    let p = report(&qpa(&["pair", "-", "--a", "0", "--b", "7"], &dim3));
    assert_eq!(p["result"]["kind"], "GeneralPosition");
    let rn = report(&qpa(&["rn", "--n", "3"], ""));
    assert_eq!(rn["result"]["consistency_number"], 7);
}

#[test]
fn tomography_reports_a_small_trace_distance() {
    let rho = "{\"matrix\": [[[0.5, 0], [0.1, 0.1]], [[0.1, -0.1], [0.5, 0]]]}";
    let out = qpa(&["tomo", "-", "--shots", "20000", "--seed", "1"], rho);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["result"]["trace_distance"].as_f64().unwrap() < 0.05);
    assert!(r["result"]["exact_inversion_error"].as_f64().unwrap() < 1e-10);
}
