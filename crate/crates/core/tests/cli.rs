use std::path::PathBuf;
use std::process::{Command, Output};

use informativity::cli::{CheckReport, ValidateReport};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_informativity"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn check_json(name: &str, extra: &[&str]) -> (i32, CheckReport) {
    let path = fixture(name);
    let mut args = vec![
        "check",
        "--problem",
        path.to_str().unwrap(),
        "--format",
        "json",
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    let report = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr));
    });
    (out.status.code().unwrap(), report)
}

fn verdict(report: &CheckReport, property: &str) -> String {
    let entry = report
        .results
        .iter()
        .find(|e| e.property.name() == property)
        .unwrap_or_else(|| panic!("{property} missing"));
    let v = entry.pencil.as_ref().or(entry.geometric.as_ref()).unwrap();
    serde_json::to_value(v.informative)
        .unwrap()
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn process_noise_example_verdicts() {
    let (code, report) = check_json("two_state.json", &[]);
    assert_eq!(code, 0);
    assert_eq!(
        serde_json::to_value(report.pattern).unwrap(),
        "process-only"
    );
    assert_eq!(verdict(&report, "detectability"), "informative");
    assert_eq!(verdict(&report, "observability"), "not-informative");
    assert_eq!(verdict(&report, "strong-detectability"), "not-informative");
    let obs = report
        .results
        .iter()
        .find(|e| e.property.name() == "observability")
        .unwrap();
    let witness = serde_json::to_value(&obs.pencil.as_ref().unwrap().witness).unwrap();
    assert_eq!(witness["kind"], "lambda");
    assert_eq!(witness["lambda"]["re"].as_f64().unwrap().abs(), 0.0);
    assert_eq!(witness["lambda"]["im"].as_f64().unwrap().abs(), 0.0);
}

#[test]
fn chain_example_separates_strong_and_plain_observability() {
    let (code, report) = check_json(
        "chain_b1.json",
        &[
            "--method",
            "both",
            "--properties",
            "strong-observability,observability",
        ],
    );
    assert_eq!(code, 0);
    assert_eq!(report.disagreements, 0);
    assert_eq!(verdict(&report, "strong-observability"), "not-informative");
    assert_eq!(verdict(&report, "observability"), "informative");
}

#[test]
fn methods_agree_on_every_fixture() {
    for name in [
        "two_state.json",
        "two_state_swapped_c.json",
        "chain_b1.json",
        "chain_b2.json",
        "chain_b3.json",
        "chain_b4.json",
    ] {
        let (code, report) = check_json(name, &["--method", "both"]);
        assert_eq!(code, 0, "{name}");
        assert_eq!(report.disagreements, 0, "{name}");
        assert!(
            report.results.iter().all(|e| e.agree != Some(false)),
            "{name}"
        );
    }
}

#[test]
fn json_report_round_trips() {
    let path = fixture("chain_b1.json");
    let out = run(&[
        "check",
        "--problem",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let raw: Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: CheckReport = serde_json::from_value(raw.clone()).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), raw);
}

#[test]
fn validation_finds_no_critical_disagreement() {
    for name in ["two_state.json", "chain_b1.json"] {
        let path = fixture(name);
        let out = run(&[
            "validate",
            "--problem",
            path.to_str().unwrap(),
            "--samples",
            "500",
            "--format",
            "json",
        ]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let report: ValidateReport = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report.validation.critical, 0, "{name}");
        assert_eq!(report.validation.samples, 500);
    }
}

#[test]
fn text_output_names_verdicts() {
    let path = fixture("two_state.json");
    let out = run(&[
        "check",
        "--problem",
        path.to_str().unwrap(),
        "--properties",
        "observability",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("observability"));
    assert!(text.contains("not informative"));
}

#[test]
fn bad_input_exits_with_two() {
    let malformed = fixture("malformed.json");
    let missing = fixture("does_not_exist.json");
    let good = fixture("two_state.json");
    for args in [
        vec!["check", "--problem", malformed.to_str().unwrap()],
        vec!["check", "--problem", missing.to_str().unwrap()],
        vec![
            "check",
            "--problem",
            good.to_str().unwrap(),
            "--properties",
            "bogus",
        ],
        vec![
            "check",
            "--problem",
            good.to_str().unwrap(),
            "--rank-rtol",
            "-1",
        ],
        vec!["check"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn inconsistent_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inconsistent.json");
    // x1 = 2 x0 but x2 = 2.5 x1 with no noise.
    let doc = r#"{"B": [[0]], "C": [[1]], "D": [[0]],
        "U": [[0, 0]], "X": [[1, 2, 5]], "Y": [[1, 2]]}"#;
    std::fs::write(&path, doc).unwrap();
    let out = run(&["check", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let system = dir.path().join("system.json");
    let problem = dir.path().join("problem.json");
    let doc = r#"{"A": [[0.5, 0], [1, 3]], "B": [[0], [1]], "C": [[1, 0]], "D": [[0]],
        "E": [[1], [0]]}"#;
    std::fs::write(&system, doc).unwrap();
    let out = run(&[
        "simulate",
        "--system",
        system.to_str().unwrap(),
        "--horizon",
        "6",
        "--seed",
        "3",
        "--output",
        problem.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(&[
        "check",
        "--problem",
        problem.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: CheckReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.results.len(), 9);
}
