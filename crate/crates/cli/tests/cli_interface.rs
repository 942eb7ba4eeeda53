//! Binary-level tests: exit codes, report files, and determinism through the
//! actual `slantlab` executable.

use std::path::PathBuf;
use std::process::Command;

fn slantlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slantlab"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("slantlab_test_{}_{name}", std::process::id()));
    p
}

#[test]
fn catalog_lists_charts() {
    let out = slantlab().arg("catalog").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("example_7_5"));
    assert!(text.contains("warped_trivial"));
}

#[test]
fn missing_config_exits_2() {
    let out = slantlab()
        .args(["run", "/nonexistent/config.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let cfg = temp_path("bad.cfg");
    std::fs::write(&cfg, "[chart a]\ncatalog = circle\ngrid = 1\n").unwrap();
    let out = slantlab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("at least 2"), "{err}");
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn passing_run_exits_0_and_writes_json() {
    let cfg = temp_path("circle.cfg");
    std::fs::write(
        &cfg,
        "seed = 5\n[chart circle]\ncatalog = circle\n[checks]\nnames = classification, tensor_identities\n",
    )
    .unwrap();
    let report = temp_path("circle.json");
    let out = slantlab()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["seed"], 5);
    assert!(json["config_hash"].as_str().unwrap().len() == 64);
    let entries = json["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    for field in ["chart", "check", "point", "status", "residual", "tolerance", "labels", "theta"] {
        assert!(
            entries[0].get(field).is_some(),
            "report entries must carry `{field}`"
        );
    }
    assert!(entries[0]["theta"].get("I").is_some());
    std::fs::remove_file(&cfg).ok();
    std::fs::remove_file(&report).ok();
}

#[test]
fn failing_run_exits_1() {
    // a rank-deficient immersion makes classification fail hard
    let cfg = temp_path("degenerate.cfg");
    std::fs::write(
        &cfg,
        concat!(
            "[chart degenerate]\n",
            "params = x1, x2\n",
            "components = \"x1\", \"x1\", \"0\", \"0\"\n",
            "domain = -1 1, -1 1\n",
            "grid = 2, 2\n",
            "[checks]\n",
            "names = classification\n",
        ),
    )
    .unwrap();
    let out = slantlab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn strict_mode_fails_on_skips() {
    // umbilic on a cylinder is skipped (not umbilic); strict makes that fail
    let cfg = temp_path("strict.cfg");
    std::fs::write(
        &cfg,
        "[chart cyl]\ncatalog = circle_line\n[checks]\nnames = umbilic\n",
    )
    .unwrap();
    let relaxed = slantlab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(relaxed.status.code(), Some(0));
    let strict = slantlab().args(["run", "--strict"]).arg(&cfg).output().unwrap();
    assert_eq!(strict.status.code(), Some(1));
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn check_shortcut_runs_one_chart() {
    let report = temp_path("check.json");
    let out = slantlab()
        .args(["check", "slant_plane(alpha=pi/3)", "--checks", "classification"])
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let entries = json["entries"].as_array().unwrap();
    let theta = entries[0]["theta"]["I"].as_f64().unwrap();
    assert!((theta - std::f64::consts::FRAC_PI_3).abs() < 1e-10);
    std::fs::remove_file(&report).ok();
}

#[test]
fn binary_runs_are_deterministic() {
    let cfg = temp_path("det.cfg");
    std::fs::write(
        &cfg,
        concat!(
            "seed = 11\n",
            "[chart plane]\n",
            "catalog = slant_plane\n",
            "[checks]\n",
            "names = classification, orthogonality_preservation, gauss_weingarten\n",
        ),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let report = temp_path(&format!("det{i}.json"));
        let out = slantlab()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&report)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        outputs.push(std::fs::read(&report).unwrap());
        std::fs::remove_file(&report).ok();
    }
    assert_eq!(outputs[0], outputs[1]);
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn text_format_output() {
    let out = slantlab()
        .args(["check", "circle", "--checks", "classification", "--format", "text"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("classification"), "{text}");
    assert!(text.contains("summary:"));
}
