use std::path::Path;
use std::process::{Command, Output};

fn oksphere(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oksphere"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = oksphere(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(oksphere(&["run", "--gama", "3"]).status.code(), Some(2));
}

#[test]
fn helmholtz_test_passes() {
    let out = oksphere(&["helmholtz-test", "--grids", "16,32"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // header plus 24 harmonics per grid
    assert_eq!(text.lines().count(), 1 + 2 * 24);
}

#[test]
fn config_error_is_a_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": "sok", "gama": 10}"#);
    let out = oksphere(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["error"], "json");
    assert!(v["message"].as_str().unwrap().contains("gama"));
}

#[test]
fn run_writes_outputs_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "sok", "gamma": 1500, "max_steps": 4, "record_every": 1}"#,
    );
    let out_dir = dir.path().join("out");
    let out = oksphere(&[
        "run",
        "--config",
        &cfg,
        "--grid",
        "16",
        "--tau",
        "0.002",
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(echo["n_phi"], 16);
    assert_eq!(echo["tau"], 0.002);
    assert_eq!(echo["seed"], 9);
    let csv = std::fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    for f in ["report.json", "final.json", "final.bin", "final.ppm"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let counted = oksphere(&["count-bubbles", out_dir.join("final").to_str().unwrap()]);
    assert!(counted.status.success());
}

#[test]
fn identical_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "sno", "gamma11": 350, "gamma22": 350, "n_phi": 16, "n_theta": 16,
            "max_steps": 5, "record_every": 1}"#,
    );
    let read = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = oksphere(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(out_dir.join("energy.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn converge_prints_a_rate_table() {
    let out = oksphere(&[
        "converge",
        "--system",
        "sok",
        "--grid",
        "16",
        "--final-time",
        "0.002",
        "--benchmark-tau",
        "0.0000625",
        "--ladder",
        "0.001,0.0005,0.00025",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows[1].trim_end().ends_with('-'));
}

#[test]
fn sweep_writes_per_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "sok", "gamma": 100, "n_phi": 16, "n_theta": 16, "max_steps": 3,
            "init": {"kind": "random_blocks", "ratio": 4}}"#,
    );
    let out_dir = dir.path().join("sweep");
    let out = oksphere(&[
        "sweep-gamma",
        "--config",
        &cfg,
        "--gammas",
        "100,200",
        "--seeds",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("sweep.json").exists());
    for p in ["p100_s0", "p100_s1", "p200_s0", "p200_s1"] {
        assert!(out_dir.join(p).join("final.bin").exists(), "{p}");
    }
    let sno = oksphere(&["sweep-gamma12", "--config", &cfg, "--gamma12s", "1"]);
    assert_eq!(sno.status.code(), Some(1));
}
