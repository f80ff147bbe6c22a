use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uora-sim"))
}

#[test]
fn single_cell_writes_summary_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--scheme", "UORA", "--n-stochastic", "5", "--ra-rus", "3", "--ocw-min", "7", "--duration", "1", "--runs", "2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("UORA,5,3,7,0.1,"));
    assert!(dir.path().join("exp_mean_0.1/UORA_N5_R3_OCW7_samples.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("UORA"));
}

#[test]
fn list_flags_expand_into_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--scheme", "SA_OFDMA,UORA", "--n-stochastic", "2,4", "--ra-rus", "1,9", "--ocw-min", "0"])
        .args(["--duration", "0.5", "--runs", "1", "--format", "json"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    // SA: one cell per N; UORA: |N| x |R| x |OCW|.
    assert_eq!(rows.as_array().unwrap().len(), 2 + 4);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"scheme": "A2P", "ra_rus": 0, "n_stochastic": 3, "duration": 0.5, "seed": 4}"#).unwrap();
    let out = dir.path().join("out");
    let status = bin().arg("--config").arg(&cfg).args(["--n-stochastic", "6", "--runs", "1", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("A2P,6,0,"));
}

#[test]
fn bad_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--scheme", "CSMA"][..], &["--ocw-min", "5"], &["--sweep", "nope"], &["--format", "xml"]] {
        let status = bin().args(args).args(["--duration", "0.2", "--runs", "1", "--out"]).arg(dir.path()).status().unwrap();
        assert_eq!(status.code(), Some(2), "{args:?}");
    }
}
