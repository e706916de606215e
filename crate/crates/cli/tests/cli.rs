use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn speed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Compares against a checked-in file; `SPEED_BLESS=1` rewrites it.
fn assert_golden(name: &str, got: &str) {
    let path = golden(name);
    if std::env::var_os("SPEED_BLESS").is_some() {
        std::fs::write(&path, got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(got, want, "output differs from {name}");
}

fn table() -> String {
    golden("layers.csv").to_str().unwrap().to_string()
}

#[test]
fn run_layer_csv_matches_golden() {
    let o = speed(&["run-layer", &table(), "--verify", "--out", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_golden("layers.out.csv", &stdout(&o));
}

#[test]
fn run_layer_json_matches_golden() {
    let o = speed(&["run-layer", &table(), "--precision", "8", "--out", "json"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 3);
    assert_golden("layers.out.json", &text);
}

#[test]
fn output_is_deterministic() {
    let args = [
        "run-layer",
        &table(),
        "--strategy",
        "cf",
        "--out",
        "json",
        "--seed",
        "9",
    ];
    assert_eq!(speed(&args).stdout, speed(&args).stdout);
}

#[test]
fn estimate_matches_simulation() {
    let sim = speed(&["run-layer", &table(), "--out", "csv"]);
    let est = speed(&["run-layer", &table(), "--out", "csv", "--estimate"]);
    let cycles = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(8).unwrap().to_string())
            .collect()
    };
    assert_eq!(cycles(&sim), cycles(&est));
}

#[test]
fn layer_filter_by_name() {
    let o = speed(&["run-layer", &table(), "--name", "c3", "--out", "csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = speed(&["run-layer", &table(), "--name", "missing"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_strategies_reports_ratios() {
    let o = speed(&["compare-strategies", "squeezenet", "--estimate", "--out", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let total = |i: usize| rows[i][1].parse::<u64>().unwrap();
    assert!(total(2) <= total(0) && total(2) <= total(1));
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let o = speed(&[
        "sweep",
        "squeezenet",
        "--lanes",
        "2,4",
        "--precisions",
        "8,16",
        "--estimate",
        "--out",
        "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1 + 4);
}

#[test]
fn verify_layer_table() {
    let o = speed(&["verify", &table(), "--precision", "4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("verified 3 layers"));
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    std::fs::write(&cfg, "lanes = 8\nvlen_bits = 8192\n").unwrap();
    let base = speed(&["run-layer", &table(), "--estimate", "--out", "csv"]);
    let wide = speed(&[
        "run-layer",
        &table(),
        "--estimate",
        "--out",
        "csv",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(wide.status.success());
    assert_ne!(base.stdout, wide.stdout);
    std::fs::write(&cfg, "lanes = 0\n").unwrap();
    let bad = speed(&["run-layer", &table(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_with_two() {
    assert_eq!(speed(&["run-model", "nope"]).status.code(), Some(2));
    assert_eq!(speed(&["run-layer", "/nonexistent.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "name,cin,cout,h,w,k,stride,pad\nx,0,1,4,4,3,1,0\n").unwrap();
    assert_eq!(speed(&["run-layer", bad.to_str().unwrap()]).status.code(), Some(2));
    // clap rejects unsupported precisions itself
    assert_ne!(
        speed(&["run-model", "vgg16", "--precision", "6"]).status.code(),
        Some(0)
    );
}

#[test]
fn asm_and_disasm_round_trip() {
    let o = speed(&["asm", golden("prog.s").to_str().unwrap()]);
    assert!(o.status.success());
    let hex = stdout(&o);
    assert_golden("prog.hex", &hex);

    let dir = tempfile::tempdir().unwrap();
    let hex_path = dir.path().join("p.hex");
    std::fs::write(&hex_path, &hex).unwrap();
    let text = stdout(&speed(&["disasm", hex_path.to_str().unwrap()]));
    let again = dir.path().join("p.s");
    std::fs::write(&again, &text).unwrap();
    assert_eq!(stdout(&speed(&["asm", again.to_str().unwrap()])), hex);

    let bin = dir.path().join("p.bin");
    assert!(
        speed(&["asm", golden("prog.s").to_str().unwrap(), "-o", bin.to_str().unwrap()])
            .status
            .success()
    );
    assert_eq!(stdout(&speed(&["disasm", "--binary", bin.to_str().unwrap()])), text);
}

#[test]
fn disasm_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.hex");
    std::fs::write(&p, "0xffffffff\n").unwrap();
    assert_eq!(speed(&["disasm", p.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&p, [1u8, 2, 3]).unwrap();
    assert_eq!(
        speed(&["disasm", "--binary", p.to_str().unwrap()]).status.code(),
        Some(2)
    );
}
