use std::fs;
use std::process::{Command, Output};

fn eprsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprsim")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn correlate_defaults_to_thirteen_planar_rows() {
    let out = eprsim(&["correlate"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 14);
    assert_eq!(column(&csv, "E_disentangled")[0], "-0.500000000");
}

#[test]
fn simulate_sixty_degrees_within_four_standard_errors() {
    let out = eprsim(&["simulate", "--trials", "1000000", "--angles-deg", "60", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    let e: f64 = column(&csv, "e_hat")[0].parse().unwrap();
    let se: f64 = column(&csv, "std_err")[0].parse().unwrap();
    assert_eq!(column(&csv, "e_analytic")[0], "-0.500000000");
    assert!((e + 0.5).abs() < 4.0 * se);
}

#[test]
fn shard_count_does_not_change_output() {
    let base = [
        "simulate",
        "--model",
        "disentangled",
        "--geometry",
        "sphere",
        "--trials",
        "150000",
        "--seed",
        "8",
    ];
    let one = eprsim(&[&base[..], &["--shards", "1"]].concat());
    let many = eprsim(&[&base[..], &["--shards", "6"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"command": "correlate", "angles_deg": [0, 60], "format": "json"}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = eprsim(&["--config", cfg]);
    let v: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);

    let overridden = eprsim(&["--config", cfg, "--angles-deg", "90", "--format", "csv"]);
    let csv = stdout(&overridden);
    assert_eq!(column(&csv, "theta_ab_deg"), ["90.0000000"]);
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"command": "chsh", "trails": 5}"#).unwrap();
    let out = eprsim(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trails"));
}

#[test]
fn bad_model_names_the_field() {
    let out = eprsim(&["chsh", "--model", "mixture:1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`model`"));
}

#[test]
fn missing_command_exits_two() {
    let out = eprsim(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("command"));
}

#[test]
fn output_path_receives_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("chsh.csv");
    let out = eprsim(&["chsh", "--output", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = fs::read_to_string(&file).unwrap();
    assert_eq!(column(&csv, "S"), ["2.82842712", "1.41421356"]);
}

#[test]
fn flat_profile_fit_exits_three() {
    // pure disentangled data with a free background fits every λ equally well
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let mut csv = String::from("x_rad,rate,std_err\n");
    for k in 0..13 {
        let x = (30.0 * k as f64).to_radians();
        csv.push_str(&format!("{x},{},0.001\n", 0.125 * (1.0 - 0.5 * x.cos())));
    }
    fs::write(&data, csv).unwrap();
    let path = data.to_str().unwrap();

    let out = eprsim(&["fit", "--experiment", "gisin", "--input", path, "--fit-background"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let plain = eprsim(&["fit", "--experiment", "gisin", "--input", path]);
    assert_eq!(plain.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&plain.stdout).unwrap();
    assert_eq!(v["lambda_hat"], 1.0);
}

#[test]
fn synth_then_fit_round_trip_on_kim() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("kim.csv");
    let path = data.to_str().unwrap();
    let synth = eprsim(&[
        "synth",
        "--experiment",
        "kim",
        "--model",
        "mixture:0.3",
        "--angles-deg",
        "10,30,50,70,110,130,150,170",
        "--counts",
        "400000",
        "--seed",
        "2",
        "--output",
        path,
    ]);
    assert_eq!(synth.status.code(), Some(0), "{}", stderr(&synth));
    assert!(fs::read_to_string(&data)
        .unwrap()
        .starts_with("x_rad,rate,std_err,branch\n"));

    let fit = eprsim(&["fit", "--experiment", "kim", "--input", path, "--format", "csv"]);
    assert_eq!(fit.status.code(), Some(0), "{}", stderr(&fit));
    let lambda: f64 = column(&stdout(&fit), "lambda_hat")[0].parse().unwrap();
    assert!((lambda - 0.3).abs() < 0.05, "lambda_hat {lambda}");
}

#[test]
fn synth_rejects_json_format() {
    let out = eprsim(&[
        "synth",
        "--experiment",
        "gisin",
        "--model",
        "entangled",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`format`"));
}
