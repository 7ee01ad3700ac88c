use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_toda-brane"));
    c.env_remove("TODA_BRANE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn out_dir(tmp: &TempDir, name: &str) -> String {
    tmp.path().join(name).to_str().unwrap().to_string()
}

const M2M5: &str = r#"{
  "dims": [2, 1, 2, 5],
  "branes": [
    {"color": "F4", "type": "electric", "index_set": [2, 3], "epsilon": -1, "charge": 1.0},
    {"color": "F4", "type": "magnetic", "index_set": [2, 4], "epsilon": -1, "charge": 1.0}
  ]
}"#;

#[test]
fn degrees_of_a4() {
    let out = run(&["degrees", "--algebra", "A4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "4 6 6 4");
}

#[test]
fn degrees_of_c2_and_explicit_matrix() {
    assert_eq!(stdout(&run(&["degrees", "--algebra", "C2"])).trim(), "4 3");
    assert_eq!(stdout(&run(&["degrees", "--matrix", "2,-1;-1,2"])).trim(), "2 2");
    let out = run(&["degrees", "--matrix", "2,-1;-1,3"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["degrees"])), 1);
}

#[test]
fn analyze_preset_classifies_a2() {
    let out = run(&["analyze", "--preset", "m2m5_dyon"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("classification: A2"), "{text}");
    assert!(text.contains("degrees: 2 2"));
    assert!(text.contains("all restrictions satisfied"));
}

#[test]
fn analyze_config_file_matches_preset() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "m2m5.json", M2M5);
    let out = run(&["analyze", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let from_file: Vec<String> = stdout(&out).lines().skip(1).map(str::to_string).collect();
    let preset: Vec<String> = stdout(&run(&["analyze", "--preset", "m2m5_dyon"])).lines().skip(1).map(str::to_string).collect();
    assert_eq!(from_file, preset);
}

#[test]
fn analyze_rejects_sphere_brane() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sphere.json",
        r#"{"dims":[2,1,2,5],"branes":[{"color":"F4","type":"electric","index_set":[1,2],"epsilon":-1,"charge":1.0}]}"#,
    );
    let out = run(&["analyze", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("index 1"), "{}", stderr(&out));
}

#[test]
fn analyze_degenerate_coupling_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "deg.json",
        r#"{"dims":[2,1,2,5],"branes":[
            {"color":"F4","type":"electric","index_set":[2,3],"epsilon":-1,"charge":1.0},
            {"color":"F4","type":"electric","index_set":[2,3],"epsilon":-1,"charge":2.0}]}"#,
    );
    let out = run(&["analyze", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("det B = 0"), "{}", stderr(&out));
}

#[test]
fn analyze_malformed_json_reports_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\"dims\": [2, 1],\n \"branes\": [\n  {\"color\": oops}\n]}\n");
    let out = run(&["analyze", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("oops"), "{err}");
}

#[test]
fn analyze_missing_time_is_hard_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "notime.json",
        r#"{"dims":[2,1,2,5],"branes":[{"color":"F4","type":"electric","index_set":[3,4],"epsilon":-1,"charge":1.0}]}"#,
    );
    let out = run(&["analyze", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("[TIME]"));
}

#[test]
fn missing_config_is_io_failure() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = run(&["analyze", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).starts_with("error[io]"));
}

#[test]
fn usage_errors_are_validation_failures() {
    assert_eq!(code(&run(&["solve"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["analyze", "--preset", "m2m5_dyon", "--algebra", "A2"])), 1);
    assert_eq!(code(&run(&["analyze", "--preset", "nope"])), 1);
}

#[test]
fn manifest_invariants_enforced() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "x");
    assert_eq!(code(&run(&["solve", "--mu", "1", "--grid", "1", "--out", &out])), 1);
    assert_eq!(code(&run(&["solve", "--mu", "-1", "--out", &out])), 1);
    assert_eq!(code(&run(&["solve", "--mu", "1", "--tol", "0", "--out", &out])), 1);
    assert_eq!(code(&run(&["sweep", "--mu", "0:1:3", "--out", &out])), 1);
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn solver_failure_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["solve", "--algebra", "A1", "--bbar", "5", "--mu", "1", "--out", &out_dir(&tmp, "s")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error[solver]"));
}

#[test]
fn solve_writes_coefficients_and_csv() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("solve");
    let out = run(&["solve", "--preset", "m2m5_dyon", "--mu", "1.0", "--grid", "11", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sol = json(&dir.join("solution.json"));
    assert_eq!(sol["degrees"], serde_json::json!([2, 2]));
    let c = sol["coefficients"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    for s in 0..2 {
        for k in 0..2 {
            assert!((c[0][k].as_f64().unwrap() - c[1][k].as_f64().unwrap()).abs() <= 1e-12);
        }
        assert_eq!(c[s].as_array().unwrap().len(), 2);
    }
    assert!(sol["grid_residual"].as_f64().unwrap() <= 1e-10);

    let (header, rows) = csv_rows(&dir.join("moduli.csv"));
    assert_eq!(header, ["z", "H1", "H2"]);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    let z_end: f64 = rows[10][0].parse().unwrap();
    assert!((z_end - 0.5).abs() < 1e-15);
    // H(z) from the CSV matches the JSON coefficients
    for row in &rows {
        let z: f64 = row[0].parse().unwrap();
        let h: f64 = row[1].parse().unwrap();
        let p1 = c[0][0].as_f64().unwrap();
        let p2 = c[0][1].as_f64().unwrap();
        assert!((h - (1.0 + p1 * z + p2 * z * z)).abs() < 1e-14);
    }
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["grid"], 11);
}

#[test]
fn csv_uses_round_trip_precision() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("p");
    run(&["solve", "--mu", "0.7", "--out", dir.to_str().unwrap()]);
    let (_, rows) = csv_rows(&dir.join("moduli.csv"));
    for cell in rows.iter().flatten() {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{cell}");
    }
}

#[test]
fn verify_preset_agrees() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("v");
    let out = run(&["verify", "--preset", "m2m5_dyon", "--shoot", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("max discrepancy"));
    let v = json(&dir.join("verify.json"));
    assert!(v["max_discrepancy"].as_f64().unwrap() <= 1e-8);
    assert!(v["shooting_slope_error"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["passed"], true);
}

#[test]
fn verify_seed_controls_random_bbar() {
    let tmp = TempDir::new().unwrap();
    let draw = |name: &str, seed: Option<&str>, flag: &str| {
        let dir = tmp.path().join(name);
        let mut cmd = bin();
        cmd.args(["verify", "--algebra", "A2", "--seed", flag, "--out", dir.to_str().unwrap()]);
        if let Some(s) = seed {
            cmd.env("TODA_BRANE_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        json(&dir.join("verify.json"))["bbar"].clone()
    };
    let a = draw("a", None, "5");
    let b = draw("b", None, "5");
    let c = draw("c", None, "6");
    let d = draw("d", Some("5"), "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d);
    for x in a.as_array().unwrap() {
        assert!(x.as_f64().unwrap() < 0.0);
    }
}

#[test]
fn report_prints_table_and_writes_metric() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("r");
    let out = run(&[
        "report", "--preset", "m2m5_dyon", "--mu", "1.0", "--q1", "1.0", "--q2", "1.0", "--grid", "20", "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("T_H ="));
    assert!(text.contains("verdict: exists-candidate"));
    let (header, rows) = csv_rows(&dir.join("metric.csv"));
    assert_eq!(header, ["z", "R", "radial", "sphere", "time", "g3", "g4"]);
    assert_eq!(rows.len(), 20);
    let r = json(&dir.join("report.json"));
    let t = r["t_hawking"].as_f64().unwrap();
    let h0: Vec<f64> = r["horizon_values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // dbar = 1: T = 1/(4 pi 2 mu) prod H0^{-1/2}
    let expected = 1.0 / (8.0 * std::f64::consts::PI) / (h0[0] * h0[1]).sqrt();
    assert!((t - expected).abs() <= 1e-14 * expected);
    assert!(!dir.join("kk_lift.csv").exists());
}

#[test]
fn report_kk_preset_writes_lift() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("kk");
    let out = run(&["report", "--preset", "kk_dyon", "--mu", "0.5", "--q2", "0.5", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&dir.join("kk_lift.csv"));
    assert_eq!(header, ["z", "four_block", "fifth_block", "phi"]);
    assert!(!rows.is_empty());
    assert_eq!(json(&dir.join("report.json"))["kk_lift"], "dyon");
}

#[test]
fn report_needs_configuration() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["report", "--algebra", "A2", "--bbar", "-1,-1", "--mu", "1", "--out", &out_dir(&tmp, "r")]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_mu_gives_ten_rows() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sw");
    let out = run(&["sweep", "--mu", "0.1:1.0:10", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(header[0], "mu");
    assert_eq!(rows.len(), 10);
    let mus: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(mus[0], 0.1);
    assert_eq!(mus[9], 1.0);
    assert!(mus.windows(2).all(|w| w[0] < w[1]));
    assert!(rows.iter().all(|r| r[1] == "ok"));
}

#[test]
fn sweep_output_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let mut texts = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let dir = tmp.path().join("same");
        let out = bin()
            .args(["sweep", "--mu", "0.2:2.0:12", "--out", dir.to_str().unwrap()])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "run {i}: {}", stderr(&out));
        texts.push((fs::read(dir.join("sweep.csv")).unwrap(), fs::read(dir.join("manifest.json")).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[1], texts[2]);
}

#[test]
fn sweep_over_charges() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("q");
    let out = run(&["sweep", "--mu", "1.0", "--q", "0.5:2.0:4", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(&header[..3], ["mu", "q", "status"]);
    assert_eq!(rows.len(), 4);
    // larger charges push the horizon values up
    let h0: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(h0.windows(2).all(|w| w[0] < w[1]), "{h0:?}");
    assert_eq!(code(&run(&["sweep", "--mu", "0.1:1:3", "--q", "1:2:2", "--out", &out_dir(&tmp, "z")])), 1);
}

#[test]
fn sweep_keeps_failed_points() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("f");
    let out = run(&["sweep", "--algebra", "A1", "--bbar", "5", "--mu", "1.0:3.0:3", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(header, ["mu", "status", "H10", "P1", "residual"]);
    assert_eq!(rows[0][1], "solver");
    assert_eq!(rows[0][2], "NaN");
    assert_eq!(rows[2][1], "ok");
}

#[test]
fn toda_energy_identity() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("t");
    let out = run(&["toda", "--m", "3", "--mu-bar", "0.8", "--h", "0.5", "--grid", "31", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let t = json(&dir.join("toda.json"));
    let e_tl = t["e_tl"].as_f64().unwrap();
    assert!((e_tl - t["e_tl_from_matrix"].as_f64().unwrap()).abs() <= 1e-10);
    assert!(t["max_energy_drift"].as_f64().unwrap() <= 1e-6);
    assert!(t["max_equation_residual"].as_f64().unwrap() <= 1e-7);
    assert_eq!(t["degrees"], serde_json::json!([3, 4, 3]));
    let (header, rows) = csv_rows(&dir.join("toda.csv"));
    assert_eq!(header, ["u", "z", "q1", "q2", "q3", "H1", "H2", "H3"]);
    assert_eq!(rows.len(), 31);
}

#[test]
fn toda_with_prescribed_b() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("tb");
    let out = run(&["toda", "--m", "2", "--b", "0.3,0.2", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let b = json(&dir.join("toda.json"))["b"].clone();
    assert!((b[0].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert!((b[1].as_f64().unwrap() - 0.2).abs() < 1e-9);
    assert_eq!(code(&run(&["toda", "--m", "0", "--out", &out_dir(&tmp, "z")])), 1);
}
