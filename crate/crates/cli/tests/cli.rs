use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nv_odmr::dynamics::{DecayHistogram, HistogramKind};
use nv_odmr::fitting::fit_exponential;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

fn nvodmr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvodmr")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = nvodmr(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> String {
    let out = nvodmr(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn manifest(path: &Path) -> serde_json::Value {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

#[test]
fn zeeman_lower_line_closes_near_lac() {
    let dir = tempfile::tempdir().unwrap();
    let bulk = preset("bulk.json");
    ok(dir.path(), &["zeeman", "--config", bulk.to_str().unwrap(), "--bmin", "0", "--bmax", "600", "--steps", "120", "--out", "z.csv"]);
    let (header, rows) = read_csv(&dir.path().join("z.csv"));
    assert_eq!(header, ["b_gauss", "omega_minus_mhz", "omega_plus_mhz"]);
    assert_eq!(rows.len(), 121);
    let lowest = rows.iter().min_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((lowest[0] - 506.0).abs() <= 5.0 && lowest[1] < 15.0, "{lowest:?}");
    let m = manifest(&dir.path().join("z.csv"));
    assert_eq!(m["command"], "zeeman");
    assert_eq!(m["outputs"][0], "z.csv");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn nanocrystal_decay_after_ground_pi_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let nano = preset("nano.json");
    ok(dir.path(), &["decay", "--config", nano.to_str().unwrap(), "--pi-gs", "--out", "d.csv"]);
    let (header, rows) = read_csv(&dir.path().join("d.csv"));
    assert_eq!(header, ["t_ns", "pl"]);
    let width = rows[1][0] - rows[0][0];
    let values = rows.iter().map(|r| r[1]).collect();
    let hist = DecayHistogram::uniform(rows[0][0], width, values, HistogramKind::Expected).unwrap();
    let tau = fit_exponential(&hist, (0.0, 200.0)).unwrap().get("tau").unwrap();
    assert!((tau - 12.7).abs() <= 0.2, "{tau}");
}

#[test]
fn zero_field_spectrum_has_two_dips() {
    let dir = tempfile::tempdir().unwrap();
    let bulk = preset("bulk.json");
    ok(dir.path(), &["spectrum", "--config", bulk.to_str().unwrap(), "--b", "0", "--out", "s.csv"]);
    let (header, rows) = read_csv(&dir.path().join("s.csv"));
    assert_eq!(header, ["frequency_mhz", "pl_normalized"]);
    let minima: Vec<f64> = rows
        .windows(3)
        .filter(|w| w[1][1] < w[0][1] && w[1][1] < w[2][1])
        .map(|w| w[1][0])
        .collect();
    assert_eq!(minima, [1423.0, 2870.0]);
}

#[test]
fn nanocrystal_preset_reproduces_its_calibration_lines() {
    let dir = tempfile::tempdir().unwrap();
    let nano = preset("nano.json");
    let stdout = ok(dir.path(), &["spectrum", "--config", nano.to_str().unwrap(), "--fmin", "900", "--fmax", "3000", "--out", "n.csv"]);
    let line = stdout.lines().find(|l| l.starts_with("dips_mhz")).unwrap();
    let dips: Vec<f64> = line
        .trim_start_matches("dips_mhz = [")
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    assert!(dips.iter().any(|d| (d - 1000.0).abs() < 0.5), "{dips:?}");
    assert!(dips.iter().any(|d| (d - 2844.0).abs() < 0.5), "{dips:?}");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("empty.json"), "").unwrap();
    let msg = fails_with(p, &["zeeman", "--config", "empty.json"], 2);
    assert!(msg.contains("config"), "{msg}");

    std::fs::write(p.join("strain.json"), r#"{"excited": {"d_zfs": 1423, "e_strain": 1500, "g_factor": 2.01}}"#).unwrap();
    let msg = fails_with(p, &["zeeman", "--config", "strain.json"], 2);
    assert!(msg.contains("e_strain"), "{msg}");

    std::fs::write(p.join("typo.json"), r#"{"rates": {"gamma_rad": 0.04, "gama_s": 0.003}}"#).unwrap();
    let msg = fails_with(p, &["zeeman", "--config", "typo.json"], 2);
    assert!(msg.contains("rates") && msg.contains("gama_s"), "{msg}");

    fails_with(p, &["zeeman", "--config", "missing.json"], 2);
    fails_with(p, &["rotation"], 2);
    let msg = fails_with(p, &["spectrum", "--fstep", "0"], 2);
    assert!(msg.contains("--fstep"), "{msg}");
    let msg = fails_with(p, &["decay", "--fidelity", "1.5"], 2);
    assert!(msg.contains("--fidelity"), "{msg}");
    fails_with(p, &["fit-decay", "--input", "nothing.csv"], 2);
    fails_with(p, &["frobnicate"], 2);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "x").unwrap();
    fails_with(dir.path(), &["rabi", "--out", "blocker/r.csv"], 1);
}

#[test]
fn outputs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for out in ["a.csv", "b.csv"] {
        ok(p, &["decay", "--pi-gs", "--mode", "mc", "--shots", "20000", "--seed", "9", "--out", out]);
    }
    let a = std::fs::read(p.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.csv")).unwrap());
    assert_eq!(manifest(&p.join("a.csv"))["config_sha256"], manifest(&p.join("b.csv"))["config_sha256"]);
    assert_eq!(manifest(&p.join("a.csv"))["seed"], 9);

    ok(p, &["decay", "--pi-gs", "--mode", "mc", "--shots", "20000", "--seed", "10", "--out", "c.csv"]);
    assert_ne!(a, std::fs::read(p.join("c.csv")).unwrap());
}

#[test]
fn config_change_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("one.json"), r#"{"rates": {"gamma_s": 0.0033}}"#).unwrap();
    std::fs::write(p.join("two.json"), r#"{"rates": {"gamma_s": 0.0034}}"#).unwrap();
    ok(p, &["rabi", "--config", "one.json", "--out", "one.csv"]);
    ok(p, &["rabi", "--config", "two.json", "--out", "two.csv"]);
    assert_ne!(manifest(&p.join("one.csv"))["config_sha256"], manifest(&p.join("two.csv"))["config_sha256"]);
}

#[test]
fn decay_csv_parses_back_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["decay", "--pi-es-at", "10", "--out", "d.csv"]);
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut rebuilt = String::from("t_ns,pl\n");
    for line in text.lines().skip(1) {
        let (t, v) = line.split_once(',').unwrap();
        rebuilt.push_str(&format!("{},{}\n", t.parse::<f64>().unwrap(), v.parse::<f64>().unwrap()));
    }
    assert_eq!(rebuilt, text);
    assert!(!text.contains('\r'));
}

#[test]
fn fit_commands_round_trip_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["zeeman", "--bmin", "50", "--bmax", "450", "--steps", "40", "--out", "z.csv"]);
    let report = ok(p, &["fit-zeeman", "--input", "z.csv", "--out", "fz.csv"]);
    assert!(report.contains("D = "), "{report}");
    let (header, rows) = read_csv_fit(&p.join("fz.csv"));
    assert_eq!(header, "parameter,value,std_error");
    assert!((rows["D"] - 1423.0).abs() < 1e-6);
    assert!((rows["g"] - 2.01).abs() < 1e-9);

    ok(p, &["decay", "--pi-es-at", "10", "--out", "d.csv"]);
    ok(p, &["fit-decay", "--input", "d.csv", "--break", "10", "--out", "fd.csv"]);
    let (_, rows) = read_csv_fit(&p.join("fd.csv"));
    assert!((rows["tau_before"] - 23.0).abs() < 0.23);
    assert!((rows["tau_after"] - 12.7).abs() < 0.127);

    ok(p, &["spectrum", "--out", "s.csv"]);
    ok(p, &["fit-spectrum", "--input", "s.csv", "--centers", "1430,2865", "--out", "fs.csv"]);
    let (_, rows) = read_csv_fit(&p.join("fs.csv"));
    assert!((rows["dip0_center"] - 1423.0).abs() < 0.5);
    assert!((rows["dip1_center"] - 2870.0).abs() < 0.5);
}

fn read_csv_fit(path: &Path) -> (String, std::collections::HashMap<String, f64>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[0].to_string(), cells[1].parse().unwrap())
        })
        .collect();
    (header, rows)
}

#[test]
fn shipped_sequence_runs() {
    let dir = tempfile::tempdir().unwrap();
    let seq = preset("sequences/es_pi_at_10ns.json");
    ok(dir.path(), &["run-sequence", "--sequence", seq.to_str().unwrap(), "--out", "r.csv"]);
    let (header, rows) = read_csv(&dir.path().join("r.csv"));
    assert_eq!(header, ["t_ns", "pl"]);
    assert_eq!(rows.len(), 400);

    std::fs::write(dir.path().join("bad.json"), r#"{"segments": [{"type": "laser", "duration": 5}]}"#).unwrap();
    fails_with(dir.path(), &["run-sequence", "--sequence", "bad.json"], 2);
}

#[test]
fn rotation_and_lac_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["rotation", "--initial-dir", "1,1,1", "--step", "5", "--out", "r.csv"]);
    let (header, rows) = read_csv(&p.join("r.csv"));
    assert_eq!(header, ["angle_deg", "omega_minus_mhz", "omega_plus_mhz"]);
    assert_eq!(rows.len(), 73);
    // aligned at 0°: linear Zeeman lines at 92 G
    let z = 2.01 * 1.3996245 * 92.0;
    assert!((rows[0][1] - (1423.0 - z)).abs() < 1e-6 && (rows[0][2] - (1423.0 + z)).abs() < 1e-6);

    let stdout = ok(p, &["lac", "--misalignment", "2", "--out", "l.csv"]);
    assert!(stdout.contains("minima_gauss"), "{stdout}");
    let (header, rows) = read_csv(&p.join("l.csv"));
    assert_eq!(header, ["b_gauss", "pl_normalized"]);
    assert_eq!(rows.len(), 1201);
}
