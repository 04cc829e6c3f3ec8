use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qutrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qutrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn out_dir(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

const FIG5_LINEAR: &str = r#"{
  "system": {"omega": 0.02, "mu": 6},
  "noise": {"gamma": 0, "Gamma": 0, "nbar": 0},
  "initial": {"C0": 0},
  "t_f": 3500,
  "population": {"kind": "sine_squared", "Pi": 1, "Pf": 0},
  "phase": {"kind": "linear", "alpha": 0.001}
}"#;

const FREE: &str = r#"{
  "system": {"omega": 0.02, "mu": 6},
  "noise": {"gamma": 0, "Gamma": 0, "nbar": 0},
  "initial": {"C0": 0.3},
  "t_f": 1000,
  "population": {"kind": "constant", "P": 0.5},
  "phase": {"kind": "linear", "alpha": 0}
}"#;

const REACH: &str = r#"{
  "system": {"omega": 0.02, "mu": 6},
  "noise": {"gamma": 0.001, "Gamma": 0, "nbar": 0},
  "initial": {"C0": 0.02},
  "t_f": 1500,
  "numerics": {"n_grid": 11, "n_t": 200}
}"#;

#[test]
fn synth_unitary_inversion_has_symmetric_envelope() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "s");
    let o = qutrack(&["--figure", "5", "--out", &out, "synth"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("crossing times: 1750"));
    let csv = fs::read_to_string(Path::new(&out).join("waveform.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,E,A,Lambda,X,Y"));
    let amp: Vec<f64> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap().abs())
        .collect();
    assert_eq!(amp.len(), 2001);
    for i in 0..amp.len() {
        let j = amp.len() - 1 - i;
        assert!((amp[i] - amp[j]).abs() <= 1e-8 * amp[i].max(amp[j]), "{i}");
    }
    assert!(Path::new(&out).join("manifest.json").exists());
}

#[test]
fn phase_constraint_violation_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", FIG5_LINEAR);
    let o = qutrack(&["--config", &cfg, "--out", &out_dir(&tmp, "o"), "synth"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("1750"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_3() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let missing_mu = write_config(tmp.path(), "a.json", &FREE.replace(", \"mu\": 6", ""));
    assert_eq!(
        code(&qutrack(&["--config", &missing_mu, "--out", &out, "synth"])),
        3
    );
    let unknown = write_config(
        tmp.path(),
        "b.json",
        &FREE.replace("\"t_f\"", "\"tf_typo\": 1, \"t_f\""),
    );
    assert_eq!(
        code(&qutrack(&["--config", &unknown, "--out", &out, "synth"])),
        3
    );
    let bad_c0 = write_config(
        tmp.path(),
        "c.json",
        &FREE.replace("\"C0\": 0.3", "\"C0\": 0.6"),
    );
    assert_eq!(
        code(&qutrack(&["--config", &bad_c0, "--out", &out, "synth"])),
        3
    );
    assert_eq!(
        code(&qutrack(&["--figure", "42", "--out", &out, "synth"])),
        3
    );
    assert_eq!(code(&qutrack(&["--out", &out, "synth"])), 3);
    assert_eq!(
        code(&qutrack(&[
            "--figure",
            "5",
            "--config",
            &missing_mu,
            "synth"
        ])),
        3
    );
    assert_eq!(
        code(&qutrack(&["--figure", "5", "--out", &out, "unknown-cmd"])),
        3
    );
    assert_eq!(
        code(&qutrack(&[
            "--config",
            "/nonexistent.json",
            "--out",
            &out,
            "synth"
        ])),
        3
    );
}

#[test]
fn free_evolution_tracks_trivially() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", FREE);
    let out = out_dir(&tmp, "o");
    let o = qutrack(&["--config", &cfg, "--out", &out, "track"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["max_population_error"].as_f64().unwrap() < 1e-12);
    let traj = fs::read_to_string(Path::new(&out).join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,P_num,C_num,Phi_num,rho01_re,rho01_im\n"));
}

#[test]
fn swapped_thermal_rates_break_tracking() {
    let tmp = TempDir::new().unwrap();
    let fig8: serde_json::Value =
        serde_json::from_str(qutrack_core::config::figure_json(8).unwrap()).unwrap();
    let mut rwa = fig8.clone();
    rwa["numerics"] = serde_json::json!({"frame": "rwa"});
    let mut swapped = rwa.clone();
    swapped["numerics"]["numerator"] = "swapped_rates".into();

    let ok = write_config(tmp.path(), "ok.json", &rwa.to_string());
    let o = qutrack(&["--config", &ok, "--out", &out_dir(&tmp, "a"), "track"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let bad = write_config(tmp.path(), "bad.json", &swapped.to_string());
    let out = out_dir(&tmp, "b");
    let o = qutrack(&["--config", &bad, "--out", &out, "track"]);
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), stderr(&o));
    assert!(Path::new(&out).join("report.json").exists());
}

#[test]
fn reach_minimal_grid_and_known_cell() {
    let tmp = TempDir::new().unwrap();
    let two = write_config(
        tmp.path(),
        "two.json",
        &REACH.replace("\"n_grid\": 11", "\"n_grid\": 2"),
    );
    let out = out_dir(&tmp, "two");
    assert_eq!(
        code(&qutrack(&["--config", &two, "--out", &out, "reach"])),
        0
    );
    let csv = fs::read_to_string(Path::new(&out).join("reach.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let pgm = fs::read(Path::new(&out).join("reach.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));

    let cfg = write_config(tmp.path(), "r.json", REACH);
    let out = out_dir(&tmp, "r");
    assert_eq!(
        code(&qutrack(&["--config", &cfg, "--out", &out, "reach"])),
        0
    );
    let csv = fs::read_to_string(Path::new(&out).join("reach.csv")).unwrap();
    let cell = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| {
            (f[0].parse::<f64>().unwrap() - 0.9).abs() < 1e-12
                && (f[1].parse::<f64>().unwrap() - 0.4).abs() < 1e-12
        })
        .unwrap();
    assert_eq!(cell[2], "3");
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "r.json",
        &REACH.replace("\"Gamma\": 0", "\"Gamma\": 0.001"),
    );
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    assert_eq!(
        code(&qutrack(&[
            "--config",
            &cfg,
            "--out",
            &a,
            "--workers",
            "1",
            "reach"
        ])),
        0
    );
    assert_eq!(
        code(&qutrack(&[
            "--config",
            &cfg,
            "--out",
            &b,
            "--workers",
            "3",
            "reach"
        ])),
        0
    );
    for f in ["reach.csv", "reach.pgm", "manifest.json"] {
        assert_eq!(
            fs::read(Path::new(&a).join(f)).unwrap(),
            fs::read(Path::new(&b).join(f)).unwrap(),
            "{f}"
        );
    }
    let (c, d) = (out_dir(&tmp, "c"), out_dir(&tmp, "d"));
    qutrack(&["--figure", "2", "--out", &c, "track"]);
    qutrack(&["--figure", "2", "--out", &d, "track"]);
    assert_eq!(
        fs::read(Path::new(&c).join("trajectory.csv")).unwrap(),
        fs::read(Path::new(&d).join("trajectory.csv")).unwrap()
    );
}

#[test]
fn steady_table_and_pure_dephasing() {
    let tmp = TempDir::new().unwrap();
    let thermal = REACH.replace(
        "\"Gamma\": 0, \"nbar\": 0",
        "\"Gamma\": 0.001, \"nbar\": 0.3",
    );
    let cfg = write_config(tmp.path(), "s.json", &thermal);
    let out = out_dir(&tmp, "s");
    let o = qutrack(&["--config", &cfg, "--out", &out, "steady"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("8.1250000000000000e-1"));
    let csv = fs::read_to_string(Path::new(&out).join("steady.csv")).unwrap();
    assert!(csv.starts_with("P,C_inf,C_inf_sq,required_C0,k,feasible\n"));
    let half = csv
        .lines()
        .find(|l| l.starts_with("5.0000000000000000e-1,"))
        .unwrap();
    assert_eq!(half.split(',').nth(1).unwrap(), "0.0000000000000000e0");

    let zero_t = REACH.replace("\"Gamma\": 0, \"nbar\": 0", "\"Gamma\": 0.001, \"nbar\": 0");
    let cfg = write_config(tmp.path(), "z.json", &zero_t);
    let out = out_dir(&tmp, "z");
    assert_eq!(
        code(&qutrack(&["--config", &cfg, "--out", &out, "steady"])),
        0
    );
    let csv = fs::read_to_string(Path::new(&out).join("steady.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(
        last.starts_with("1.0000000000000000e0,0.0000000000000000e0,"),
        "{last}"
    );

    let cfg = write_config(tmp.path(), "d.json", REACH);
    assert_eq!(
        code(&qutrack(&[
            "--config",
            &cfg,
            "--out",
            &out_dir(&tmp, "d"),
            "steady"
        ])),
        2
    );
}

#[test]
fn propagate_and_coherence_sweep() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "p");
    let o = qutrack(&["--figure", "6", "--out", &out, "propagate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("final state"));
    assert!(Path::new(&out).join("trajectory.csv").exists());

    let out = out_dir(&tmp, "c");
    assert_eq!(
        code(&qutrack(&["--figure", "7", "--out", &out, "coherence"])),
        0
    );
    for g in ["0.0001", "0.001", "0.005"] {
        assert!(
            Path::new(&out)
                .join(format!("coherence_gamma={g}.csv"))
                .exists(),
            "{g}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["command"], "coherence");
}
