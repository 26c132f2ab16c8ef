use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn harmsynth(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmsynth"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HARMSYNTH_SOLVER")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses lines of the form `  a + bj ...` into complex pairs.
fn eigenvalues(text: &str, header: &str) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in text.lines() {
        if line.starts_with(header) {
            inside = true;
            continue;
        }
        if !inside {
            continue;
        }
        if !line.starts_with("  ") {
            break;
        }
        let w: Vec<&str> = line.split_whitespace().collect();
        let re: f64 = w[0].parse().unwrap();
        let im: f64 = w[2].trim_end_matches('j').parse().unwrap();
        out.push((re, if w[1] == "-" { -im } else { im }));
    }
    out
}

#[test]
fn example_model_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmsynth(&["model", "example", "--band", "9", "-o", "m.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = harmsynth(&["spectrum", "-m", "m.json", "-r", "20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let core = eigenvalues(&stdout(&o), "core eigenvalues");
    assert_eq!(core.len(), 2);
    for (re, im) in core {
        assert!((re - 1.0).abs() < 1e-2, "{re}");
        assert!((im.abs() - 1.6).abs() < 0.1, "{im}");
    }
    assert!(stdout(&o).contains("unstable"));
}

#[test]
fn missing_model_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmsynth(&["spectrum", "-m", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model file not found"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(harmsynth(&["spectrum", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(harmsynth(&["frobnicate"], dir.path()).status.code(), Some(2));
    let o = harmsynth(&["synth", "-m", "m.json", "--method", "lqg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_and_inconsistent_models_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"omega\": 6.28, \"A\": ").unwrap();
    let o = harmsynth(&["model", "validate", "-m", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid model file"));

    harmsynth(&["model", "example", "--band", "3", "-o", "m.json"], dir.path());
    let text = fs::read_to_string(dir.path().join("m.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["B"] = v["Cz"].clone();
    fs::write(dir.path().join("dims.json"), v.to_string()).unwrap();
    let o = harmsynth(&["model", "validate", "-m", "dims.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = harmsynth(&["model", "validate", "-m", "m.json"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("n = 2, m = 1"));
}

#[test]
fn synth_writes_gain_and_stabilizes() {
    let dir = tempfile::tempdir().unwrap();
    harmsynth(&["model", "example", "--band", "30", "-o", "m.json"], dir.path());
    let o = harmsynth(
        &["synth", "-m", "m.json", "--method", "lqr-primal", "-r", "15", "-o", "out"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["gain.json", "gain_moduli.csv", "gain_samples.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let core = eigenvalues(&stdout(&o), "closed-loop core eigenvalues");
    assert_eq!(core.len(), 2);
    assert!(core.iter().all(|&(re, _)| re < 0.0));

    let gain: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/gain.json")).unwrap()).unwrap();
    assert_eq!(gain["method"], "lqr-primal");
    assert_eq!(gain["orders"]["r"], 15);
    assert!(gain["K"].is_object());

    let o = harmsynth(&["simulate", "-m", "m.json", "--gain", "out/gain.json", "-o", "sim"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sim/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u1,xref1,xref2"));
    let phases: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/tracking.json")).unwrap()).unwrap();
    assert_eq!(phases.as_array().unwrap().len(), 3);
    for ph in phases.as_array().unwrap() {
        assert!(ph["rms_error"].as_f64().unwrap() < 1e-2);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    harmsynth(&["model", "example", "--band", "6", "-o", "m.json"], dir.path());
    for out in ["a", "b"] {
        let o = harmsynth(&["synth", "-m", "m.json", "--method", "lqr-dual", "-r", "6", "-o", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["gain.json", "gain_moduli.csv", "gain_samples.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn solve_sdp_serves_as_external_solver() {
    let dir = tempfile::tempdir().unwrap();
    harmsynth(&["model", "example", "--band", "4", "-o", "m.json"], dir.path());
    let built_in = harmsynth(&["synth", "-m", "m.json", "-r", "4", "-o", "a"], dir.path());
    assert!(built_in.status.success(), "{}", stderr(&built_in));
    let cmd = format!("{} solve-sdp", env!("CARGO_BIN_EXE_harmsynth"));
    let external = Command::new(env!("CARGO_BIN_EXE_harmsynth"))
        .args(["synth", "-m", "m.json", "-r", "4", "-o", "b"])
        .current_dir(dir.path())
        .env("HARMSYNTH_SOLVER", cmd)
        .output()
        .unwrap();
    assert!(external.status.success(), "{}", stderr(&external));
    let read = |d: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.path().join(d).join("gain.json")).unwrap()).unwrap()
    };
    let (a, b) = (read("a"), read("b"));
    let (va, vb) = (a["value"].as_f64().unwrap(), b["value"].as_f64().unwrap());
    assert!((va - vb).abs() <= 1e-9 * va.abs(), "{va} vs {vb}");
}

#[test]
fn norms_of_a_random_stable_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmsynth(&["model", "random", "--seed", "3", "-o", "r.json"], dir.path());
    assert!(o.status.success());
    let o = harmsynth(&["norms", "-m", "r.json", "-r", "10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(value("h2") > 0.0);
    assert!(value("hinf") > 0.0);

    let o = harmsynth(&["model", "example", "--band", "3", "-o", "m.json"], dir.path());
    assert!(o.status.success());
    let o = harmsynth(&["norms", "-m", "m.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not stable"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    harmsynth(&["model", "random", "--seed", "1", "--band", "1", "-o", "r.json"], dir.path());
    let o = harmsynth(&["sweep", "-m", "r.json", "--method", "lqr-primal", "-r", "2,4,6", "-o", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("p,q,r,value,gain_distance,iterations"));
}
