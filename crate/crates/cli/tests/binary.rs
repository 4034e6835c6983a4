use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hartree-lab"))
        .args(args)
        .env("HARTREE_THREADS", "2")
        .output()
        .unwrap()
}

fn run(cmd: &str, config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    lab(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constants_pass_on_fine_grid_and_fail_on_coarse() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("constants", "[grid]\nm = 256\n", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&dir.path().join("out/constants.json"));
    assert_eq!(r["pass"], true);
    assert!((r["beta"].as_f64().unwrap() / 24.0 - 1.0).abs() < 1e-14);

    let dir = tempfile::tempdir().unwrap();
    let o = run("constants", "[grid]\nm = 16\n", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("constants", "[params]\nn = 2\n", dir.path()).status.code(), Some(1));
    assert_eq!(run("constants", "[grid]\nunknown = 1\n", dir.path()).status.code(), Some(1));
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lab(&["constants", "--config", "/nonexistent/run.toml"]).status.code(), Some(1));
}

#[test]
fn spectrum_report_has_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("spectrum", "[grid]\nm = 256\n", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&dir.path().join("out/spectral_report.json"));
    for key in ["e0", "residuals", "kernel_singulars", "coercivity_c", "identity_checks"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!((r["e0"].as_f64().unwrap() - 5.045658193376415).abs() < 1e-6);
    assert!(dir.path().join("out/y_plus.csv").exists());
}

#[test]
fn groundstate_evolution_is_deterministic_and_reclassifies() {
    let config = "[grid]\nm = 128\n[evolution]\ninitial = \"groundstate\"\nduration = 0.5\nexpect = \"converge_to_w\"\n";
    let dir = tempfile::tempdir().unwrap();
    let o = run("evolve", config, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = dir.path().join("out");
    let m = json(&out.join("run_manifest.json"));
    for key in ["params", "grid", "controls", "verdict", "fitted_rates", "seed"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["verdict"], "converge_to_w");
    let header = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(header.lines().any(|l| l.starts_with("t,")));

    let o = run("classify", config, dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&out.join("classification.json"))["verdict"], "converge_to_w");

    let again = tempfile::tempdir().unwrap();
    assert_eq!(run("evolve", config, again.path()).status.code(), Some(0));
    for f in ["trajectory.csv", "run_manifest.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.path().join("out").join(f)).unwrap(), "{f}");
    }
}
