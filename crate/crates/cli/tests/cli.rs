use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fluxcz");

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// The 500 MHz config with scan grids shrunk to a handful of points.
fn small_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(bundled("paper_500MHz.cfg")).unwrap();
    let text = text
        .replace("flux = { start = 0.0, stop = 0.45, points = 91 }", "flux = { start = 0.0, stop = 0.4, points = 5 }")
        .replace("freq = { start = 10.70, stop = 11.00, points = 61 }", "freq = { start = 10.76, stop = 10.80, points = 3 }")
        .replace("time = { start = 2.0, stop = 200.0, points = 100 }", "time = { start = 5.0, stop = 15.0, points = 3 }");
    let path = dir.join("small.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env_remove("FLUXCZ_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn sidecar(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v
}

#[test]
fn spectrum_runs_on_bundled_configs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["paper_500MHz.cfg", "paper_300MHz.cfg"] {
        let out = tmp.path().join(name);
        let o = run(&["spectrum"], &bundled(name), &out);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        for f in ["fluxonium_levels.csv", "coupler.csv", "run.json"] {
            assert!(out.join(f).exists(), "{name}: missing {f}");
        }
        assert_eq!(sidecar(&out)["schema_version"], 1);
    }
}

#[test]
fn malformed_config_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    let text = fs::read_to_string(bundled("paper_500MHz.cfg")).unwrap().replace("[couplings]", "[couplings]\nj_typo = 1.0");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["spectrum"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("j_typo"));
    assert!(!out.exists());
}

#[test]
fn empty_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.cfg");
    let text = fs::read_to_string(bundled("paper_500MHz.cfg"))
        .unwrap()
        .replace("flux = { start = 0.0, stop = 0.45, points = 91 }", "flux = []");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["shift-scan"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shift_scan.flux"));
    assert!(!out.exists());
}

#[test]
fn rerun_is_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["chevron", "--workers", "1"], &cfg, &a).status.success());
    assert!(run(&["chevron", "--workers", "3"], &cfg, &b).status.success());
    assert_eq!(fs::read(a.join("chevron.csv")).unwrap(), fs::read(b.join("chevron.csv")).unwrap());
    assert_eq!(sidecar(&a), sidecar(&b));
}

#[test]
fn resume_reuses_finished_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("scan");
    assert!(run(&["shift-scan"], &cfg, &out).status.success());
    let first = fs::read(out.join("shift_scan.csv")).unwrap();
    assert_eq!(sidecar(&out)["resumed"], 0);

    // a torn final line from an interrupted run is dropped, not fatal
    let journal = out.join("points.jsonl");
    let mut lines = fs::read_to_string(&journal).unwrap();
    lines.push_str("{\"key\":\"trunc");
    fs::write(&journal, lines).unwrap();

    let o = run(&["shift-scan", "--resume"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sidecar(&out)["resumed"], 5);
    assert_eq!(fs::read(out.join("shift_scan.csv")).unwrap(), first);

    // a different step size is a different point set
    let o = run(&["shift-scan", "--resume", "--dt", "1.25"], &cfg, &out);
    assert!(o.status.success());
    assert_eq!(sidecar(&out)["resumed"], 0);
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let root = tmp.path().join("root");
    let o = Command::new(BIN)
        .args(["shift-scan", "--config"])
        .arg(&cfg)
        .env("FLUXCZ_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("small").join("shift-scan").join("shift_scan.csv").exists());
}
