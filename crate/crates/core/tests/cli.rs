use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cracklab"))
}

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn header_hash(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().strip_prefix("# config_hash=").expect("hash header").to_string()
}

const SPHERE_TOML: &str = r#"
dimension = 3
validity_radius = 0.5
radius = 0.125
crack = { family = "flat" }

[boundary]
source = "manufactured"
k = 1
m = 1
amplitude = 1.0

[spectrum]
k_max = 3
cells = 0
"#;

#[test]
fn spectrum_reports_exact_rungs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sphere.toml");
    fs::write(&cfg, SPHERE_TOML).unwrap();
    let out = dir.path().join("out");
    let o = run(&["spectrum"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("spectrum.json"));
    let exact: Vec<&str> = s["rungs"].as_array().unwrap().iter().map(|r| r["exact"].as_str().unwrap()).collect();
    assert_eq!(exact, ["3/4", "2/1", "15/4"]);
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn manufactured_frequency_snaps_and_stamps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("flat2d_manufactured_k1.toml");
    let o = run(&["frequency"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&dir.path().join("fit.json"));
    assert_eq!(fit["snapped_k0"], 1);
    assert!((fit["gamma"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let csv_hash = header_hash(&dir.path().join("frequency.csv"));
    assert_eq!(fit["config_hash"].as_str().unwrap(), csv_hash);
}

#[test]
fn seed_enters_the_hash_but_output_directory_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("flat2d_manufactured_k1.toml");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run(&["frequency"], &cfg, &a).status.success());
    assert!(run(&["frequency"], &cfg, &b).status.success());
    assert!(run(&["frequency", "--seed", "7"], &cfg, &c).status.success());
    let (ha, hb, hc) = (header_hash(&a.join("frequency.csv")), header_hash(&b.join("frequency.csv")), header_hash(&c.join("frequency.csv")));
    assert_eq!(ha, hb);
    assert_ne!(ha, hc);
}

#[test]
fn solved_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("flat2d_perturbed.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["blowup", "--threads", "4"], &cfg, &a).status.success());
    assert!(bin().args(["blowup", "--threads", "1"]).arg("--config").arg(&cfg).arg("--out").arg(&b).status().unwrap().success());
    for name in ["blowup.json", "profile.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    let report = json(&a.join("blowup.json"));
    assert!(report["cross_route_discrepancy"].as_f64().unwrap() < 0.05);
    let profile = fs::read_to_string(a.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().nth(1), Some("x1,x2,w_lambda,profile"));
}

#[test]
fn solve_writes_mesh_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve"], &bundled("flat2d_perturbed.toml"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let solve = json(&dir.path().join("solve.json"));
    let hash = solve["config_hash"].as_str().unwrap().to_string();
    for name in ["mesh.txt", "field.txt"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().nth(1), Some(format!("config_hash {hash}").as_str()), "{name}");
    }
}

#[test]
fn audit_passes_on_the_manufactured_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["audit"], &bundled("flat2d_manufactured_k1.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&dir.path().join("audit.json"))["passed"], true);
}

#[test]
fn missing_config_is_an_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let o = run(&["frequency"], &missing, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.toml"));
}

#[test]
fn unknown_keys_and_bad_usage_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("{SPHERE_TOML}\nunexpected = 1\n")).unwrap();
    assert_eq!(run(&["spectrum"], &cfg, dir.path()).status.code(), Some(1));
    assert_eq!(bin().arg("no-such-command").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn approx_is_rejected_outside_the_plane() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sphere.toml");
    fs::write(&cfg, SPHERE_TOML).unwrap();
    let o = run(&["approx"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
}
