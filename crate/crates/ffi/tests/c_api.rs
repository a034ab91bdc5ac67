use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cracklab_ffi::*;

const MANUFACTURED: &str = r#"
dimension = 2
validity_radius = 0.5
radius = 0.125
crack = { family = "flat" }
[boundary]
source = "manufactured"
k = 1
m = 1
amplitude = 1.0
[frequency]
r_min_ratio = 1e-3
points = 20
doubling_factors = [1.25, 1.5, 2.0]
doubling_slack = 0.1
envelope_sigma = 0.1
pohozaev_radii = 10
"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cracklab_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn ladder_returns_reduced_fractions() {
    let (mut n, mut d) = (0u64, 0u64);
    assert_eq!(unsafe { cracklab_ladder(2, 1, &mut n, &mut d) }, CracklabStatus::Ok);
    assert_eq!((n, d), (3, 4));
    assert_eq!(unsafe { cracklab_ladder(1, 2, &mut n, &mut d) }, CracklabStatus::Ok);
    assert_eq!((n, d), (1, 1));
    assert_eq!(unsafe { cracklab_ladder(2, 1, ptr::null_mut(), &mut d) }, CracklabStatus::NullPointer);
    assert!(last_error().contains("null"));
}

#[test]
fn exact_mode_rejects_points_off_the_sphere() {
    let mut v = 0.0;
    let theta = [0.0, -1.0];
    assert_eq!(unsafe { cracklab_exact_mode(1, theta.as_ptr(), 2, &mut v) }, CracklabStatus::Ok);
    // t = 3π/2: sin(3π/4)
    assert!((v - (0.75 * std::f64::consts::PI).sin()).abs() < 1e-15);
    let off = [0.5, 0.5];
    assert_eq!(unsafe { cracklab_exact_mode(1, off.as_ptr(), 2, &mut v) }, CracklabStatus::Domain);
    assert!(last_error().contains("unit sphere"));
}

#[test]
fn experiment_handle_lifecycle() {
    let text = CString::new(MANUFACTURED).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { cracklab_experiment_from_toml(text.as_ptr(), &mut exp) }, CracklabStatus::Ok);
    assert!(!exp.is_null());

    let mut buf = [0 as std::ffi::c_char; 65];
    assert_eq!(unsafe { cracklab_experiment_hash(exp, buf.as_mut_ptr(), 65) }, CracklabStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 64);
    assert_eq!(unsafe { cracklab_experiment_hash(exp, buf.as_mut_ptr(), 10) }, CracklabStatus::BufferTooSmall);

    let mut fit = CracklabFit { gamma: 0.0, std_error: 0.0, snapped_k: 0, window_min: 0.0, window_max: 0.0 };
    assert_eq!(unsafe { cracklab_experiment_frequency(exp, 42, &mut fit) }, CracklabStatus::Ok);
    assert_eq!(fit.snapped_k, 1);
    assert!((fit.gamma - 0.5).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut passed = -1;
    assert_eq!(unsafe { cracklab_experiment_run(exp, CracklabCommand::Frequency, out.as_ptr(), 42, &mut passed) }, CracklabStatus::Ok);
    assert_eq!(passed, 1);
    let csv = std::fs::read_to_string(dir.path().join("frequency.csv")).unwrap();
    let hash = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert!(csv.starts_with(&format!("# config_hash={hash}\n")));
    unsafe { cracklab_experiment_free(exp) };
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut exp = ptr::null_mut();
    let bad = CString::new("dimension = 7").unwrap();
    assert_eq!(unsafe { cracklab_experiment_from_toml(bad.as_ptr(), &mut exp) }, CracklabStatus::Config);
    assert!(exp.is_null());
    let missing = CString::new("/nonexistent/experiment.toml").unwrap();
    assert_eq!(unsafe { cracklab_experiment_load(missing.as_ptr(), &mut exp) }, CracklabStatus::Config);
    assert!(last_error().contains("/nonexistent/experiment.toml"));
    assert_eq!(unsafe { cracklab_experiment_load(ptr::null(), &mut exp) }, CracklabStatus::NullPointer);
    unsafe { cracklab_experiment_free(ptr::null_mut()) };
}

#[test]
fn generated_header_compiles_as_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("cracklab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["cracklab_ladder", "cracklab_experiment_run", "cracklab_last_error", "typedef struct CracklabExperiment CracklabExperiment"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cracklab.h\"\nint main(void) {\n  uint64_t n, d;\n  CracklabExperiment *e = NULL;\n  CracklabStatus s = cracklab_ladder(2, 1, &n, &d);\n  cracklab_experiment_free(e);\n  return s == CRACKLAB_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&compiler).args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"]).arg(header.parent().unwrap()).arg(&src).status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => panic!("C compiler {compiler} unavailable: {e}"),
    }
}
