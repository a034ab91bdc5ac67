//! C ABI for cracklab.
//!
//! Every entry point returns a [`CracklabStatus`]; on failure the message is
//! available from [`cracklab_last_error`] on the same thread. Experiments are
//! opaque handles created by [`cracklab_experiment_load`] or
//! [`cracklab_experiment_from_toml`] and released with
//! [`cracklab_experiment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cracklab::config::ExperimentConfig;
use cracklab::experiment::{Command, Experiment};
use cracklab::Error;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CracklabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Numerical = 5,
    Accuracy = 6,
    Validation = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Subcommands accepted by [`cracklab_experiment_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CracklabCommand {
    Spectrum = 0,
    Solve = 1,
    Frequency = 2,
    Blowup = 3,
    Approx = 4,
    Audit = 5,
}

/// Opaque experiment handle.
pub struct CracklabExperiment {
    inner: Experiment,
}

/// Summary of a frequency fit.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CracklabFit {
    pub gamma: f64,
    pub std_error: f64,
    /// Snapped ladder index, or -1 when the fit is not within the snap tolerance.
    pub snapped_k: i32,
    pub window_min: f64,
    pub window_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(err: &Error) -> CracklabStatus {
    match err {
        Error::Domain { .. } | Error::Construction { .. } | Error::Precondition { .. } => CracklabStatus::Domain,
        Error::Numerical { .. } => CracklabStatus::Numerical,
        Error::Accuracy { .. } => CracklabStatus::Accuracy,
        Error::Validation { .. } => CracklabStatus::Validation,
        Error::Config(_) => CracklabStatus::Config,
        Error::Io { .. } => CracklabStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CracklabStatus, String)>) -> CracklabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CracklabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CracklabStatus::Panic
        }
    }
}

fn lift(err: Error) -> (CracklabStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (CracklabStatus, String) {
    (CracklabStatus::NullPointer, format!("{name} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (CracklabStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CracklabStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

/// Message of the last failed call on this thread; empty when none failed.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn cracklab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Exact eigenvalue `k(k+2N-2)/4` of the slit sphere `S^N` as a reduced fraction.
///
/// # Safety
/// `numer` and `denom` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_ladder(sphere_dim: u32, k: u32, numer: *mut u64, denom: *mut u64) -> CracklabStatus {
    guard(|| {
        if numer.is_null() || denom.is_null() {
            return Err(null("output"));
        }
        let r = cracklab::spectral::ladder(sphere_dim, k).map_err(lift)?;
        *numer = *r.numer();
        *denom = *r.denom();
        Ok(())
    })
}

/// The unnormalised mode `ρ^{k/2} sin(kt/2)` at a unit vector of length `len`.
///
/// # Safety
/// `theta` must point to `len` readable doubles and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_exact_mode(k: u32, theta: *const f64, len: usize, out: *mut f64) -> CracklabStatus {
    guard(|| {
        if theta.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let point = std::slice::from_raw_parts(theta, len);
        *out = cracklab::spectral::exact_mode(k, point).map_err(lift)?;
        Ok(())
    })
}

fn into_handle(cfg: ExperimentConfig, out: *mut *mut CracklabExperiment) -> Result<(), (CracklabStatus, String)> {
    let inner = Experiment::new(cfg).map_err(lift)?;
    unsafe { *out = Box::into_raw(Box::new(CracklabExperiment { inner })) };
    Ok(())
}

/// Load an experiment from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_load(path: *const c_char, out: *mut *mut CracklabExperiment) -> CracklabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        into_handle(ExperimentConfig::load(Path::new(path)).map_err(lift)?, out)
    })
}

/// Build an experiment from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_from_toml(text: *const c_char, out: *mut *mut CracklabExperiment) -> CracklabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(text, "text")?;
        into_handle(ExperimentConfig::from_toml(text).map_err(lift)?, out)
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `exp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_free(exp: *mut CracklabExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Copy the 64-character config hash and a terminating NUL into `buf`.
///
/// # Safety
/// `exp` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_hash(exp: *const CracklabExperiment, buf: *mut c_char, len: usize) -> CracklabStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let hash = exp.inner.hash.as_bytes();
        if len < hash.len() + 1 {
            return Err((CracklabStatus::BufferTooSmall, format!("hash needs {} bytes", hash.len() + 1)));
        }
        ptr::copy_nonoverlapping(hash.as_ptr() as *const c_char, buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// Produce the field and fit its frequency order.
///
/// # Safety
/// `exp` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_frequency(exp: *const CracklabExperiment, seed: u64, out: *mut CracklabFit) -> CracklabStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let produced = exp.inner.produce(seed).map_err(lift)?;
        let f = exp.inner.frequency(produced.field.as_field()).map_err(lift)?;
        let fit = &f.trace.fit;
        *out = CracklabFit {
            gamma: fit.gamma,
            std_error: fit.std_error,
            snapped_k: fit.snapped_k.map_or(-1, |k| k as i32),
            window_min: fit.window.0,
            window_max: fit.window.1,
        };
        Ok(())
    })
}

/// Run a subcommand writing artifacts into `out_dir`. `passed` receives 1
/// when every audited property held and 0 otherwise.
///
/// # Safety
/// `exp` must be a live handle, `out_dir` a NUL-terminated string and
/// `passed` valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn cracklab_experiment_run(
    exp: *const CracklabExperiment,
    command: CracklabCommand,
    out_dir: *const c_char,
    seed: u64,
    passed: *mut i32,
) -> CracklabStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        let dir = read_str(out_dir, "out_dir")?;
        let cmd = match command {
            CracklabCommand::Spectrum => Command::Spectrum,
            CracklabCommand::Solve => Command::Solve,
            CracklabCommand::Frequency => Command::Frequency,
            CracklabCommand::Blowup => Command::Blowup,
            CracklabCommand::Approx => Command::Approx,
            CracklabCommand::Audit => Command::Audit,
        };
        let ok = exp.inner.run(cmd, Path::new(dir), seed).map_err(lift)?;
        if !passed.is_null() {
            *passed = ok as i32;
        }
        Ok(())
    })
}
