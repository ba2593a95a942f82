//! C ABI for the spinboson engine.
//!
//! Every fallible call returns an [`SbStatus`]; on failure a message for the
//! calling thread is available through [`sb_last_error_message`]. Objects are
//! opaque and owned by the caller once returned; release them with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spinboson::config::MAX_SEED;
use spinboson::model::{discretize_bath, spectral_density, DiscretizedBath, SpectralDensityParams};
use spinboson::run::{execute, write_artifacts, RunOutput};
use spinboson::{Error, RunConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Numerical = 5,
    SolverAbort = 6,
    AbortFraction = 7,
    Truncation = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Parsed run configuration.
pub struct SbConfig {
    inner: RunConfig,
}

/// Completed ensemble run.
pub struct SbResult {
    inner: RunOutput,
}

/// Discretized harmonic bath.
pub struct SbBath {
    inner: DiscretizedBath,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> SbStatus {
    match err {
        Error::Domain(_) | Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } => {
            SbStatus::InvalidArgument
        }
        Error::Numerical(_) | Error::DegenerateState { .. } => SbStatus::Numerical,
        Error::SolverAbort { .. } => SbStatus::SolverAbort,
        Error::AbortFraction { .. } => SbStatus::AbortFraction,
        Error::Truncation { .. } => SbStatus::Truncation,
        Error::Config(_) => SbStatus::Config,
        Error::Io(_) => SbStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SbStatus, String)>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SbStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SbStatus::Panic
        }
    }
}

fn lift(err: Error) -> (SbStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (SbStatus, String) {
    (SbStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn as_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (SbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SbStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (SbStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (SbStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err((
            SbStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), (SbStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes (without the terminator) of the last error message on this
/// thread, or 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn sb_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the number of bytes written excluding the
/// terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |s| s.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_config_parse(toml: *const c_char, out: *mut *mut SbConfig) -> SbStatus {
    guard(|| {
        let text = as_str(toml, "toml")?;
        let cfg = RunConfig::parse(text).map_err(lift)?;
        emit(out, SbConfig { inner: cfg })
    })
}

/// Reads and parses a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_config_from_file(path: *const c_char, out: *mut *mut SbConfig) -> SbStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        let cfg = RunConfig::from_file(Path::new(path)).map_err(lift)?;
        emit(out, SbConfig { inner: cfg })
    })
}

/// Overrides the master seed (at most `i64::MAX`).
///
/// # Safety
/// `cfg` must come from `sb_config_parse` or `sb_config_from_file`.
#[no_mangle]
pub unsafe extern "C" fn sb_config_set_seed(cfg: *mut SbConfig, seed: u64) -> SbStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        if seed > MAX_SEED {
            return Err((SbStatus::InvalidArgument, format!("seed must be <= {MAX_SEED}, got {seed}")));
        }
        cfg.inner.sampling.master_seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_config_free(cfg: *mut SbConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the ensemble described by `cfg` without writing files.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_run(cfg: *const SbConfig, out: *mut *mut SbResult) -> SbStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let output = execute(&cfg.inner).map_err(lift)?;
        emit(out, SbResult { inner: output })
    })
}

/// Number of output times.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_result_len(res: *const SbResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.ensemble.times.len())
}

/// Number of trajectories that completed.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_result_n_effective(res: *const SbResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.ensemble.n_effective)
}

/// # Safety
/// `res` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_result_times(res: *const SbResult, buf: *mut f64, len: usize) -> SbStatus {
    guard(|| copy_out(&as_ref(res, "res")?.inner.ensemble.times, buf, len))
}

/// Ensemble mean of the population difference.
///
/// # Safety
/// `res` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_result_pz_mean(res: *const SbResult, buf: *mut f64, len: usize) -> SbStatus {
    guard(|| copy_out(&as_ref(res, "res")?.inner.ensemble.pz_mean, buf, len))
}

/// # Safety
/// `res` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_result_pz_stderr(res: *const SbResult, buf: *mut f64, len: usize) -> SbStatus {
    guard(|| copy_out(&as_ref(res, "res")?.inner.ensemble.pz_stderr, buf, len))
}

/// Writes `results.tsv` and `manifest.json` into `dir`.
///
/// # Safety
/// `res` must be a live handle; `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_result_write(res: *const SbResult, dir: *const c_char) -> SbStatus {
    guard(|| {
        let res = as_ref(res, "res")?;
        let dir = as_str(dir, "dir")?;
        write_artifacts(&res.inner, Path::new(dir)).map_err(lift)
    })
}

/// # Safety
/// `res` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_result_free(res: *mut SbResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// `J(omega)` with `omega_c = 1`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_spectral_density(omega: f64, s: f64, alpha: f64, out: *mut f64) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = SpectralDensityParams::new(s, alpha, 1).map_err(lift)?;
        *out = spectral_density(omega, &p).map_err(lift)?;
        Ok(())
    })
}

/// Discretizes the bath into `n_b` modes on `[0, 10 omega_c]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_bath_discretize(s: f64, alpha: f64, n_b: usize, out: *mut *mut SbBath) -> SbStatus {
    guard(|| {
        let p = SpectralDensityParams::new(s, alpha, n_b).map_err(lift)?;
        let bath = discretize_bath(&p).map_err(lift)?;
        emit(out, SbBath { inner: bath })
    })
}

/// # Safety
/// `bath` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_bath_n_modes(bath: *const SbBath) -> usize {
    bath.as_ref().map_or(0, |b| b.inner.n_modes())
}

/// # Safety
/// `bath` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_bath_frequencies(bath: *const SbBath, buf: *mut f64, len: usize) -> SbStatus {
    guard(|| copy_out(&as_ref(bath, "bath")?.inner.omegas, buf, len))
}

/// # Safety
/// `bath` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_bath_couplings(bath: *const SbBath, buf: *mut f64, len: usize) -> SbStatus {
    guard(|| copy_out(&as_ref(bath, "bath")?.inner.lambdas, buf, len))
}

/// # Safety
/// `bath` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_bath_free(bath: *mut SbBath) {
    if !bath.is_null() {
        drop(Box::from_raw(bath));
    }
}
