use std::ffi::{CStr, CString};
use std::ptr;

use spinboson_ffi::*;

const SMALL: &str = r#"
temperature = 0.2

[bath]
s = 1.0
alpha = 0.0
n_b = 2

[ansatz]
multiplicity = 1

[sampling]
n_s = 4
master_seed = 11

[integrator]
t_final = 4.0

[output]
dt = 1.0
"#;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { sb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(n, s.len());
    s
}

fn parse(text: &str) -> *mut SbConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sb_config_parse(text.as_ptr(), &mut cfg) }, SbStatus::Ok);
    cfg
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(sb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_round_trip() {
    let cfg = parse(SMALL);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { sb_run(cfg, &mut res) }, SbStatus::Ok, "{}", last_error());
    assert_eq!(sb_last_error_length(), 0);
    let n = unsafe { sb_result_len(res) };
    assert_eq!(n, 5);
    assert_eq!(unsafe { sb_result_n_effective(res) }, 4);
    let mut t = vec![0.0; n];
    let mut pz = vec![0.0; n];
    let mut se = vec![0.0; n];
    unsafe {
        assert_eq!(sb_result_times(res, t.as_mut_ptr(), n), SbStatus::Ok);
        assert_eq!(sb_result_pz_mean(res, pz.as_mut_ptr(), n), SbStatus::Ok);
        assert_eq!(sb_result_pz_stderr(res, se.as_mut_ptr(), n), SbStatus::Ok);
    }
    for k in 0..n {
        assert!((pz[k] - (0.1 * t[k]).cos()).abs() < 1e-6);
        assert!(se[k] < 1e-6);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sb_result_write(res, path.as_ptr()) }, SbStatus::Ok);
    assert!(dir.path().join("results.tsv").exists());
    assert!(dir.path().join("manifest.json").exists());
    unsafe {
        sb_result_free(res);
        sb_config_free(cfg);
    }
}

#[test]
fn seed_override_is_deterministic() {
    let run = |seed: u64| {
        let cfg = parse(&SMALL.replace("alpha = 0.0", "alpha = 0.05"));
        let mut res = ptr::null_mut();
        unsafe {
            assert_eq!(sb_config_set_seed(cfg, seed), SbStatus::Ok);
            assert_eq!(sb_run(cfg, &mut res), SbStatus::Ok, "{}", last_error());
            let n = sb_result_len(res);
            let mut pz = vec![0.0; n];
            sb_result_pz_mean(res, pz.as_mut_ptr(), n);
            sb_result_free(res);
            sb_config_free(cfg);
            pz
        }
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert_ne!(a, run(4));
}

#[test]
fn errors_set_status_and_message() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("temperature = 0.1\n[bath]\ns = 1.0\nbogus = 2\n").unwrap();
    assert_eq!(unsafe { sb_config_parse(bad.as_ptr(), &mut cfg) }, SbStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("bogus"));
    assert_eq!(sb_last_error_length(), last_error().len());

    let neg = CString::new("temperature = 0.1\n[bath]\ns = 1.0\nn_b = -3\n").unwrap();
    assert_ne!(unsafe { sb_config_parse(neg.as_ptr(), &mut cfg) }, SbStatus::Ok);
    assert!(last_error().contains("n_b"));

    assert_eq!(unsafe { sb_config_parse(ptr::null(), &mut cfg) }, SbStatus::NullPointer);
    let good = parse(SMALL);
    assert_eq!(unsafe { sb_config_set_seed(good, u64::MAX) }, SbStatus::InvalidArgument);
    unsafe { sb_config_free(good) };
    assert_eq!(unsafe { sb_run(ptr::null(), ptr::null_mut()) }, SbStatus::NullPointer);

    let cfg = parse(SMALL);
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(sb_run(cfg, &mut res), SbStatus::Ok);
        let mut short = [0.0; 2];
        assert_eq!(sb_result_times(res, short.as_mut_ptr(), 2), SbStatus::BufferTooSmall);
        sb_result_free(res);
        sb_config_free(cfg);
        sb_result_free(ptr::null_mut());
        sb_config_free(ptr::null_mut());
        sb_bath_free(ptr::null_mut());
    }
}

#[test]
fn bath_accessors() {
    let mut bath = ptr::null_mut();
    assert_eq!(unsafe { sb_bath_discretize(1.0, 0.05, 250, &mut bath) }, SbStatus::Ok);
    let n = unsafe { sb_bath_n_modes(bath) };
    assert_eq!(n, 250);
    let mut w = vec![0.0; n];
    let mut l = vec![0.0; n];
    unsafe {
        assert_eq!(sb_bath_frequencies(bath, w.as_mut_ptr(), n), SbStatus::Ok);
        assert_eq!(sb_bath_couplings(bath, l.as_mut_ptr(), n), SbStatus::Ok);
        sb_bath_free(bath);
    }
    let gamma = l[0] * l[0] / w[0];
    for k in 0..n {
        let expected = -(1.0 - (k + 1) as f64 * gamma / 0.1).ln();
        assert!((w[k] - expected).abs() < 1e-10, "mode {k}");
        assert!((l[k] * l[k] / w[k] - gamma).abs() < 1e-12);
    }

    let mut j = 0.0;
    assert_eq!(unsafe { sb_spectral_density(2.0, 1.0, 0.05, &mut j) }, SbStatus::Ok);
    assert!((j - 0.2 * (-2.0f64).exp()).abs() < 1e-15);
    assert_eq!(unsafe { sb_spectral_density(-1.0, 1.0, 0.05, &mut j) }, SbStatus::InvalidArgument);
    assert_eq!(unsafe { sb_bath_discretize(1.0, 0.05, 0, &mut bath) }, SbStatus::InvalidArgument);
}
