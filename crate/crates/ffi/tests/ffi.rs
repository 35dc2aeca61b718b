use std::ffi::{CStr, CString};
use std::ptr;

use nvspin_ffi::*;

fn last_error() -> String {
    let p = nv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tilted() -> NvSpinParams {
    let base = nv_spin_params_default();
    let mut out = base;
    assert_eq!(unsafe { nv_spin_match_branch_splitting(&base, 60.0, &mut out) }, NvStatus::Ok);
    out
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(nv_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn triplet_and_levels() {
    let p = tilted();
    let mut t = NvTriplet::default();
    assert_eq!(unsafe { nv_transition_triplet(&p, NvBranch::Plus, &mut t) }, NvStatus::Ok);
    assert!((t.splitting - 2.3).abs() < 0.05);
    let mut minus = NvTriplet::default();
    assert_eq!(unsafe { nv_transition_triplet(&p, NvBranch::Minus, &mut minus) }, NvStatus::Ok);
    assert!((t.center - minus.center - 60.0).abs() < 1e-6);

    let mut levels = [NvLevel::default(); 9];
    assert_eq!(unsafe { nv_levels(&p, levels.as_mut_ptr()) }, NvStatus::Ok);
    assert!(levels.windows(2).all(|w| w[0].energy <= w[1].energy));
    assert_eq!(levels.iter().filter(|l| l.m_s == 0).count(), 3);
}

#[test]
fn null_pointers_are_reported() {
    let mut t = NvTriplet::default();
    assert_eq!(
        unsafe { nv_transition_triplet(ptr::null(), NvBranch::Plus, &mut t) },
        NvStatus::NullPointer
    );
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { nv_trace_len(ptr::null()) }, 0);
    assert!(unsafe { nv_fit_sse(ptr::null()) }.is_nan());
}

#[test]
fn invalid_params_are_rejected() {
    let mut p = nv_spin_params_default();
    p.d = f64::NAN;
    let mut t = NvTriplet::default();
    assert_eq!(unsafe { nv_transition_triplet(&p, NvBranch::Plus, &mut t) }, NvStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn ambiguous_labels_are_numerical_failures() {
    // Degenerate m_s = +-1 manifolds at zero field.
    let mut p = nv_spin_params_default();
    p.b_mag = 0.0;
    let mut t = NvTriplet::default();
    assert_eq!(unsafe { nv_transition_triplet(&p, NvBranch::Plus, &mut t) }, NvStatus::Numerical);
}

#[test]
fn closed_forms() {
    assert!((nv_effective_rabi(3.0, 4.0) - 5.0).abs() < 1e-15);
    let drive = NvDriveParams { f0: 4.2, delta_f: 0.0, alpha_n: 2.2, phase: 0.0 };
    let p0 = unsafe { nv_rabi_average_population(0.0, &drive, f64::INFINITY) };
    assert!((p0 - 1.0).abs() < 1e-15);
    assert!(unsafe { nv_rabi_average_population(0.0, ptr::null(), 1.0) }.is_nan());
    assert!((nv_ramsey_signal(0.0, -3.3, 2.2, 2.3) - 1.0).abs() < 1e-15);
    let e = nv_echo_signal(2.0, 2.0, -3.3, 2.2, 4.0, 1.0);
    assert!((e - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn simulate_then_fit_round_trip() {
    let cfg = CString::new(
        r#"{"experiment": "rabi", "drive": {"f0": 6.2, "delta_f": 1.1}, "decoherence": {"t0": 2.0},
            "sweep": {"start": 0, "stop": 3.5, "step": 0.025}}"#,
    )
    .unwrap();
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { nv_simulate_json(cfg.as_ptr(), -1, &mut trace) }, NvStatus::Ok);
    let n = unsafe { nv_trace_len(trace) };
    assert_eq!(n, 141);
    let mut y = vec![0.0; n];
    assert_eq!(
        unsafe { nv_trace_copy(trace, ptr::null_mut(), y.as_mut_ptr(), ptr::null_mut(), n) },
        NvStatus::Ok
    );
    assert!((y[0] - 0.02).abs() < 1e-12);

    let model = CString::new("triple_nutation").unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { nv_fit(trace, model.as_ptr(), ptr::null(), 0, &mut fit) }, NvStatus::Ok);
    assert!(unsafe { nv_fit_converged(fit) });
    assert_eq!(unsafe { nv_fit_n_params(fit) }, 6);
    let name = unsafe { CStr::from_ptr(nv_fit_param_name(fit, 2)) };
    assert_eq!(name.to_str().unwrap(), "delta_f");
    assert!(unsafe { nv_fit_param_name(fit, 6) }.is_null());
    let (mut f0, mut se) = (0.0, 0.0);
    assert_eq!(unsafe { nv_fit_param(fit, 0, &mut f0, &mut se) }, NvStatus::Ok);
    assert!((f0 - 6.2).abs() < 1e-6, "{f0}");
    let mut delta = 0.0;
    assert_eq!(unsafe { nv_fit_param(fit, 2, &mut delta, ptr::null_mut()) }, NvStatus::Ok);
    assert!((delta.abs() - 1.1).abs() < 1e-6);
    assert_eq!(unsafe { nv_fit_param(fit, 9, &mut f0, ptr::null_mut()) }, NvStatus::InvalidArgument);
    unsafe {
        nv_fit_free(fit);
        nv_trace_free(trace);
    }
}

#[test]
fn explicit_start_and_init_guess() {
    let x: Vec<f64> = (0..321).map(|i| i as f64 * 0.05).collect();
    let y: Vec<f64> = x.iter().map(|t| 0.2 + 0.8 * (-t / 4.0f64).exp()).collect();
    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { nv_trace_new(x.as_ptr(), y.as_ptr(), ptr::null(), x.len(), &mut trace) },
        NvStatus::Ok
    );
    let model = CString::new("echo").unwrap();
    let mut guess = [0.0; 8];
    let mut n = 0;
    assert_eq!(
        unsafe { nv_init_guess(trace, model.as_ptr(), guess.as_mut_ptr(), guess.len(), &mut n) },
        NvStatus::Ok
    );
    assert_eq!(n, 4);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { nv_fit(trace, model.as_ptr(), guess.as_ptr(), n, &mut fit) }, NvStatus::Ok);
    let mut tau_c = 0.0;
    unsafe { nv_fit_param(fit, 0, &mut tau_c, ptr::null_mut()) };
    assert!((tau_c - 4.0).abs() < 1e-6);
    unsafe {
        nv_fit_free(fit);
        nv_trace_free(trace);
    }
}

#[test]
fn bad_inputs_to_trace_and_fit() {
    let x = [0.0, 0.0, 1.0];
    let y = [1.0, 1.0, 1.0];
    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { nv_trace_new(x.as_ptr(), y.as_ptr(), ptr::null(), 3, &mut trace) },
        NvStatus::InvalidArgument
    );
    assert!(trace.is_null());

    let cfg = CString::new(r#"{"experiment": "rabi", "bogus": 1}"#).unwrap();
    assert_eq!(unsafe { nv_simulate_json(cfg.as_ptr(), 1, &mut trace) }, NvStatus::InvalidArgument);
    assert!(last_error().contains("bogus"));

    let x = [0.0, 1.0, 2.0];
    assert_eq!(
        unsafe { nv_trace_new(x.as_ptr(), y.as_ptr(), ptr::null(), 3, &mut trace) },
        NvStatus::Ok
    );
    let model = CString::new("no_such_model").unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(
        unsafe { nv_fit(trace, model.as_ptr(), ptr::null(), 0, &mut fit) },
        NvStatus::InvalidArgument
    );
    unsafe { nv_trace_free(trace) };
}

#[test]
fn header_is_generated() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nvspin.h")).unwrap();
    for symbol in ["nv_fit_free", "nv_trace_free", "nv_simulate_json", "typedef struct NvTrace NvTrace", "NV_STATUS_OK"] {
        assert!(header.contains(symbol), "{symbol}");
    }
}
