//! C ABI for nvspin.
//!
//! Every fallible function returns an [`NvStatus`]; on failure the message is
//! available from [`nv_last_error`] on the same thread. Traces and fit
//! results are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use nvspin::analysis::{fit, init_guess, FitModel, FitResult, ModelKind};
use nvspin::cli::{fit_trace, simulate_trace, CliError, EXIT_NUMERICAL};
use nvspin::config::{AnalyzeConfig, AnalyzeMode, ExperimentConfig};
use nvspin::dynamics::{self, DriveParams};
use nvspin::measurement::Trace;
use nvspin::spin::{self, Branch, SpinSystemParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Eigensolver failure, ambiguous level labels, singular fit.
    Numerical = 3,
    NotConverged = 4,
    Panic = 5,
}

/// Mirrors the Rust `SpinSystemParams`. Frequencies in MHz, field in G.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NvSpinParams {
    pub d: f64,
    pub gamma_e: f64,
    pub b_mag: f64,
    pub b_theta: f64,
    pub a_par: f64,
    pub a_perp: f64,
    pub p_quad: f64,
}

impl From<NvSpinParams> for SpinSystemParams {
    fn from(p: NvSpinParams) -> Self {
        Self {
            d: p.d,
            gamma_e: p.gamma_e,
            b_mag: p.b_mag,
            b_theta: p.b_theta,
            a_par: p.a_par,
            a_perp: p.a_perp,
            p_quad: p.p_quad,
        }
    }
}

impl From<SpinSystemParams> for NvSpinParams {
    fn from(p: SpinSystemParams) -> Self {
        Self {
            d: p.d,
            gamma_e: p.gamma_e,
            b_mag: p.b_mag,
            b_theta: p.b_theta,
            a_par: p.a_par,
            a_perp: p.a_perp,
            p_quad: p.p_quad,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NvDriveParams {
    pub f0: f64,
    pub delta_f: f64,
    pub alpha_n: f64,
    pub phase: f64,
}

impl From<NvDriveParams> for DriveParams {
    fn from(p: NvDriveParams) -> Self {
        Self {
            f0: p.f0,
            delta_f: p.delta_f,
            alpha_n: p.alpha_n,
            phase: p.phase,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvBranch {
    /// m_s = 0 -> +1
    Plus = 0,
    /// m_s = 0 -> -1
    Minus = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvTriplet {
    /// Transition frequencies for m_I = -1, 0, +1, MHz.
    pub by_projection: [f64; 3],
    pub center: f64,
    /// Mean adjacent spacing, MHz.
    pub splitting: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvLevel {
    pub energy: f64,
    pub m_s: i8,
    pub m_i: i8,
    pub overlap: f64,
}

/// Opaque trace handle.
pub struct NvTrace(Trace);

/// Opaque fit result handle.
pub struct NvFit {
    kind: ModelKind,
    result: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: NvStatus, message: impl Into<String>) -> NvStatus {
    set_error(message);
    status
}

fn cli_status(e: &CliError) -> NvStatus {
    match e {
        CliError::NotConverged { .. } => NvStatus::NotConverged,
        e if e.exit_code() == EXIT_NUMERICAL => NvStatus::Numerical,
        _ => NvStatus::InvalidArgument,
    }
}

fn spin_status(e: &spin::SpinError) -> NvStatus {
    cli_status(&CliError::Spin(e.clone()))
}

/// Runs `body`, converting panics into [`NvStatus::Panic`].
fn guarded(body: impl FnOnce() -> NvStatus) -> NvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(NvStatus::Panic, msg)
        }
    }
}

unsafe fn c_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, NvStatus> {
    if s.is_null() {
        return Err(fail(NvStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(NvStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(NvStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn nv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn nv_spin_params_default() -> NvSpinParams {
    SpinSystemParams::default().into()
}

/// Copies `params` with the field angle set so the 0 -> +1 and 0 -> -1
/// branch centers are `target` MHz apart.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nv_spin_match_branch_splitting(
    params: *const NvSpinParams,
    target: f64,
    out: *mut NvSpinParams,
) -> NvStatus {
    guarded(|| {
        non_null!(params, out);
        match SpinSystemParams::from(*params).with_branch_splitting(target) {
            Ok(p) => {
                *out = p.into();
                NvStatus::Ok
            }
            Err(e) => fail(spin_status(&e), e.to_string()),
        }
    })
}

fn levels(params: NvSpinParams) -> Result<spin::HyperfineLevels, NvStatus> {
    let p = SpinSystemParams::from(params);
    spin::build_hamiltonian(&p)
        .and_then(|h| spin::diagonalize(&h))
        .map_err(|e| fail(spin_status(&e), e.to_string()))
}

/// Writes the nine eigenlevels, ascending, to `out[0..9]`.
///
/// # Safety
/// `params` must be valid; `out` must have room for nine entries.
#[no_mangle]
pub unsafe extern "C" fn nv_levels(params: *const NvSpinParams, out: *mut NvLevel) -> NvStatus {
    guarded(|| {
        non_null!(params, out);
        let levels = match levels(*params) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let out = std::slice::from_raw_parts_mut(out, spin::DIM);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = NvLevel {
                energy: levels.energies[k],
                m_s: levels.labels[k].m_s,
                m_i: levels.labels[k].m_i,
                overlap: levels.basis_overlap[k],
            };
        }
        NvStatus::Ok
    })
}

/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nv_transition_triplet(
    params: *const NvSpinParams,
    branch: NvBranch,
    out: *mut NvTriplet,
) -> NvStatus {
    guarded(|| {
        non_null!(params, out);
        let levels = match levels(*params) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let branch = match branch {
            NvBranch::Plus => Branch::Plus,
            NvBranch::Minus => Branch::Minus,
        };
        match spin::transition_triplet(&levels, branch) {
            Ok(t) => {
                *out = NvTriplet {
                    by_projection: t.by_projection,
                    center: t.center,
                    splitting: t.splitting,
                };
                NvStatus::Ok
            }
            Err(e) => fail(spin_status(&e), e.to_string()),
        }
    })
}

#[no_mangle]
pub extern "C" fn nv_effective_rabi(f0: f64, delta_f: f64) -> f64 {
    spin::effective_rabi(f0, delta_f)
}

/// Projection-averaged m_s = 0 population after a Rabi pulse of length `t`
/// μs. Pass `INFINITY` for `t0` to disable damping. NaN on a null pointer.
///
/// # Safety
/// `drive` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn nv_rabi_average_population(t: f64, drive: *const NvDriveParams, t0: f64) -> f64 {
    if drive.is_null() {
        return f64::NAN;
    }
    dynamics::rabi_average_population(t, &DriveParams::from(*drive), t0)
}

#[no_mangle]
pub extern "C" fn nv_ramsey_signal(t: f64, delta_f: f64, alpha_n: f64, t2_star: f64) -> f64 {
    dynamics::ramsey_signal(t, delta_f, alpha_n, t2_star)
}

#[no_mangle]
pub extern "C" fn nv_echo_signal(
    tau: f64,
    tau_prime: f64,
    delta_f: f64,
    alpha_n: f64,
    tau_c: f64,
    echo_exponent: f64,
) -> f64 {
    dynamics::echo_signal(tau, tau_prime, delta_f, alpha_n, tau_c, echo_exponent)
}

fn simulate(cfg: Result<ExperimentConfig, String>, seed: i64, out: *mut *mut NvTrace) -> NvStatus {
    let cfg = match cfg.and_then(|c| c.resolve().map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => return fail(NvStatus::InvalidArgument, e),
    };
    // Negative seed: noiseless.
    let seed = u64::try_from(seed).ok();
    match simulate_trace(&cfg, &cfg.drive, seed) {
        Ok(trace) => {
            unsafe { *out = Box::into_raw(Box::new(NvTrace(trace))) };
            NvStatus::Ok
        }
        Err(e) => fail(cli_status(&e), e.to_string()),
    }
}

/// Simulates the experiment described by a JSON recipe string. `seed < 0`
/// gives the noiseless trace; otherwise shot noise is drawn with `seed`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nv_simulate_json(config_json: *const c_char, seed: i64, out: *mut *mut NvTrace) -> NvStatus {
    guarded(|| {
        non_null!(out);
        let text = match c_str(config_json, "config_json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        simulate(
            ExperimentConfig::from_json(text, Path::new("<json>")).map_err(|e| e.to_string()),
            seed,
            out,
        )
    })
}

/// As [`nv_simulate_json`], reading the recipe from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nv_simulate_file(path: *const c_char, seed: i64, out: *mut *mut NvTrace) -> NvStatus {
    guarded(|| {
        non_null!(out);
        let path = match c_str(path, "path") {
            Ok(t) => t,
            Err(s) => return s,
        };
        simulate(ExperimentConfig::load(Path::new(path)).map_err(|e| e.to_string()), seed, out)
    })
}

/// Builds a trace from caller arrays. `sigma` may be null for exact data.
///
/// # Safety
/// `x` and `y` (and `sigma` if non-null) must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn nv_trace_new(
    x: *const f64,
    y: *const f64,
    sigma: *const f64,
    n: usize,
    out: *mut *mut NvTrace,
) -> NvStatus {
    guarded(|| {
        non_null!(x, y, out);
        let x = std::slice::from_raw_parts(x, n).to_vec();
        let y = std::slice::from_raw_parts(y, n).to_vec();
        let trace = if sigma.is_null() {
            Trace::exact(x, y)
        } else {
            Trace::new(x, y, std::slice::from_raw_parts(sigma, n).to_vec(), Default::default())
        };
        match trace {
            Ok(t) => {
                *out = Box::into_raw(Box::new(NvTrace(t)));
                NvStatus::Ok
            }
            Err(e) => fail(NvStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `trace` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_trace_len(trace: *const NvTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Copies up to `capacity` points. Any output pointer may be null.
///
/// # Safety
/// `trace` must be live; non-null outputs must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn nv_trace_copy(
    trace: *const NvTrace,
    x: *mut f64,
    y: *mut f64,
    sigma: *mut f64,
    capacity: usize,
) -> NvStatus {
    guarded(|| {
        non_null!(trace);
        let t = &(*trace).0;
        let n = t.len().min(capacity);
        for (dst, src) in [(x, &t.abscissa), (y, &t.signal), (sigma, &t.sigma)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        NvStatus::Ok
    })
}

/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nv_trace_free(trace: *mut NvTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn model_kind(name: &str) -> Result<ModelKind, NvStatus> {
    name.parse::<ModelKind>()
        .map_err(|e| fail(NvStatus::InvalidArgument, e.to_string()))
}

/// Fits `model` (`triple_nutation`, `triple_lorentzian`, `ramsey_fringes`,
/// `echo_envelope`) starting from `init[0..n_init]`. With `init` null the
/// start is estimated from the data (for nutation, several detunings are
/// tried). Non-convergence still returns a handle, with status
/// `NotConverged`.
///
/// # Safety
/// `trace` must be live; `model` NUL-terminated; `init` null or holding
/// `n_init` values; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nv_fit(
    trace: *const NvTrace,
    model: *const c_char,
    init: *const f64,
    n_init: usize,
    out: *mut *mut NvFit,
) -> NvStatus {
    guarded(|| {
        non_null!(trace, out);
        let kind = match c_str(model, "model").and_then(model_kind) {
            Ok(k) => k,
            Err(s) => return s,
        };
        let trace = &(*trace).0;
        let result = if init.is_null() {
            let cfg = AnalyzeConfig {
                mode: AnalyzeMode::Fit,
                model: Some(kind),
                multistart_delta: if kind == ModelKind::TripleNutation {
                    vec![0.0, 1.1, 2.2, 3.3]
                } else {
                    Vec::new()
                },
                ..Default::default()
            };
            fit_trace(trace, &cfg, kind).map(|r| r.result).map_err(|e| (cli_status(&e), e.to_string()))
        } else {
            let start = std::slice::from_raw_parts(init, n_init);
            fit(&FitModel::new(kind), trace, start)
                .map_err(|e| (cli_status(&CliError::Analysis(e.clone())), e.to_string()))
        };
        match result {
            Ok(result) => {
                let converged = result.converged;
                *out = Box::into_raw(Box::new(NvFit { kind, result }));
                if converged {
                    NvStatus::Ok
                } else {
                    fail(NvStatus::NotConverged, "fit did not converge")
                }
            }
            Err((status, msg)) => fail(status, msg),
        }
    })
}

/// Data-derived starting point for `model`, written to `out[0..capacity]`.
/// Returns the parameter count through `n_params`.
///
/// # Safety
/// `trace` live, `model` NUL-terminated, `out` holding `capacity` values,
/// `n_params` valid.
#[no_mangle]
pub unsafe extern "C" fn nv_init_guess(
    trace: *const NvTrace,
    model: *const c_char,
    out: *mut f64,
    capacity: usize,
    n_params: *mut usize,
) -> NvStatus {
    guarded(|| {
        non_null!(trace, out, n_params);
        let kind = match c_str(model, "model").and_then(model_kind) {
            Ok(k) => k,
            Err(s) => return s,
        };
        let guess = init_guess(kind, &(*trace).0);
        *n_params = guess.params.len();
        let n = guess.params.len().min(capacity);
        ptr::copy_nonoverlapping(guess.params.as_ptr(), out, n);
        NvStatus::Ok
    })
}

/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_n_params(fit: *const NvFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.params.len())
}

/// Parameter name as a static NUL-terminated string, or null when out of
/// range.
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_param_name(fit: *const NvFit, index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<Vec<CString>>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        ModelKind::ALL
            .iter()
            .map(|k| k.param_names().iter().map(|n| CString::new(*n).unwrap()).collect())
            .collect()
    });
    let Some(f) = fit.as_ref() else {
        return ptr::null();
    };
    let k = ModelKind::ALL.iter().position(|&k| k == f.kind).unwrap();
    names[k].get(index).map_or(ptr::null(), |s| s.as_ptr())
}

/// Value and standard error of parameter `index`. The error is `INFINITY`
/// for parameters the data leave unconstrained and 0 for fixed ones.
///
/// # Safety
/// `fit` must be live; `value` and `stderr` valid or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_param(fit: *const NvFit, index: usize, value: *mut f64, stderr: *mut f64) -> NvStatus {
    guarded(|| {
        non_null!(fit);
        let r = &(*fit).result;
        if index >= r.params.len() {
            return fail(
                NvStatus::InvalidArgument,
                format!("index {index} out of range ({} parameters)", r.params.len()),
            );
        }
        if !value.is_null() {
            *value = r.params[index];
        }
        if !stderr.is_null() {
            *stderr = r.stderr[index];
        }
        NvStatus::Ok
    })
}

/// Residual sum of squares (weighted when the trace carries sigma); NaN for
/// a null handle.
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_sse(fit: *const NvFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.sse)
}

/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_converged(fit: *const NvFit) -> bool {
    fit.as_ref().is_some_and(|f| f.result.converged)
}

/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_iterations(fit: *const NvFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.iterations)
}

/// # Safety
/// `fit` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nv_fit_free(fit: *mut NvFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
