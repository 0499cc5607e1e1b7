//! C ABI over the fairmc library.
//!
//! Every fallible call returns an [`FmStatus`]; on failure the message is
//! available from [`fm_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `*_free` function. Strings
//! returned by the library are released with [`fm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fairmc::checker::{reach_prob_matrix, ReachQuery};
use fairmc::cli::{chain_to_dot, load_config, run_verify_repair, Mode, Report};
use fairmc::learner::{compute_hn, derive_eps_delta, LabeledChain};
use fairmc::model::{load_network, Network};
use fairmc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidModel = 5,
    InvalidArgument = 6,
    InvalidConfig = 7,
    NonConvergence = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Verification result codes for [`fm_report_verdict`].
pub const FM_VERDICT_PASS: i32 = 0;
pub const FM_VERDICT_FAIL: i32 = 1;

/// A loaded network.
pub struct FmNetwork {
    inner: Network,
}

/// A chain read from the text format.
pub struct FmDtmc {
    inner: LabeledChain,
}

/// The report of a verify or repair run.
pub struct FmReport {
    inner: Report,
    exit_code: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::Io { .. } => FmStatus::Io,
        Error::Parse(_) => FmStatus::Parse,
        Error::DimensionMismatch { .. }
        | Error::UnknownActivation { .. }
        | Error::InvalidModel(_) => FmStatus::InvalidModel,
        Error::InvalidConfig(_) | Error::DistributionMismatch(_) => FmStatus::InvalidConfig,
        Error::NonConvergence { .. } => FmStatus::NonConvergence,
        _ => FmStatus::InvalidArgument,
    }
}

struct Failure(FmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_network_load(
    path: *const c_char,
    out: *mut *mut FmNetwork,
) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let net = load_network(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FmNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from [`fm_network_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_network_free(net: *mut FmNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of input values the network expects, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_network_input_width(net: *const FmNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.input_width())
}

/// Runs the network on `input` and writes the raw outputs to `output`.
/// `written` receives the output count; when `capacity` is too small the
/// call fails with `BufferTooSmall` and `written` holds the needed size.
///
/// # Safety
/// `input` must point to `len` doubles and `output` to `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_network_forward(
    net: *const FmNetwork,
    input: *const f64,
    len: usize,
    output: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> FmStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let written = out_arg(written, "written")?;
        if input.is_null() {
            return Err(null("input"));
        }
        let y = net.inner.forward(std::slice::from_raw_parts(input, len))?;
        *written = y.len();
        if capacity < y.len() {
            return Err(Failure(
                FmStatus::BufferTooSmall,
                format!("output needs {} slots, got {capacity}", y.len()),
            ));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        std::slice::from_raw_parts_mut(output, y.len()).copy_from_slice(&y);
        Ok(())
    })
}

/// # Safety
/// `input` must point to `len` doubles; `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_network_predict(
    net: *const FmNetwork,
    input: *const f64,
    len: usize,
    label: *mut usize,
) -> FmStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let label = out_arg(label, "label")?;
        if input.is_null() {
            return Err(null("input"));
        }
        *label = net.inner.predict(std::slice::from_raw_parts(input, len))?;
        Ok(())
    })
}

/// Runs verification (`repair` = 0) or verification plus repair (`repair`
/// != 0) from a JSON run config, writing artifacts to `out_dir`. The process
/// exit code the command-line tool would use is stored in `exit_code`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` and `exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_run(
    config_path: *const c_char,
    repair: i32,
    out_dir: *const c_char,
    out: *mut *mut FmReport,
    exit_code: *mut i32,
) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let exit_code = out_arg(exit_code, "exit_code")?;
        let config = load_config(str_arg(config_path, "config_path")?.as_ref())?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let mode = if repair != 0 {
            Mode::Repair
        } else {
            Mode::Verify
        };
        let outcome = run_verify_repair(&config, mode, &dir)?;
        *exit_code = outcome.exit_code;
        *out = Box::into_raw(Box::new(FmReport {
            inner: outcome.report,
            exit_code: outcome.exit_code,
        }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`fm_run`], freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_report_free(report: *mut FmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// [`FM_VERDICT_PASS`] or [`FM_VERDICT_FAIL`] for the original network, -1
/// for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_verdict(report: *const FmReport) -> i32 {
    match report.as_ref() {
        Some(r) if r.inner.verdict == "PASS" => FM_VERDICT_PASS,
        Some(_) => FM_VERDICT_FAIL,
        None => -1,
    }
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_exit_code(report: *const FmReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.exit_code)
}

/// Largest group difference, NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_max_diff(report: *const FmReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.max_diff)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_group_count(report: *const FmReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.group_probs.len())
}

/// # Safety
/// `report` must be a live handle; `prob` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_report_group_prob(
    report: *const FmReport,
    index: usize,
    prob: *mut f64,
) -> FmStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let prob = out_arg(prob, "prob")?;
        let g = r.inner.group_probs.get(index).ok_or_else(|| {
            Failure(
                FmStatus::InvalidArgument,
                format!(
                    "group index {index} out of range ({} groups)",
                    r.inner.group_probs.len()
                ),
            )
        })?;
        *prob = g.prob;
        Ok(())
    })
}

/// 1 when the trace budget ran out before the sample bound was met, 0
/// otherwise, -1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_non_pac(report: *const FmReport) -> i32 {
    report
        .as_ref()
        .map_or(-1, |r| i32::from(r.inner.non_pac_flag))
}

/// The report as JSON; free with [`fm_string_free`]. Null for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_report_to_json(report: *const FmReport) -> *mut c_char {
    report
        .as_ref()
        .map_or(ptr::null_mut(), |r| owned_string(r.inner.to_json()))
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_dtmc_load(path: *const c_char, out: *mut *mut FmDtmc) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        *out = Box::into_raw(Box::new(FmDtmc {
            inner: LabeledChain::parse(&text)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `dtmc` must be null or a handle from [`fm_dtmc_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_dtmc_free(dtmc: *mut FmDtmc) {
    if !dtmc.is_null() {
        drop(Box::from_raw(dtmc));
    }
}

/// # Safety
/// `dtmc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_dtmc_state_count(dtmc: *const FmDtmc) -> usize {
    dtmc.as_ref().map_or(0, |d| d.inner.states.len())
}

/// Probability of eventually reaching `target` from `source`.
///
/// # Safety
/// `dtmc` must be a live handle; `prob` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_dtmc_reach(
    dtmc: *const FmDtmc,
    source: usize,
    target: usize,
    prob: *mut f64,
) -> FmStatus {
    guard(|| {
        let d = handle(dtmc, "dtmc")?;
        let prob = out_arg(prob, "prob")?;
        *prob = reach_prob_matrix(&d.inner.matrix, ReachQuery { source, target })?;
        Ok(())
    })
}

/// Graphviz rendering; free with [`fm_string_free`]. Null for a null handle.
///
/// # Safety
/// `dtmc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_dtmc_to_dot(dtmc: *const FmDtmc) -> *mut c_char {
    dtmc.as_ref()
        .map_or(ptr::null_mut(), |d| owned_string(chain_to_dot(&d.inner)))
}

/// Splits a fairness accuracy and confidence into learner parameters.
///
/// # Safety
/// `epsilon` and `delta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_derive_eps_delta(
    mu_eps: f64,
    mu_delta: f64,
    epsilon: *mut f64,
    delta: *mut f64,
) -> FmStatus {
    guard(|| {
        let epsilon = out_arg(epsilon, "epsilon")?;
        let delta = out_arg(delta, "delta")?;
        (*epsilon, *delta) = derive_eps_delta(mu_eps, mu_delta)?;
        Ok(())
    })
}

/// Sample bound for one state given its outgoing transition counts.
///
/// # Safety
/// `row` must point to `len` counts (or be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn fm_compute_hn(
    epsilon: f64,
    delta_prime: f64,
    row: *const u64,
    len: usize,
) -> f64 {
    let row = if row.is_null() || len == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(row, len)
    };
    compute_hn(epsilon, delta_prime, row)
}
