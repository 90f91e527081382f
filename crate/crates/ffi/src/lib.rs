//! C ABI for the dwell-consensus library.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`DcStatus`];
//! on failure `dc_last_error` gives a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dwell_consensus::gain::solve_riccati;
use dwell_consensus::graph::{build_laplacian, check_connected_reachability, spectral_analysis, Topology};
use dwell_consensus::scenario::{prepare, write_artifacts, Prepared, RunResult, Scenario};
use dwell_consensus::schedule::{check_adt_durations, tightest_adt_durations};
use dwell_consensus::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A parsed and validated scenario.
pub struct DcScenario {
    prep: Prepared,
}

/// A finished run with its certificate.
pub struct DcRun {
    prep: Prepared,
    result: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DcStatus, String);

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Parse { .. } => DcStatus::Parse,
        Error::Validation(_) => DcStatus::Validation,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => DcStatus::Io,
        Error::InvalidParameter { .. } | Error::Dimension(_) | Error::InvalidTopology { .. } => {
            DcStatus::InvalidArgument
        }
        _ => DcStatus::Numerical,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

fn publish_scenario(sc: Scenario, out: *mut *mut DcScenario) -> Result<(), Failure> {
    let out = unsafe { out_ref(out, "out")? };
    let prep = prepare(&sc)?;
    *out = Box::into_raw(Box::new(DcScenario { prep }));
    Ok(())
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_load(path: *const c_char, out: *mut *mut DcScenario) -> DcStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        publish_scenario(Scenario::load(Path::new(path))?, out)
    })
}

/// Parses and validates scenario TOML held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_from_str(text: *const c_char, out: *mut *mut DcScenario) -> DcStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        publish_scenario(Scenario::from_toml(text, "<memory>")?, out)
    })
}

/// # Safety
/// `sc` must come from `dc_scenario_load`/`dc_scenario_from_str` or be null.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_free(sc: *mut DcScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Number of agents and state dimension.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_shape(sc: *const DcScenario, agents: *mut usize, dim: *mut usize) -> DcStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        *out_ref(agents, "agents")? = sc.prep.ts.node_count();
        *out_ref(dim, "dim")? = sc.prep.scenario.dim;
        Ok(())
    })
}

/// Simulates and certifies the scenario. `dt <= 0` keeps the scenario's step.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_run(sc: *const DcScenario, dt: f64, out: *mut *mut DcRun) -> DcStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        let out = out_ref(out, "out")?;
        let prep = sc.prep.clone().with_overrides((dt > 0.0).then_some(dt), None, None)?;
        let result = prep.run()?;
        *out = Box::into_raw(Box::new(DcRun { prep, result }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from `dc_scenario_run` or be null.
#[no_mangle]
pub unsafe extern "C" fn dc_run_free(run: *mut DcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn run_ref<'a>(run: *const DcRun) -> Result<&'a DcRun, Failure> {
    run.as_ref().ok_or_else(|| null("run"))
}

/// Process exit code the CLI would return for this run.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_run_exit_code(run: *const DcRun, out: *mut i32) -> DcStatus {
    guard(|| {
        *out_ref(out, "out")? = run_ref(run)?.result.exit_code;
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and both outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dc_run_verdict(run: *const DcRun, certified: *mut bool, converged: *mut bool) -> DcStatus {
    guard(|| {
        let r = run_ref(run)?;
        *out_ref(certified, "certified")? = r.result.certified;
        *out_ref(converged, "converged")? = r.result.converged;
        Ok(())
    })
}

/// Final consensus error (initial error for a zero horizon).
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_run_final_error(run: *const DcRun, out: *mut f64) -> DcStatus {
    guard(|| {
        let r = run_ref(run)?;
        *out_ref(out, "out")? = r.result.trajectory.final_error().unwrap_or(r.result.initial_error);
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_run_sample_count(run: *const DcRun, out: *mut usize) -> DcStatus {
    guard(|| {
        *out_ref(out, "out")? = run_ref(run)?.result.trajectory.samples.len();
        Ok(())
    })
}

/// Copies sample `index`: its time into `t` and the agent outputs into
/// `outputs` (capacity `len`, at least the number of agents).
///
/// # Safety
/// `run` must be a live handle; `t` valid; `outputs` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_run_sample(
    run: *const DcRun,
    index: usize,
    t: *mut f64,
    outputs: *mut f64,
    len: usize,
) -> DcStatus {
    guard(|| {
        let r = run_ref(run)?;
        let samples = &r.result.trajectory.samples;
        let s = samples.get(index).ok_or_else(|| {
            Failure(
                DcStatus::InvalidArgument,
                format!("sample {index} out of range ({} samples)", samples.len()),
            )
        })?;
        if outputs.is_null() {
            return Err(null("outputs"));
        }
        if len < s.y.len() {
            return Err(Failure(
                DcStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", s.y.len()),
            ));
        }
        *out_ref(t, "t")? = s.t;
        ptr::copy_nonoverlapping(s.y.as_ptr(), outputs, s.y.len());
        Ok(())
    })
}

/// Certificate report as a JSON string; release it with `dc_string_free`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_run_certificate_json(run: *const DcRun, out: *mut *mut c_char) -> DcStatus {
    guard(|| {
        let r = run_ref(run)?;
        let out = out_ref(out, "out")?;
        let json = match &r.result.certificate {
            Some(c) => serde_json::to_string(c).map_err(Error::from)?,
            None => r#"{"verdict":"not evaluated: zero horizon","certified":false}"#.to_string(),
        };
        *out = CString::new(json)
            .map_err(|_| Failure(DcStatus::Numerical, "JSON contains NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the run artifacts (trajectory, switches, certificate, Lyapunov
/// trace, summary) into `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dc_run_write_artifacts(run: *const DcRun, dir: *const c_char) -> DcStatus {
    guard(|| {
        let r = run_ref(run)?;
        let dir = str_arg(dir, "dir")?;
        write_artifacts(Path::new(dir), &r.prep, &r.result)?;
        Ok(())
    })
}

/// Stabilizing solution of `SP + PSᵀ − 2μ P CᵀC P + aI = 0`, written
/// row-major into `p_out` (capacity `len >= d*d`).
///
/// # Safety
/// `p_out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_solve_riccati(d: usize, mu: f64, a: f64, p_out: *mut f64, len: usize) -> DcStatus {
    guard(|| {
        if p_out.is_null() {
            return Err(null("p_out"));
        }
        if len < d * d {
            return Err(Failure(
                DcStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", d * d),
            ));
        }
        let sol = solve_riccati(d, mu, a)?;
        let out = std::slice::from_raw_parts_mut(p_out, d * d);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = sol.p[(i, j)];
            }
        }
        Ok(())
    })
}

/// Connectivity of the digraph with row-major `n×n` weights
/// (`weights[k*n + j]` = flow from `j` to `k`).
///
/// # Safety
/// `weights` must be valid for `n*n` doubles; outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dc_topology_connected(
    n: usize,
    weights: *const f64,
    connected: *mut bool,
    zero_multiplicity: *mut usize,
) -> DcStatus {
    guard(|| {
        if weights.is_null() {
            return Err(null("weights"));
        }
        let w = std::slice::from_raw_parts(weights, n * n);
        let mut edges = Vec::new();
        for k in 0..n {
            for j in 0..n {
                if w[k * n + j] != 0.0 && k != j {
                    edges.push((k, j, w[k * n + j]));
                }
            }
        }
        let topo = Topology::from_edges("ffi", n, &edges)?;
        let lap = build_laplacian(&topo)?;
        let spec = spectral_analysis(&lap, lap.default_zero_tol())?;
        if spec.is_connected != check_connected_reachability(&topo) {
            return Err(Failure(
                DcStatus::Numerical,
                "spectral and reachability oracles disagree".into(),
            ));
        }
        *out_ref(connected, "connected")? = spec.is_connected;
        *out_ref(zero_multiplicity, "zero_multiplicity")? = spec.zero_multiplicity;
        Ok(())
    })
}

/// Average dwell-time check on the connected-interval durations.
///
/// # Safety
/// `durations` must be valid for `len` doubles (may be null when `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn dc_check_adt(
    durations: *const f64,
    len: usize,
    tau: f64,
    n0: usize,
    ok: *mut bool,
) -> DcStatus {
    guard(|| {
        let d = slice_arg(durations, len)?;
        *out_ref(ok, "ok")? = check_adt_durations(d, tau, n0);
        Ok(())
    })
}

/// Largest `τ` accepted by `dc_check_adt` (infinity when unconstrained).
///
/// # Safety
/// `durations` must be valid for `len` doubles (may be null when `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn dc_tightest_adt(durations: *const f64, len: usize, n0: usize, out: *mut f64) -> DcStatus {
    guard(|| {
        let d = slice_arg(durations, len)?;
        *out_ref(out, "out")? = tightest_adt_durations(d, n0);
        Ok(())
    })
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null("durations"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}
