//! C ABI over the core library: opaque handles, status codes, and a
//! thread-local last-error message. All functions catch panics; no Rust
//! error escapes the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use gfl_core::constructions::{TaskKind, TaskSpec};
use gfl_core::graph::{identity_demands, sample_demands, Graph};
use gfl_core::linalg::sym_eig;
use gfl_core::verify::{run_task, Engine, ErrorReport};
use gfl_core::GflError;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GflStatus {
    Ok = 0,
    /// Null pointer, malformed UTF-8, or an out-of-range argument.
    InvalidArgument = 1,
    /// The graph failed structural validation.
    InvalidGraph = 2,
    /// A numeric routine failed: no convergence, rank collapse, overflow.
    Numeric = 3,
    /// Task parameters violate a documented constraint.
    Constraint = 4,
    /// The requested combination is not supported.
    Unsupported = 5,
    /// File or serialization failure.
    Io = 6,
    /// Internal panic; state is still consistent, the call had no effect.
    Internal = 7,
}

pub struct GflGraph(Graph);
pub struct GflReport(ErrorReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn remember_error(message: &str) {
    let sanitized: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

fn status_of(e: &GflError) -> GflStatus {
    match e {
        GflError::InvalidGraph(_) => GflStatus::InvalidGraph,
        GflError::NotSymmetric { .. }
        | GflError::NoConvergence { .. }
        | GflError::RankDeficient { .. }
        | GflError::NonFinite { .. } => GflStatus::Numeric,
        GflError::ShapeMismatch(_) | GflError::Constraint(_) | GflError::DegenerateDemand { .. } => {
            GflStatus::Constraint
        }
        GflError::Unsupported(_) => GflStatus::Unsupported,
        GflError::Io(_) | GflError::Json(_) => GflStatus::Io,
    }
}

fn fail(e: &GflError) -> GflStatus {
    remember_error(&e.to_string());
    status_of(e)
}

fn invalid(message: &str) -> GflStatus {
    remember_error(message);
    GflStatus::InvalidArgument
}

/// Runs `body` with panic containment; a panic reports Internal.
fn guarded(body: impl FnOnce() -> GflStatus) -> GflStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            remember_error("internal panic");
            GflStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn hand_out_string(text: String, out: *mut *mut c_char) -> GflStatus {
    let sanitized: String = text.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    let c = CString::new(sanitized).unwrap();
    unsafe { *out = c.into_raw() };
    GflStatus::Ok
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gfl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn gfl_string_free(text: *mut c_char) {
    if !text.is_null() {
        unsafe { drop(CString::from_raw(text)) };
    }
}

/// Builds a complete weighted graph on `n` vertices.
#[no_mangle]
pub extern "C" fn gfl_graph_generate_fc(n: u64, seed: u64, out: *mut *mut GflGraph) -> GflStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        match gfl_core::graph::generate_fc(n as usize, seed) {
            Ok(g) => {
                unsafe { *out = Box::into_raw(Box::new(GflGraph(g))) };
                GflStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Builds a circular skip-link graph on `n` vertices with the given skip.
#[no_mangle]
pub extern "C" fn gfl_graph_generate_csl(
    n: u64,
    skip: u64,
    seed: u64,
    out: *mut *mut GflGraph,
) -> GflStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        match gfl_core::graph::generate_csl(n as usize, skip as usize, seed) {
            Ok(g) => {
                unsafe { *out = Box::into_raw(Box::new(GflGraph(g))) };
                GflStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Parses a graph from its JSON form.
#[no_mangle]
pub extern "C" fn gfl_graph_from_json(text: *const c_char, out: *mut *mut GflGraph) -> GflStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        let Some(text) = (unsafe { read_str(text) }) else {
            return invalid("graph JSON is null or not UTF-8");
        };
        match Graph::from_json(text) {
            Ok(g) => {
                unsafe { *out = Box::into_raw(Box::new(GflGraph(g))) };
                GflStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Serializes a graph to JSON; free the result with gfl_string_free.
#[no_mangle]
pub extern "C" fn gfl_graph_to_json(graph: *const GflGraph, out: *mut *mut c_char) -> GflStatus {
    guarded(|| {
        if graph.is_null() || out.is_null() {
            return invalid("graph or out pointer is null");
        }
        let g = unsafe { &(*graph).0 };
        match g.to_json() {
            Ok(text) => hand_out_string(text, out),
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub extern "C" fn gfl_graph_free(graph: *mut GflGraph) {
    if !graph.is_null() {
        unsafe { drop(Box::from_raw(graph)) };
    }
}

/// Vertex and edge counts.
#[no_mangle]
pub extern "C" fn gfl_graph_counts(
    graph: *const GflGraph,
    n: *mut u64,
    d: *mut u64,
) -> GflStatus {
    guarded(|| {
        if graph.is_null() || n.is_null() || d.is_null() {
            return invalid("null pointer");
        }
        let g = unsafe { &(*graph).0 };
        unsafe {
            *n = g.n as u64;
            *d = g.d() as u64;
        }
        GflStatus::Ok
    })
}

/// Smallest nonzero and largest Laplacian eigenvalues.
#[no_mangle]
pub extern "C" fn gfl_graph_spectrum(
    graph: *const GflGraph,
    lambda_min: *mut f64,
    lambda_max: *mut f64,
) -> GflStatus {
    guarded(|| {
        if graph.is_null() || lambda_min.is_null() || lambda_max.is_null() {
            return invalid("null pointer");
        }
        let g = unsafe { &(*graph).0 };
        match sym_eig(g.laplacian().as_mat()) {
            Ok(dec) => {
                unsafe {
                    *lambda_min = dec.eigenvalues[1];
                    *lambda_max = *dec.eigenvalues.last().unwrap();
                }
                GflStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

fn option_param(value: f64) -> Option<f64> {
    if value.is_nan() {
        None
    } else {
        Some(value)
    }
}

/// Runs one task and returns a report handle.
///
/// `task` is a task name such as "electric_gd". Unset numeric parameters
/// are passed as NaN. `identity_demands` nonzero uses the n-column
/// centering demands (k is then ignored); otherwise k demand columns are
/// sampled from `demand_seed`, projected when `project_demands` is
/// nonzero. `engine_efficient` nonzero selects the constrained recursion.
#[no_mangle]
pub extern "C" fn gfl_run_task(
    graph: *const GflGraph,
    task: *const c_char,
    layers: u64,
    k: u64,
    delta: f64,
    temp: f64,
    mu: f64,
    identity_demands_flag: i32,
    project_demands: i32,
    demand_seed: u64,
    engine_efficient: i32,
    out: *mut *mut GflReport,
) -> GflStatus {
    guarded(|| {
        if graph.is_null() || out.is_null() {
            return invalid("graph or out pointer is null");
        }
        let Some(task_name) = (unsafe { read_str(task) }) else {
            return invalid("task name is null or not UTF-8");
        };
        let kind = match TaskKind::from_str(task_name) {
            Ok(kind) => kind,
            Err(e) => return fail(&e),
        };
        let g = unsafe { &(*graph).0 };
        let spec = TaskSpec {
            kind,
            layers: layers as usize,
            k: if identity_demands_flag != 0 { g.n } else { k as usize },
            delta: option_param(delta),
            temp: option_param(temp),
            mu: option_param(mu),
            lambda_max_hint: None,
        };
        let demands = if identity_demands_flag != 0 {
            identity_demands(g.n)
        } else {
            match sample_demands(g.n, spec.k, project_demands != 0, demand_seed) {
                Ok(d) => d,
                Err(e) => return fail(&e),
            }
        };
        let engine = if engine_efficient != 0 { Engine::Efficient } else { Engine::Full };
        match run_task(g, &spec, &demands, engine) {
            Ok(report) => {
                unsafe { *out = Box::into_raw(Box::new(GflReport(report))) };
                GflStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Rows in the report, one per layer including the input state.
#[no_mangle]
pub extern "C" fn gfl_report_layer_count(report: *const GflReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    unsafe { (*report).0.layers.len() as u64 }
}

/// Reads one row. A layer with no claimed bound yields bound = NaN and
/// satisfied = -1; otherwise satisfied is 0 or 1.
#[no_mangle]
pub extern "C" fn gfl_report_row(
    report: *const GflReport,
    layer: u64,
    error: *mut f64,
    bound: *mut f64,
    satisfied: *mut i32,
) -> GflStatus {
    guarded(|| {
        if report.is_null() || error.is_null() || bound.is_null() || satisfied.is_null() {
            return invalid("null pointer");
        }
        let r = unsafe { &(*report).0 };
        let Some(row) = r.layers.get(layer as usize) else {
            return invalid("layer index out of range");
        };
        unsafe {
            *error = row.error;
            *bound = row.bound.unwrap_or(f64::NAN);
            *satisfied = match row.satisfied {
                None => -1,
                Some(false) => 0,
                Some(true) => 1,
            };
        }
        GflStatus::Ok
    })
}

/// Oracle spectrum recorded in the report.
#[no_mangle]
pub extern "C" fn gfl_report_spectrum(
    report: *const GflReport,
    lambda_min: *mut f64,
    lambda_max: *mut f64,
) -> GflStatus {
    guarded(|| {
        if report.is_null() || lambda_min.is_null() || lambda_max.is_null() {
            return invalid("null pointer");
        }
        let r = unsafe { &(*report).0 };
        unsafe {
            *lambda_min = r.lambda_min;
            *lambda_max = r.lambda_max;
        }
        GflStatus::Ok
    })
}

/// 1 when every claimed bound is satisfied, 0 otherwise, -1 on null.
#[no_mangle]
pub extern "C" fn gfl_report_all_satisfied(report: *const GflReport) -> i32 {
    if report.is_null() {
        return -1;
    }
    let r = unsafe { &(*report).0 };
    i32::from(r.all_applicable_satisfied())
}

/// Full report as JSON; free the result with gfl_string_free.
#[no_mangle]
pub extern "C" fn gfl_report_to_json(report: *const GflReport, out: *mut *mut c_char) -> GflStatus {
    guarded(|| {
        if report.is_null() || out.is_null() {
            return invalid("report or out pointer is null");
        }
        let r = unsafe { &(*report).0 };
        match r.to_json() {
            Ok(text) => hand_out_string(text, out),
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub extern "C" fn gfl_report_free(report: *mut GflReport) {
    if !report.is_null() {
        unsafe { drop(Box::from_raw(report)) };
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn gfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
