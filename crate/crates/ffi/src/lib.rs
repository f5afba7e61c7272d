//! C ABI for the geometric mechanics engine.
//!
//! Systems and trajectories are opaque handles; every fallible call returns
//! an [`MkStatus`] code and stores a human-readable message retrievable with
//! [`mk_last_error_message`] (thread-local, valid until the next failing
//! call on the same thread). Strings returned by the library are freed with
//! [`mk_string_free`]; handles with their `_free` functions.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mechkit::cli;
use mechkit::integrate::{integrate, sample_times, IntegratorConfig, Trajectory};
use mechkit::system::{SystemFile, SystemSpec};
use mechkit::MechError;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MkStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    EvalError = 3,
    SingularMatrix = 4,
    SingularLagrangian = 5,
    OffConstraint = 6,
    IntegrationError = 7,
    ValidationError = 8,
    UnknownSystem = 9,
    Utf8Error = 10,
    InternalError = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg).ok();
    });
}

fn status_of(err: &MechError) -> MkStatus {
    match err {
        MechError::Parse(_) => MkStatus::ParseError,
        MechError::Eval(_) => MkStatus::EvalError,
        MechError::LinAlg(_) => MkStatus::SingularMatrix,
        MechError::SingularLagrangian { .. } => MkStatus::SingularLagrangian,
        MechError::OffConstraint { .. } | MechError::OffConstraintVelocity { .. } => {
            MkStatus::OffConstraint
        }
        MechError::FieldAt { .. } | MechError::StepUnderflow { .. } => MkStatus::IntegrationError,
        MechError::UnknownSystem(_) => MkStatus::UnknownSystem,
        _ => MkStatus::ValidationError,
    }
}

fn fail(err: MechError) -> MkStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn invalid(msg: &str) -> MkStatus {
    set_error(msg.to_owned());
    MkStatus::InvalidArgument
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MkStatus> {
    if ptr.is_null() {
        return Err(invalid("null string argument"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        MkStatus::Utf8Error
    })
}

fn leak_string(text: String) -> *mut c_char {
    match CString::new(text) {
        Ok(s) => s.into_raw(),
        Err(_) => ptr::null_mut(),
    }
}

/// Opaque handle to a validated system.
pub struct MkSystem {
    spec: SystemSpec,
}

/// Opaque handle to an integrated trajectory.
pub struct MkTrajectory {
    traj: Trajectory,
    state_dim: usize,
}

/// Message describing the most recent failure on this thread, or null.
/// The pointer stays valid until the next failing call on the same thread;
/// do not free it.
#[no_mangle]
pub extern "C" fn mk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `mk_*` function that
/// documents `mk_string_free`, or null.
#[no_mangle]
pub unsafe extern "C" fn mk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// JSON array of registry entries (`[{"id": ..., "formalism": ...}]`).
/// Free with [`mk_string_free`].
#[no_mangle]
pub extern "C" fn mk_registry_list_json() -> *mut c_char {
    leak_string(
        serde_json::to_string(&cli::run_list()).expect("registry list serializes"),
    )
}

/// Build a system from a JSON document in the system-file schema.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn mk_system_from_json(
    json: *const c_char,
    out: *mut *mut MkSystem,
) -> MkStatus {
    if out.is_null() {
        return invalid("null output pointer");
    }
    let text = match read_str(json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let spec = match SystemFile::from_json(text).and_then(|f| f.validate()) {
        Ok(spec) => spec,
        Err(e) => return fail(e),
    };
    *out = Box::into_raw(Box::new(MkSystem { spec }));
    MkStatus::Ok
}

/// Build a system from a registry id.
///
/// # Safety
/// `id` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mk_system_from_registry(
    id: *const c_char,
    out: *mut *mut MkSystem,
) -> MkStatus {
    if out.is_null() {
        return invalid("null output pointer");
    }
    let id = match read_str(id) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let spec = match mechkit::registry::get(id) {
        Ok(spec) => spec,
        Err(e) => return fail(e),
    };
    *out = Box::into_raw(Box::new(MkSystem { spec }));
    MkStatus::Ok
}

/// Free a system handle.
///
/// # Safety
/// `sys` must come from `mk_system_from_*`, or be null.
#[no_mangle]
pub unsafe extern "C" fn mk_system_free(sys: *mut MkSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of integration state components (time is bound separately).
///
/// # Safety
/// `sys` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mk_system_state_dim(
    sys: *const MkSystem,
    out: *mut usize,
) -> MkStatus {
    if sys.is_null() || out.is_null() {
        return invalid("null argument");
    }
    match (*sys).spec.state_layout() {
        Ok(layout) => {
            *out = layout.len();
            MkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// JSON array of state component names, in state order.
/// Free with [`mk_string_free`].
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mk_system_state_names_json(sys: *const MkSystem) -> *mut c_char {
    if sys.is_null() {
        return ptr::null_mut();
    }
    match (*sys).spec.state_layout() {
        Ok(layout) => leak_string(
            serde_json::to_string(layout.names()).expect("names serialize"),
        ),
        Err(_) => ptr::null_mut(),
    }
}

/// Write the default initial state into `buf` (length `len` must equal the
/// state dimension).
///
/// # Safety
/// `sys` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mk_system_initial_state(
    sys: *const MkSystem,
    buf: *mut f64,
    len: usize,
) -> MkStatus {
    if sys.is_null() || buf.is_null() {
        return invalid("null argument");
    }
    let state = match (*sys).spec.initial_state(&BTreeMap::new()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if state.len() != len {
        return invalid("buffer length does not match the state dimension");
    }
    std::ptr::copy_nonoverlapping(state.as_ptr(), buf, len);
    MkStatus::Ok
}

/// Evaluate the dynamical vector field at `(t, state)`; writes the state
/// derivative into `out` (same length as the state).
///
/// # Safety
/// `sys` must be a live handle; `state` and `out` must point to `len`
/// doubles (readable / writable respectively).
#[no_mangle]
pub unsafe extern "C" fn mk_derive(
    sys: *const MkSystem,
    t: f64,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> MkStatus {
    if sys.is_null() || state.is_null() || out.is_null() {
        return invalid("null argument");
    }
    let state = std::slice::from_raw_parts(state, len);
    match (*sys).spec.field_at(t, state) {
        Ok(f) => {
            if f.len() != len {
                return invalid("state length does not match the system");
            }
            std::ptr::copy_nonoverlapping(f.as_ptr(), out, len);
            MkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Integrate a trajectory from the system's initial state over `[t0, t1]`
/// with output spacing `dt_out` and integrator tolerance `tol`
/// (`tol <= 0` selects the default `1e-10`).
///
/// # Safety
/// `sys` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mk_simulate(
    sys: *const MkSystem,
    t0: f64,
    t1: f64,
    dt_out: f64,
    tol: f64,
    out: *mut *mut MkTrajectory,
) -> MkStatus {
    if sys.is_null() || out.is_null() {
        return invalid("null argument");
    }
    if !(t1 > t0) || !(dt_out > 0.0) {
        return invalid("need t1 > t0 and dt_out > 0");
    }
    let spec = &(*sys).spec;
    let state0 = match spec.initial_state(&BTreeMap::new()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let config = if tol > 0.0 {
        IntegratorConfig::with_tol(tol)
    } else {
        IntegratorConfig::default()
    };
    let samples = sample_times(t0, t1, dt_out);
    let provider = |t: f64, state: &[f64]| spec.field_at(t, state);
    match integrate(&provider, &state0, (t0, t1), &samples, &config, &[]) {
        Ok(traj) => {
            let state_dim = state0.len();
            *out = Box::into_raw(Box::new(MkTrajectory { traj, state_dim }));
            MkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of samples in a trajectory.
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mk_trajectory_len(traj: *const MkTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    (*traj).traj.len()
}

/// State dimension of a trajectory.
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mk_trajectory_state_dim(traj: *const MkTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    (*traj).state_dim
}

/// Copy the sample times into `buf` (`len` must equal the trajectory
/// length).
///
/// # Safety
/// `traj` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mk_trajectory_times(
    traj: *const MkTrajectory,
    buf: *mut f64,
    len: usize,
) -> MkStatus {
    if traj.is_null() || buf.is_null() {
        return invalid("null argument");
    }
    let times = &(*traj).traj.times;
    if times.len() != len {
        return invalid("buffer length does not match the trajectory");
    }
    std::ptr::copy_nonoverlapping(times.as_ptr(), buf, len);
    MkStatus::Ok
}

/// Copy the states row-major into `buf` (`len` must equal
/// `trajectory length * state dimension`).
///
/// # Safety
/// `traj` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mk_trajectory_states(
    traj: *const MkTrajectory,
    buf: *mut f64,
    len: usize,
) -> MkStatus {
    if traj.is_null() || buf.is_null() {
        return invalid("null argument");
    }
    let t = &*traj;
    if t.traj.len() * t.state_dim != len {
        return invalid("buffer length does not match the trajectory");
    }
    for (i, state) in t.traj.states.iter().enumerate() {
        std::ptr::copy_nonoverlapping(state.as_ptr(), buf.add(i * t.state_dim), t.state_dim);
    }
    MkStatus::Ok
}

/// Free a trajectory handle.
///
/// # Safety
/// `traj` must come from `mk_simulate`, or be null.
#[no_mangle]
pub unsafe extern "C" fn mk_trajectory_free(traj: *mut MkTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Run the invariant battery over `[t0, t1]` and return the report as JSON.
/// `pass` receives 1 if every check passed. Free the string with
/// [`mk_string_free`].
///
/// # Safety
/// `sys` must be a live handle; `out_json` and `pass` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mk_check_json(
    sys: *const MkSystem,
    t0: f64,
    t1: f64,
    out_json: *mut *mut c_char,
    pass: *mut i32,
) -> MkStatus {
    if sys.is_null() || out_json.is_null() || pass.is_null() {
        return invalid("null argument");
    }
    match cli::run_check_spec(&(*sys).spec, (t0, t1)) {
        Ok(report) => {
            *pass = i32::from(report.pass);
            *out_json = leak_string(report.to_json_pretty());
            MkStatus::Ok
        }
        Err(e) => fail(e),
    }
}
