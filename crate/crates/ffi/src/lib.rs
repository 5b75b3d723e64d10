//! C ABI over the `cnmpc` controller.
//!
//! Controllers are opaque heap handles. Every call returns a [`CnmpcStatus`];
//! on failure a message is stored per thread and can be read with
//! [`cnmpc_last_error_message`]. Arrays are flat and row-major: states are
//! `n_agents * CNMPC_STATE_DIM` doubles `[px, py, pz, vx, vy, vz, phi, theta]`
//! per agent, inputs are `n_agents * CNMPC_INPUT_DIM` doubles
//! `[thrust, phi_ref, theta_ref]` per agent.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cnmpc::cli::{cmd_run, RunRequest};
use cnmpc::dynamics::{INPUT_DIM, STATE_DIM};
use cnmpc::{AgentState, ControlInput, Controller, ControllerConfig, CylinderObstacle, Error, FleetState};

pub const CNMPC_STATE_DIM: usize = 8;
pub const CNMPC_INPUT_DIM: usize = 3;

const _: () = assert!(CNMPC_STATE_DIM == STATE_DIM && CNMPC_INPUT_DIM == INPUT_DIM);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverAbort = 3,
    UnknownScenario = 4,
    Io = 5,
    Panic = 6,
}

/// Opaque controller handle.
pub struct CnmpcController {
    controller: Controller,
    obstacles: Vec<CylinderObstacle>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CnmpcStatus, msg: impl Into<String>) -> CnmpcStatus {
    set_last_error(msg);
    status
}

fn status_of(err: &Error) -> CnmpcStatus {
    match err {
        Error::SolverAbort(_) => CnmpcStatus::SolverAbort,
        Error::UnknownScenario(_) => CnmpcStatus::UnknownScenario,
        Error::Io { .. } | Error::Csv(_) => CnmpcStatus::Io,
        _ => CnmpcStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> CnmpcStatus) -> CnmpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(CnmpcStatus::Panic, "internal panic"),
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length without the NUL, or 0
/// when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a controller with the default configuration and stores it in
/// `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_new(out: *mut *mut CnmpcController) -> CnmpcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CnmpcStatus::NullPointer, "out is null");
        }
        match Controller::new(ControllerConfig::default()) {
            Ok(controller) => {
                *out = Box::into_raw(Box::new(CnmpcController { controller, obstacles: Vec::new() }));
                CnmpcStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a controller. Null is ignored.
///
/// # Safety
/// `handle` must be null or come from [`cnmpc_controller_new`] and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_free(handle: *mut CnmpcController) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Sets the number of penalty rounds per solve. Drops any held warm start.
///
/// # Safety
/// `handle` must be a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_set_penalty_iterations(
    handle: *mut CnmpcController,
    rounds: usize,
) -> CnmpcStatus {
    guarded(|| {
        let Some(h) = handle.as_mut() else {
            return fail(CnmpcStatus::NullPointer, "handle is null");
        };
        let mut cfg = h.controller.config().clone();
        cfg.penalty.outer_iterations = rounds;
        match Controller::new(cfg) {
            Ok(c) => {
                h.controller = c;
                CnmpcStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Adds a vertical cylinder centered at `(cx, cy, cz)`.
///
/// # Safety
/// `handle` must be a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_add_obstacle(
    handle: *mut CnmpcController,
    cx: f64,
    cy: f64,
    cz: f64,
    radius: f64,
    height: f64,
) -> CnmpcStatus {
    guarded(|| {
        let Some(h) = handle.as_mut() else {
            return fail(CnmpcStatus::NullPointer, "handle is null");
        };
        if ![cx, cy, cz].iter().all(|v| v.is_finite()) || !(radius > 0.0) || !(height > 0.0) {
            return fail(CnmpcStatus::InvalidArgument, "obstacle needs a finite center and positive size");
        }
        h.obstacles.push(CylinderObstacle::new([cx, cy, cz], radius, height));
        CnmpcStatus::Ok
    })
}

/// # Safety
/// `handle` must be a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_clear_obstacles(handle: *mut CnmpcController) -> CnmpcStatus {
    guarded(|| match handle.as_mut() {
        Some(h) => {
            h.obstacles.clear();
            CnmpcStatus::Ok
        }
        None => fail(CnmpcStatus::NullPointer, "handle is null"),
    })
}

/// Forgets the warm start so the next step starts from hover inputs.
///
/// # Safety
/// `handle` must be a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_reset(handle: *mut CnmpcController) -> CnmpcStatus {
    guarded(|| match handle.as_mut() {
        Some(h) => {
            h.controller.reset();
            CnmpcStatus::Ok
        }
        None => fail(CnmpcStatus::NullPointer, "handle is null"),
    })
}

/// Solves one control step and writes the inputs to apply into
/// `out_inputs`.
///
/// # Safety
/// `handle` must be a live controller handle. `states` and `references` must
/// point to `n_agents * CNMPC_STATE_DIM` readable doubles, `prev_inputs` to
/// `n_agents * CNMPC_INPUT_DIM` readable doubles and `out_inputs` to as many
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_controller_step(
    handle: *mut CnmpcController,
    n_agents: usize,
    states: *const f64,
    prev_inputs: *const f64,
    references: *const f64,
    out_inputs: *mut f64,
) -> CnmpcStatus {
    guarded(|| {
        let Some(h) = handle.as_mut() else {
            return fail(CnmpcStatus::NullPointer, "handle is null");
        };
        if states.is_null() || prev_inputs.is_null() || references.is_null() || out_inputs.is_null() {
            return fail(CnmpcStatus::NullPointer, "array argument is null");
        }
        if n_agents == 0 {
            return fail(CnmpcStatus::InvalidArgument, "n_agents must be positive");
        }
        let states = std::slice::from_raw_parts(states, n_agents * STATE_DIM);
        let prev = std::slice::from_raw_parts(prev_inputs, n_agents * INPUT_DIM);
        let refs = std::slice::from_raw_parts(references, n_agents * STATE_DIM);

        let fleet = FleetState::new(states.chunks_exact(STATE_DIM).map(AgentState::from_slice).collect());
        let prev: Vec<ControlInput> = prev.chunks_exact(INPUT_DIM).map(ControlInput::from_slice).collect();
        let refs: Vec<AgentState> = refs.chunks_exact(STATE_DIM).map(AgentState::from_slice).collect();

        match h.controller.step(&fleet, &prev, &refs, &h.obstacles) {
            Ok(res) => {
                let out = std::slice::from_raw_parts_mut(out_inputs, n_agents * INPUT_DIM);
                for (chunk, u) in out.chunks_exact_mut(INPUT_DIM).zip(&res.first_inputs) {
                    chunk.copy_from_slice(&u.to_array());
                }
                CnmpcStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Runs a built-in scenario (or a scenario file) and writes its logs to
/// `out_dir`.
///
/// # Safety
/// `scenario` and `out_dir` must be valid NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn cnmpc_run_scenario(
    scenario: *const c_char,
    seed: u64,
    out_dir: *const c_char,
) -> CnmpcStatus {
    guarded(|| {
        if scenario.is_null() || out_dir.is_null() {
            return fail(CnmpcStatus::NullPointer, "string argument is null");
        }
        let (Ok(name), Ok(dir)) = (CStr::from_ptr(scenario).to_str(), CStr::from_ptr(out_dir).to_str()) else {
            return fail(CnmpcStatus::InvalidArgument, "strings must be UTF-8");
        };
        let mut req = RunRequest::new(name, PathBuf::from(dir));
        req.seed = seed;
        match cmd_run(&req) {
            Ok(_) => CnmpcStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
