use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;

use cnmpc_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { cnmpc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

struct Handle(*mut CnmpcController);

impl Handle {
    fn new() -> Self {
        let mut h = ptr::null_mut();
        assert_eq!(unsafe { cnmpc_controller_new(&mut h) }, CnmpcStatus::Ok);
        assert!(!h.is_null());
        Handle(h)
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { cnmpc_controller_free(self.0) };
    }
}

fn hover_state(p: [f64; 3]) -> [f64; 8] {
    [p[0], p[1], p[2], 0.0, 0.0, 0.0, 0.0, 0.0]
}

#[test]
fn hovering_fleet_stays_at_hover_thrust() {
    let h = Handle::new();
    let states: Vec<f64> = [hover_state([0.0, 0.0, 1.5]), hover_state([2.0, 0.0, 1.5])].concat();
    let prev = [9.82, 0.0, 0.0, 9.82, 0.0, 0.0];
    let mut out = [0.0; 6];
    let st = unsafe {
        cnmpc_controller_step(h.0, 2, states.as_ptr(), prev.as_ptr(), states.as_ptr(), out.as_mut_ptr())
    };
    assert_eq!(st, CnmpcStatus::Ok, "{}", last_error());
    for u in out.chunks(3) {
        assert!((u[0] - 9.82).abs() < 1e-2, "thrust {}", u[0]);
        assert!(u[1].abs() < 1e-2 && u[2].abs() < 1e-2);
    }
}

#[test]
fn matches_the_library_controller() {
    use cnmpc::{AgentState, ControlInput, Controller, ControllerConfig, CylinderObstacle, FleetState};

    let h = Handle::new();
    assert_eq!(unsafe { cnmpc_controller_add_obstacle(h.0, 0.0, 0.0, 2.0, 0.8, 4.0) }, CnmpcStatus::Ok);
    let start = hover_state([-2.0, 0.1, 1.5]);
    let goal = hover_state([2.0, 0.0, 1.5]);
    let prev = [9.82, 0.0, 0.0];
    let mut out = [0.0; 3];
    let st = unsafe { cnmpc_controller_step(h.0, 1, start.as_ptr(), prev.as_ptr(), goal.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(st, CnmpcStatus::Ok);

    let mut ctl = Controller::new(ControllerConfig::default()).unwrap();
    let res = ctl
        .step(
            &FleetState::new(vec![AgentState::from_slice(&start)]),
            &[ControlInput::from_slice(&prev)],
            &[AgentState::from_slice(&goal)],
            &[CylinderObstacle::new([0.0, 0.0, 2.0], 0.8, 4.0)],
        )
        .unwrap();
    assert_eq!(out, res.first_inputs[0].to_array());
}

#[test]
fn null_and_bad_arguments_are_reported() {
    assert_eq!(unsafe { cnmpc_controller_new(ptr::null_mut()) }, CnmpcStatus::NullPointer);
    assert!(last_error().contains("null"));

    let h = Handle::new();
    let mut out = [0.0; 3];
    let st = unsafe { cnmpc_controller_step(h.0, 1, ptr::null(), ptr::null(), ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, CnmpcStatus::NullPointer);

    assert_eq!(
        unsafe { cnmpc_controller_add_obstacle(h.0, 0.0, 0.0, 1.0, -1.0, 2.0) },
        CnmpcStatus::InvalidArgument
    );
    assert_eq!(unsafe { cnmpc_controller_set_penalty_iterations(h.0, 0) }, CnmpcStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let nan = [f64::NAN; 8];
    let prev = [9.82, 0.0, 0.0];
    let st = unsafe { cnmpc_controller_step(h.0, 1, nan.as_ptr(), prev.as_ptr(), nan.as_ptr(), out.as_mut_ptr()) };
    assert_ne!(st, CnmpcStatus::Ok);

    unsafe { cnmpc_controller_free(ptr::null_mut()) };
    assert_eq!(unsafe { cnmpc_controller_reset(ptr::null_mut()) }, CnmpcStatus::NullPointer);
    assert_eq!(unsafe { cnmpc_controller_clear_obstacles(h.0) }, CnmpcStatus::Ok);
}

#[test]
fn error_message_is_truncated_to_the_buffer() {
    assert_eq!(unsafe { cnmpc_controller_reset(ptr::null_mut()) }, CnmpcStatus::NullPointer);
    let mut buf = [0x7f as c_char; 4];
    let n = unsafe { cnmpc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, "handle is null".len());
    assert_eq!(buf.map(|c| c as u8), *b"han\0");
}

#[test]
fn runs_a_scenario_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let name = CString::new("scaling_2").unwrap();
    assert_eq!(unsafe { cnmpc_run_scenario(name.as_ptr(), 3, out.as_ptr()) }, CnmpcStatus::Ok);
    for f in ["trajectory.csv", "solver.csv", "metrics.toml"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let bogus = CString::new("nosuch").unwrap();
    assert_eq!(unsafe { cnmpc_run_scenario(bogus.as_ptr(), 0, out.as_ptr()) }, CnmpcStatus::UnknownScenario);
    assert!(last_error().contains("nosuch"));
}

#[test]
fn header_is_current_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cnmpc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "cnmpc_controller_new",
        "cnmpc_controller_free",
        "cnmpc_controller_step",
        "cnmpc_controller_add_obstacle",
        "cnmpc_last_error_message",
        "cnmpc_run_scenario",
        "typedef struct CnmpcController CnmpcController",
        "CNMPC_STATUS_SOLVER_ABORT = 3",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    // Syntax check with the system C compiler when there is one.
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        return;
    };
    assert!(status.success(), "cc rejected the header");
}
