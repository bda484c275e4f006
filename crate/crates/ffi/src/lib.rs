//! C interface to the viscoelastic beam solver.
//!
//! Simulations are opaque handles created from a TOML run config or a builtin
//! benchmark and released with [`vb_simulation_free`]. Every fallible call
//! returns a [`VbStatus`]; the message of the last failure on the calling
//! thread is available from [`vb_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use viscobeam::cli::benchmarks::{build, Params};
use viscobeam::cli::config::RunConfig;
use viscobeam::solver::{Probe, Simulation, StepReport};
use viscobeam::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid config, benchmark name, parameters or scene.
    Config = 2,
    /// Newton iteration failed even after the recovery strategies.
    Nonconvergence = 3,
    /// Invalid or degenerate geometry (knots, curves, fits).
    Geometry = 4,
    /// Singular linear system or ambiguous prescribed rotation.
    Solve = 5,
    /// Out-of-range index, non-UTF-8 string or finished simulation.
    InvalidArgument = 6,
    /// Internal panic caught at the boundary; the handle should be freed.
    Panic = 7,
}

/// Opaque simulation handle.
pub struct VbSimulation {
    sim: Simulation,
}

/// Summary of one time step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VbStepReport {
    pub step: usize,
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    /// 1 for a regular step, 2 when it was split after a failure.
    pub substeps: usize,
    /// Energy dissipated during the step [J].
    pub dissipation: f64,
}

impl From<StepReport> for VbStepReport {
    fn from(r: StepReport) -> Self {
        Self {
            step: r.step,
            t: r.t,
            iterations: r.iterations,
            residual: r.residual,
            substeps: r.substeps,
            dissipation: r.dissipation,
        }
    }
}

/// State of a probe at the current time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VbProbeSample {
    pub t: f64,
    pub position: [f64; 3],
    pub displacement: [f64; 3],
    /// Rotation vector accumulated step by step (keeps growing past π).
    pub rotation: [f64; 3],
    /// Cumulative dissipated energy [J].
    pub dissipation: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let text = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> VbStatus {
    match err {
        Error::Nonconvergence { .. } => VbStatus::Nonconvergence,
        Error::Solve(_) | Error::BranchAmbiguity { .. } => VbStatus::Solve,
        Error::Domain { .. } | Error::Knots(_) | Error::Curve(_) | Error::SingularGeometry(_) | Error::Fit(_) => {
            VbStatus::Geometry
        }
        Error::Contract(_) => VbStatus::InvalidArgument,
        Error::Config(_) | Error::Scene(_) | Error::Io(_) => VbStatus::Config,
    }
}

/// Runs `f`, recording failures and converting panics.
fn guard<F: FnOnce() -> Result<(), (VbStatus, String)>>(f: F) -> VbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            VbStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (VbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VbStatus, String) {
    (VbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(sim: *mut VbSimulation) -> Result<&'a mut VbSimulation, (VbStatus, String)> {
    sim.as_mut().ok_or_else(|| null("simulation handle"))
}

unsafe fn emit(out: *mut *mut VbSimulation, sim: Simulation) {
    *out = Box::into_raw(Box::new(VbSimulation { sim }));
}

/// Creates a simulation from the text of a TOML run config (the format
/// accepted by `viscobeam run`), including its probes.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_from_config(toml: *const c_char, out: *mut *mut VbSimulation) -> VbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = ptr::null_mut();
        let cfg = RunConfig::from_toml(text(toml, "config")?).map_err(lib_err)?;
        let prepared = cfg.prepare().map_err(lib_err)?;
        let mut sim = Simulation::new(prepared.scene, prepared.settings).map_err(lib_err)?;
        for p in prepared.probes {
            sim.add_probe(p).map_err(lib_err)?;
        }
        emit(out, sim);
        Ok(())
    })
}

/// Creates a builtin benchmark. `overrides` is null or a TOML table of
/// parameter overrides such as `"p = 4\nn = 12\nphase = \"long-term\""`.
///
/// # Safety
/// `name` and a non-null `overrides` must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_from_benchmark(
    name: *const c_char,
    overrides: *const c_char,
    out: *mut *mut VbSimulation,
) -> VbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = ptr::null_mut();
        let name = text(name, "benchmark name")?;
        let params: Params = if overrides.is_null() {
            Params::new()
        } else {
            toml::from_str(text(overrides, "overrides")?)
                .map_err(|e| (VbStatus::Config, format!("overrides are not a TOML table: {e}")))?
        };
        let bench = build(name, &params).map_err(lib_err)?;
        let mut sim = Simulation::new(bench.scene, bench.settings).map_err(lib_err)?;
        for p in bench.probes {
            sim.add_probe(p).map_err(lib_err)?;
        }
        emit(out, sim);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `sim` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_free(sim: *mut VbSimulation) {
    if !sim.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(sim))));
    }
}

/// Advances one time step. `report` may be null.
///
/// On failure the simulation keeps the state of the last completed step.
///
/// # Safety
/// `sim` must be a live handle; a non-null `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_step(sim: *mut VbSimulation, report: *mut VbStepReport) -> VbStatus {
    guard(|| {
        let h = handle(sim)?;
        if h.sim.is_finished() {
            return Err((VbStatus::InvalidArgument, "simulation already reached its end time".into()));
        }
        let r = h.sim.step().map_err(lib_err)?;
        if !report.is_null() {
            *report = r.into();
        }
        Ok(())
    })
}

/// Steps until the end time.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_run(sim: *mut VbSimulation) -> VbStatus {
    guard(|| {
        let h = handle(sim)?;
        while !h.sim.is_finished() {
            h.sim.step().map_err(lib_err)?;
        }
        Ok(())
    })
}

/// Current time [s].
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_time(sim: *const VbSimulation, out: *mut f64) -> VbStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("simulation handle"))?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = h.sim.time();
        Ok(())
    })
}

/// Writes 1 when the end time has been reached, else 0.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_is_finished(sim: *const VbSimulation, out: *mut i32) -> VbStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("simulation handle"))?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = i32::from(h.sim.is_finished());
        Ok(())
    })
}

/// Number of probes.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_probe_count(sim: *const VbSimulation, out: *mut usize) -> VbStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("simulation handle"))?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = h.sim.probes().len();
        Ok(())
    })
}

/// Adds a probe at normalized parameter `u ∈ [0, 1]` of `patch`; its index
/// is written to `index` when that is non-null. Add probes before stepping
/// so their accumulated rotations start from the reference state.
///
/// # Safety
/// `sim` must be a live handle, `name` NUL-terminated; a non-null `index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_add_probe(
    sim: *mut VbSimulation,
    name: *const c_char,
    patch: usize,
    u: f64,
    index: *mut usize,
) -> VbStatus {
    guard(|| {
        let h = handle(sim)?;
        let name = text(name, "probe name")?.to_string();
        let i = h.sim.add_probe(Probe { name, patch, u }).map_err(lib_err)?;
        if !index.is_null() {
            *index = i;
        }
        Ok(())
    })
}

/// Current state of probe `index`.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_probe_sample(
    sim: *const VbSimulation,
    index: usize,
    out: *mut VbProbeSample,
) -> VbStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("simulation handle"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        if index >= h.sim.probes().len() {
            return Err((VbStatus::InvalidArgument, format!("probe index {index} out of range")));
        }
        let s = h.sim.probe_sample(index, 0).map_err(lib_err)?;
        *out = VbProbeSample {
            t: s.t,
            position: s.position.into(),
            displacement: s.displacement.into(),
            rotation: s.rotation.into(),
            dissipation: s.dissipation,
        };
        Ok(())
    })
}

/// Current centroid position of `patch` at normalized parameter `u`.
///
/// # Safety
/// `sim` must be a live handle and `xyz` point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vb_simulation_point(sim: *const VbSimulation, patch: usize, u: f64, xyz: *mut f64) -> VbStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("simulation handle"))?;
        if xyz.is_null() {
            return Err(null("output pointer"));
        }
        if patch >= h.sim.scene().patches.len() {
            return Err((VbStatus::InvalidArgument, format!("patch index {patch} out of range")));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err((VbStatus::InvalidArgument, format!("u = {u} outside [0, 1]")));
        }
        let (x, _) = h.sim.point(patch, u).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
