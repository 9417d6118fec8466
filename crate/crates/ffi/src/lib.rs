//! C ABI over `paramodel`.
//!
//! Conventions:
//! - every fallible function returns a [`PmStatus`]; results come back through
//!   out-pointers, which are written only on success;
//! - on any status other than `PM_STATUS_OK` (and `PM_STATUS_NOT_CONVERGED`)
//!   a message is available from [`pm_last_error_message`] on the same thread;
//! - handles ([`PmTrainer`], [`PmLinSolver`]) are opaque, created by a `*_new*`
//!   function and released with the matching `*_free`;
//! - panics never cross the boundary; they are reported as `PM_STATUS_PANIC`.
//!
//! Weight and input indices are zero-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use paramodel::config::{self, Problem, RunConfig};
use paramodel::runner::ExitStatus;
use paramodel::{
    solve_linear, ControllerParams, ControllerState, DecayClock, Error, EventKind, FirstOrderFilter, LinearTrace,
    LinearTrackingProblem, TraceRecord, Trainer,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NotConverged = 1,
    Config = 2,
    Divergence = 3,
    Io = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

impl From<&Error> for PmStatus {
    fn from(e: &Error) -> Self {
        match ExitStatus::for_error(e) {
            ExitStatus::Diverged => PmStatus::Divergence,
            ExitStatus::IoError => PmStatus::Io,
            _ => match e {
                Error::Parse { .. } | Error::Validation { .. } => PmStatus::Config,
                _ => PmStatus::InvalidArgument,
            },
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmDecayClock {
    /// Initialization decays with simulated time `k * dt`.
    Time = 0,
    /// Initialization decays with the iteration index `k`.
    Index = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmControllerParams {
    pub kp: f64,
    pub ki: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub dt: f64,
    /// One of the `PM_DECAY_CLOCK_*` values.
    pub decay_clock: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmControllerState {
    pub psi: f64,
    pub integral: f64,
    pub k: u64,
    pub last_y: f64,
}

/// Scalar part of one training iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmStep {
    pub k: u64,
    pub t: f64,
    pub y: f64,
    pub y_ref: f64,
}

pub struct PmTrainer {
    trainer: Trainer,
    last: Option<TraceRecord>,
}

pub struct PmLinSolver {
    problem: LinearTrackingProblem,
    trace: Option<LinearTrace>,
}

fn controller_params(p: PmControllerParams) -> FfiResult<ControllerParams> {
    let decay_clock = match p.decay_clock {
        c if c == PmDecayClock::Time as u32 => DecayClock::Time,
        c if c == PmDecayClock::Index as u32 => DecayClock::Index,
        other => return Err(invalid(format!("unknown decay clock {other}"))),
    };
    Ok(ControllerParams {
        kp: p.kp,
        ki: p.ki,
        k_alpha: p.k_alpha,
        k_beta: p.k_beta,
        dt: p.dt,
        decay_clock,
    })
}

impl From<PmControllerState> for ControllerState {
    fn from(s: PmControllerState) -> Self {
        ControllerState {
            psi: s.psi,
            integral: s.integral,
            k: s.k,
            last_y: s.last_y,
        }
    }
}

impl From<ControllerState> for PmControllerState {
    fn from(s: ControllerState) -> Self {
        PmControllerState {
            psi: s.psi,
            integral: s.integral,
            k: s.k,
            last_y: s.last_y,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(PmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PmStatus::from(&e), e.to_string())
    }
}

type FfiResult<T = PmStatus> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(PmStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PmStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> FfiResult) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            if status == PmStatus::Ok {
                set_last_error("");
            }
            status
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> FfiResult {
    if len < src.len() {
        return Err(invalid(format!("buffer holds {len} values, need {}", src.len())));
    }
    if src.is_empty() {
        return Ok(PmStatus::Ok);
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(PmStatus::Ok)
}

fn trainer_from(cfg: RunConfig) -> FfiResult<Box<PmTrainer>> {
    match cfg.problem {
        Problem::Train(scenario) => Ok(Box::new(PmTrainer {
            trainer: Trainer::new(&scenario)?,
            last: None,
        })),
        Problem::Linsolve(_) => Err(Failure(
            PmStatus::Config,
            "configuration describes a linear solve, not a training run".into(),
        )),
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn pm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Controller and filter primitives

/// # Safety
/// `params` must point to a readable `PmControllerParams` and `out` to a
/// writable `PmControllerState`.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_new(
    params: *const PmControllerParams,
    psi0: f64,
    y0: f64,
    out: *mut PmControllerState,
) -> PmStatus {
    guard(|| {
        let params = controller_params(*deref(params, "params")?)?;
        let out = deref_mut(out, "out")?;
        *out = ControllerState::new(&params, psi0, y0)?.into();
        Ok(PmStatus::Ok)
    })
}

/// One controller update. `state` is read, then `out_state` and `out_u` are
/// written; `out_state` may alias `state`.
///
/// # Safety
/// All pointers must be valid for the reads and writes described above.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_step(
    params: *const PmControllerParams,
    state: *const PmControllerState,
    y_ref: f64,
    y_meas: f64,
    out_state: *mut PmControllerState,
    out_u: *mut f64,
) -> PmStatus {
    guard(|| {
        let params = controller_params(*deref(params, "params")?)?;
        let state = ControllerState::from(*deref(state, "state")?);
        if out_state.is_null() {
            return Err(null("out_state"));
        }
        if out_u.is_null() {
            return Err(null("out_u"));
        }
        let (next, u) = state.step(&params, y_ref, y_meas)?;
        *out_state = next.into();
        *out_u = u;
        Ok(PmStatus::Ok)
    })
}

/// One RK4 step of `tau * dx/dt = input - x` from `state`.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn pm_filter_step(tau: f64, state: f64, input: f64, dt: f64, out: *mut f64) -> PmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = FirstOrderFilter::new(tau, state)?.step(input, dt)?.state();
        Ok(PmStatus::Ok)
    })
}

// ---------------------------------------------------------------------------
// Online training

/// Creates a trainer for a built-in scenario (`fig4` .. `fig7`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_new_builtin(name: *const c_char, out: *mut *mut PmTrainer) -> PmStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let out = deref_mut(out, "out")?;
        let cfg =
            RunConfig::builtin(name).ok_or_else(|| Failure(PmStatus::Config, format!("unknown builtin `{name}`")))?;
        *out = Box::into_raw(trainer_from(cfg)?);
        Ok(PmStatus::Ok)
    })
}

/// Creates a trainer from configuration file text (TOML, `mode = "train"`).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_new_from_config(text: *const c_char, out: *mut *mut PmTrainer) -> PmStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(trainer_from(config::parse_config(text)?)?);
        Ok(PmStatus::Ok)
    })
}

/// # Safety
/// `trainer` must be null or a handle from `pm_trainer_new_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_free(trainer: *mut PmTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Runs one iteration; `out` may be null.
///
/// # Safety
/// `trainer` must be a live handle; `out`, if non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_step(trainer: *mut PmTrainer, out: *mut PmStep) -> PmStatus {
    guard(|| {
        let h = deref_mut(trainer, "trainer")?;
        let r = h.trainer.step()?;
        if let Some(out) = out.as_mut() {
            *out = PmStep {
                k: r.k,
                t: r.t,
                y: r.y,
                y_ref: r.y_ref,
            };
        }
        h.last = Some(r);
        Ok(PmStatus::Ok)
    })
}

/// Steps until the scenario horizon. Returns `PM_STATUS_NOT_CONVERGED` when
/// the final `|y - y_ref|` is not below `tol`.
///
/// # Safety
/// As for [`pm_trainer_step`].
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_run(trainer: *mut PmTrainer, tol: f64, out: *mut PmStep) -> PmStatus {
    guard(|| {
        let h = deref_mut(trainer, "trainer")?;
        while !h.trainer.is_finished() {
            h.last = Some(h.trainer.step()?);
        }
        let r = h
            .last
            .as_ref()
            .ok_or_else(|| invalid("trainer has not run any iteration"))?;
        if let Some(out) = out.as_mut() {
            *out = PmStep {
                k: r.k,
                t: r.t,
                y: r.y,
                y_ref: r.y_ref,
            };
        }
        if (r.y - r.y_ref).abs() < tol {
            Ok(PmStatus::Ok)
        } else {
            Ok(PmStatus::NotConverged)
        }
    })
}

/// Completed iterations, or 0 for a null handle.
///
/// # Safety
/// `trainer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_iteration(trainer: *const PmTrainer) -> u64 {
    trainer.as_ref().map_or(0, |h| h.trainer.iteration())
}

/// Number of weights `q`, or 0 for a null handle.
///
/// # Safety
/// `trainer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_weight_count(trainer: *const PmTrainer) -> usize {
    trainer.as_ref().map_or(0, |h| h.trainer.net().weight_count())
}

/// Copies the current weights into `buf` (capacity `len` values).
///
/// # Safety
/// `trainer` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_weights(trainer: *const PmTrainer, buf: *mut f64, len: usize) -> PmStatus {
    guard(|| {
        let h = deref(trainer, "trainer")?;
        copy_out(h.trainer.net().weights(), buf, len)
    })
}

/// Copies the controls of the last iteration (zeros before the first step).
///
/// # Safety
/// As for [`pm_trainer_weights`].
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_controls(trainer: *const PmTrainer, buf: *mut f64, len: usize) -> PmStatus {
    guard(|| {
        let h = deref(trainer, "trainer")?;
        match &h.last {
            Some(r) => copy_out(&r.u, buf, len),
            None => copy_out(&vec![0.0; h.trainer.net().weight_count()], buf, len),
        }
    })
}

/// Current network output for the active training input.
///
/// # Safety
/// `trainer` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_output(trainer: *const PmTrainer, out: *mut f64) -> PmStatus {
    guard(|| {
        let h = deref(trainer, "trainer")?;
        let out = deref_mut(out, "out")?;
        *out = h.trainer.net().forward(&h.trainer.sample().x)?;
        Ok(PmStatus::Ok)
    })
}

unsafe fn apply(trainer: *mut PmTrainer, kind: EventKind) -> PmStatus {
    guard(|| {
        let h = deref_mut(trainer, "trainer")?;
        h.trainer.apply_event(&kind)?;
        Ok(PmStatus::Ok)
    })
}

/// Changes training input `index` before the next iteration.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_set_input(trainer: *mut PmTrainer, index: usize, value: f64) -> PmStatus {
    apply(trainer, EventKind::SetInput { index, value })
}

/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_set_reference(trainer: *mut PmTrainer, value: f64) -> PmStatus {
    apply(trainer, EventKind::SetReference { value })
}

/// Masks weight `index`, zeroing it and freezing its controller and filter.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_drop_weight(trainer: *mut PmTrainer, index: usize) -> PmStatus {
    apply(trainer, EventKind::DropWeight { index })
}

/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_trainer_restore_weight(trainer: *mut PmTrainer, index: usize) -> PmStatus {
    apply(trainer, EventKind::RestoreWeight { index })
}

// ---------------------------------------------------------------------------
// Linear systems

/// Builds a solver for the `n x n` row-major system `a x = b` with one
/// staggered controller per unknown.
///
/// # Safety
/// `a` must hold `n * n` doubles, `b` `n` doubles, `params` must be readable
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_new(
    a: *const f64,
    b: *const f64,
    n: usize,
    params: *const PmControllerParams,
    rho: f64,
    tau: f64,
    horizon: u64,
    out: *mut *mut PmLinSolver,
) -> PmStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        let len = n.checked_mul(n).ok_or_else(|| invalid("n is too large"))?;
        let a = slice(a, len, "a")?;
        let b = slice(b, n, "b")?.to_vec();
        let params = controller_params(*deref(params, "params")?)?;
        let out = deref_mut(out, "out")?;
        let rows = a.chunks(n).map(<[f64]>::to_vec).collect();
        let problem = LinearTrackingProblem::staggered(rows, b, &params, rho, tau, horizon)?;
        *out = Box::into_raw(Box::new(PmLinSolver { problem, trace: None }));
        Ok(PmStatus::Ok)
    })
}

/// Creates the built-in three-unknown demonstration solver.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_new_demo(out: *mut *mut PmLinSolver) -> PmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let problem = paramodel::linsolve::demo_problem();
        *out = Box::into_raw(Box::new(PmLinSolver { problem, trace: None }));
        Ok(PmStatus::Ok)
    })
}

/// # Safety
/// `solver` must be null or a handle from `pm_linsolver_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_free(solver: *mut PmLinSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Runs the solver over its horizon. Returns `PM_STATUS_NOT_CONVERGED` when
/// the final residual `max_j |(a x)_j - b_j|` is not below `tol`.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_run(solver: *mut PmLinSolver, tol: f64) -> PmStatus {
    guard(|| {
        let h = deref_mut(solver, "solver")?;
        let trace = solve_linear(&h.problem)?;
        let converged = trace.converged(tol);
        h.trace = Some(trace);
        Ok(if converged {
            PmStatus::Ok
        } else {
            PmStatus::NotConverged
        })
    })
}

/// # Safety
/// `solver` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_dimension(solver: *const PmLinSolver) -> usize {
    solver.as_ref().map_or(0, |h| h.problem.dimension())
}

fn finished(h: &PmLinSolver) -> FfiResult<&LinearTrace> {
    h.trace
        .as_ref()
        .ok_or_else(|| invalid("solver has not been run; call pm_linsolver_run first"))
}

/// Copies the final iterate `x` into `buf`.
///
/// # Safety
/// `solver` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_solution(solver: *const PmLinSolver, buf: *mut f64, len: usize) -> PmStatus {
    guard(|| {
        let trace = finished(deref(solver, "solver")?)?;
        copy_out(&trace.last().expect("horizon >= 1").x, buf, len)
    })
}

/// Final residual and the settling iteration for `tol` (0 if never settled).
///
/// # Safety
/// `solver` must be a live handle; `residual` must be writable; `settled_at`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn pm_linsolver_residual(
    solver: *const PmLinSolver,
    tol: f64,
    residual: *mut f64,
    settled_at: *mut u64,
) -> PmStatus {
    guard(|| {
        let trace = finished(deref(solver, "solver")?)?;
        *deref_mut(residual, "residual")? = trace.final_residual();
        if let Some(s) = settled_at.as_mut() {
            *s = trace.settling_iteration(tol).unwrap_or(0);
        }
        Ok(PmStatus::Ok)
    })
}

/// One-shot solve: writes the final iterate to `x_out` (`n` values) and the
/// final residual to `residual`.
///
/// # Safety
/// As for [`pm_linsolver_new`]; `x_out` must hold `n` doubles and `residual`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_solve_linear(
    a: *const f64,
    b: *const f64,
    n: usize,
    params: *const PmControllerParams,
    rho: f64,
    tau: f64,
    horizon: u64,
    tol: f64,
    x_out: *mut f64,
    residual: *mut f64,
) -> PmStatus {
    let mut solver = ptr::null_mut();
    let status = pm_linsolver_new(a, b, n, params, rho, tau, horizon, &mut solver);
    if status != PmStatus::Ok {
        return status;
    }
    let run = pm_linsolver_run(solver, tol);
    let status = match run {
        PmStatus::Ok | PmStatus::NotConverged => {
            let s = pm_linsolver_solution(solver, x_out, n);
            if s == PmStatus::Ok {
                pm_linsolver_residual(solver, tol, residual, ptr::null_mut())
            } else {
                s
            }
        }
        other => other,
    };
    pm_linsolver_free(solver);
    if status == PmStatus::Ok {
        run
    } else {
        status
    }
}
