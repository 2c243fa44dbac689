//! C ABI over the QoS estimator, the per-cell primal-dual optimizer and the
//! grid oracle.
//!
//! Every fallible call returns an [`NsStatus`]. On failure a message is kept
//! per thread and read back with [`ns_last_error_message`]. Trained models
//! live behind opaque [`NsEstimator`] handles released with
//! [`ns_estimator_free`]. Observation matrices are row-major, one row of
//! `2H + 2` values per slice.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use netslice::domain::{satisfaction, QosOutcome, SliceSpec};
use netslice::estimator::EstimatorModel;
use netslice::optimizer::{default_action, solve_cell, EstimatorObjective, SolverParams};
use netslice::schemes::{oracle_grid, DEFAULT_GRID_CAP};
use netslice::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Wrong observation length or slice count.
    Dimension = 3,
    NonFinite = 4,
    Io = 5,
    Parse = 6,
    UnsupportedVersion = 7,
    Infeasible = 8,
    /// The grid oracle would enumerate too many points.
    GridBudget = 9,
    Solver = 10,
    /// A Rust panic was caught at the boundary.
    Panic = 11,
    Internal = 12,
}

/// Opaque trained estimator.
pub struct NsEstimator(EstimatorModel);

/// Mirror of the optimizer parameters; start from
/// [`ns_solver_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NsSolverParams {
    pub starts: usize,
    pub noise_mean: f64,
    pub noise_variance: f64,
    pub step_x: f64,
    pub step_lambda: f64,
    pub decay: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_lambda: f64,
    pub seed: u64,
    pub fill_slack: bool,
}

impl From<SolverParams> for NsSolverParams {
    fn from(p: SolverParams) -> Self {
        NsSolverParams {
            starts: p.starts,
            noise_mean: p.noise_mean,
            noise_variance: p.noise_variance,
            step_x: p.step_x,
            step_lambda: p.step_lambda,
            decay: p.decay,
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            initial_lambda: p.initial_lambda,
            seed: p.seed,
            fill_slack: p.fill_slack,
        }
    }
}

impl From<NsSolverParams> for SolverParams {
    fn from(p: NsSolverParams) -> Self {
        SolverParams {
            starts: p.starts,
            noise_mean: p.noise_mean,
            noise_variance: p.noise_variance,
            step_x: p.step_x,
            step_lambda: p.step_lambda,
            decay: p.decay,
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            initial_lambda: p.initial_lambda,
            seed: p.seed,
            fill_slack: p.fill_slack,
            ..SolverParams::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(NsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> NsStatus {
    match e {
        Error::InvalidSlice { .. }
        | Error::Config(_)
        | Error::UnknownCell(_)
        | Error::Empty(_)
        | Error::InvalidArgument(_) => NsStatus::InvalidArgument,
        Error::Dimension { .. } => NsStatus::Dimension,
        Error::NonFiniteInput => NsStatus::NonFinite,
        Error::Io { .. } => NsStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => NsStatus::Parse,
        Error::ModelVersion { .. } => NsStatus::UnsupportedVersion,
        Error::InfeasiblePartition(_) => NsStatus::Infeasible,
        Error::GridBudget { .. } => NsStatus::GridBudget,
        Error::Solver { .. } => NsStatus::Solver,
        Error::Stage { source, .. } => status_of(source),
        _ => NsStatus::Internal,
    }
}

fn null(what: &str) -> Failure {
    Failure(NsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure for [`ns_last_error_message`] and turns
/// panics into [`NsStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            NsStatus::Panic
        }
    }
}

unsafe fn model<'a>(handle: *const NsEstimator) -> Result<&'a EstimatorModel, Failure> {
    handle.as_ref().map(|h| &h.0).ok_or_else(|| null("estimator handle"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Splits a row-major `num_slices × row_len` matrix into per-slice rows.
unsafe fn observations(
    m: &EstimatorModel,
    data: *const f64,
    num_slices: usize,
    row_len: usize,
) -> Result<Vec<Vec<f64>>, Failure> {
    if num_slices == 0 {
        return Err(Failure(NsStatus::InvalidArgument, "at least one slice is required".into()));
    }
    let expected = 2 * m.history_len() + 2;
    if row_len != expected {
        return Err(Error::Dimension {
            expected,
            actual: row_len,
        }
        .into());
    }
    let flat = slice_arg(data, num_slices * row_len, "observations")?;
    Ok(flat.chunks(row_len).map(<[f64]>::to_vec).collect())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn ns_status_name(status: NsStatus) -> *const c_char {
    let name: &'static str = match status {
        NsStatus::Ok => "ok\0",
        NsStatus::NullPointer => "null_pointer\0",
        NsStatus::InvalidArgument => "invalid_argument\0",
        NsStatus::Dimension => "dimension\0",
        NsStatus::NonFinite => "non_finite\0",
        NsStatus::Io => "io\0",
        NsStatus::Parse => "parse\0",
        NsStatus::UnsupportedVersion => "unsupported_version\0",
        NsStatus::Infeasible => "infeasible\0",
        NsStatus::GridBudget => "grid_budget\0",
        NsStatus::Solver => "solver\0",
        NsStatus::Panic => "panic\0",
        NsStatus::Internal => "internal\0",
    };
    name.as_ptr().cast()
}

/// Loads a model JSON file written by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_load(path: *const c_char, out: *mut *mut NsEstimator) -> NsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = EstimatorModel::load(Path::new(path))?;
        out.write(Box::into_raw(Box::new(NsEstimator(m))));
        Ok(())
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_from_json(json: *const c_char, out: *mut *mut NsEstimator) -> NsStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = EstimatorModel::from_json(text)?;
        out.write(Box::into_raw(Box::new(NsEstimator(m))));
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_free(handle: *mut NsEstimator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// History length `H`; observation rows hold `2H + 2` values.
///
/// # Safety
/// `handle` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_history_len(handle: *const NsEstimator, out: *mut usize) -> NsStatus {
    guard(|| write(out, model(handle)?.history_len(), "out"))
}

/// Predicted satisfaction `f(x, z)` in [0, 1].
///
/// # Safety
/// `handle` must be live, `z` must hold `z_len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_forward(
    handle: *const NsEstimator,
    x: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> NsStatus {
    guard(|| {
        let v = model(handle)?.forward(x, slice_arg(z, z_len, "z")?)?;
        write(out, v, "out")
    })
}

/// Analytic `∂f/∂x`.
///
/// # Safety
/// As for [`ns_estimator_forward`].
#[no_mangle]
pub unsafe extern "C" fn ns_estimator_gradient(
    handle: *const NsEstimator,
    x: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> NsStatus {
    guard(|| {
        let g = model(handle)?.input_gradient(x, slice_arg(z, z_len, "z")?)?;
        write(out, g, "out")
    })
}

#[no_mangle]
pub extern "C" fn ns_solver_params_default() -> NsSolverParams {
    SolverParams::default().into()
}

/// Splits one cell across `num_slices` slices. `x_init` may be NULL for
/// the equal split and `params` NULL for the defaults. Writes `num_slices`
/// shares to `out_shares`; `out_utility` may be NULL.
///
/// # Safety
/// `observations` must hold `num_slices * row_len` values, `x_init` (if
/// non-NULL) and `out_shares` `num_slices` each.
#[no_mangle]
pub unsafe extern "C" fn ns_solve_cell(
    handle: *const NsEstimator,
    observations_ptr: *const f64,
    num_slices: usize,
    row_len: usize,
    x_init: *const f64,
    params: *const NsSolverParams,
    out_shares: *mut f64,
    out_utility: *mut f64,
) -> NsStatus {
    guard(|| {
        let m = model(handle)?;
        let obs = observations(m, observations_ptr, num_slices, row_len)?;
        if out_shares.is_null() {
            return Err(null("out_shares"));
        }
        let init = if x_init.is_null() {
            default_action(num_slices)?.into_inner()
        } else {
            slice_arg(x_init, num_slices, "x_init")?.to_vec()
        };
        let params: SolverParams = params.as_ref().map_or_else(SolverParams::default, |p| (*p).into());
        let obj = EstimatorObjective::new(m, &obs)?;
        let res = solve_cell(&obj, &init, &params, 0)?;
        std::slice::from_raw_parts_mut(out_shares, num_slices).copy_from_slice(res.partition.shares());
        if !out_utility.is_null() {
            out_utility.write(res.utility);
        }
        Ok(())
    })
}

/// Exhaustive search over the simplex grid with spacing `grid_step`.
///
/// # Safety
/// As for [`ns_solve_cell`].
#[no_mangle]
pub unsafe extern "C" fn ns_oracle_grid(
    handle: *const NsEstimator,
    observations_ptr: *const f64,
    num_slices: usize,
    row_len: usize,
    grid_step: f64,
    out_shares: *mut f64,
    out_utility: *mut f64,
) -> NsStatus {
    guard(|| {
        let m = model(handle)?;
        let obs = observations(m, observations_ptr, num_slices, row_len)?;
        if out_shares.is_null() {
            return Err(null("out_shares"));
        }
        let obj = EstimatorObjective::new(m, &obs)?;
        let best = oracle_grid(&obj, grid_step, DEFAULT_GRID_CAP)?;
        std::slice::from_raw_parts_mut(out_shares, num_slices).copy_from_slice(best.partition.shares());
        if !out_utility.is_null() {
            out_utility.write(best.utility);
        }
        Ok(())
    })
}

/// `min(throughput / throughput_req, delay_req / delay, 1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_satisfaction(
    throughput: f64,
    throughput_req: f64,
    delay: f64,
    delay_req: f64,
    out: *mut f64,
) -> NsStatus {
    guard(|| {
        let spec = SliceSpec::new(0, throughput_req, delay_req)?;
        let r = satisfaction(QosOutcome { throughput, delay }, &spec)?;
        write(out, r.value(), "out")
    })
}
