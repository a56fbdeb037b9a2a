//! C ABI for the greedy Gaussian conditioning library.
//!
//! Objects cross the boundary as opaque handles created and destroyed by
//! paired `_new`/`_free` functions; every fallible call reports a
//! [`GgcStatus`] and leaves a human-readable message retrievable through
//! [`ggc_last_error_message`] on the same thread. All functions are safe to
//! call from multiple threads as long as each handle is used from one thread
//! at a time.
//!
//! The header `include/ggcond.h` is generated from this file by cbindgen at
//! build time.

use std::cell::RefCell;
use std::ffi::{c_char, CString};

use ggcond::conditioning::{posterior_kernel, residual_opnorm, PosteriorKernel};
use ggcond::greedy::{GreedyState, SelectionRule};
use ggcond::model::JointGaussianModel;
use ggcond::transfer::TransferOperator;
use ggcond::{Error, Grid};

/// Result of a call across the C boundary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgcStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer was null or an index was out of range.
    InvalidArgument = 1,
    /// A mathematical precondition was violated.
    DomainError = 2,
    /// A configuration value was rejected.
    ConfigError = 3,
    /// A factorization or solve failed numerically.
    NumericalError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let cstring = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> GgcStatus {
    match err {
        Error::Domain(_) => GgcStatus::DomainError,
        Error::Config(_) => GgcStatus::ConfigError,
        Error::Numerical(_) => GgcStatus::NumericalError,
        Error::Io(_) => GgcStatus::NumericalError,
    }
}

fn fail<T>(status: &mut GgcStatus, err: Error) -> *mut T {
    set_error(err.to_string());
    *status = status_of(&err);
    std::ptr::null_mut()
}

unsafe fn write_status(out_status: *mut GgcStatus, value: GgcStatus) {
    if !out_status.is_null() {
        *out_status = value;
    }
}

/// A jointly Gaussian pair `(X, Y)` on finite grids.
pub struct GgcModel(JointGaussianModel);

/// A finished greedy selection trace.
pub struct GgcGreedy(GreedyState);

/// A posterior kernel of `X` conditioned on selected coordinates of `Y`.
pub struct GgcPosterior(PosteriorKernel);

/// Message describing the most recent error on this thread, or null when no
/// error has occurred. The pointer stays valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn ggc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Version of the underlying library as a static C string.
#[no_mangle]
pub extern "C" fn ggc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Brownian motion on `[0,1]` observed on `[1/2,1]` through an independent
/// offset of variance `noise_variance` (0 for the noiseless restriction).
/// `x_points`/`y_points` are the grid sizes (at least 2 each).
///
/// # Safety
/// `out_status` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_brownian_new(
    noise_variance: f64,
    x_points: usize,
    y_points: usize,
    out_status: *mut GgcStatus,
) -> *mut GgcModel {
    let mut status = GgcStatus::Ok;
    let model = (|| {
        let grid_x = Grid::uniform(0.0, 1.0, x_points)?;
        let grid_y = Grid::uniform(0.5, 1.0, y_points)?;
        JointGaussianModel::brownian_restriction(noise_variance, grid_x, grid_y)
    })();
    let out = match model {
        Ok(m) => Box::into_raw(Box::new(GgcModel(m))),
        Err(e) => fail(&mut status, e),
    };
    write_status(out_status, status);
    out
}

/// Gaussian variable with the given covariance eigenvalues in a fixed
/// orthonormal function family on `[0,1]`, observing the coefficients listed
/// in `kept`.
///
/// # Safety
/// `eigenvalues` must point to `n_eigenvalues` doubles, `kept` to `n_kept`
/// indices; `out_status` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_eigen_new(
    eigenvalues: *const f64,
    n_eigenvalues: usize,
    kept: *const usize,
    n_kept: usize,
    grid_points: usize,
    out_status: *mut GgcStatus,
) -> *mut GgcModel {
    let mut status = GgcStatus::Ok;
    if eigenvalues.is_null() || kept.is_null() {
        set_error("eigenvalues and kept must not be null");
        write_status(out_status, GgcStatus::InvalidArgument);
        return std::ptr::null_mut();
    }
    let eigenvalues = std::slice::from_raw_parts(eigenvalues, n_eigenvalues).to_vec();
    let kept = std::slice::from_raw_parts(kept, n_kept).to_vec();
    let model = (|| {
        let grid = Grid::uniform(0.0, 1.0, grid_points)?;
        JointGaussianModel::eigen_truncation(eigenvalues, kept, grid)
    })();
    let out = match model {
        Ok(m) => Box::into_raw(Box::new(GgcModel(m))),
        Err(e) => fail(&mut status, e),
    };
    write_status(out_status, status);
    out
}

/// Number of grid points carrying `X`.
///
/// # Safety
/// `model` must be a live handle from a `ggc_model_*_new` call.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_nx(model: *const GgcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).0.nx()
}

/// Number of observation coordinates carrying `Y`.
///
/// # Safety
/// `model` must be a live handle from a `ggc_model_*_new` call.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_ny(model: *const GgcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).0.ny()
}

/// Sup-norm bound of the exact conditional-mean transfer operator of this
/// model.
///
/// # Safety
/// `model` must be live; `out_norm` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_transfer_norm(
    model: *const GgcModel,
    out_norm: *mut f64,
) -> GgcStatus {
    if model.is_null() || out_norm.is_null() {
        set_error("model and out_norm must not be null");
        return GgcStatus::InvalidArgument;
    }
    match TransferOperator::for_model(&(*model).0) {
        Ok(op) => {
            *out_norm = op.operator_norm();
            GgcStatus::Ok
        }
        Err(e) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
    }
}

/// Free a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ggc_model_free(model: *mut GgcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Run the weak greedy selection on the model's observation kernel.
/// `gamma = 1` selects the argmax deterministically; `gamma` in `(0,1)`
/// samples uniformly among candidates above the threshold, driven by `seed`.
/// A nonpositive `stop_tol` selects the default (`1e-12` times the initial
/// supremum).
///
/// # Safety
/// `model` must be live; `out_status` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ggc_greedy_run(
    model: *const GgcModel,
    gamma: f64,
    seed: u64,
    n_max: usize,
    stop_tol: f64,
    out_status: *mut GgcStatus,
) -> *mut GgcGreedy {
    let mut status = GgcStatus::Ok;
    if model.is_null() {
        set_error("model must not be null");
        write_status(out_status, GgcStatus::InvalidArgument);
        return std::ptr::null_mut();
    }
    let model = &(*model).0;
    let result = (|| {
        let rule = if gamma >= 1.0 {
            SelectionRule::Strong
        } else {
            SelectionRule::WeakRandom { gamma, seed }
        };
        let mut st = GreedyState::init(model.y_kernel()?, model.y_grid()?, rule, false)?;
        let stop = if stop_tol > 0.0 { stop_tol } else { st.default_stop_tol() };
        st.run(n_max, stop)?;
        Ok(st)
    })();
    let out = match result {
        Ok(st) => Box::into_raw(Box::new(GgcGreedy(st))),
        Err(e) => fail(&mut status, e),
    };
    write_status(out_status, status);
    out
}

/// Number of selections in the trace.
///
/// # Safety
/// `greedy` must be a live handle from [`ggc_greedy_run`].
#[no_mangle]
pub unsafe extern "C" fn ggc_greedy_len(greedy: *const GgcGreedy) -> usize {
    if greedy.is_null() {
        return 0;
    }
    (*greedy).0.selected().len()
}

/// Read one step of the trace: the selected observation index, its
/// coordinate, and the squared power-function supremum before the selection.
///
/// # Safety
/// `greedy` must be live; the out pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ggc_greedy_step(
    greedy: *const GgcGreedy,
    step: usize,
    out_index: *mut usize,
    out_point: *mut f64,
    out_sup_power_sq: *mut f64,
) -> GgcStatus {
    if greedy.is_null() {
        set_error("greedy must not be null");
        return GgcStatus::InvalidArgument;
    }
    let st = &(*greedy).0;
    let Some(entry) = st.history().get(step) else {
        set_error(format!(
            "step {step} out of range for a trace of {} selections",
            st.selected().len()
        ));
        return GgcStatus::InvalidArgument;
    };
    if !out_index.is_null() {
        *out_index = entry.selected;
    }
    if !out_point.is_null() {
        *out_point = st.candidates().points()[entry.selected];
    }
    if !out_sup_power_sq.is_null() {
        *out_sup_power_sq = entry.sup_power_sq;
    }
    GgcStatus::Ok
}

/// Free a greedy trace. Null is ignored.
///
/// # Safety
/// `greedy` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ggc_greedy_free(greedy: *mut GgcGreedy) {
    if !greedy.is_null() {
        drop(Box::from_raw(greedy));
    }
}

/// Condition the model's `X` on the observation coordinates listed in
/// `selected` (`n_selected` may be zero for the prior).
///
/// # Safety
/// `model` must be live; `selected` must point to `n_selected` indices or be
/// null when `n_selected` is zero; `out_status` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ggc_posterior_new(
    model: *const GgcModel,
    selected: *const usize,
    n_selected: usize,
    out_status: *mut GgcStatus,
) -> *mut GgcPosterior {
    let mut status = GgcStatus::Ok;
    if model.is_null() || (selected.is_null() && n_selected > 0) {
        set_error("model must not be null and selected must cover n_selected entries");
        write_status(out_status, GgcStatus::InvalidArgument);
        return std::ptr::null_mut();
    }
    let selected: Vec<usize> = if n_selected == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(selected, n_selected).to_vec()
    };
    let out = match posterior_kernel(&(*model).0, &selected) {
        Ok(pk) => Box::into_raw(Box::new(GgcPosterior(pk))),
        Err(e) => fail(&mut status, e),
    };
    write_status(out_status, status);
    out
}

/// Residual kernel value `k_{X|sel}(s_i, s_j)` at grid indices.
///
/// # Safety
/// `posterior` must be live; `out_value` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ggc_posterior_residual_at(
    posterior: *const GgcPosterior,
    i: usize,
    j: usize,
    out_value: *mut f64,
) -> GgcStatus {
    if posterior.is_null() || out_value.is_null() {
        set_error("posterior and out_value must not be null");
        return GgcStatus::InvalidArgument;
    }
    let pk = &(*posterior).0;
    let n = pk.model().nx();
    if i >= n || j >= n {
        set_error(format!("indices ({i}, {j}) out of range for {n} grid points"));
        return GgcStatus::InvalidArgument;
    }
    *out_value = pk.residual_at(i, j);
    GgcStatus::Ok
}

/// Operator norm of the posterior residual over the grid (the largest
/// diagonal entry) and the point attaining it.
///
/// # Safety
/// `posterior` must be live; the out pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ggc_posterior_opnorm(
    posterior: *const GgcPosterior,
    out_value: *mut f64,
    out_argmax_point: *mut f64,
) -> GgcStatus {
    if posterior.is_null() {
        set_error("posterior must not be null");
        return GgcStatus::InvalidArgument;
    }
    let report = residual_opnorm(&(*posterior).0);
    if !out_value.is_null() {
        *out_value = report.value;
    }
    if !out_argmax_point.is_null() {
        *out_argmax_point = report.argmax_point;
    }
    GgcStatus::Ok
}

/// Free a posterior handle. Null is ignored.
///
/// # Safety
/// `posterior` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ggc_posterior_free(posterior: *mut GgcPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}
