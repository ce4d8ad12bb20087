//! C ABI over `sgl`: opaque handles, status codes and a thread-local last-error
//! message. Every function returns an [`SglStatus`]; results go through out-pointers.
//! Handles are created by `*_new`-style functions and released by the matching
//! `*_free`, which accepts null.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use sgl::density::model_kl;
use sgl::harness::{run, ExperimentConfig, ExperimentKind};
use sgl::score_net::{load_checkpoint, save_checkpoint, ScoreModel};
use sgl::sde::LinearSde;
use sgl::targets::{Component, GaussianMixture};
use sgl::theory::{optimal_tau, single_mode_bound, BoundConstants};
use sgl::Error;

/// Status of an FFI call. Anything but `Ok` sets the last-error message.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SglStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Config = 4,
    Divergence = 5,
    NonFinite = 6,
    Io = 7,
    /// A run finished but at least one checked property failed.
    PropertyFailure = 8,
    Panic = 9,
    Other = 10,
}

impl From<&Error> for SglStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) | Error::Singularity { .. } => SglStatus::Domain,
            Error::InvalidArgument(_) | Error::UnsupportedModel(_) => SglStatus::InvalidArgument,
            Error::Config(_) | Error::Parse(_) | Error::MissingColumn(_) => SglStatus::Config,
            Error::Divergence { .. } | Error::Blowup { .. } => SglStatus::Divergence,
            Error::NonFinite(_) => SglStatus::NonFinite,
            Error::Io(_) | Error::Checkpoint(_) => SglStatus::Io,
            _ => SglStatus::Other,
        }
    }
}

/// Forward SDE.
pub struct SglSde(LinearSde);

/// One-dimensional Gaussian mixture.
pub struct SglMixture(GaussianMixture);

/// Score network.
pub struct SglModel(ScoreModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nulls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard<F: FnOnce() -> Result<(), (SglStatus, String)>>(f: F) -> SglStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SglStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SglStatus::Panic
        }
    }
}

fn lib<T>(r: sgl::Result<T>) -> Result<T, (SglStatus, String)> {
    r.map_err(|e| (SglStatus::from(&e), e.to_string()))
}

fn null(what: &str) -> (SglStatus, String) {
    (SglStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SglStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), (SglStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (SglStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (SglStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn sgl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sgl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ornstein-Uhlenbeck process `dx = -x dt + √2 dW` on `[0, horizon]`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sgl_sde_ou(horizon: f64, out: *mut *mut SglSde) -> SglStatus {
    guard(|| {
        let sde = lib(LinearSde::ou(horizon))?;
        put(out, Box::into_raw(Box::new(SglSde(sde))), "out")
    })
}

/// Variance-exploding process `dx = g dW` on `[0, horizon]`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sgl_sde_ve_constant(
    g: f64,
    horizon: f64,
    out: *mut *mut SglSde,
) -> SglStatus {
    guard(|| {
        let sde = lib(LinearSde::ve_constant(g, horizon))?;
        put(out, Box::into_raw(Box::new(SglSde(sde))), "out")
    })
}

/// # Safety
/// `sde` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgl_sde_free(sde: *mut SglSde) {
    if !sde.is_null() {
        drop(Box::from_raw(sde));
    }
}

/// Perturbation kernel `x(t) | x(0) ~ N(r x(0), r² v)`: writes `r(t)` and `v(t)`.
///
/// # Safety
/// `sde` must be a live handle; `r` and `v` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgl_sde_kernel(
    sde: *const SglSde,
    t: f64,
    r: *mut f64,
    v: *mut f64,
) -> SglStatus {
    guard(|| {
        let sde = &get(sde, "sde")?.0;
        let (rt, vt) = (lib(sde.r(t))?, lib(sde.v(t))?);
        put(r, rt, "r")?;
        put(v, vt, "v")
    })
}

/// Mixture of `k` components; weights must sum to one.
///
/// # Safety
/// `weights`, `means` and `variances` must each point to `k` readable values.
#[no_mangle]
pub unsafe extern "C" fn sgl_mixture_new(
    weights: *const f64,
    means: *const f64,
    variances: *const f64,
    k: usize,
    out: *mut *mut SglMixture,
) -> SglStatus {
    guard(|| {
        if weights.is_null() || means.is_null() || variances.is_null() {
            return Err(null("component array"));
        }
        let w = std::slice::from_raw_parts(weights, k);
        let m = std::slice::from_raw_parts(means, k);
        let v = std::slice::from_raw_parts(variances, k);
        let comps = (0..k)
            .map(|i| Component {
                weight: w[i],
                mean: m[i],
                variance: v[i],
            })
            .collect();
        let gm = lib(GaussianMixture::new(comps))?;
        put(out, Box::into_raw(Box::new(SglMixture(gm))), "out")
    })
}

/// # Safety
/// `gm` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgl_mixture_free(gm: *mut SglMixture) {
    if !gm.is_null() {
        drop(Box::from_raw(gm));
    }
}

/// Density and score of the mixture at `x`; either out-pointer may be null.
///
/// # Safety
/// `gm` must be a live handle; non-null out-pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgl_mixture_eval(
    gm: *const SglMixture,
    x: f64,
    density: *mut f64,
    score: *mut f64,
) -> SglStatus {
    guard(|| {
        let gm = &get(gm, "mixture")?.0;
        if !density.is_null() {
            density.write(gm.density(x));
        }
        if !score.is_null() {
            score.write(gm.score(x));
        }
        Ok(())
    })
}

/// One-dimensional random-feature net of width `m` with zero readout.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_random_feature(
    m: usize,
    embedding_dim: usize,
    horizon: f64,
    seed: u64,
    out: *mut *mut SglModel,
) -> SglStatus {
    guard(|| {
        if m == 0 || embedding_dim == 0 || !(horizon > 0.0) {
            return Err((
                SglStatus::InvalidArgument,
                "width, embedding dimension and horizon must be positive".into(),
            ));
        }
        let model = ScoreModel::random_feature(1, m, embedding_dim, horizon, seed);
        put(out, Box::into_raw(Box::new(SglModel(model))), "out")
    })
}

/// One-dimensional Swish network with `h` hidden units.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_swish(
    h: usize,
    embedding_dim: usize,
    horizon: f64,
    seed: u64,
    out: *mut *mut SglModel,
) -> SglStatus {
    guard(|| {
        if h == 0 || embedding_dim == 0 || !(horizon > 0.0) {
            return Err((
                SglStatus::InvalidArgument,
                "width, embedding dimension and horizon must be positive".into(),
            ));
        }
        let model = ScoreModel::swish(1, h, embedding_dim, horizon, seed);
        put(out, Box::into_raw(Box::new(SglModel(model))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_free(model: *mut SglModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_n_params(model: *const SglModel, out: *mut usize) -> SglStatus {
    guard(|| put(out, get(model, "model")?.0.n_params(), "out"))
}

/// Copies the parameter vector into `buf` (`len` must equal the parameter count).
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_get_params(
    model: *const SglModel,
    buf: *mut f64,
    len: usize,
) -> SglStatus {
    guard(|| {
        let p = get(model, "model")?.0.params();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != p.len() {
            return Err((
                SglStatus::InvalidArgument,
                format!("buffer holds {len} values, model has {}", p.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(p);
        Ok(())
    })
}

/// Overwrites the parameter vector from `buf`.
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_set_params(
    model: *mut SglModel,
    buf: *const f64,
    len: usize,
) -> SglStatus {
    guard(|| {
        let model = &mut model.as_mut().ok_or_else(|| null("model"))?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != model.n_params() {
            return Err((
                SglStatus::InvalidArgument,
                format!("buffer holds {len} values, model has {}", model.n_params()),
            ));
        }
        model
            .params_mut()
            .copy_from_slice(std::slice::from_raw_parts(buf, len));
        Ok(())
    })
}

/// Score `s(x, t)`, checked against the SDE's time range.
///
/// # Safety
/// `model` and `sde` must be live handles; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_score(
    model: *const SglModel,
    sde: *const SglSde,
    x: f64,
    t: f64,
    out: *mut f64,
) -> SglStatus {
    guard(|| {
        let model = &get(model, "model")?.0;
        let sde = &get(sde, "sde")?.0;
        let s = lib(model.forward(sde, &[x], t))?;
        put(out, s[0], "out")
    })
}

/// `KL(target ‖ model density)` on the target's standard grid.
///
/// # Safety
/// All handles must be live; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_kl(
    model: *const SglModel,
    sde: *const SglSde,
    target: *const SglMixture,
    out: *mut f64,
) -> SglStatus {
    guard(|| {
        let model = &get(model, "model")?.0;
        let sde = &get(sde, "sde")?.0;
        let gm = &get(target, "target")?.0;
        put(
            out,
            lib(model_kl(model, sde, gm, gm.standard_grid()))?,
            "out",
        )
    })
}

/// Writes a checkpoint to `path` (plus a `.json` sidecar).
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_save(model: *const SglModel, path: *const c_char) -> SglStatus {
    guard(|| {
        let model = &get(model, "model")?.0;
        lib(save_checkpoint(model, &path_arg(path, "path")?)).map(|_| ())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sgl_model_load(path: *const c_char, out: *mut *mut SglModel) -> SglStatus {
    guard(|| {
        let model = lib(load_checkpoint(&path_arg(path, "path")?))?;
        put(out, Box::into_raw(Box::new(SglModel(model))), "out")
    })
}

/// Total of the single-mode bound with unit constants.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sgl_bound(
    tau: f64,
    m: f64,
    n: f64,
    prior_gap: f64,
    out: *mut f64,
) -> SglStatus {
    guard(|| {
        let r = lib(single_mode_bound(
            tau,
            m,
            n,
            &BoundConstants::default(),
            prior_gap,
        ))?;
        put(out, r.total, "out")
    })
}

/// Training time minimizing the bound with unit constants.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sgl_optimal_tau(m: f64, n: f64, out: *mut f64) -> SglStatus {
    guard(|| {
        let r = lib(optimal_tau(m, n, &BoundConstants::default()))?;
        put(out, r.tau, "out")
    })
}

/// Runs an experiment by name (`kl-dynamics`, `bounds`, `verify`, ...). `config_path`
/// may be null for the built-in preset; `out_dir` may be null for the default.
/// Returns `PropertyFailure` when a verification property fails.
///
/// # Safety
/// String arguments must be null (where allowed) or NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn sgl_run_experiment(
    experiment: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    seed: u64,
) -> SglStatus {
    guard(|| {
        let name = path_arg(experiment, "experiment")?;
        let kind: ExperimentKind = lib(name.to_string_lossy().parse())?;
        let file = if config_path.is_null() {
            None
        } else {
            Some(path_arg(config_path, "config_path")?)
        };
        let mut cfg = lib(ExperimentConfig::load(kind, file.as_deref(), &[]))?;
        if !out_dir.is_null() {
            cfg.out_dir = path_arg(out_dir, "out_dir")?;
        }
        cfg.seed = seed;
        let report = lib(run(&cfg))?;
        if report.all_pass() {
            Ok(())
        } else {
            let failed: Vec<&str> = report
                .properties
                .iter()
                .filter(|p| !p.pass)
                .map(|p| p.name.as_str())
                .collect();
            Err((
                SglStatus::PropertyFailure,
                format!("failed properties: {}", failed.join(", ")),
            ))
        }
    })
}
