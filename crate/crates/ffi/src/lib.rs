//! C ABI over the `ultrastf` engine.
//!
//! Every function returns a [`UstfStatus`]. On failure the message is kept
//! per thread and can be read with [`ustf_last_error_message`]. Models are
//! opaque [`UstfModel`] handles released with [`ustf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use ultrastf::analysis::{count_params, enumerate_params, nearest_match};
use ultrastf::models::{checkpoint, AttentionKind, Model, ModelConfig, ModelKind};
use ultrastf::numerics::Tensor;
use ultrastf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UstfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    ShapeMismatch = 3,
    DataError = 4,
    IoError = 5,
    FormatError = 6,
    NoMatch = 7,
    Unsupported = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UstfModelKind {
    UltraStf = 0,
    SparseTsf = 1,
    SparseTsfMlp = 2,
    Linear = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UstfAttention {
    Relu = 0,
    Softmax = 1,
}

/// Architecture description mirroring `ModelConfig`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct UstfModelSpec {
    pub kind: UstfModelKind,
    pub t_in: usize,
    pub t_out: usize,
    pub period: usize,
    pub shapes: usize,
    pub blocks: usize,
    pub heads: usize,
    pub attention: UstfAttention,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
}

/// Opaque model handle.
pub struct UstfModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> UstfStatus {
    match err {
        Error::Config(_) => UstfStatus::InvalidConfig,
        Error::Shape { .. } => UstfStatus::ShapeMismatch,
        Error::Data(_) | Error::Csv(_) | Error::UndefinedMetric(_) => UstfStatus::DataError,
        Error::Io(_) | Error::MissingFile(_) => UstfStatus::IoError,
        Error::Format(_) | Error::Json(_) => UstfStatus::FormatError,
        Error::NoMatch(_) => UstfStatus::NoMatch,
        Error::Unsupported(_) => UstfStatus::Unsupported,
        Error::Contract(_) | Error::Diverged { .. } => UstfStatus::Internal,
    }
}

fn fail(status: UstfStatus, msg: impl Into<String>) -> UstfStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), UstfStatus>) -> UstfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UstfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(UstfStatus::Internal, "panic inside ultrastf"),
    }
}

fn lift<T>(r: ultrastf::Result<T>) -> Result<T, UstfStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), UstfStatus> {
    if p.is_null() {
        Err(fail(UstfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn config_of(spec: &UstfModelSpec) -> ModelConfig {
    ModelConfig {
        kind: match spec.kind {
            UstfModelKind::UltraStf => ModelKind::UltraStf,
            UstfModelKind::SparseTsf => ModelKind::SparseTsf,
            UstfModelKind::SparseTsfMlp => ModelKind::SparseTsfMlp,
            UstfModelKind::Linear => ModelKind::Linear,
        },
        t_in: spec.t_in,
        t_out: spec.t_out,
        period: spec.period,
        shapes: spec.shapes,
        blocks: spec.blocks,
        heads: spec.heads,
        attention: match spec.attention {
            UstfAttention::Relu => AttentionKind::Relu,
            UstfAttention::Softmax => AttentionKind::Softmax,
        },
        mlp_depth: spec.mlp_depth,
        mlp_hidden: spec.mlp_hidden,
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, UstfStatus> {
    non_null(path, "path")?;
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(UstfStatus::InvalidConfig, "path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

/// Default architecture: UltraSTF, 720 -> 12, period 12, 16 shapes, 4 blocks.
#[no_mangle]
pub extern "C" fn ustf_model_spec_default() -> UstfModelSpec {
    UstfModelSpec {
        kind: UstfModelKind::UltraStf,
        t_in: 720,
        t_out: 12,
        period: 12,
        shapes: 16,
        blocks: 4,
        heads: 1,
        attention: UstfAttention::Relu,
        mlp_depth: 2,
        mlp_hidden: 32,
    }
}

/// Creates a freshly initialised model. `*out` receives the handle.
///
/// # Safety
/// `spec` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_new(spec: *const UstfModelSpec, seed: u64, out: *mut *mut UstfModel) -> UstfStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "out")?;
        let inner = lift(Model::init(config_of(&*spec), seed))?;
        *out = Box::into_raw(Box::new(UstfModel { inner }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_load(path: *const c_char, out: *mut *mut UstfModel) -> UstfStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = lift(checkpoint::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(UstfModel { inner }));
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_save(model: *const UstfModel, path: *const c_char) -> UstfStatus {
    guard(|| {
        non_null(model, "model")?;
        lift(checkpoint::save(&(*model).inner, path_arg(path)?))
    })
}

/// Forecasts `n_channels` independent windows.
///
/// `input` holds `n_channels * t_in` values, channel-major; `output` must
/// have room for `n_channels * t_out` values and is written channel-major.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_forecast(
    model: *const UstfModel,
    input: *const f64,
    n_channels: usize,
    t_in: usize,
    output: *mut f64,
    output_len: usize,
) -> UstfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(input, "input")?;
        non_null(output, "output")?;
        let m = &(*model).inner;
        let c = m.config();
        if t_in != c.t_in || output_len != n_channels * c.t_out {
            return Err(fail(
                UstfStatus::ShapeMismatch,
                format!(
                    "model maps {} -> {} steps; got t_in {t_in} and output_len {output_len} for {n_channels} channels",
                    c.t_in, c.t_out
                ),
            ));
        }
        let x = slice::from_raw_parts(input, n_channels * t_in).to_vec();
        let y = lift(m.forward(&lift(Tensor::new(vec![n_channels, t_in], x))?))?;
        slice::from_raw_parts_mut(output, output_len).copy_from_slice(y.data());
        Ok(())
    })
}

/// Number of learnable scalars held by `model`.
///
/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_param_count(model: *const UstfModel, out: *mut usize) -> UstfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).inner.params().scalar_count();
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ustf_model_free(model: *mut UstfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parameter count of an architecture. Multi-head specs are counted by
/// enumerating the layout.
///
/// # Safety
/// `spec` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ustf_count_params(spec: *const UstfModelSpec, out: *mut usize) -> UstfStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "out")?;
        let config = config_of(&*spec);
        *out = match count_params(&config) {
            Err(Error::Unsupported(_)) => lift(enumerate_params(&config))?,
            r => lift(r)?,
        };
        Ok(())
    })
}

/// Closest z-normalised window of `series` to `shape`.
///
/// # Safety
/// `shape` must hold `width` values, `series` `len` values; `offset` and
/// `distance` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ustf_nearest_match(
    shape: *const f64,
    width: usize,
    series: *const f64,
    len: usize,
    offset: *mut usize,
    distance: *mut f64,
) -> UstfStatus {
    guard(|| {
        non_null(shape, "shape")?;
        non_null(series, "series")?;
        non_null(offset, "offset")?;
        non_null(distance, "distance")?;
        let (o, d) = lift(nearest_match(
            slice::from_raw_parts(shape, width),
            slice::from_raw_parts(series, len),
        ))?;
        *offset = o;
        *distance = d;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ustf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ustf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
