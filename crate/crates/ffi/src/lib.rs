//! C ABI for the semantic federated learning library.
//!
//! Models travel as opaque handles; every fallible call returns an
//! [`XsflStatus`] and leaves a human-readable message retrievable through
//! [`xsfl_last_error`] (thread-local, valid until the next failing call on
//! the same thread).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use xsfl_core::autograd::Tensor;
use xsfl_core::config::ExperimentConfig;
use xsfl_core::data::SynthSpec;
use xsfl_core::error::Error;
use xsfl_core::params::ParamVector;
use xsfl_core::sc::{ChannelSpec, SCArchitecture};
use xsfl_core::{data, esc, experiment, sc};

/// Result codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XsflStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was outside its documented range.
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 3,
    /// File system failure.
    Io = 4,
    /// A config, spec, dataset, or model file failed to parse.
    Parse = 5,
    /// Tensor or model shapes did not line up.
    Dimension = 6,
    /// Local training produced a non-finite loss.
    Diverged = 7,
    /// Every device was excluded from a round.
    EmptyRound = 8,
    /// Any other internal failure.
    Internal = 9,
}

/// Opaque handle to a loaded model (architecture plus parameters).
pub struct XsflModel {
    arch: SCArchitecture,
    params: ParamVector,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> XsflStatus {
    match err {
        Error::Dimension(_) => XsflStatus::Dimension,
        Error::InvalidParameter(_) | Error::Index(_) => XsflStatus::InvalidArgument,
        Error::Contract(_) => XsflStatus::InvalidArgument,
        Error::Diverged { .. } => XsflStatus::Diverged,
        Error::EmptyRound { .. } => XsflStatus::EmptyRound,
        Error::Ingestion { .. } | Error::Config { .. } | Error::ModelFormat(_) => {
            XsflStatus::Parse
        }
        Error::Io(_) => XsflStatus::Io,
    }
}

fn fail(err: &Error) -> XsflStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, XsflStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(XsflStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(XsflStatus::InvalidUtf8)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xsfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread. Valid until the next failing
/// call on the same thread; never null.
#[no_mangle]
pub extern "C" fn xsfl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a serialized model. On success writes a fresh handle into `out`;
/// free it with [`xsfl_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_load(
    path: *const c_char,
    out: *mut *mut XsflModel,
) -> XsflStatus {
    if out.is_null() {
        set_error("null output handle");
        return XsflStatus::NullArgument;
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match sc::load_model(Path::new(&path)) {
        Ok((arch, params)) => {
            *out = Box::into_raw(Box::new(XsflModel { arch, params }));
            XsflStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Serialize a model to `path`.
///
/// # Safety
/// `model` must come from this library; `path` must be a valid string.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_save(
    model: *const XsflModel,
    path: *const c_char,
) -> XsflStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return XsflStatus::NullArgument;
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match sc::save_model(Path::new(&path), &model.arch, &model.params) {
        Ok(()) => XsflStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_free(model: *mut XsflModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes of the model, or 0 on a null handle.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_classes(model: *const XsflModel) -> u32 {
    model.as_ref().map_or(0, |m| m.arch.classes as u32)
}

/// Length of the transmitted semantic vector, or 0 on a null handle.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_semantic_dim(model: *const XsflModel) -> u32 {
    model.as_ref().map_or(0, |m| m.arch.semantic_dim as u32)
}

/// Expected pixel count of one input image (channels * height * width).
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_input_len(model: *const XsflModel) -> u64 {
    model
        .as_ref()
        .map_or(0, |m| m.arch.image.iter().product::<usize>() as u64)
}

/// Total trainable parameter count.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_param_count(model: *const XsflModel) -> u64 {
    model.as_ref().map_or(0, |m| m.params.len() as u64)
}

/// Classify one image. `pixels` holds `xsfl_model_input_len` reals in
/// [0, 1]; the semantic vector crosses a channel with the given gain and
/// noise before decoding. Writes the class into `out_class` and, when
/// `out_logits` is non-null, the per-class logits into its first
/// `xsfl_model_classes` slots.
///
/// # Safety
/// Pointers must be valid for the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_predict(
    model: *const XsflModel,
    pixels: *const f64,
    pixels_len: usize,
    gain: f64,
    noise_std: f64,
    seed: u64,
    out_class: *mut u32,
    out_logits: *mut f64,
) -> XsflStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return XsflStatus::NullArgument;
    };
    if pixels.is_null() || out_class.is_null() {
        set_error("null pixels or output pointer");
        return XsflStatus::NullArgument;
    }
    let expected: usize = model.arch.image.iter().product();
    if pixels_len != expected {
        set_error(&format!("expected {expected} pixels, got {pixels_len}"));
        return XsflStatus::Dimension;
    }
    let data = std::slice::from_raw_parts(pixels, pixels_len).to_vec();
    let tensor = match Tensor::new(model.arch.image.to_vec(), data) {
        Ok(t) => t,
        Err(err) => return fail(&err),
    };
    let chan = match ChannelSpec::new(gain, noise_std) {
        Ok(c) => c,
        Err(err) => return fail(&err),
    };
    match sc::predict(&model.arch, &model.params, &tensor, &chan, seed) {
        Ok((class, logits)) => {
            *out_class = class as u32;
            if !out_logits.is_null() {
                let dst = std::slice::from_raw_parts_mut(out_logits, logits.len());
                dst.copy_from_slice(&logits);
            }
            XsflStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Explain one image: writes `<stem>.esc.<l>.pgm` per semantic feature plus
/// `<stem>.esc.mean.pgm` into `out_dir`.
///
/// # Safety
/// Pointers must be valid; `pixels` must hold `pixels_len` reals.
#[no_mangle]
pub unsafe extern "C" fn xsfl_model_explain(
    model: *const XsflModel,
    pixels: *const f64,
    pixels_len: usize,
    slope: f64,
    out_dir: *const c_char,
    stem: *const c_char,
) -> XsflStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return XsflStatus::NullArgument;
    };
    if pixels.is_null() {
        set_error("null pixel pointer");
        return XsflStatus::NullArgument;
    }
    let out_dir = match path_arg(out_dir) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let stem = if stem.is_null() {
        "input".to_string()
    } else {
        match CStr::from_ptr(stem).to_str() {
            Ok(s) => s.to_string(),
            Err(_) => {
                set_error("stem is not valid UTF-8");
                return XsflStatus::InvalidUtf8;
            }
        }
    };
    let expected: usize = model.arch.image.iter().product();
    if pixels_len != expected {
        set_error(&format!("expected {expected} pixels, got {pixels_len}"));
        return XsflStatus::Dimension;
    }
    let data = std::slice::from_raw_parts(pixels, pixels_len).to_vec();
    let tensor = match Tensor::new(model.arch.image.to_vec(), data) {
        Ok(t) => t,
        Err(err) => return fail(&err),
    };
    let explanation = match esc::explain(&model.arch, &model.params, &tensor, slope) {
        Ok(e) => e,
        Err(err) => return fail(&err),
    };
    match esc::export_heatmaps(&explanation, &out_dir, &stem, false) {
        Ok(_) => XsflStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Bit flags for [`xsfl_run_experiment`].
pub const XSFL_RUN_NO_ACT: u32 = 1;
pub const XSFL_RUN_ESC_EXPORT: u32 = 2;

/// Run a full experiment from a config file, writing `metrics.csv`,
/// `model.scm`, and optional heatmaps into `out_dir`. A non-negative
/// `seed_override` replaces the config seed.
///
/// # Safety
/// `config_path` and `out_dir` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn xsfl_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed_override: i64,
    flags: u32,
) -> XsflStatus {
    let config_path = match path_arg(config_path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_dir = match path_arg(out_dir) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let mut config = match ExperimentConfig::from_file(&config_path) {
        Ok(c) => c,
        Err(err) => return fail(&err),
    };
    if seed_override >= 0 {
        config.seed = seed_override as u64;
    }
    if flags & XSFL_RUN_NO_ACT != 0 {
        config.act_enabled = false;
    }
    if flags & XSFL_RUN_ESC_EXPORT != 0 {
        config.esc_export = true;
    }
    match experiment::run_experiment(&config, &out_dir) {
        Ok(_) => XsflStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Synthesize a fire-like dataset from a spec file into class
/// subdirectories under `out_dir`.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn xsfl_synthesize(
    spec_path: *const c_char,
    out_dir: *const c_char,
) -> XsflStatus {
    let spec_path = match path_arg(spec_path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_dir = match path_arg(out_dir) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let text = match std::fs::read_to_string(&spec_path) {
        Ok(t) => t,
        Err(err) => return fail(&Error::Io(err)),
    };
    let spec = match SynthSpec::from_str_contents(&text) {
        Ok(s) => s,
        Err(err) => return fail(&err),
    };
    let dataset = match data::synthesize_fire_like(&spec) {
        Ok(d) => d,
        Err(err) => return fail(&err),
    };
    match data::write_dataset_dir(&dataset, &out_dir) {
        Ok(()) => XsflStatus::Ok,
        Err(err) => fail(&err),
    }
}
