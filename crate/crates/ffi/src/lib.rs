//! C ABI over the ecgviz core library.
//!
//! Conventions:
//! - opaque handles (`EvzDataset`, `EvzModel`) are created and freed by this
//!   library; passing them to any other allocator is undefined behavior;
//! - every fallible call returns an [`EvzStatus`]; on failure a thread-local
//!   message is retrievable via [`evz_last_error`];
//! - buffers are caller-allocated; lengths are always explicit.
//!
//! The matching header is generated into `include/ecgviz.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ecgviz_core::cli::AnyModel;
use ecgviz_core::dataset::{generate_synthetic_dataset, Dataset, WindowGroundTruth};
use ecgviz_core::model::{
    evaluate, predict, train, CamNetConfig, CamNetModel, ClassifierConfig, ClassifierModel,
    LstmVisConfig, LstmVisModel, TrainControl, TrainOptions,
};
use ecgviz_core::saliency::{
    cam_for_window, optimize_mask, saliency_from_mask, Convention, MaskConfig,
};
use ecgviz_core::signal::{balance_classes, RhythmClass, Window};
use ecgviz_core::Error;

/// Status codes mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvzStatus {
    Ok = 0,
    /// Invalid arguments or misuse of the API.
    Usage = 1,
    /// Unreadable, malformed, or insufficient data.
    Data = 2,
    /// A numeric failure (divergence, non-finite values).
    Numeric = 3,
}

/// Opaque window inventory.
pub struct EvzDataset {
    windows: Vec<Window>,
    ground_truth: WindowGroundTruth,
}

/// Opaque trained (or initialized) network.
pub struct EvzModel {
    inner: AnyModel,
}

/// Training hyperparameters. Zeroed fields fall back to the published
/// protocol (lr 0.005, momentum 0.7, batch 16, 30 epochs).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EvzTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: u32,
    pub epochs: u32,
    pub seed: u64,
    /// Windows drawn per class for the training split; the remainder is
    /// ignored here (evaluate on a separate dataset or the same one).
    pub split_per_class: u32,
}

/// Mask-learning options. Zeroed weight/step fields fall back to the
/// published settings (1, 0.001, 0.001, 500 iterations, baseline 0).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EvzMaskOptions {
    pub sparsity_weight: f64,
    pub smoothness_weight: f64,
    pub step_size: f64,
    pub iterations: u32,
    pub replacement: f64,
    /// Nonzero selects the literal objective instead of the deletion one.
    pub literal_convention: i32,
}

/// Aggregate evaluation scores. Macro fields are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EvzMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Zero when any per-class metric was undefined.
    pub complete: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> EvzStatus {
    match ecgviz_core::cli::exit_code_for(err) {
        1 => EvzStatus::Usage,
        3 => EvzStatus::Numeric,
        _ => EvzStatus::Data,
    }
}

fn fail(err: Error) -> EvzStatus {
    let status = status_for(&err);
    set_error(&err.to_string());
    status
}

fn usage(message: &str) -> EvzStatus {
    set_error(message);
    EvzStatus::Usage
}

/// Runs a closure, converting panics into a numeric status.
fn guarded(f: impl FnOnce() -> EvzStatus) -> EvzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            EvzStatus::Numeric
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, EvzStatus> {
    if ptr.is_null() {
        return Err(usage(&format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| usage(&format!("{what} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null to query the length).
#[no_mangle]
pub unsafe extern "C" fn evz_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Generates a balanced synthetic dataset: `per_class` windows of each of
/// the 8 rhythm classes, with ground-truth anomaly spans.
///
/// # Safety
/// `out` must be a valid pointer to an `EvzDataset*` slot.
#[no_mangle]
pub unsafe extern "C" fn evz_dataset_synth(
    per_class: u32,
    seed: u64,
    out: *mut *mut EvzDataset,
) -> EvzStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out is null");
        }
        match generate_synthetic_dataset(per_class as usize, seed, 40.0)
            .and_then(|ds| ds.windows().map(|ws| (ws, ds.ground_truth)))
        {
            Ok((set, ground_truth)) => {
                let handle = Box::new(EvzDataset {
                    windows: set.windows,
                    ground_truth,
                });
                *out = Box::into_raw(handle);
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Opens a CSV dataset directory (the layout written by the CLI).
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn evz_dataset_open(
    dir: *const c_char,
    out: *mut *mut EvzDataset,
) -> EvzStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out is null");
        }
        let dir = match cstr_arg(dir, "dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Dataset::load_csv_dir(Path::new(dir))
            .and_then(|ds| ds.windows().map(|ws| (ws, ds.ground_truth)))
        {
            Ok((set, ground_truth)) => {
                *out = Box::into_raw(Box::new(EvzDataset {
                    windows: set.windows,
                    ground_truth,
                }));
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Number of analysis windows in the dataset.
///
/// # Safety
/// `dataset` must be a live handle from this library (or null, yielding 0).
#[no_mangle]
pub unsafe extern "C" fn evz_dataset_window_count(dataset: *const EvzDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).windows.len()
}

/// Number of ground-truth anomaly intervals known for a window id.
///
/// # Safety
/// `dataset` must be a live handle; `window_id` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn evz_dataset_ground_truth_count(
    dataset: *const EvzDataset,
    window_id: *const c_char,
) -> usize {
    if dataset.is_null() {
        return 0;
    }
    let Ok(id) = cstr_arg(window_id, "window_id") else {
        return 0;
    };
    (*dataset)
        .ground_truth
        .get(id)
        .map(|v| v.len())
        .unwrap_or(0)
}

/// Frees a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn evz_dataset_free(dataset: *mut EvzDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn resolved_train_options(config: &EvzTrainConfig) -> TrainOptions {
    let defaults = TrainOptions::default();
    TrainOptions {
        lr: if config.lr > 0.0 { config.lr } else { defaults.lr },
        momentum: if config.momentum > 0.0 {
            config.momentum
        } else {
            defaults.momentum
        },
        batch_size: if config.batch_size > 0 {
            config.batch_size as usize
        } else {
            defaults.batch_size
        },
        epochs: config.epochs as usize,
        seed: config.seed,
        bn_momentum: defaults.bn_momentum,
    }
}

/// Trains a network of `model_kind` ("classifier", "camnet", or "lstmvis")
/// on a balanced split of the dataset and returns the trained model.
///
/// # Safety
/// All pointers must be valid; `model_kind` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn evz_train(
    dataset: *const EvzDataset,
    model_kind: *const c_char,
    paper_scale: i32,
    config: *const EvzTrainConfig,
    out: *mut *mut EvzModel,
) -> EvzStatus {
    guarded(|| {
        if dataset.is_null() || config.is_null() || out.is_null() {
            return usage("dataset, config, and out must be non-null");
        }
        let kind = match cstr_arg(model_kind, "model_kind") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let config = &*config;
        let seed = config.seed;
        let mut model = match kind {
            "classifier" => {
                let cfg = if paper_scale != 0 {
                    ClassifierConfig::paper_scale()
                } else {
                    ClassifierConfig::desk_scale()
                };
                match ClassifierModel::new(cfg, seed) {
                    Ok(m) => AnyModel::Classifier(m),
                    Err(err) => return fail(err),
                }
            }
            "camnet" => {
                let cfg = if paper_scale != 0 {
                    CamNetConfig::paper_scale()
                } else {
                    CamNetConfig::desk_scale()
                };
                match CamNetModel::new(cfg, seed) {
                    Ok(m) => AnyModel::CamNet(m),
                    Err(err) => return fail(err),
                }
            }
            "lstmvis" => match LstmVisModel::new(LstmVisConfig::desk_scale(), seed) {
                Ok(m) => AnyModel::LstmVis(m),
                Err(err) => return fail(err),
            },
            other => return usage(&format!("unknown model kind {other:?}")),
        };
        let per_class = config.split_per_class as usize;
        let train_set = if per_class > 0 {
            match balance_classes((*dataset).windows.clone(), per_class, seed) {
                Ok((train_set, _)) => train_set,
                Err(err) => return fail(err),
            }
        } else {
            (*dataset).windows.clone()
        };
        let opts = resolved_train_options(config);
        match train(&mut model, &train_set, &opts, |_, _| TrainControl::Continue) {
            Ok(_) => {
                *out = Box::into_raw(Box::new(EvzModel { inner: model }));
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Saves a model checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn evz_model_save(model: *const EvzModel, path: *const c_char) -> EvzStatus {
    guarded(|| {
        if model.is_null() {
            return usage("model is null");
        }
        let path = match cstr_arg(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match (*model).inner.save(Path::new(path)) {
            Ok(()) => EvzStatus::Ok,
            Err(err) => fail(err),
        }
    })
}

/// Loads a model checkpoint of any kind.
///
/// # Safety
/// `path` NUL-terminated; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn evz_model_load(path: *const c_char, out: *mut *mut EvzModel) -> EvzStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out is null");
        }
        let path = match cstr_arg(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match AnyModel::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(EvzModel { inner }));
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Frees a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn evz_model_free(model: *mut EvzModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Classifies one window. `probs` (8 doubles) and `predicted` may each be
/// null when not wanted.
///
/// # Safety
/// `window` must point to `len` doubles; output pointers as documented.
#[no_mangle]
pub unsafe extern "C" fn evz_predict(
    model: *const EvzModel,
    window: *const f64,
    len: usize,
    probs: *mut f64,
    predicted: *mut u32,
) -> EvzStatus {
    guarded(|| {
        if model.is_null() || window.is_null() {
            return usage("model and window must be non-null");
        }
        let samples = std::slice::from_raw_parts(window, len);
        match predict(&(*model).inner, samples) {
            Ok((class, p)) => {
                if !probs.is_null() {
                    std::ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
                }
                if !predicted.is_null() {
                    *predicted = class as u32;
                }
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Evaluates a model over every window in the dataset.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn evz_evaluate(
    model: *const EvzModel,
    dataset: *const EvzDataset,
    out: *mut EvzMetrics,
) -> EvzStatus {
    guarded(|| {
        if model.is_null() || dataset.is_null() || out.is_null() {
            return usage("model, dataset, and out must be non-null");
        }
        match evaluate(&(*model).inner, &(*dataset).windows) {
            Ok(metrics) => {
                *out = EvzMetrics {
                    accuracy: metrics.accuracy,
                    macro_precision: metrics.macro_precision.unwrap_or(f64::NAN),
                    macro_recall: metrics.macro_recall.unwrap_or(f64::NAN),
                    macro_f1: metrics.macro_f1.unwrap_or(f64::NAN),
                    complete: metrics.complete as i32,
                };
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Writes the class activation overlay (values in `[0, 1]`, one per input
/// sample) for `class_index` into `overlay`. The model must be a camnet.
///
/// # Safety
/// `window` and `overlay` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn evz_cam_overlay(
    model: *const EvzModel,
    window: *const f64,
    len: usize,
    class_index: u32,
    overlay: *mut f64,
) -> EvzStatus {
    guarded(|| {
        if model.is_null() || window.is_null() || overlay.is_null() {
            return usage("model, window, and overlay must be non-null");
        }
        let AnyModel::CamNet(camnet) = &(*model).inner else {
            return usage("cam overlays require a camnet model");
        };
        let Some(class) = RhythmClass::from_index(class_index as usize) else {
            return usage("class_index out of range");
        };
        let samples = std::slice::from_raw_parts(window, len);
        match cam_for_window(camnet, samples, class) {
            Ok(cam) => {
                std::ptr::copy_nonoverlapping(cam.overlay.as_ptr(), overlay, cam.overlay.len());
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Learns a deletion mask against the model and writes the saliency overlay
/// into `overlay`.
///
/// # Safety
/// `window` and `overlay` must each point to `len` doubles; `options` may be
/// null for the published defaults.
#[no_mangle]
pub unsafe extern "C" fn evz_mask_overlay(
    model: *const EvzModel,
    window: *const f64,
    len: usize,
    class_index: u32,
    options: *const EvzMaskOptions,
    overlay: *mut f64,
) -> EvzStatus {
    guarded(|| {
        if model.is_null() || window.is_null() || overlay.is_null() {
            return usage("model, window, and overlay must be non-null");
        }
        let Some(class) = RhythmClass::from_index(class_index as usize) else {
            return usage("class_index out of range");
        };
        let defaults = MaskConfig::default();
        let config = if options.is_null() {
            defaults
        } else {
            let o = &*options;
            MaskConfig {
                sparsity_weight: if o.sparsity_weight > 0.0 {
                    o.sparsity_weight
                } else {
                    defaults.sparsity_weight
                },
                smoothness_weight: if o.smoothness_weight > 0.0 {
                    o.smoothness_weight
                } else {
                    defaults.smoothness_weight
                },
                step_size: if o.step_size > 0.0 {
                    o.step_size
                } else {
                    defaults.step_size
                },
                iterations: if o.iterations > 0 {
                    o.iterations as usize
                } else {
                    defaults.iterations
                },
                replacement: o.replacement,
                convention: if o.literal_convention != 0 {
                    Convention::Literal
                } else {
                    Convention::Deletion
                },
            }
        };
        let samples = std::slice::from_raw_parts(window, len);
        match optimize_mask(&(*model).inner, samples, class, &config) {
            Ok(state) => {
                let values = saliency_from_mask(&state.mask, config.convention);
                std::ptr::copy_nonoverlapping(values.as_ptr(), overlay, values.len());
                EvzStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}
