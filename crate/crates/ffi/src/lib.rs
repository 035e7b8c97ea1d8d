//! C ABI over the convattn core: opaque handles for models and datasets,
//! integer status codes mirroring the CLI exit codes, and a thread-local
//! last-error message.
//!
//! Status codes: 0 ok, 2 config/shape, 3 io, 4 format, 5 numeric.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use convattn::data::{load_dataset, Dataset};
use convattn::error::Error;
use convattn::model::{
    build_model, load_checkpoint, save_checkpoint, FusionConfig, FusionModel,
};
use convattn::tensor::{Rng, Tensor};
use convattn::train::{evaluate, gradcheck, train, TrainConfig};
use convattn::metrics::{accuracy, waf};

pub const CAF_OK: i32 = 0;
pub const CAF_ERR_CONFIG: i32 = 2;
pub const CAF_ERR_IO: i32 = 3;
pub const CAF_ERR_FORMAT: i32 = 4;
pub const CAF_ERR_NUMERIC: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn record(e: &Error) -> i32 {
    set_error(&e.to_string());
    e.exit_code()
}

fn guard<F: FnOnce() -> i32>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            CAF_ERR_NUMERIC
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CAF_ERR_CONFIG);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CAF_ERR_CONFIG
    })
}

/// Opaque trained-or-trainable fusion model.
pub struct CafModel {
    inner: FusionModel,
}

/// Opaque in-memory dataset.
pub struct CafDataset {
    inner: Dataset,
}

/// Last error message for the calling thread, valid until the next failing
/// call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn caf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a fresh model from a fusion-config JSON string. Returns null on
/// error; see caf_last_error_message.
#[no_mangle]
pub unsafe extern "C" fn caf_model_new(config_json: *const c_char, seed: u64) -> *mut CafModel {
    let mut out: *mut CafModel = ptr::null_mut();
    guard(|| {
        let json = match cstr(config_json) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let config: FusionConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(&format!("fusion config: {e}"));
                return CAF_ERR_CONFIG;
            }
        };
        match build_model(&config, &mut Rng::new(seed)) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(CafModel { inner }));
                CAF_OK
            }
            Err(e) => record(&e),
        }
    });
    out
}

/// Load a model checkpoint. Returns null on error.
#[no_mangle]
pub unsafe extern "C" fn caf_model_load(path: *const c_char) -> *mut CafModel {
    let mut out: *mut CafModel = ptr::null_mut();
    guard(|| {
        let path = match cstr(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match load_checkpoint(Path::new(path)) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(CafModel { inner }));
                CAF_OK
            }
            Err(e) => record(&e),
        }
    });
    out
}

/// Save the model as a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn caf_model_save(model: *mut CafModel, path: *const c_char) -> i32 {
    guard(|| {
        let Some(model) = model.as_mut() else {
            set_error("null model handle");
            return CAF_ERR_CONFIG;
        };
        let path = match cstr(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match save_checkpoint(&mut model.inner, Path::new(path)) {
            Ok(()) => CAF_OK,
            Err(e) => record(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn caf_model_free(model: *mut CafModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
#[no_mangle]
pub unsafe extern "C" fn caf_model_param_count(model: *mut CafModel) -> usize {
    match model.as_mut() {
        Some(m) => m.inner.param_count(),
        None => 0,
    }
}

/// Load a dataset directory (manifest.json plus stream files). Returns null
/// on error.
#[no_mangle]
pub unsafe extern "C" fn caf_dataset_load(dir: *const c_char) -> *mut CafDataset {
    let mut out: *mut CafDataset = ptr::null_mut();
    guard(|| {
        let dir = match cstr(dir) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match load_dataset(Path::new(dir)) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(CafDataset { inner }));
                CAF_OK
            }
            Err(e) => record(&e),
        }
    });
    out
}

#[no_mangle]
pub unsafe extern "C" fn caf_dataset_free(dataset: *mut CafDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of samples in the dataset.
#[no_mangle]
pub unsafe extern "C" fn caf_dataset_len(dataset: *const CafDataset) -> usize {
    match dataset.as_ref() {
        Some(d) => d.inner.len(),
        None => 0,
    }
}

/// Train the model in place. `train_config_json` may be null for defaults.
/// On success writes the final train-split WAF to `out_train_waf` (may be
/// null).
#[no_mangle]
pub unsafe extern "C" fn caf_train(
    model: *mut CafModel,
    dataset: *const CafDataset,
    train_config_json: *const c_char,
    out_train_waf: *mut f64,
) -> i32 {
    guard(|| {
        let Some(model) = model.as_mut() else {
            set_error("null model handle");
            return CAF_ERR_CONFIG;
        };
        let Some(dataset) = dataset.as_ref() else {
            set_error("null dataset handle");
            return CAF_ERR_CONFIG;
        };
        let cfg: TrainConfig = if train_config_json.is_null() {
            TrainConfig::default()
        } else {
            let json = match cstr(train_config_json) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match serde_json::from_str(json) {
                Ok(c) => c,
                Err(e) => {
                    set_error(&format!("train config: {e}"));
                    return CAF_ERR_CONFIG;
                }
            }
        };
        match train(&mut model.inner, &dataset.inner, None, &cfg) {
            Ok(result) => {
                if !out_train_waf.is_null() {
                    *out_train_waf = result.train_waf;
                }
                CAF_OK
            }
            Err(e) => record(&e),
        }
    })
}

/// Evaluate the model over the labeled samples of a dataset; writes WAF and
/// accuracy (either pointer may be null).
#[no_mangle]
pub unsafe extern "C" fn caf_evaluate(
    model: *mut CafModel,
    dataset: *const CafDataset,
    out_waf: *mut f64,
    out_acc: *mut f64,
) -> i32 {
    guard(|| {
        let Some(model) = model.as_mut() else {
            set_error("null model handle");
            return CAF_ERR_CONFIG;
        };
        let Some(dataset) = dataset.as_ref() else {
            set_error("null dataset handle");
            return CAF_ERR_CONFIG;
        };
        let cm = match evaluate(&mut model.inner, &dataset.inner) {
            Ok(cm) => cm,
            Err(e) => return record(&e),
        };
        let (w, a) = match (waf(&cm), accuracy(&cm)) {
            (Ok(w), Ok(a)) => (w, a),
            (Err(e), _) | (_, Err(e)) => return record(&e),
        };
        if !out_waf.is_null() {
            *out_waf = w;
        }
        if !out_acc.is_null() {
            *out_acc = a;
        }
        CAF_OK
    })
}

/// Classify one sample. `features` holds the streams concatenated in model
/// declaration order; `len` must equal the sum of stream dims. The predicted
/// class index is written to `out_class`.
#[no_mangle]
pub unsafe extern "C" fn caf_predict(
    model: *mut CafModel,
    features: *const f64,
    len: usize,
    out_class: *mut usize,
) -> i32 {
    guard(|| {
        let Some(model) = model.as_mut() else {
            set_error("null model handle");
            return CAF_ERR_CONFIG;
        };
        if features.is_null() || out_class.is_null() {
            set_error("null buffer argument");
            return CAF_ERR_CONFIG;
        }
        let expected: usize = model.inner.config.streams.iter().map(|s| s.input_dim).sum();
        if len != expected {
            set_error(&format!("expected {expected} features, got {len}"));
            return CAF_ERR_CONFIG;
        }
        let data = std::slice::from_raw_parts(features, len);
        let mut offset = 0;
        let mut batch = Vec::new();
        for s in &model.inner.config.streams {
            let slice = &data[offset..offset + s.input_dim];
            offset += s.input_dim;
            match Tensor::new(&[1, s.input_dim], slice.to_vec()) {
                Ok(t) => batch.push(t),
                Err(e) => return record(&e),
            }
        }
        match model.inner.predict(&batch) {
            Ok(preds) => {
                *out_class = preds[0];
                CAF_OK
            }
            Err(e) => record(&e),
        }
    })
}

/// Finite-difference gradient check of a fresh model built from the config
/// JSON. Writes the max relative error (pointer may be null); returns
/// CAF_ERR_NUMERIC if it exceeds 1e-5.
#[no_mangle]
pub unsafe extern "C" fn caf_gradcheck(
    config_json: *const c_char,
    seed: u64,
    out_max_rel_err: *mut f64,
) -> i32 {
    guard(|| {
        let json = match cstr(config_json) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let config: FusionConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(&format!("fusion config: {e}"));
                return CAF_ERR_CONFIG;
            }
        };
        match gradcheck(&config, seed) {
            Ok(report) => {
                if !out_max_rel_err.is_null() {
                    *out_max_rel_err = report.max_rel_err;
                }
                if report.max_rel_err > 1e-5 {
                    set_error(&format!(
                        "gradient check failed: max relative error {:.3e}",
                        report.max_rel_err
                    ));
                    CAF_ERR_NUMERIC
                } else {
                    CAF_OK
                }
            }
            Err(e) => record(&e),
        }
    })
}
