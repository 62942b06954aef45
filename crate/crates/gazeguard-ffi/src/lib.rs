//! C ABI for the gazeguard pipeline: opaque handles plus status codes, so
//! other languages can bind the trained models and the smoothing filter.
//!
//! Conventions: every fallible call returns `GgStatus`; outputs go through
//! pointers that are written only on `Ok`. `gg_last_error_message` returns a
//! thread-local description of the most recent failure on this thread.
//! Handles are created by `*_new`/`*_load` and released by the matching
//! `*_free`; passing a handle to any other `*_free` is undefined behavior.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use gazeguard::detector::{DebouncedStream, DetectorModel};
use gazeguard::gazenet::{angular_error_deg, GazeModel};
use gazeguard::smoothing::{rts_smooth, KalmanChannel};
use gazeguard::synthcam::{
    render_eye_image, EyeImage, FeatureRecord, GazeAngles, HeadPose, IMG_PIXELS,
};
use gazeguard::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgStatus {
    Ok = 0,
    /// invalid argument or configuration
    InvalidArgument = 1,
    /// unreadable, corrupt, or mismatched input data
    DataError = 2,
    /// numerical failure
    NumericError = 3,
    /// null pointer passed where a value is required
    NullPointer = 4,
    /// unexpected internal failure
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> GgStatus {
    match err {
        Error::Config(_) | Error::Argument(_) => GgStatus::InvalidArgument,
        Error::Data(_) | Error::Checkpoint { .. } | Error::Structure(_) | Error::Io { .. } => {
            GgStatus::DataError
        }
        Error::State(_) | Error::Numeric(_) => GgStatus::NumericError,
    }
}

fn fail(e: &Error) -> GgStatus {
    set_error(&e.to_string());
    status_of(e)
}

fn guard<F: FnOnce() -> GgStatus>(f: F) -> GgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            GgStatus::Internal
        }
    }
}

/// Message describing the most recent failure on this thread. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static library version string.
#[no_mangle]
pub extern "C" fn gg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, GgStatus> {
    if ptr.is_null() {
        set_error("path is null");
        return Err(GgStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s).to_path_buf()),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(GgStatus::InvalidArgument)
        }
    }
}

// ---------------------------------------------------------------------------
// Kalman channel
// ---------------------------------------------------------------------------

/// Opaque constant-velocity Kalman channel.
pub struct GgKalman {
    inner: KalmanChannel,
}

/// Creates a channel initialized at `first_obs` with noise parameters q, r.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gg_kalman_new(
    first_obs: c_double,
    q: c_double,
    r: c_double,
    out: *mut *mut GgKalman,
) -> GgStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GgStatus::NullPointer;
        }
        match KalmanChannel::init(first_obs, q, r) {
            Ok(ch) => {
                *out = Box::into_raw(Box::new(GgKalman { inner: ch }));
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Predict/update step; writes the filtered value to `out`.
///
/// # Safety
/// `handle` must come from `gg_kalman_new`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_kalman_step(
    handle: *mut GgKalman,
    obs: c_double,
    out: *mut c_double,
) -> GgStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("handle or out is null");
            return GgStatus::NullPointer;
        }
        match (*handle).inner.step(obs) {
            Ok(v) => {
                *out = v;
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `handle` must come from `gg_kalman_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gg_kalman_free(handle: *mut GgKalman) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Offline smoothing: writes `len` smoothed values to `out`.
///
/// # Safety
/// `obs` and `out` must point to `len` readable/writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_rts_smooth(
    obs: *const c_double,
    len: usize,
    q: c_double,
    r: c_double,
    out: *mut c_double,
) -> GgStatus {
    guard(|| {
        if obs.is_null() || out.is_null() {
            set_error("obs or out is null");
            return GgStatus::NullPointer;
        }
        let series = std::slice::from_raw_parts(obs, len);
        match rts_smooth(series, q, r) {
            Ok(values) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(&values);
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// Gaze model
// ---------------------------------------------------------------------------

/// Opaque gaze regression model.
pub struct GgGazeModel {
    inner: GazeModel,
}

/// Loads a gaze checkpoint (expects the `.meta.json` sidecar next to it).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_gaze_model_load(
    path: *const c_char,
    out: *mut *mut GgGazeModel,
) -> GgStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GgStatus::NullPointer;
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match GazeModel::load(&path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(GgGazeModel { inner: model }));
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Predicts gaze (radians) for one 60x36 row-major image with pixel values
/// in [0, 1] plus the head pose.
///
/// # Safety
/// `pixels` must point to 2160 doubles; `yaw`/`pitch` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_gaze_model_predict(
    handle: *mut GgGazeModel,
    pixels: *const c_double,
    head_yaw: c_double,
    head_pitch: c_double,
    yaw: *mut c_double,
    pitch: *mut c_double,
) -> GgStatus {
    guard(|| {
        if handle.is_null() || pixels.is_null() || yaw.is_null() || pitch.is_null() {
            set_error("null pointer argument");
            return GgStatus::NullPointer;
        }
        let data = std::slice::from_raw_parts(pixels, IMG_PIXELS).to_vec();
        let head = match HeadPose::new(head_yaw, head_pitch) {
            Ok(h) => h,
            Err(e) => return fail(&e),
        };
        let image = match EyeImage::new(
            data,
            GazeAngles {
                yaw: 0.0,
                pitch: 0.0,
            },
            head,
        ) {
            Ok(img) => img,
            Err(e) => return fail(&e),
        };
        match (*handle).inner.gaze_forward(&image, head) {
            Ok(pred) => {
                *yaw = pred.yaw;
                *pitch = pred.pitch;
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `handle` must come from `gg_gaze_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gg_gaze_model_free(handle: *mut GgGazeModel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

/// Opaque abnormal-state classifier.
pub struct GgDetector {
    inner: DetectorModel,
}

/// Loads a detector checkpoint (expects the `.meta.json` sidecar next to it).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_detector_load(
    path: *const c_char,
    out: *mut *mut GgDetector,
) -> GgStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GgStatus::NullPointer;
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match DetectorModel::load(&path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(GgDetector { inner: model }));
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Classifies one 7-value record `[left_yaw, left_pitch, right_yaw,
/// right_pitch, head_yaw, head_pitch, dist]` (radians / meters). Writes the
/// label (0 abnormal, 1 normal) and the softmax confidence of that label.
///
/// # Safety
/// `features` must point to 7 doubles; `label`/`confidence` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_detector_infer(
    handle: *mut GgDetector,
    features: *const c_double,
    label: *mut u8,
    confidence: *mut c_double,
) -> GgStatus {
    guard(|| {
        if handle.is_null() || features.is_null() || label.is_null() || confidence.is_null() {
            set_error("null pointer argument");
            return GgStatus::NullPointer;
        }
        let f = std::slice::from_raw_parts(features, 7);
        let record = FeatureRecord {
            left_eye: GazeAngles {
                yaw: f[0],
                pitch: f[1],
            },
            right_eye: GazeAngles {
                yaw: f[2],
                pitch: f[3],
            },
            head: HeadPose {
                yaw: f[4],
                pitch: f[5],
            },
            distance_m: f[6],
            label: 0,
        };
        match gazeguard::detector::infer_state(&mut (*handle).inner, &[record], 1) {
            Ok(decisions) => {
                *label = decisions[0].label;
                *confidence = decisions[0].confidence;
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `handle` must come from `gg_detector_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gg_detector_free(handle: *mut GgDetector) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

// ---------------------------------------------------------------------------
// Debounce stream
// ---------------------------------------------------------------------------

/// Opaque debounce state machine: the stable state flips only after k
/// consecutive identical labels.
pub struct GgDebounce {
    inner: DebouncedStream,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gg_debounce_new(k: u32, out: *mut *mut GgDebounce) -> GgStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GgStatus::NullPointer;
        }
        if k == 0 {
            set_error("k must be >= 1");
            return GgStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(GgDebounce {
            inner: DebouncedStream::new(k),
        }));
        GgStatus::Ok
    })
}

/// Feeds one per-record label; writes the debounced stable state.
///
/// # Safety
/// `handle` must come from `gg_debounce_new`; `stable` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gg_debounce_push(
    handle: *mut GgDebounce,
    label: u8,
    stable: *mut u8,
) -> GgStatus {
    guard(|| {
        if handle.is_null() || stable.is_null() {
            set_error("handle or stable is null");
            return GgStatus::NullPointer;
        }
        if label > 1 {
            set_error("label must be 0 or 1");
            return GgStatus::InvalidArgument;
        }
        *stable = (*handle).inner.push(label);
        GgStatus::Ok
    })
}

/// # Safety
/// `handle` must come from `gg_debounce_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gg_debounce_free(handle: *mut GgDebounce) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

// ---------------------------------------------------------------------------
// Stateless helpers
// ---------------------------------------------------------------------------

/// Angle between two gaze rays, degrees.
#[no_mangle]
pub extern "C" fn gg_angular_error_deg(
    pred_yaw: c_double,
    pred_pitch: c_double,
    truth_yaw: c_double,
    truth_pitch: c_double,
) -> c_double {
    angular_error_deg(
        GazeAngles {
            yaw: pred_yaw,
            pitch: pred_pitch,
        },
        GazeAngles {
            yaw: truth_yaw,
            pitch: truth_pitch,
        },
    )
}

/// Renders a synthetic 60x36 eye image into `pixels` (2160 doubles,
/// row-major, values in [0, 1]); deterministic in (gaze, head, seed).
///
/// # Safety
/// `pixels` must point to 2160 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gg_render_eye_image(
    gaze_yaw: c_double,
    gaze_pitch: c_double,
    head_yaw: c_double,
    head_pitch: c_double,
    seed: u64,
    pixels: *mut c_double,
) -> GgStatus {
    guard(|| {
        if pixels.is_null() {
            set_error("pixels is null");
            return GgStatus::NullPointer;
        }
        let gaze = match GazeAngles::new(gaze_yaw, gaze_pitch) {
            Ok(g) => g,
            Err(e) => return fail(&e),
        };
        let head = match HeadPose::new(head_yaw, head_pitch) {
            Ok(h) => h,
            Err(e) => return fail(&e),
        };
        match render_eye_image(gaze, head, seed) {
            Ok(img) => {
                std::slice::from_raw_parts_mut(pixels, IMG_PIXELS).copy_from_slice(&img.pixels);
                GgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
