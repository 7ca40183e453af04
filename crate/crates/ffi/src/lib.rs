//! C ABI over the peakcast forecaster.
//!
//! Every fallible call returns a [`PkfcStatus`]; on failure a message for the
//! calling thread is available from [`pkfc_last_error`]. Models are opaque
//! [`PkfcModel`] handles released with [`pkfc_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use chrono::NaiveDate;
use peakcast::battery::{closed_form_savings, payback_years, TariffSpec};
use peakcast::features::{encode_timestep, FeatureVector, FEATURE_DIM, HOLIDAY_IDX, INPUT_HOURS, TARGET_HOURS};
use peakcast::labeler::{label_day, HOURS};
use peakcast::model_file::{self, ModelFileError, StoredModel};
use peakcast::trace::{CalendarSpec, DemandRecord};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkfcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadFormat = 4,
    Domain = 5,
    Panic = 6,
}

/// Opaque forecaster handle.
pub struct PkfcModel {
    inner: StoredModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: PkfcStatus, msg: impl Into<String>) -> PkfcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PkfcStatus) -> PkfcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == PkfcStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(PkfcStatus::Panic, "internal panic"),
    }
}

fn file_status(e: &ModelFileError) -> PkfcStatus {
    match e {
        ModelFileError::Io { .. } => PkfcStatus::Io,
        _ => PkfcStatus::BadFormat,
    }
}

/// Message describing the last failed call on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pkfc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pkfc_model_load(path: *const c_char, out: *mut *mut PkfcModel) -> PkfcStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(PkfcStatus::NullPointer, "path and out must be non-null");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(PkfcStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match model_file::load(Path::new(path)) {
            Ok((inner, _)) => {
                *out = Box::into_raw(Box::new(PkfcModel { inner }));
                PkfcStatus::Ok
            }
            Err(e) => fail(file_status(&e), e.to_string()),
        }
    })
}

/// Decode a model from an in-memory file image.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pkfc_model_from_bytes(data: *const u8, len: usize, out: *mut *mut PkfcModel) -> PkfcStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(PkfcStatus::NullPointer, "data and out must be non-null");
        }
        match model_file::deserialize(slice::from_raw_parts(data, len)) {
            Ok((inner, _)) => {
                *out = Box::into_raw(Box::new(PkfcModel { inner }));
                PkfcStatus::Ok
            }
            Err(e) => fail(file_status(&e), e.to_string()),
        }
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` must come from a load call and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pkfc_model_free(model: *mut PkfcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pkfc_model_parameter_count(model: *const PkfcModel, out: *mut u64) -> PkfcStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(PkfcStatus::NullPointer, "model and out must be non-null");
        }
        *out = (*model).inner.parameter_count() as u64;
        PkfcStatus::Ok
    })
}

/// Encode one hourly observation into the 39-value feature layout using the
/// model's normalization and meteorological seasons.
///
/// # Safety
/// `model` must be a live handle and `out` must hold 39 doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pkfc_encode_hour(
    model: *const PkfcModel,
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    demand_kw: f64,
    temp_f: f64,
    humidity_pct: f64,
    is_holiday: bool,
    out: *mut f64,
) -> PkfcStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(PkfcStatus::NullPointer, "model and out must be non-null");
        }
        let Some(timestamp) = NaiveDate::from_ymd_opt(year, month, day).and_then(|d| d.and_hms_opt(hour, 0, 0)) else {
            return fail(
                PkfcStatus::InvalidArgument,
                format!("{year}-{month:02}-{day:02} {hour:02}:00 is not a valid hour"),
            );
        };
        let record = DemandRecord {
            timestamp,
            demand_kw,
            temp_f,
            humidity_pct,
        };
        let mut v = encode_timestep(&record, &CalendarSpec::default(), (*model).inner.normalization());
        v.0[HOLIDAY_IDX] = if is_holiday { 1.0 } else { 0.0 };
        slice::from_raw_parts_mut(out, FEATURE_DIM).copy_from_slice(&v.0);
        PkfcStatus::Ok
    })
}

/// Forecast 24 hourly demands (kW) from 48 × 39 encoded features, row-major
/// by hour.
///
/// # Safety
/// `features` must hold `len` doubles and `out` must hold 24 doubles.
#[no_mangle]
pub unsafe extern "C" fn pkfc_model_predict_day(
    model: *const PkfcModel,
    features: *const f64,
    len: usize,
    out: *mut f64,
) -> PkfcStatus {
    guard(|| {
        if model.is_null() || features.is_null() || out.is_null() {
            return fail(PkfcStatus::NullPointer, "model, features and out must be non-null");
        }
        if len != INPUT_HOURS * FEATURE_DIM {
            return fail(
                PkfcStatus::InvalidArgument,
                format!("expected {} feature values, got {len}", INPUT_HOURS * FEATURE_DIM),
            );
        }
        let inputs: Vec<FeatureVector> = slice::from_raw_parts(features, len)
            .chunks_exact(FEATURE_DIM)
            .map(|c| FeatureVector(c.try_into().expect("39-value chunk")))
            .collect();
        match (*model).inner.predict_day(&inputs) {
            Ok(day) => {
                slice::from_raw_parts_mut(out, TARGET_HOURS).copy_from_slice(&day);
                PkfcStatus::Ok
            }
            Err(e) => fail(PkfcStatus::Domain, e),
        }
    })
}

/// Label a 24-hour profile: writes 'T', 'B' or 'N' per hour.
///
/// # Safety
/// `demand` must hold 24 doubles and `labels_out` 24 bytes.
#[no_mangle]
pub unsafe extern "C" fn pkfc_label_day(demand: *const f64, k: usize, labels_out: *mut u8) -> PkfcStatus {
    guard(|| {
        if demand.is_null() || labels_out.is_null() {
            return fail(PkfcStatus::NullPointer, "demand and labels_out must be non-null");
        }
        match label_day(slice::from_raw_parts(demand, HOURS), k) {
            Ok(l) => {
                let out = slice::from_raw_parts_mut(labels_out, HOURS);
                for (o, label) in out.iter_mut().zip(l.labels) {
                    *o = label.as_char() as u8;
                }
                PkfcStatus::Ok
            }
            Err(e) => fail(PkfcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Annual savings: `(capacity / k) × accuracy × rate × 12`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pkfc_closed_form_savings(
    capacity_kwh: f64,
    k: usize,
    accuracy: f64,
    demand_charge_per_kw: f64,
    out: *mut f64,
) -> PkfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkfcStatus::NullPointer, "out must be non-null");
        }
        let tariff = TariffSpec { demand_charge_per_kw };
        match closed_form_savings(capacity_kwh, k, accuracy, &tariff) {
            Ok(v) => {
                *out = v;
                PkfcStatus::Ok
            }
            Err(e) => fail(PkfcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pkfc_payback_years(battery_cost: f64, annual_savings: f64, out: *mut f64) -> PkfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkfcStatus::NullPointer, "out must be non-null");
        }
        match payback_years(battery_cost, annual_savings) {
            Ok(v) => {
                *out = v;
                PkfcStatus::Ok
            }
            Err(e) => fail(PkfcStatus::Domain, e.to_string()),
        }
    })
}

/// Library version, NUL-terminated and static.
#[no_mangle]
pub extern "C" fn pkfc_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

