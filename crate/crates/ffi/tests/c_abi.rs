use std::ffi::{CStr, CString};
use std::ptr;

use peakcast::features::{NormalizationParams, FEATURE_DIM, HOLIDAY_IDX, INPUT_HOURS};
use peakcast::lstm::ModelParams;
use peakcast::model_file::{self, Precision, StoredModel};
use peakcast_ffi::*;

fn norm() -> NormalizationParams {
    NormalizationParams {
        demand_min: 10_000.0,
        demand_max: 26_000.0,
        temp_min: 0.0,
        temp_max: 100.0,
        humidity_min: 0.0,
        humidity_max: 100.0,
    }
}

fn small_model() -> StoredModel {
    StoredModel::Lstm(ModelParams::new(&[6, 5], norm(), 3).unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pkfc_last_error()) }.to_str().unwrap().to_string()
}

fn from_bytes(bytes: &[u8]) -> *mut PkfcModel {
    let mut handle = ptr::null_mut();
    let status = unsafe { pkfc_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) };
    assert_eq!(status, PkfcStatus::Ok, "{}", last_error());
    handle
}

fn features() -> Vec<f64> {
    (0..INPUT_HOURS * FEATURE_DIM).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()
}

#[test]
fn predict_matches_rust() {
    let model = small_model();
    let handle = from_bytes(&model_file::serialize(&model, Precision::Full));
    let flat = features();
    let mut out = [0.0; 24];
    let status = unsafe { pkfc_model_predict_day(handle, flat.as_ptr(), flat.len(), out.as_mut_ptr()) };
    assert_eq!(status, PkfcStatus::Ok);
    assert_eq!(last_error(), "");

    let inputs: Vec<_> = flat
        .chunks_exact(FEATURE_DIM)
        .map(|c| peakcast::FeatureVector(c.try_into().unwrap()))
        .collect();
    assert_eq!(out, model.predict_day(&inputs).unwrap());

    let mut count = 0;
    assert_eq!(unsafe { pkfc_model_parameter_count(handle, &mut count) }, PkfcStatus::Ok);
    assert_eq!(count as usize, model.parameter_count());
    unsafe { pkfc_model_free(handle) };
}

#[test]
fn load_from_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pkfc");
    model_file::save(&small_model(), Precision::Half, &path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { pkfc_model_load(c_path.as_ptr(), &mut handle) }, PkfcStatus::Ok);
    assert!(!handle.is_null());
    unsafe { pkfc_model_free(handle) };

    let missing = CString::new(dir.path().join("none.pkfc").to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { pkfc_model_load(missing.as_ptr(), &mut handle) }, PkfcStatus::Io);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn rejects_bad_input() {
    let mut handle = ptr::null_mut();
    let junk = b"NOPE and some more bytes that are not a model";
    assert_eq!(
        unsafe { pkfc_model_from_bytes(junk.as_ptr(), junk.len(), &mut handle) },
        PkfcStatus::BadFormat
    );
    assert!(handle.is_null());
    assert_eq!(
        unsafe { pkfc_model_from_bytes(ptr::null(), 0, &mut handle) },
        PkfcStatus::NullPointer
    );

    let handle = from_bytes(&model_file::serialize(&small_model(), Precision::Full));
    let flat = features();
    let mut out = [0.0; 24];
    let status = unsafe { pkfc_model_predict_day(handle, flat.as_ptr(), flat.len() - 1, out.as_mut_ptr()) };
    assert_eq!(status, PkfcStatus::InvalidArgument);
    assert!(last_error().contains("1872"));
    unsafe { pkfc_model_free(handle) };
    unsafe { pkfc_model_free(ptr::null_mut()) };
}

#[test]
fn encode_hour_layout() {
    let handle = from_bytes(&model_file::serialize(&small_model(), Precision::Full));
    let mut v = [f64::NAN; FEATURE_DIM];
    let status = unsafe { pkfc_encode_hour(handle, 2018, 7, 4, 15, 18_000.0, 50.0, 25.0, true, v.as_mut_ptr()) };
    assert_eq!(status, PkfcStatus::Ok);
    assert_eq!(v[0], 0.5);
    assert_eq!(v[1 + 15], 1.0);
    assert_eq!(v[1..25].iter().sum::<f64>(), 1.0);
    // 2018-07-04 is a Wednesday.
    assert_eq!(v[25 + 2], 1.0);
    assert_eq!(v[HOLIDAY_IDX], 1.0);
    assert_eq!(v[37], 0.5);
    assert_eq!(v[38], 0.25);

    let status = unsafe { pkfc_encode_hour(handle, 2018, 2, 30, 0, 1.0, 1.0, 1.0, false, v.as_mut_ptr()) };
    assert_eq!(status, PkfcStatus::InvalidArgument);
    unsafe { pkfc_model_free(handle) };
}

#[test]
fn label_day_bytes() {
    let demand: Vec<f64> = (0..24).map(|h| h as f64).collect();
    let mut labels = [0u8; 24];
    assert_eq!(unsafe { pkfc_label_day(demand.as_ptr(), 2, labels.as_mut_ptr()) }, PkfcStatus::Ok);
    assert_eq!(&labels[..2], b"BB");
    assert_eq!(&labels[22..], b"TT");
    assert!(labels[2..22].iter().all(|&c| c == b'N'));
    assert_eq!(
        unsafe { pkfc_label_day(demand.as_ptr(), 13, labels.as_mut_ptr()) },
        PkfcStatus::InvalidArgument
    );
}

#[test]
fn savings_and_payback() {
    let mut savings = 0.0;
    assert_eq!(unsafe { pkfc_closed_form_savings(4000.0, 1, 0.47, 22.0, &mut savings) }, PkfcStatus::Ok);
    assert_eq!(savings.round(), 496_320.0);
    let mut years = 0.0;
    assert_eq!(unsafe { pkfc_payback_years(800_000.0, savings, &mut years) }, PkfcStatus::Ok);
    assert!((years - 1.612).abs() < 1e-3);
    assert_ne!(unsafe { pkfc_payback_years(800_000.0, 0.0, &mut years) }, PkfcStatus::Ok);
    assert_eq!(
        unsafe { pkfc_closed_form_savings(4000.0, 0, 0.5, 22.0, &mut savings) },
        PkfcStatus::InvalidArgument
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pkfc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_symbol() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/peakcast.h")).unwrap();
    for symbol in [
        "typedef struct PkfcModel PkfcModel;",
        "PKFC_STATUS_OK = 0",
        "PKFC_STATUS_PANIC = 6",
        "pkfc_last_error(void)",
        "pkfc_model_load(",
        "pkfc_model_from_bytes(",
        "pkfc_model_free(",
        "pkfc_model_parameter_count(",
        "pkfc_encode_hour(",
        "pkfc_model_predict_day(",
        "pkfc_label_day(",
        "pkfc_closed_form_savings(",
        "pkfc_payback_years(",
        "pkfc_version(void)",
    ] {
        assert!(header.contains(symbol), "missing {symbol}");
    }
}
