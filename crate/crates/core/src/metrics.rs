//! MAPE and top-k / bottom-k capture accuracy.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::features::{WindowSample, TARGET_HOURS};
use crate::labeler::{label_day, LabelError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} actual vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("actual value at position {0} is not positive")]
    NonPositiveActual(usize),
    #[error("day {day}: expected {k} hours, found {found}")]
    CardinalityMismatch { day: usize, k: usize, found: usize },
    #[error("no test days")]
    NoDays,
    #[error("forecast for {date} failed: {reason}")]
    Predictor { date: chrono::NaiveDate, reason: String },
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// `100/N · Σ |actual − predicted| / actual`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(MetricsError::LengthMismatch(actual.len(), predicted.len()));
    }
    if let Some(i) = actual.iter().position(|a| !(*a > 0.0)) {
        return Err(MetricsError::NonPositiveActual(i));
    }
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs() / a).sum();
    Ok(100.0 * sum / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    /// Share of true top-k hours found, pooled over days.
    HourLevel,
    /// Share of days whose predicted set equals the true set.
    DayExact,
}

impl fmt::Display for CaptureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaptureMode::HourLevel => "hour_level",
            CaptureMode::DayExact => "day_exact",
        })
    }
}

pub fn capture_accuracy(
    predicted: &[BTreeSet<usize>],
    truth: &[BTreeSet<usize>],
    k: usize,
    mode: CaptureMode,
) -> Result<f64, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), predicted.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::NoDays);
    }
    for (day, (p, t)) in predicted.iter().zip(truth).enumerate() {
        for s in [p, t] {
            if s.len() != k {
                return Err(MetricsError::CardinalityMismatch { day, k, found: s.len() });
            }
        }
    }
    let days = predicted.len() as f64;
    Ok(match mode {
        CaptureMode::HourLevel => {
            let hits: usize = predicted.iter().zip(truth).map(|(p, t)| p.intersection(t).count()).sum();
            100.0 * hits as f64 / (k as f64 * days)
        }
        CaptureMode::DayExact => {
            let exact = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
            100.0 * exact as f64 / days
        }
    })
}

/// Per-k top and bottom capture accuracy in both modes.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub model: String,
    pub ks: Vec<usize>,
    pub top_hour: Vec<f64>,
    pub top_day: Vec<f64>,
    pub bottom_hour: Vec<f64>,
    pub bottom_day: Vec<f64>,
    pub days: usize,
    /// Mode used for headline numbers.
    pub headline: CaptureMode,
}

impl AccuracyTable {
    pub fn top(&self, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        Some(match self.headline {
            CaptureMode::HourLevel => self.top_hour[i],
            CaptureMode::DayExact => self.top_day[i],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: AccuracyTable,
    /// MAPE over all test hours.
    pub mape: f64,
    pub predictions: Vec<[f64; TARGET_HOURS]>,
}

pub const TABLE_KS: [usize; 5] = [1, 2, 3, 4, 5];

/// Forecast every test day, label predicted and actual profiles, and score.
pub fn evaluate_model<F, E>(
    model_name: &str,
    mut predict: F,
    test: &[WindowSample],
    ks: &[usize],
) -> Result<Evaluation, MetricsError>
where
    F: FnMut(&WindowSample) -> Result<[f64; TARGET_HOURS], E>,
    E: fmt::Display,
{
    if test.is_empty() {
        return Err(MetricsError::NoDays);
    }
    let predictions = test
        .iter()
        .map(|s| {
            predict(s).map_err(|e| MetricsError::Predictor {
                date: s.target_date(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_predictions(model_name, &predictions, test, ks)
}

pub fn evaluate_predictions(
    model_name: &str,
    predictions: &[[f64; TARGET_HOURS]],
    test: &[WindowSample],
    ks: &[usize],
) -> Result<Evaluation, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::NoDays);
    }
    if predictions.len() != test.len() {
        return Err(MetricsError::LengthMismatch(test.len(), predictions.len()));
    }
    let actual: Vec<f64> = test.iter().flat_map(|s| s.target_kw).collect();
    let predicted: Vec<f64> = predictions.iter().flatten().copied().collect();
    let mape = mape(&actual, &predicted)?;

    let mut table = AccuracyTable {
        model: model_name.to_string(),
        ks: ks.to_vec(),
        top_hour: Vec::new(),
        top_day: Vec::new(),
        bottom_hour: Vec::new(),
        bottom_day: Vec::new(),
        days: test.len(),
        headline: CaptureMode::HourLevel,
    };
    for &k in ks {
        let mut pt = Vec::with_capacity(test.len());
        let mut tt = Vec::with_capacity(test.len());
        let mut pb = Vec::with_capacity(test.len());
        let mut tb = Vec::with_capacity(test.len());
        for (s, p) in test.iter().zip(predictions) {
            let lp = label_day(p, k)?;
            let lt = label_day(&s.target_kw, k)?;
            pt.push(lp.top_hours.into_iter().collect());
            pb.push(lp.bottom_hours.into_iter().collect());
            tt.push(lt.top_hours.into_iter().collect());
            tb.push(lt.bottom_hours.into_iter().collect());
        }
        table.top_hour.push(capture_accuracy(&pt, &tt, k, CaptureMode::HourLevel)?);
        table.top_day.push(capture_accuracy(&pt, &tt, k, CaptureMode::DayExact)?);
        table.bottom_hour.push(capture_accuracy(&pb, &tb, k, CaptureMode::HourLevel)?);
        table.bottom_day.push(capture_accuracy(&pb, &tb, k, CaptureMode::DayExact)?);
    }
    Ok(Evaluation {
        table,
        mape,
        predictions: predictions.to_vec(),
    })
}
