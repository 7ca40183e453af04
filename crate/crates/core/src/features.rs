//! Per-hour feature vectors and 48-hour-in / 24-hour-out window samples.
//!
//! Layout of a [`FeatureVector`] (version [`FEATURE_LAYOUT_VERSION`]):
//!
//! | index   | content                                       |
//! |---------|-----------------------------------------------|
//! | 0       | normalized demand                             |
//! | 1..=24  | hour-of-day one-hot (hour 0 at index 1)       |
//! | 25..=31 | day-of-week one-hot (Monday at index 25)      |
//! | 32..=35 | season one-hot (Fall, Winter, Spring, Summer) |
//! | 36      | holiday flag                                  |
//! | 37      | normalized temperature                        |
//! | 38      | normalized humidity                           |

use chrono::{Datelike, NaiveDate, NaiveDateTime, TimeDelta, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{CalendarSpec, DemandRecord, DemandTrace};

pub const FEATURE_DIM: usize = 39;
pub const FEATURE_LAYOUT_VERSION: u16 = 1;
pub const INPUT_HOURS: usize = 48;
pub const TARGET_HOURS: usize = 24;

pub const DEMAND_IDX: usize = 0;
pub const HOUR_OFFSET: usize = 1;
pub const WEEKDAY_OFFSET: usize = 25;
pub const SEASON_OFFSET: usize = 32;
pub const HOLIDAY_IDX: usize = 36;
pub const TEMP_IDX: usize = 37;
pub const HUMIDITY_IDX: usize = 38;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("channel `{0}` is constant over the training trace")]
    DegenerateChannel(&'static str),
    #[error("trace too short: {hours} hours, need at least {needed}")]
    TooShort { hours: usize, needed: usize },
    #[error("trace must start at midnight, starts at {0}")]
    NotMidnightAligned(NaiveDateTime),
    #[error("normalization range for `{0}` is empty or inverted")]
    BadRange(&'static str),
}

/// Min-max bounds per continuous channel, fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub demand_min: f64,
    pub demand_max: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub humidity_min: f64,
    pub humidity_max: f64,
}

impl NormalizationParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        for (name, lo, hi) in [
            ("demand_kw", self.demand_min, self.demand_max),
            ("temp_f", self.temp_min, self.temp_max),
            ("humidity_pct", self.humidity_min, self.humidity_max),
        ] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(FeatureError::BadRange(name));
            }
        }
        Ok(())
    }

    /// Demand in kW → model scale, without clamping (used for training targets).
    pub fn scale_demand(&self, kw: f64) -> f64 {
        (kw - self.demand_min) / (self.demand_max - self.demand_min)
    }

    /// Model scale → kW, without clamping.
    pub fn unscale_demand(&self, v: f64) -> f64 {
        self.demand_min + v * (self.demand_max - self.demand_min)
    }
}

pub fn fit_normalizer(train: &DemandTrace) -> Result<NormalizationParams, FeatureError> {
    fn extremes(it: impl Iterator<Item = f64>) -> (f64, f64) {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
    let recs = train.records();
    let (demand_min, demand_max) = extremes(recs.iter().map(|r| r.demand_kw));
    let (temp_min, temp_max) = extremes(recs.iter().map(|r| r.temp_f));
    let (humidity_min, humidity_max) = extremes(recs.iter().map(|r| r.humidity_pct));
    if demand_min == demand_max {
        return Err(FeatureError::DegenerateChannel("demand_kw"));
    }
    if temp_min == temp_max {
        return Err(FeatureError::DegenerateChannel("temp_f"));
    }
    if humidity_min == humidity_max {
        return Err(FeatureError::DegenerateChannel("humidity_pct"));
    }
    Ok(NormalizationParams {
        demand_min,
        demand_max,
        temp_min,
        temp_max,
        humidity_min,
        humidity_max,
    })
}

/// `(value - min) / (max - min)`, clamped to `[0, 1]`.
pub fn normalize(value: f64, min: f64, max: f64) -> f64 {
    debug_assert!(min < max);
    ((value - min) / (max - min)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn hour_block(&self) -> &[f64] {
        &self.0[HOUR_OFFSET..HOUR_OFFSET + 24]
    }

    pub fn weekday_block(&self) -> &[f64] {
        &self.0[WEEKDAY_OFFSET..WEEKDAY_OFFSET + 7]
    }

    pub fn season_block(&self) -> &[f64] {
        &self.0[SEASON_OFFSET..SEASON_OFFSET + 4]
    }
}

pub fn encode_timestep(
    record: &DemandRecord,
    calendar: &CalendarSpec,
    params: &NormalizationParams,
) -> FeatureVector {
    let mut v = [0.0; FEATURE_DIM];
    let ts = record.timestamp;
    let date = ts.date();
    v[DEMAND_IDX] = normalize(record.demand_kw, params.demand_min, params.demand_max);
    v[HOUR_OFFSET + ts.hour() as usize] = 1.0;
    v[WEEKDAY_OFFSET + date.weekday().num_days_from_monday() as usize] = 1.0;
    v[SEASON_OFFSET + calendar.season_of(date.month()).index()] = 1.0;
    if calendar.is_holiday(date) {
        v[HOLIDAY_IDX] = 1.0;
    }
    v[TEMP_IDX] = normalize(record.temp_f, params.temp_min, params.temp_max);
    v[HUMIDITY_IDX] = normalize(record.humidity_pct, params.humidity_min, params.humidity_max);
    FeatureVector(v)
}

/// One sample: the 48 encoded hours before `target_start`, and the 24 raw
/// demands from `target_start` on.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub inputs: Vec<FeatureVector>,
    pub target_kw: [f64; TARGET_HOURS],
    pub target_start: NaiveDateTime,
}

impl WindowSample {
    pub fn target_date(&self) -> NaiveDate {
        self.target_start.date()
    }

    /// Inputs flattened timestep-major (48 × 39).
    pub fn flat_inputs(&self) -> Vec<f64> {
        self.inputs.iter().flat_map(|f| f.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowStride {
    /// One midnight-aligned sample per day.
    #[default]
    Daily,
    /// One sample per hour; only for training-set augmentation.
    Hourly,
}

/// Daily windows: one sample per day from the third day on.
pub fn build_windows(
    trace: &DemandTrace,
    calendar: &CalendarSpec,
    params: &NormalizationParams,
) -> Result<Vec<WindowSample>, FeatureError> {
    build_windows_with_stride(trace, calendar, params, WindowStride::Daily)
}

pub fn build_windows_with_stride(
    trace: &DemandTrace,
    calendar: &CalendarSpec,
    params: &NormalizationParams,
    stride: WindowStride,
) -> Result<Vec<WindowSample>, FeatureError> {
    let needed = INPUT_HOURS + TARGET_HOURS;
    if trace.len() < needed {
        return Err(FeatureError::TooShort {
            hours: trace.len(),
            needed,
        });
    }
    if trace.start().hour() != 0 {
        return Err(FeatureError::NotMidnightAligned(trace.start()));
    }
    let encoded: Vec<FeatureVector> = trace
        .records()
        .iter()
        .map(|r| encode_timestep(r, calendar, params))
        .collect();
    let step = match stride {
        WindowStride::Daily => 24,
        WindowStride::Hourly => 1,
    };
    let samples = (INPUT_HOURS..=trace.len() - TARGET_HOURS)
        .step_by(step)
        .map(|t| {
            let mut target_kw = [0.0; TARGET_HOURS];
            for (dst, r) in target_kw.iter_mut().zip(&trace.records()[t..t + TARGET_HOURS]) {
                *dst = r.demand_kw;
            }
            WindowSample {
                inputs: encoded[t - INPUT_HOURS..t].to_vec(),
                target_kw,
                target_start: trace.records()[t].timestamp,
            }
        })
        .collect();
    Ok(samples)
}

/// Encode the 48 hours preceding `target_date`'s midnight, for forecasting a
/// day that may lie beyond the end of the trace.
pub fn inputs_for_day(
    trace: &DemandTrace,
    calendar: &CalendarSpec,
    params: &NormalizationParams,
    target_date: NaiveDate,
) -> Option<Vec<FeatureVector>> {
    let first = target_date.and_hms_opt(0, 0, 0)? - TimeDelta::hours(INPUT_HOURS as i64);
    let start = trace.index_of(first)?;
    let recs = trace.records().get(start..start + INPUT_HOURS)?;
    Some(recs.iter().map(|r| encode_timestep(r, calendar, params)).collect())
}

/// Partition samples by target date: before `boundary`, and on/after it.
pub fn split_windows(samples: Vec<WindowSample>, boundary: NaiveDate) -> (Vec<WindowSample>, Vec<WindowSample>) {
    samples.into_iter().partition(|s| s.target_date() < boundary)
}
