//! Hourly demand traces: CSV ingestion, calendar files, the synthetic campus
//! generator and chronological splitting.
//!
//! A [`DemandTrace`] is always a gap-free hourly grid. Timestamps are local
//! wall-clock hours with no DST shifts, so every day has exactly 24 records.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, TimeDelta, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";
pub const TRACE_HEADER: [&str; 4] = ["timestamp", "demand_kw", "temp_f", "humidity_pct"];

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("record {index}: expected {expected}, found {found} (traces must be gap-free hourly)")]
    Gap {
        index: usize,
        expected: NaiveDateTime,
        found: NaiveDateTime,
    },
    #[error("record {index}: {field} = {value} is out of domain")]
    Domain {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("trace has no records")]
    Empty,
    #[error("split boundary {0}: {1}")]
    Boundary(NaiveDateTime, &'static str),
    #[error("synthetic config: {0}")]
    Config(String),
    #[error("calendar line {line}: {reason}")]
    Calendar { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandRecord {
    pub timestamp: NaiveDateTime,
    pub demand_kw: f64,
    pub temp_f: f64,
    pub humidity_pct: f64,
}

impl DemandRecord {
    fn check(&self, index: usize) -> Result<(), TraceError> {
        if !(self.demand_kw > 0.0) || !self.demand_kw.is_finite() {
            return Err(TraceError::Domain {
                index,
                field: "demand_kw",
                value: self.demand_kw,
            });
        }
        if !(0.0..=100.0).contains(&self.humidity_pct) {
            return Err(TraceError::Domain {
                index,
                field: "humidity_pct",
                value: self.humidity_pct,
            });
        }
        if !self.temp_f.is_finite() {
            return Err(TraceError::Domain {
                index,
                field: "temp_f",
                value: self.temp_f,
            });
        }
        Ok(())
    }
}

/// Ordered, gap-free hourly demand records.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTrace {
    records: Vec<DemandRecord>,
}

impl DemandTrace {
    pub fn new(records: Vec<DemandRecord>) -> Result<Self, TraceError> {
        if records.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, rec) in records.iter().enumerate() {
            rec.check(index)?;
            if rec.timestamp.minute() != 0 || rec.timestamp.second() != 0 {
                return Err(TraceError::Gap {
                    index,
                    expected: rec.timestamp.with_minute(0).unwrap().with_second(0).unwrap(),
                    found: rec.timestamp,
                });
            }
            if index > 0 {
                let expected = records[index - 1].timestamp + TimeDelta::hours(1);
                if rec.timestamp != expected {
                    return Err(TraceError::Gap {
                        index,
                        expected,
                        found: rec.timestamp,
                    });
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[DemandRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start(&self) -> NaiveDateTime {
        self.records[0].timestamp
    }

    pub fn end(&self) -> NaiveDateTime {
        self.records[self.records.len() - 1].timestamp
    }

    /// Position of `ts` on the hourly grid, if the trace covers it.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let hours = (ts - self.start()).num_hours();
        if hours < 0 || (ts - self.start()) != TimeDelta::hours(hours) {
            return None;
        }
        let idx = hours as usize;
        (idx < self.records.len()).then_some(idx)
    }

    /// The 24 records of `date`, if the trace holds the complete day.
    pub fn day(&self, date: NaiveDate) -> Option<&[DemandRecord]> {
        let start = self.index_of(date.and_hms_opt(0, 0, 0)?)?;
        self.records.get(start..start + 24)
    }

    pub fn demands(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.demand_kw)
    }

    pub fn into_records(self) -> Vec<DemandRecord> {
        self.records
    }
}

/// Parse the trace CSV (`timestamp,demand_kw,temp_f,humidity_pct`).
pub fn parse_trace(content: &str) -> Result<DemandTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());

    let header = reader.headers().map_err(|e| TraceError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(TraceError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| TraceError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if row.len() != 4 {
            return Err(TraceError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", row.len()),
            });
        }
        let timestamp = parse_timestamp(&row[0]).map_err(|reason| TraceError::MalformedRow { line, reason })?;
        let num = |idx: usize, name: &str| -> Result<f64, TraceError> {
            f64::from_str(&row[idx]).map_err(|_| TraceError::MalformedRow {
                line,
                reason: format!("{name}: cannot parse `{}` as a number", &row[idx]),
            })
        };
        records.push(DemandRecord {
            timestamp,
            demand_kw: num(1, "demand_kw")?,
            temp_f: num(2, "temp_f")?,
            humidity_pct: num(3, "humidity_pct")?,
        });
    }
    if records.is_empty() {
        return Err(TraceError::MalformedRow {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    DemandTrace::new(records)
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, String> {
    let ts = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map_err(|e| format!("timestamp `{s}`: {e} (expected YYYY-MM-DDTHH:00)"))?;
    if ts.minute() != 0 {
        return Err(format!("timestamp `{s}` is not on the hour"));
    }
    Ok(ts)
}

/// Serialize back to the trace CSV. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_trace(trace: &DemandTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 48);
    out.push_str(&TRACE_HEADER.join(","));
    out.push('\n');
    for r in trace.records() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.timestamp.format(TIMESTAMP_FORMAT),
            r.demand_kw,
            r.temp_f,
            r.humidity_pct
        ));
    }
    out
}

/// Split at a midnight boundary: records strictly before go left.
pub fn split_train_test(
    trace: &DemandTrace,
    boundary: NaiveDateTime,
) -> Result<(DemandTrace, DemandTrace), TraceError> {
    if boundary.time() != chrono::NaiveTime::MIN {
        return Err(TraceError::Boundary(boundary, "not aligned to midnight"));
    }
    if boundary <= trace.start() || boundary > trace.end() {
        return Err(TraceError::Boundary(boundary, "outside the trace's time range"));
    }
    let idx = trace
        .index_of(boundary)
        .ok_or(TraceError::Boundary(boundary, "not on the trace grid"))?;
    let (a, b) = trace.records.split_at(idx);
    Ok((
        DemandTrace { records: a.to_vec() },
        DemandTrace { records: b.to_vec() },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Fall,
    Winter,
    Spring,
    Summer,
}

impl Season {
    /// Slot within the season one-hot block.
    pub fn index(self) -> usize {
        match self {
            Season::Fall => 0,
            Season::Winter => 1,
            Season::Spring => 2,
            Season::Summer => 3,
        }
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fall" | "autumn" => Ok(Season::Fall),
            "winter" => Ok(Season::Winter),
            "spring" => Ok(Season::Spring),
            "summer" => Ok(Season::Summer),
            other => Err(format!("unknown season `{other}`")),
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Season::Fall => "Fall",
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
        };
        f.write_str(s)
    }
}

/// Holidays, month→season mapping and (unused by the default feature set)
/// semester date ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarSpec {
    pub holidays: BTreeSet<NaiveDate>,
    seasons: [Season; 12],
    pub semesters: Vec<(NaiveDate, NaiveDate)>,
}

impl Default for CalendarSpec {
    /// Meteorological seasons, no holidays.
    fn default() -> Self {
        use Season::*;
        Self {
            holidays: BTreeSet::new(),
            seasons: [
                Winter, Winter, Spring, Spring, Spring, Summer, Summer, Summer, Fall, Fall, Fall, Winter,
            ],
            semesters: Vec::new(),
        }
    }
}

impl CalendarSpec {
    pub fn new(holidays: BTreeSet<NaiveDate>, seasons: [Season; 12]) -> Self {
        Self {
            holidays,
            seasons,
            semesters: Vec::new(),
        }
    }

    pub fn season_of(&self, month: u32) -> Season {
        self.seasons[(month as usize - 1) % 12]
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.holidays.contains(&date)
    }

    /// Parse the calendar file format:
    ///
    /// ```text
    /// [holidays]
    /// 2019-01-01
    /// [seasons]
    /// 1 = Winter
    /// ...
    /// [semesters]
    /// 2019-01-22..2019-05-10
    /// ```
    ///
    /// `#` starts a comment. A `[seasons]` section must map all twelve months;
    /// without it the meteorological default is used.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Holidays,
            Seasons,
            Semesters,
        }
        let mut cal = CalendarSpec::default();
        let mut seasons: [Option<Season>; 12] = [None; 12];
        let mut saw_seasons = false;
        let mut section = Section::None;
        let date = |s: &str, line: usize| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| TraceError::Calendar {
                line,
                reason: format!("date `{}`: {e}", s.trim()),
            })
        };

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if content.starts_with('[') {
                section = match content {
                    "[holidays]" => Section::Holidays,
                    "[seasons]" => {
                        saw_seasons = true;
                        Section::Seasons
                    }
                    "[semesters]" => Section::Semesters,
                    other => {
                        return Err(TraceError::Calendar {
                            line,
                            reason: format!("unknown section {other}"),
                        })
                    }
                };
                continue;
            }
            match section {
                Section::None => {
                    return Err(TraceError::Calendar {
                        line,
                        reason: "entry outside of any section".into(),
                    })
                }
                Section::Holidays => {
                    cal.holidays.insert(date(content, line)?);
                }
                Section::Seasons => {
                    let (m, s) = content.split_once('=').ok_or_else(|| TraceError::Calendar {
                        line,
                        reason: "expected `<month> = <season>`".into(),
                    })?;
                    let month: usize = m.trim().parse().map_err(|_| TraceError::Calendar {
                        line,
                        reason: format!("month `{}` is not a number", m.trim()),
                    })?;
                    if !(1..=12).contains(&month) {
                        return Err(TraceError::Calendar {
                            line,
                            reason: format!("month {month} outside 1..12"),
                        });
                    }
                    let season = s.parse().map_err(|reason| TraceError::Calendar { line, reason })?;
                    if seasons[month - 1].replace(season).is_some() {
                        return Err(TraceError::Calendar {
                            line,
                            reason: format!("month {month} mapped twice"),
                        });
                    }
                }
                Section::Semesters => {
                    let (a, b) = content.split_once("..").ok_or_else(|| TraceError::Calendar {
                        line,
                        reason: "expected `<start>..<end>`".into(),
                    })?;
                    let (a, b) = (date(a, line)?, date(b, line)?);
                    if b < a {
                        return Err(TraceError::Calendar {
                            line,
                            reason: "semester ends before it starts".into(),
                        });
                    }
                    cal.semesters.push((a, b));
                }
            }
        }

        if saw_seasons {
            for (m, s) in seasons.iter().enumerate() {
                match s {
                    Some(s) => cal.seasons[m] = *s,
                    None => {
                        return Err(TraceError::Calendar {
                            line: 0,
                            reason: format!("month {} has no season", m + 1),
                        })
                    }
                }
            }
        }
        Ok(cal)
    }
}

/// Parameters of the synthetic campus-like trace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub days: usize,
    pub start: NaiveDate,
    pub base_kw: f64,
    pub daily_amplitude_kw: f64,
    pub weekly_amplitude_kw: f64,
    pub seasonal_amplitude_kw: f64,
    pub noise_sd_kw: f64,
    pub min_kw: f64,
    pub max_kw: f64,
    pub bimodal_probability: f64,
    pub temp_min_f: f64,
    pub temp_max_f: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// Campus preset: demand clamped to 9,934–26,219 kW, temperature within
    /// -9.5–97 °F, two years starting on a Monday.
    fn default() -> Self {
        Self {
            days: 730,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            base_kw: 13_500.0,
            daily_amplitude_kw: 5_000.0,
            weekly_amplitude_kw: 2_200.0,
            seasonal_amplitude_kw: 4_000.0,
            noise_sd_kw: 300.0,
            min_kw: 9_934.0,
            max_kw: 26_219.0,
            bimodal_probability: 0.3,
            temp_min_f: -9.5,
            temp_max_f: 97.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: &str| Err(TraceError::Config(m.to_string()));
        if self.days == 0 {
            return err("days must be at least 1");
        }
        if !(self.min_kw > 0.0) {
            return err("min_kw must be positive");
        }
        if !(self.min_kw < self.max_kw) {
            return err("min_kw must be below max_kw");
        }
        for (name, v) in [
            ("daily_amplitude_kw", self.daily_amplitude_kw),
            ("weekly_amplitude_kw", self.weekly_amplitude_kw),
            ("seasonal_amplitude_kw", self.seasonal_amplitude_kw),
            ("noise_sd_kw", self.noise_sd_kw),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TraceError::Config(format!("{name} must be a finite value >= 0")));
            }
        }
        if !self.base_kw.is_finite() {
            return err("base_kw must be finite");
        }
        if !(0.0..=1.0).contains(&self.bimodal_probability) {
            return err("bimodal_probability must lie in [0, 1]");
        }
        if !(self.temp_min_f < self.temp_max_f) {
            return err("temp_min_f must be below temp_max_f");
        }
        Ok(())
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let z = (hour - center) / width;
    (-0.5 * z * z).exp()
}

/// Seeded campus-like trace. Each day is either uni-modal (one afternoon
/// bump) or, with `bimodal_probability`, bi-modal (morning and evening
/// bumps). Weekends run lower; temperature follows a yearly sinusoid plus a
/// persistent day-to-day weather anomaly and drives a cooling/heating load.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<DemandTrace, TraceError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let t_mid = 0.5 * (config.temp_min_f + config.temp_max_f);
    let t_half = 0.5 * (config.temp_max_f - config.temp_min_f);
    let mut weather = 0.0f64;
    let mut records = Vec::with_capacity(config.days * 24);

    for d in 0..config.days {
        let date = config.start + TimeDelta::days(d as i64);
        let doy = date.ordinal0() as f64;
        // Coldest around day 20, warmest in mid-July.
        let seasonal = -(2.0 * PI * (doy - 20.0) / 365.25).cos();
        weather = 0.75 * weather + 0.25 * std_normal.sample(&mut rng);
        let day_temp = t_mid + t_half * (0.55 * seasonal + 0.15 * weather);
        let z = (day_temp - t_mid) / t_half;
        let climate = config.seasonal_amplitude_kw * (z.max(0.0) * 1.6 + (-z).max(0.0) * 0.5);

        let weekday = date.weekday();
        let (weekly, shape_scale) = match weekday {
            Weekday::Sat | Weekday::Sun => (-config.weekly_amplitude_kw, 0.6),
            Weekday::Fri => (-0.3 * config.weekly_amplitude_kw, 0.9),
            _ => (0.0, 1.0),
        };
        let bimodal = rng.random::<f64>() < config.bimodal_probability;
        let jitter = 0.5 * std_normal.sample(&mut rng);
        let amp = config.daily_amplitude_kw * shape_scale;
        let humid_day = 55.0 + 15.0 * seasonal + 8.0 * std_normal.sample(&mut rng);

        for h in 0..24 {
            let hour = h as f64;
            let profile = if bimodal {
                0.85 * bump(hour, 10.0 + jitter, 2.2) + 0.9 * bump(hour, 19.0 + jitter, 2.0)
            } else {
                bump(hour, 15.0 + jitter, 3.5)
            };
            let noise = config.noise_sd_kw * std_normal.sample(&mut rng);
            let demand = config.base_kw + weekly + climate + amp * profile + noise;
            let demand = demand.clamp(config.min_kw, config.max_kw);

            let diurnal = -(2.0 * PI * (hour - 3.0) / 24.0).cos();
            let temp = (day_temp + 0.08 * t_half * diurnal).clamp(config.temp_min_f, config.temp_max_f);
            let humidity = (humid_day - 10.0 * diurnal).clamp(0.0, 100.0);

            records.push(DemandRecord {
                timestamp: date.and_hms_opt(h, 0, 0).unwrap(),
                demand_kw: demand,
                temp_f: temp,
                humidity_pct: humidity,
            });
        }
    }
    DemandTrace::new(records)
}
