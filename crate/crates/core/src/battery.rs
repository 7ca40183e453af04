//! Label-driven battery dispatch, monthly demand-charge savings, and the
//! closed-form annual savings / payback model.

use chrono::{Datelike, NaiveDate};
use serde::Deserialize;
use thiserror::Error;

use crate::labeler::{DayLabeling, Label, HOURS};

pub const MONTHS_PER_YEAR: f64 = 12.0;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("initial soc {soc} outside [0, {capacity}]")]
    SocOutOfRange { soc: f64, capacity: f64 },
    #[error("invalid battery spec: {0}")]
    Spec(String),
    #[error("invalid tariff: demand_charge_per_kw = {0}")]
    Tariff(f64),
    #[error("expected {HOURS} hourly demands, found {0}")]
    WrongLength(usize),
    #[error("month {year}-{month:02} is incomplete: {found} of {expected} days")]
    IncompleteMonth { year: i32, month: u32, found: usize, expected: usize },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("annual savings {0} is not positive")]
    NoSavings(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySpec {
    pub capacity_kwh: f64,
    pub max_power_kw: f64,
    pub unit_cost_per_kwh: f64,
    pub round_trip_efficiency: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            capacity_kwh: 4000.0,
            max_power_kw: 4000.0,
            unit_cost_per_kwh: 200.0,
            round_trip_efficiency: 1.0,
        }
    }
}

impl BatterySpec {
    pub fn with_capacity(capacity_kwh: f64) -> Self {
        BatterySpec {
            capacity_kwh,
            max_power_kw: capacity_kwh,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        let bad = |what: &str, v: f64| Err(BatteryError::Spec(format!("{what} = {v}")));
        if !(self.capacity_kwh > 0.0) || !self.capacity_kwh.is_finite() {
            return bad("capacity_kwh", self.capacity_kwh);
        }
        if !(self.max_power_kw > 0.0) || !self.max_power_kw.is_finite() {
            return bad("max_power_kw", self.max_power_kw);
        }
        if !(self.unit_cost_per_kwh >= 0.0) || !self.unit_cost_per_kwh.is_finite() {
            return bad("unit_cost_per_kwh", self.unit_cost_per_kwh);
        }
        if !(self.round_trip_efficiency > 0.0 && self.round_trip_efficiency <= 1.0) {
            return bad("round_trip_efficiency", self.round_trip_efficiency);
        }
        Ok(())
    }

    pub fn cost(&self) -> f64 {
        self.capacity_kwh * self.unit_cost_per_kwh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TariffSpec {
    /// $ per kW of monthly peak.
    pub demand_charge_per_kw: f64,
}

impl Default for TariffSpec {
    fn default() -> Self {
        TariffSpec {
            demand_charge_per_kw: 22.0,
        }
    }
}

impl TariffSpec {
    pub fn validate(&self) -> Result<(), BatteryError> {
        if self.demand_charge_per_kw >= 0.0 && self.demand_charge_per_kw.is_finite() {
            Ok(())
        } else {
            Err(BatteryError::Tariff(self.demand_charge_per_kw))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub net_load_kw: [f64; HOURS],
    /// Initial value followed by the value after each hour.
    pub soc_kwh: [f64; HOURS + 1],
    pub discharged_kwh: f64,
    /// Energy drawn from the grid; the battery stores `charged · efficiency`.
    pub charged_kwh: f64,
}

impl DispatchResult {
    pub fn final_soc(&self) -> f64 {
        self.soc_kwh[HOURS]
    }
}

pub fn dispatch_day(
    demand: &[f64],
    labeling: &DayLabeling,
    battery: &BatterySpec,
    initial_soc: f64,
) -> Result<DispatchResult, BatteryError> {
    battery.validate()?;
    if demand.len() != HOURS {
        return Err(BatteryError::WrongLength(demand.len()));
    }
    let cap = battery.capacity_kwh;
    if !(0.0..=cap).contains(&initial_soc) {
        return Err(BatteryError::SocOutOfRange {
            soc: initial_soc,
            capacity: cap,
        });
    }
    let eff = battery.round_trip_efficiency;
    let target = cap / labeling.k as f64;
    // B hours from each hour up to the next T hour or midnight; each run of
    // B hours refills to capacity before the T hours that follow it.
    let mut b_ahead = [0usize; HOURS + 1];
    for h in (0..HOURS).rev() {
        b_ahead[h] = match labeling.labels[h] {
            Label::Top => 0,
            Label::Bottom => b_ahead[h + 1] + 1,
            Label::Neither => b_ahead[h + 1],
        };
    }

    let mut soc = initial_soc;
    let mut net = [0.0; HOURS];
    let mut socs = [0.0; HOURS + 1];
    socs[0] = soc;
    let (mut discharged, mut charged) = (0.0, 0.0);
    for h in 0..HOURS {
        net[h] = demand[h];
        match labeling.labels[h] {
            Label::Top => {
                let d = target.min(battery.max_power_kw).min(soc).min(demand[h].max(0.0));
                soc = (soc - d).max(0.0);
                net[h] -= d;
                discharged += d;
            }
            Label::Bottom => {
                let need = (cap - soc) / eff;
                let c = (need / b_ahead[h] as f64).min(battery.max_power_kw).max(0.0);
                soc = (soc + c * eff).min(cap);
                net[h] += c;
                charged += c;
            }
            Label::Neither => {}
        }
        socs[h + 1] = soc;
    }
    Ok(DispatchResult {
        net_load_kw: net,
        soc_kwh: socs,
        discharged_kwh: discharged,
        charged_kwh: charged,
    })
}

/// One dispatched day together with its raw demand.
#[derive(Debug, Clone, PartialEq)]
pub struct DayDispatch {
    pub date: NaiveDate,
    pub raw_kw: [f64; HOURS],
    pub result: DispatchResult,
}

fn days_in_month(year: i32, month: u32) -> usize {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    };
    (next.expect("valid month") - first).num_days() as usize
}

/// `(max raw − max net) × rate` for one calendar month.
pub fn monthly_demand_savings(days: &[DayDispatch], tariff: &TariffSpec) -> Result<f64, BatteryError> {
    tariff.validate()?;
    let Some(first) = days.first() else {
        return Err(BatteryError::Range("no days supplied".into()));
    };
    let (year, month) = (first.date.year(), first.date.month());
    let expected = days_in_month(year, month);
    let mut seen = vec![false; expected];
    for d in days {
        if d.date.year() != year || d.date.month() != month {
            return Err(BatteryError::Range(format!("{} is outside {year}-{month:02}", d.date)));
        }
        seen[d.date.day0() as usize] = true;
    }
    let found = seen.iter().filter(|s| **s).count();
    if found != expected || days.len() != expected {
        return Err(BatteryError::IncompleteMonth {
            year,
            month,
            found,
            expected,
        });
    }
    let raw_max = days.iter().flat_map(|d| d.raw_kw).fold(f64::NEG_INFINITY, f64::max);
    let net_max = days.iter().flat_map(|d| d.result.net_load_kw).fold(f64::NEG_INFINITY, f64::max);
    Ok((raw_max - net_max) * tariff.demand_charge_per_kw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthSavings {
    pub year: i32,
    pub month: u32,
    pub raw_peak_kw: f64,
    pub net_peak_kw: f64,
    pub savings_usd: f64,
}

/// Dispatch consecutive days with chained soc, starting full, and price
/// every complete month. Partial months at either end are skipped.
pub fn simulate_days(
    days: &[(NaiveDate, [f64; HOURS], DayLabeling)],
    battery: &BatterySpec,
    tariff: &TariffSpec,
) -> Result<(Vec<DayDispatch>, Vec<MonthSavings>), BatteryError> {
    let mut soc = battery.capacity_kwh;
    let mut dispatched = Vec::with_capacity(days.len());
    for (date, raw, labeling) in days {
        let result = dispatch_day(raw, labeling, battery, soc)?;
        soc = result.final_soc();
        dispatched.push(DayDispatch {
            date: *date,
            raw_kw: *raw,
            result,
        });
    }
    let mut months = Vec::new();
    let mut start = 0;
    while start < dispatched.len() {
        let key = (dispatched[start].date.year(), dispatched[start].date.month());
        let mut end = start;
        while end < dispatched.len() && (dispatched[end].date.year(), dispatched[end].date.month()) == key {
            end += 1;
        }
        let chunk = &dispatched[start..end];
        match monthly_demand_savings(chunk, tariff) {
            Ok(savings_usd) => months.push(MonthSavings {
                year: key.0,
                month: key.1,
                raw_peak_kw: chunk.iter().flat_map(|d| d.raw_kw).fold(f64::NEG_INFINITY, f64::max),
                net_peak_kw: chunk
                    .iter()
                    .flat_map(|d| d.result.net_load_kw)
                    .fold(f64::NEG_INFINITY, f64::max),
                savings_usd,
            }),
            Err(BatteryError::IncompleteMonth { .. }) => {}
            Err(e) => return Err(e),
        }
        start = end;
    }
    Ok((dispatched, months))
}

/// `(capacity / k) × accuracy × rate × 12`.
pub fn closed_form_savings(capacity_kwh: f64, k: usize, accuracy: f64, tariff: &TariffSpec) -> Result<f64, BatteryError> {
    tariff.validate()?;
    if k == 0 {
        return Err(BatteryError::Range("k must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(BatteryError::Range(format!("accuracy {accuracy} outside [0, 1]")));
    }
    if !(capacity_kwh >= 0.0) || !capacity_kwh.is_finite() {
        return Err(BatteryError::Range(format!("capacity_kwh {capacity_kwh}")));
    }
    Ok(capacity_kwh / k as f64 * accuracy * tariff.demand_charge_per_kw * MONTHS_PER_YEAR)
}

pub fn payback_years(battery_cost: f64, annual_savings: f64) -> Result<f64, BatteryError> {
    if !(annual_savings > 0.0) {
        return Err(BatteryError::NoSavings(annual_savings));
    }
    if !(battery_cost >= 0.0) || !battery_cost.is_finite() {
        return Err(BatteryError::Range(format!("battery cost {battery_cost}")));
    }
    Ok(battery_cost / annual_savings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsRow {
    pub capacity_kwh: f64,
    pub k: usize,
    pub accuracy: f64,
    pub annual_savings_usd: f64,
    /// `None` when the row saves nothing.
    pub payback_years: Option<f64>,
}

pub const SWEEP_CAPACITIES: [f64; 3] = [1000.0, 2000.0, 4000.0];

/// Closed-form savings and payback over every capacity × k pair.
/// `accuracy_by_k[i]` belongs to `k = i + 1`.
pub fn savings_sweep(
    capacities: &[f64],
    accuracy_by_k: &[f64],
    tariff: &TariffSpec,
    unit_cost_per_kwh: f64,
) -> Result<Vec<SavingsRow>, BatteryError> {
    let mut rows = Vec::with_capacity(capacities.len() * accuracy_by_k.len());
    for &capacity_kwh in capacities {
        for (i, &accuracy) in accuracy_by_k.iter().enumerate() {
            let k = i + 1;
            let annual = closed_form_savings(capacity_kwh, k, accuracy, tariff)?;
            let payback = match payback_years(capacity_kwh * unit_cost_per_kwh, annual) {
                Ok(y) => Some(y),
                Err(BatteryError::NoSavings(_)) => None,
                Err(e) => return Err(e),
            };
            rows.push(SavingsRow {
                capacity_kwh,
                k,
                accuracy,
                annual_savings_usd: annual,
                payback_years: payback,
            });
        }
    }
    Ok(rows)
}
