//! Min-max layer: per-hour T/B/N labels for the top-k and bottom-k hours of
//! a 24-hour profile.
//!
//! Ties go to the earlier hour. Top ranks are allocated first, so on a
//! fully flat day the bottom set takes the lowest-indexed hours the top set
//! left free.

use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

pub const HOURS: usize = 24;
pub const MAX_K: usize = HOURS / 2;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("k = {0} outside 1..={MAX_K}")]
    KOutOfRange(usize),
    #[error("expected {HOURS} hourly values, found {0}")]
    WrongLength(usize),
    #[error("hour {0} has a non-finite demand")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Top,
    Bottom,
    Neither,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::Top => 'T',
            Label::Bottom => 'B',
            Label::Neither => 'N',
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayLabeling {
    pub k: usize,
    pub labels: [Label; HOURS],
    /// Ascending hour indices.
    pub top_hours: Vec<usize>,
    /// Ascending hour indices.
    pub bottom_hours: Vec<usize>,
}

impl DayLabeling {
    pub fn label(&self, hour: usize) -> Label {
        self.labels[hour]
    }
}

pub fn label_day(demand: &[f64], k: usize) -> Result<DayLabeling, LabelError> {
    if !(1..=MAX_K).contains(&k) {
        return Err(LabelError::KOutOfRange(k));
    }
    if demand.len() != HOURS {
        return Err(LabelError::WrongLength(demand.len()));
    }
    if let Some(h) = demand.iter().position(|v| !v.is_finite()) {
        return Err(LabelError::NonFinite(h));
    }

    let mut by_desc: Vec<usize> = (0..HOURS).collect();
    by_desc.sort_by(|&a, &b| demand[b].total_cmp(&demand[a]).then(a.cmp(&b)));
    let mut labels = [Label::Neither; HOURS];
    for &h in &by_desc[..k] {
        labels[h] = Label::Top;
    }

    let mut by_asc: Vec<usize> = (0..HOURS).filter(|&h| labels[h] != Label::Top).collect();
    by_asc.sort_by(|&a, &b| demand[a].total_cmp(&demand[b]).then(a.cmp(&b)));
    for &h in &by_asc[..k] {
        labels[h] = Label::Bottom;
    }

    let pick = |want: Label| (0..HOURS).filter(|&h| labels[h] == want).collect::<Vec<_>>();
    Ok(DayLabeling {
        k,
        top_hours: pick(Label::Top),
        bottom_hours: pick(Label::Bottom),
        labels,
    })
}

/// Rows of the label export CSV: `date,hour,label,demand_kw`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub date: NaiveDate,
    pub hour: usize,
    pub label: Label,
    pub demand_kw: f64,
}

pub fn label_rows(date: NaiveDate, demand: &[f64], labeling: &DayLabeling) -> Vec<LabelRow> {
    demand
        .iter()
        .enumerate()
        .map(|(hour, &demand_kw)| LabelRow {
            date,
            hour,
            label: labeling.labels[hour],
            demand_kw,
        })
        .collect()
}
