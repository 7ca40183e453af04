//! Deterministic CSV output. Every float is printed with four decimals so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::battery::{DayDispatch, MonthSavings, SavingsRow};
use crate::labeler::{DayLabeling, LabelRow};
use crate::metrics::AccuracyTable;
use crate::train::TrainReport;

pub const METRICS_HEADER: &str = "model,k,top_acc_hour,top_acc_day,bottom_acc_hour,bottom_acc_day";
pub const SAVINGS_HEADER: &str = "capacity_kwh,k,accuracy,annual_savings_usd,payback_years";
pub const LABELS_HEADER: &str = "date,hour,label,demand_kw";

fn f4(v: f64) -> String {
    // Avoid "-0.0000".
    let s = format!("{v:.4}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn metrics_csv(tables: &[AccuracyTable]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for t in tables {
        for (i, k) in t.ks.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{k},{},{},{},{}",
                t.model,
                f4(t.top_hour[i]),
                f4(t.top_day[i]),
                f4(t.bottom_hour[i]),
                f4(t.bottom_day[i])
            );
        }
    }
    out
}

pub fn mape_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("model,mape_pct\n");
    for (model, mape) in rows {
        let _ = writeln!(out, "{model},{}", f4(*mape));
    }
    out
}

/// Rows without savings leave `payback_years` empty.
pub fn savings_csv(rows: &[SavingsRow]) -> String {
    let mut out = format!("{SAVINGS_HEADER}\n");
    for r in rows {
        let payback = r.payback_years.map(f4).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{payback}",
            f4(r.capacity_kwh),
            r.k,
            f4(r.accuracy),
            f4(r.annual_savings_usd)
        );
    }
    out
}

pub fn labels_csv(rows: &[LabelRow]) -> String {
    let mut out = format!("{LABELS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.date, r.hour, r.label, f4(r.demand_kw));
    }
    out
}

/// Next-day forecast with one label column per k.
pub fn forecast_csv(date: NaiveDate, forecast: &[f64], labelings: &[DayLabeling]) -> String {
    let mut out = String::from("date,hour,forecast_kw");
    for l in labelings {
        let _ = write!(out, ",label_k{}", l.k);
    }
    out.push('\n');
    for (h, v) in forecast.iter().enumerate() {
        let _ = write!(out, "{date},{h},{}", f4(*v));
        for l in labelings {
            let _ = write!(out, ",{}", l.labels[h]);
        }
        out.push('\n');
    }
    out
}

pub fn dispatch_csv(days: &[DayDispatch]) -> String {
    let mut out = String::from("date,hour,demand_kw,net_load_kw,soc_kwh\n");
    for d in days {
        for h in 0..d.raw_kw.len() {
            let _ = writeln!(
                out,
                "{},{h},{},{},{}",
                d.date,
                f4(d.raw_kw[h]),
                f4(d.result.net_load_kw[h]),
                f4(d.result.soc_kwh[h + 1])
            );
        }
    }
    out
}

pub fn monthly_csv(months: &[MonthSavings]) -> String {
    let mut out = String::from("month,raw_peak_kw,net_peak_kw,savings_usd\n");
    for m in months {
        let _ = writeln!(
            out,
            "{}-{:02},{},{},{}",
            m.year,
            m.month,
            f4(m.raw_peak_kw),
            f4(m.net_peak_kw),
            f4(m.savings_usd)
        );
    }
    out
}

pub fn train_report_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,loss,validation_mape\n");
    for (e, loss) in report.epoch_loss.iter().enumerate() {
        let val = report
            .validation_mape
            .as_ref()
            .and_then(|v| v.get(e))
            .map(|m| f4(*m))
            .unwrap_or_default();
        let _ = writeln!(out, "{e},{},{val}", f4(*loss));
    }
    out
}

pub fn emit_report(contents: &str, path: &Path) -> std::io::Result<()> {
    fs::write(path, contents)
}
