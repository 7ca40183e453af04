//! Command-line front end.
//!
//! Every subcommand that accepts `--config` reads a TOML file first and then
//! applies any flags given on the command line, so flags win.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{NaiveDate, TimeDelta};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::baselines::{fit_linreg, seasonal_naive_predict, DEFAULT_RIDGE_LAMBDA};
use crate::battery::{savings_sweep, simulate_days, BatterySpec, TariffSpec, SWEEP_CAPACITIES};
use crate::features::{
    build_windows, build_windows_with_stride, fit_normalizer, inputs_for_day, WindowSample, WindowStride,
    FEATURE_DIM, INPUT_HOURS, TARGET_HOURS,
};
use crate::labeler::{label_day, label_rows, DayLabeling};
use crate::lstm::{closed_form_parameter_count, ModelParams, DEFAULT_HIDDEN};
use crate::metrics::{evaluate_model, TABLE_KS};
use crate::model_file::{self, ModelType, Precision, StoredModel};
use crate::report;
use crate::trace::{generate_synthetic, parse_trace, split_train_test, write_trace, CalendarSpec, DemandTrace, SyntheticConfig};
use crate::train::{train_with_progress, TrainConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: missing inputs or conflicting flags. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Valid invocation that failed on the data. Exit code 1.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn domain<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Domain(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "peakcast", version, about = "Day-ahead peak-hour forecasting and battery peak-shaving")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic demand trace as CSV.
    Synth(SynthArgs),
    /// Train a forecaster and write a model file.
    Train(TrainArgs),
    /// Forecast the next day and label its top/bottom hours.
    Predict(PredictArgs),
    /// Score models on a test span (metrics CSV).
    Evaluate(EvaluateArgs),
    /// Dispatch a battery from forecast labels and price monthly savings.
    Simulate(SimulateArgs),
    /// Closed-form savings and payback over battery sizes and k.
    Sweep(SweepArgs),
    /// Report a model file's size, parameter count and inference latency.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<usize>,
    /// First day, YYYY-MM-DD.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub bimodal_probability: Option<f64>,
    #[arg(long)]
    pub noise_sd_kw: Option<f64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Hourly trace CSV (timestamp,demand_kw,temp_f,humidity_pct).
    #[arg(long)]
    pub trace: PathBuf,
    /// Holiday/season calendar; meteorological seasons and no holidays when omitted.
    #[arg(long)]
    pub calendar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Linreg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    F64,
    F16,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F64 => Precision::Full,
            PrecisionArg::F16 => Precision::Half,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML file with `[train]` and `[model]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model_type: Option<ModelKind>,
    /// Hidden sizes, e.g. 100,90,80,70.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    /// Use only the first N days of the trace.
    #[arg(long)]
    pub train_days: Option<usize>,
    /// Hold out the last N training days for early stopping.
    #[arg(long)]
    pub validation_days: Option<usize>,
    #[arg(long, value_enum)]
    pub stride: Option<StrideArg>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// No per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrideArg {
    Daily,
    Hourly,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Day to forecast; the day after the trace ends when omitted.
    #[arg(long)]
    pub date: Option<NaiveDate>,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_KS)]
    pub k: Vec<usize>,
    /// Forecast CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label CSV (date,hour,label,demand_kw); needs exactly one --k.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file, optionally NAME=PATH; repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Also score the seasonal-naive baseline.
    #[arg(long)]
    pub seasonal_naive: bool,
    /// First test day.
    #[arg(long, conflicts_with = "test_days")]
    pub test_start: Option<NaiveDate>,
    /// Test on the last N days of the trace.
    #[arg(long)]
    pub test_days: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_KS)]
    pub ks: Vec<usize>,
    /// Metrics CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mape_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulateFile {
    battery: BatterySpec,
    tariff: TariffSpec,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Forecaster whose labels drive the battery.
    #[arg(long, required_unless_present = "oracle")]
    pub model: Option<PathBuf>,
    /// Use labels of the actual demand instead of a forecast.
    #[arg(long, conflicts_with = "model")]
    pub oracle: bool,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// First simulated day; the third day of the trace when omitted.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last simulated day; the last day of the trace when omitted.
    #[arg(long)]
    pub end: Option<NaiveDate>,
    /// TOML file with `[battery]` and `[tariff]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub capacity_kwh: Option<f64>,
    #[arg(long)]
    pub max_power_kw: Option<f64>,
    #[arg(long)]
    pub efficiency: Option<f64>,
    #[arg(long)]
    pub unit_cost: Option<f64>,
    #[arg(long)]
    pub demand_charge: Option<f64>,
    /// Hourly dispatch CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Monthly savings CSV; stdout when omitted.
    #[arg(long)]
    pub monthly_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccuracyColumn {
    Hour,
    Day,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Capture accuracy per k (fractions, k = 1, 2, ...).
    #[arg(long, value_delimiter = ',', required_unless_present = "metrics", conflicts_with = "metrics")]
    pub accuracies: Option<Vec<f64>>,
    /// Take accuracies from a metrics CSV written by `evaluate`.
    #[arg(long, requires = "metrics_model")]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub metrics_model: Option<String>,
    #[arg(long, value_enum, default_value_t = AccuracyColumn::Hour)]
    pub accuracy_mode: AccuracyColumn,
    #[arg(long, value_delimiter = ',', default_values_t = SWEEP_CAPACITIES)]
    pub capacities: Vec<f64>,
    #[arg(long, default_value_t = 22.0)]
    pub demand_charge: f64,
    #[arg(long, default_value_t = 200.0)]
    pub unit_cost: f64,
    /// Savings CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Timed predict_day calls.
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::Usage(format!("{}: file not found", path.display())),
        _ => CliError::Domain(format!("{}: {e}", path.display())),
    })
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => report::emit_report(contents, p).map_err(|e| CliError::Domain(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Domain(format!("stdout: {e}"))),
    }
}

fn load_trace(path: &Path) -> Result<DemandTrace, CliError> {
    parse_trace(&read_input(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_calendar(path: Option<&Path>) -> Result<CalendarSpec, CliError> {
    match path {
        None => Ok(CalendarSpec::default()),
        Some(p) => CalendarSpec::parse(&read_input(p)?).map_err(|e| CliError::Domain(format!("{}: {e}", p.display()))),
    }
}

fn load_model(path: &Path) -> Result<StoredModel, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{}: file not found", path.display())));
    }
    model_file::load(path)
        .map(|(m, _)| m)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn last_day(trace: &DemandTrace) -> NaiveDate {
    let end = trace.end();
    if end.format("%H").to_string() == "23" {
        end.date()
    } else {
        end.date() - TimeDelta::days(1)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Info(a) => info(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str::<SyntheticConfig>(&read_input(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.days {
        cfg.days = v;
    }
    if let Some(v) = a.start {
        cfg.start = v;
    }
    if let Some(v) = a.bimodal_probability {
        cfg.bimodal_probability = v;
    }
    if let Some(v) = a.noise_sd_kw {
        cfg.noise_sd_kw = v;
    }
    let trace = generate_synthetic(&cfg).map_err(|e| CliError::Domain(format!("synthetic config: {e}")))?;
    write_output(a.out.as_deref(), &write_trace(&trace))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelSection {
    model_type: ModelKind,
    hidden: Vec<usize>,
    ridge_lambda: f64,
    train_days: Option<usize>,
    validation_days: usize,
    stride: StrideArg,
    precision: PrecisionArg,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            model_type: ModelKind::Lstm,
            hidden: DEFAULT_HIDDEN.to_vec(),
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            train_days: None,
            validation_days: 0,
            stride: StrideArg::Daily,
            precision: PrecisionArg::F64,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    train: TrainConfig,
    model: ModelSection,
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let TrainFile {
        train: mut tc,
        model: mut ms,
    } = match &a.config {
        Some(p) => toml::from_str(&read_input(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => TrainFile::default(),
    };
    macro_rules! overlay {
        ($($flag:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = a.$flag.clone() { $dst = v; })*
        };
    }
    overlay!(
        epochs => tc.epochs,
        batch_size => tc.batch_size,
        lr_start => tc.lr_start,
        lr_end => tc.lr_end,
        dropout => tc.dropout_rate,
        grad_clip => tc.grad_clip_norm,
        patience => tc.patience,
        seed => tc.seed,
        model_type => ms.model_type,
        hidden => ms.hidden,
        ridge_lambda => ms.ridge_lambda,
        validation_days => ms.validation_days,
        stride => ms.stride,
        precision => ms.precision,
    );
    if a.train_days.is_some() {
        ms.train_days = a.train_days;
    }
    tc.validate().map_err(|e| CliError::Usage(format!("train config: {e}")))?;

    let trace = load_trace(&a.data.trace)?;
    let calendar = load_calendar(a.data.calendar.as_deref())?;
    let trace_name = a.data.trace.display().to_string();
    let start = trace.start().date();
    let cut = |t: &DemandTrace, days: usize, what: &str| -> Result<(DemandTrace, Option<DemandTrace>), CliError> {
        let boundary = (start + TimeDelta::days(days as i64)).and_hms_opt(0, 0, 0).unwrap();
        if boundary > t.end() {
            return Ok((t.clone(), None));
        }
        split_train_test(t, boundary)
            .map(|(a, b)| (a, Some(b)))
            .map_err(|e| CliError::Domain(format!("{trace_name}: {what}: {e}")))
    };
    let (usable, _) = match ms.train_days {
        Some(d) => cut(&trace, d, "--train-days")?,
        None => (trace.clone(), None),
    };
    let usable_days = usable.len() / 24;
    let (fit_trace, has_validation) = if ms.validation_days > 0 {
        if ms.validation_days + 3 > usable_days {
            return Err(CliError::Usage(format!(
                "--validation-days {} leaves too few training days out of {usable_days}",
                ms.validation_days
            )));
        }
        (cut(&usable, usable_days - ms.validation_days, "--validation-days")?.0, true)
    } else {
        (usable.clone(), false)
    };

    let norm = fit_normalizer(&fit_trace).map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?;
    let stride = match ms.stride {
        StrideArg::Daily => WindowStride::Daily,
        StrideArg::Hourly => WindowStride::Hourly,
    };
    let train_set = build_windows_with_stride(&fit_trace, &calendar, &norm, stride)
        .map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?;
    let validation: Option<Vec<WindowSample>> = if has_validation {
        let all = build_windows(&usable, &calendar, &norm).map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?;
        let first = fit_trace.end().date() + TimeDelta::days(1);
        Some(all.into_iter().filter(|s| s.target_date() >= first).collect())
    } else {
        None
    };

    let precision: Precision = ms.precision.into();
    let model = match ms.model_type {
        ModelKind::Linreg => {
            let m = fit_linreg(&train_set, ms.ridge_lambda, norm).map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?;
            eprintln!("fitted linear model on {} samples", train_set.len());
            StoredModel::Linear(m)
        }
        ModelKind::Lstm => {
            let init = ModelParams::new(&ms.hidden, norm, tc.seed).map_err(|e| CliError::Usage(format!("--hidden: {e}")))?;
            let quiet = a.quiet;
            let (m, rep) = train_with_progress(&init, &train_set, &tc, validation.as_deref(), |s| {
                if !quiet {
                    match s.validation_mape {
                        Some(v) => eprintln!("epoch {:>4}  lr {:.5}  loss {:.6}  val_mape {:.3}", s.epoch, s.lr, s.loss, v),
                        None => eprintln!("epoch {:>4}  lr {:.5}  loss {:.6}", s.epoch, s.lr, s.loss),
                    }
                }
            })
            .map_err(|e| CliError::Domain(format!("training on {trace_name}: {e}")))?;
            if let Some(p) = &a.report {
                write_output(Some(p), &report::train_report_csv(&rep))?;
            }
            eprintln!(
                "trained {} epochs on {} samples in {:.1}s{}",
                rep.epoch_loss.len(),
                train_set.len(),
                rep.wall_time.as_secs_f64(),
                rep.best_epoch.map(|b| format!(", kept epoch {b}")).unwrap_or_default()
            );
            StoredModel::Lstm(m)
        }
    };
    let bytes = model_file::save(&model, precision, &a.out).map_err(|e| CliError::Domain(e.to_string()))?;
    println!("model_type: {}", model.model_type());
    println!("parameter_count: {}", model.parameter_count());
    println!("file_bytes: {bytes}");
    Ok(())
}

fn check_k(k: usize) -> Result<(), CliError> {
    if (1..=crate::labeler::MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("k = {k} outside 1..={}", crate::labeler::MAX_K)))
    }
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    for &k in &a.k {
        check_k(k)?;
    }
    if a.labels_out.is_some() && a.k.len() != 1 {
        return Err(CliError::Usage("--labels-out needs exactly one --k".into()));
    }
    let model = load_model(&a.model)?;
    let trace = load_trace(&a.data.trace)?;
    let calendar = load_calendar(a.data.calendar.as_deref())?;
    let date = a.date.unwrap_or_else(|| last_day(&trace) + TimeDelta::days(1));
    let inputs = inputs_for_day(&trace, &calendar, model.normalization(), date).ok_or_else(|| {
        CliError::Domain(format!(
            "{}: needs the {INPUT_HOURS} hours before {date}",
            a.data.trace.display()
        ))
    })?;
    let forecast = model.predict_day(&inputs).map_err(domain(a.model.display()))?;
    let labelings: Vec<DayLabeling> = a
        .k
        .iter()
        .map(|&k| label_day(&forecast, k))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Domain(format!("forecast for {date}: {e}")))?;
    write_output(a.out.as_deref(), &report::forecast_csv(date, &forecast, &labelings))?;
    if let Some(p) = &a.labels_out {
        write_output(Some(p), &report::labels_csv(&label_rows(date, &forecast, &labelings[0])))?;
    }
    Ok(())
}

fn parse_model_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let name = p.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| s.to_string());
            (name, p)
        }
    }
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    if a.models.is_empty() && !a.seasonal_naive {
        return Err(CliError::Usage("nothing to evaluate: pass --model and/or --seasonal-naive".into()));
    }
    for &k in &a.ks {
        check_k(k)?;
    }
    let models = a
        .models
        .iter()
        .map(|m| {
            let (name, path) = parse_model_arg(m);
            load_model(&path).map(|model| (name, path, model))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let trace = load_trace(&a.data.trace)?;
    let calendar = load_calendar(a.data.calendar.as_deref())?;
    let trace_name = a.data.trace.display().to_string();
    let test_start = match (a.test_start, a.test_days) {
        (Some(d), _) => d,
        (None, Some(n)) => last_day(&trace) - TimeDelta::days(n as i64 - 1),
        (None, None) => return Err(CliError::Usage("pass --test-start or --test-days".into())),
    };
    let test_windows = |norm| -> Result<Vec<WindowSample>, CliError> {
        let w: Vec<_> = build_windows(&trace, &calendar, norm)
            .map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?
            .into_iter()
            .filter(|s| s.target_date() >= test_start)
            .collect();
        if w.is_empty() {
            return Err(CliError::Domain(format!("{trace_name}: no complete test days from {test_start}")));
        }
        Ok(w)
    };

    let mut tables = Vec::new();
    let mut mapes = Vec::new();
    for (name, path, model) in &models {
        let test = test_windows(model.normalization())?;
        let eval = evaluate_model(name, |s| model.predict_day(&s.inputs), &test, &a.ks).map_err(domain(path.display()))?;
        mapes.push((name.clone(), eval.mape));
        tables.push(eval.table);
    }
    if a.seasonal_naive {
        let norm = fit_normalizer(&trace).map_err(|e| CliError::Domain(format!("{trace_name}: {e}")))?;
        let test = test_windows(&norm)?;
        let eval = evaluate_model("seasonal_naive", |s| seasonal_naive_predict(&trace, s.target_date()), &test, &a.ks)
            .map_err(domain("seasonal_naive"))?;
        mapes.push(("seasonal_naive".to_string(), eval.mape));
        tables.push(eval.table);
    }
    write_output(a.out.as_deref(), &report::metrics_csv(&tables))?;
    match &a.mape_out {
        Some(p) => write_output(Some(p), &report::mape_csv(&mapes))?,
        None => {
            for (name, m) in &mapes {
                eprintln!("{name}: MAPE {m:.4}% over {} days", tables[0].days);
            }
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    check_k(a.k)?;
    let SimulateFile {
        mut battery,
        mut tariff,
    } = match &a.config {
        Some(p) => toml::from_str(&read_input(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => SimulateFile::default(),
    };
    if let Some(v) = a.capacity_kwh {
        battery.capacity_kwh = v;
        if a.max_power_kw.is_none() && a.config.is_none() {
            battery.max_power_kw = v;
        }
    }
    if let Some(v) = a.max_power_kw {
        battery.max_power_kw = v;
    }
    if let Some(v) = a.efficiency {
        battery.round_trip_efficiency = v;
    }
    if let Some(v) = a.unit_cost {
        battery.unit_cost_per_kwh = v;
    }
    if let Some(v) = a.demand_charge {
        tariff.demand_charge_per_kw = v;
    }
    battery.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    tariff.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let model = a.model.as_deref().map(load_model).transpose()?;
    let trace = load_trace(&a.data.trace)?;
    let calendar = load_calendar(a.data.calendar.as_deref())?;
    let trace_name = a.data.trace.display().to_string();
    let first = a.start.unwrap_or(trace.start().date() + TimeDelta::days(2));
    let last = a.end.unwrap_or(last_day(&trace));
    if last < first {
        return Err(CliError::Usage(format!("--end {last} is before --start {first}")));
    }

    let mut days = Vec::new();
    let mut date = first;
    while date <= last {
        let actual = trace
            .day(date)
            .ok_or_else(|| CliError::Domain(format!("{trace_name}: missing day {date}")))?;
        let mut raw = [0.0; TARGET_HOURS];
        for (r, rec) in raw.iter_mut().zip(actual) {
            *r = rec.demand_kw;
        }
        let basis = match &model {
            None => raw,
            Some(m) => {
                let inputs = inputs_for_day(&trace, &calendar, m.normalization(), date)
                    .ok_or_else(|| CliError::Domain(format!("{trace_name}: needs the {INPUT_HOURS} hours before {date}")))?;
                m.predict_day(&inputs).map_err(domain(format!("forecast for {date}")))?
            }
        };
        let labeling = label_day(&basis, a.k).map_err(|e| CliError::Domain(format!("{date}: {e}")))?;
        days.push((date, raw, labeling));
        date += TimeDelta::days(1);
    }
    let (dispatched, months) = simulate_days(&days, &battery, &tariff).map_err(|e| CliError::Domain(e.to_string()))?;
    if let Some(p) = &a.out {
        write_output(Some(p), &report::dispatch_csv(&dispatched))?;
    }
    write_output(a.monthly_out.as_deref(), &report::monthly_csv(&months))?;
    let total: f64 = months.iter().map(|m| m.savings_usd).sum();
    eprintln!("{} complete months, total demand-charge savings ${total:.2}", months.len());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    model: String,
    k: usize,
    top_acc_hour: f64,
    top_acc_day: f64,
}

fn accuracies_from_metrics(path: &Path, model: &str, column: AccuracyColumn) -> Result<Vec<f64>, CliError> {
    let text = read_input(path)?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for rec in csv::Reader::from_reader(text.as_bytes()).deserialize::<MetricsRow>() {
        let r = rec.map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        if r.model == model {
            let pct = match column {
                AccuracyColumn::Hour => r.top_acc_hour,
                AccuracyColumn::Day => r.top_acc_day,
            };
            rows.push((r.k, pct / 100.0));
        }
    }
    rows.sort_by_key(|r| r.0);
    if rows.is_empty() {
        return Err(CliError::Domain(format!("{}: no rows for model `{model}`", path.display())));
    }
    for (i, (k, _)) in rows.iter().enumerate() {
        if *k != i + 1 {
            return Err(CliError::Domain(format!("{}: model `{model}` lacks k = {}", path.display(), i + 1)));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let accuracies = match (&a.accuracies, &a.metrics) {
        (Some(acc), _) => acc.clone(),
        (None, Some(p)) => accuracies_from_metrics(p, a.metrics_model.as_deref().unwrap_or_default(), a.accuracy_mode)?,
        (None, None) => return Err(CliError::Usage("pass --accuracies or --metrics".into())),
    };
    let tariff = TariffSpec {
        demand_charge_per_kw: a.demand_charge,
    };
    let rows = savings_sweep(&a.capacities, &accuracies, &tariff, a.unit_cost).map_err(|e| CliError::Usage(e.to_string()))?;
    write_output(a.out.as_deref(), &report::savings_csv(&rows))
}

fn info(a: InfoArgs) -> Result<(), CliError> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    if !a.model.exists() {
        return Err(CliError::Usage(format!("{}: file not found", a.model.display())));
    }
    let bytes = fs::read(&a.model).map_err(|e| CliError::Domain(format!("{}: {e}", a.model.display())))?;
    let header = model_file::peek_header(&bytes).map_err(domain(a.model.display()))?;
    let (model, precision) = model_file::deserialize(&bytes).map_err(domain(a.model.display()))?;
    let closed_form = match &model {
        StoredModel::Lstm(m) => closed_form_parameter_count(FEATURE_DIM, &m.weights.hidden_sizes(), TARGET_HOURS),
        StoredModel::Linear(_) => TARGET_HOURS * (INPUT_HOURS * FEATURE_DIM + 1),
    };

    let probe = generate_synthetic(&SyntheticConfig {
        days: 3,
        ..Default::default()
    })
    .map_err(|e| CliError::Domain(e.to_string()))?;
    let date = probe.start().date() + TimeDelta::days(2);
    let inputs = inputs_for_day(&probe, &CalendarSpec::default(), model.normalization(), date).expect("3-day probe trace");
    model.predict_day(&inputs).map_err(domain(a.model.display()))?;
    let t0 = Instant::now();
    for _ in 0..a.runs {
        std::hint::black_box(model.predict_day(std::hint::black_box(&inputs)).map_err(domain(a.model.display()))?);
    }
    let latency_ms = t0.elapsed().as_secs_f64() * 1e3 / a.runs as f64;

    let layers = header
        .layers
        .iter()
        .map(|(i, h)| format!("{i}x{h}"))
        .collect::<Vec<_>>()
        .join(",");
    println!("model_type: {}", model.model_type());
    if model.model_type() == ModelType::Lstm {
        println!("layers: {layers}");
    }
    println!("precision: {precision}");
    println!("feature_layout_version: {}", header.feature_layout_version);
    println!("parameter_count: {}", header.parameter_count);
    println!("closed_form_parameter_count: {closed_form}");
    println!("file_bytes: {}", bytes.len());
    println!("latency_ms: {latency_ms:.3} (mean of {} runs)", a.runs);
    Ok(())
}
