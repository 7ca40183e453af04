use std::fs;
use std::io::Write;
use std::process::{Command, ExitCode};
use std::time::Instant;

use chrono::{NaiveDate, TimeDelta};
use peakcast::baselines::{fit_linreg, predict_linreg, seasonal_naive_predict, DEFAULT_RIDGE_LAMBDA};
use peakcast::battery::{closed_form_savings, payback_years, simulate_days, BatterySpec, TariffSpec};
use peakcast::features::{build_windows, fit_normalizer, split_windows, WindowSample, FEATURE_DIM, TARGET_HOURS};
use peakcast::labeler::{label_day, Label, HOURS, MAX_K};
use peakcast::lstm::{closed_form_parameter_count, predict_day, ModelParams, StackWeights, DEFAULT_HIDDEN};
use peakcast::metrics::{evaluate_model, mape, Evaluation, TABLE_KS};
use peakcast::model_file::{self, Precision, StoredModel};
use peakcast::trace::{generate_synthetic, split_train_test, CalendarSpec, SyntheticConfig};
use peakcast::train::{grad_check, train, TrainConfig, GRAD_CHECK_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const TRAIN_DAYS: i64 = 600;
/// Tail of the training period held out for early stopping.
const VALIDATION_DAYS: i64 = 60;
const TEST_DAYS: usize = 130;

fn lstm_config() -> TrainConfig {
    TrainConfig {
        epochs: 120,
        batch_size: 32,
        lr_start: 0.01,
        lr_end: 0.001,
        dropout_rate: 0.0,
        seed: 0,
        ..Default::default()
    }
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "criterion {id:>2}: {verdict}  {detail}");
        let _ = out.flush();
    }
}

fn criterion_1() -> (bool, String) {
    let t = TariffSpec::default();
    let a = closed_form_savings(4000.0, 1, 0.47, &t).unwrap();
    let b = closed_form_savings(4000.0, 5, 1.0, &t).unwrap();
    (
        a.round() == 496_320.0 && b.round() == 211_200.0,
        format!("closed-form savings ${a:.0} and ${b:.0}"),
    )
}

fn criterion_2() -> (bool, String) {
    let y = payback_years(800_000.0, 496_320.0).unwrap();
    ((y - 1.612).abs() <= 1e-3, format!("payback {y:.4} years"))
}

fn criterion_3() -> (bool, String) {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut floored = 0;
    for seed in 0..24u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.random_range(1..=4);
        let hidden = [rng.random_range(1..=5), rng.random_range(1..=5)];
        let output = rng.random_range(1..=3);
        let steps = rng.random_range(1..=8);
        let weights = StackWeights::init_uniform(input, &hidden, output, seed).unwrap();
        let seq: Vec<f64> = (0..steps * input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = grad_check(&weights, &seq, steps, &target, GRAD_CHECK_EPSILON).unwrap();
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
        floored += r.floored;
    }
    let secs = started.elapsed().as_secs_f64();
    (
        worst < 1e-6 && secs < 60.0,
        format!(
            "24 models, {checked} components ({floored} below the 1e-7 denominator floor), max relative error {worst:.2e}, {secs:.1}s"
        ),
    )
}

fn brute_force_labels(demand: &[f64], k: usize) -> [Label; HOURS] {
    // Exhaustive rank by counting strictly better hours.
    let beats_top = |j: usize, h: usize| demand[j] > demand[h] || (demand[j] == demand[h] && j < h);
    let beats_bottom = |j: usize, h: usize| demand[j] < demand[h] || (demand[j] == demand[h] && j < h);
    let mut labels = [Label::Neither; HOURS];
    for h in 0..HOURS {
        if (0..HOURS).filter(|&j| beats_top(j, h)).count() < k {
            labels[h] = Label::Top;
        }
    }
    let rest: Vec<usize> = (0..HOURS).filter(|&h| labels[h] != Label::Top).collect();
    for &h in &rest {
        if rest.iter().filter(|&&j| beats_bottom(j, h)).count() < k {
            labels[h] = Label::Bottom;
        }
    }
    labels
}

fn criterion_4() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut tied = 0;
    for _ in 0..10_000 {
        let mut demand: Vec<f64> = (0..HOURS).map(|_| rng.random_range(9_000.0..27_000.0)).collect();
        // Copy values onto other hours to force ties.
        let ties = rng.random_range(0..8);
        for _ in 0..ties {
            let (a, b) = (rng.random_range(0..HOURS), rng.random_range(0..HOURS));
            demand[b] = demand[a];
        }
        if rng.random_bool(0.05) {
            demand.iter_mut().for_each(|v| *v = 15_000.0);
        }
        let mut sorted = demand.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < HOURS {
            tied += 1;
        }
        for k in 1..=MAX_K {
            if label_day(&demand, k).unwrap().labels != brute_force_labels(&demand, k) {
                mismatches += 1;
            }
        }
    }
    (
        mismatches == 0,
        format!("10000 profiles x k=1..12, {tied} with ties, {mismatches} mismatches"),
    )
}

struct Experiment {
    test: Vec<WindowSample>,
    lstm: ModelParams,
    lstm_eval: Evaluation,
    linreg: Evaluation,
    naive: Evaluation,
    train_secs: f64,
}

fn run_experiment() -> Experiment {
    let cfg = SyntheticConfig::default();
    let trace = generate_synthetic(&cfg).unwrap();
    let boundary = cfg.start + TimeDelta::days(TRAIN_DAYS);
    let (train_trace, _) = split_train_test(&trace, boundary.and_hms_opt(0, 0, 0).unwrap()).unwrap();
    let norm = fit_normalizer(&train_trace).unwrap();
    let calendar = CalendarSpec::default();
    let (train_set, test) = split_windows(build_windows(&trace, &calendar, &norm).unwrap(), boundary);
    assert_eq!(test.len(), TEST_DAYS);

    let lin = fit_linreg(&train_set, DEFAULT_RIDGE_LAMBDA, norm).unwrap();
    let linreg = evaluate_model("linreg", |s| predict_linreg(&lin, &s.inputs), &test, &TABLE_KS).unwrap();
    let naive = evaluate_model("seasonal_naive", |s| seasonal_naive_predict(&trace, s.target_date()), &test, &TABLE_KS).unwrap();

    let config = lstm_config();
    let init = ModelParams::new(&DEFAULT_HIDDEN, norm, config.seed).unwrap();
    let started = Instant::now();
    let (fit_set, validation) = split_windows(train_set.clone(), boundary - TimeDelta::days(VALIDATION_DAYS));
    let (lstm, _) = train(&init, &fit_set, &config, Some(&validation)).unwrap();
    let train_secs = started.elapsed().as_secs_f64();
    let lstm_eval = evaluate_model("lstm", |s| predict_day(&lstm, &s.inputs), &test, &TABLE_KS).unwrap();
    Experiment {
        test,
        lstm,
        lstm_eval,
        linreg,
        naive,
        train_secs,
    }
}

fn top(e: &Evaluation, k: usize) -> f64 {
    e.table.top(k).unwrap()
}

fn criterion_5(x: &Experiment) -> (bool, String) {
    let mape_ok = x.lstm_eval.mape < x.naive.mape && x.lstm_eval.mape < x.linreg.mape;
    let topk_ok = [3, 4, 5].iter().all(|&k| top(&x.lstm_eval, k) >= top(&x.naive, k));
    let time_ok = x.train_secs < 30.0 * 60.0;
    let accs = |e: &Evaluation| {
        [3, 4, 5]
            .iter()
            .map(|&k| format!("{:.1}", top(e, k)))
            .collect::<Vec<_>>()
            .join("/")
    };
    (
        mape_ok && topk_ok && time_ok,
        format!(
            "MAPE lstm {:.3} linreg {:.3} naive {:.3}; top-3/4/5 lstm {} naive {}; trained in {:.0}s",
            x.lstm_eval.mape,
            x.linreg.mape,
            x.naive.mape,
            accs(&x.lstm_eval),
            accs(&x.naive),
            x.train_secs
        ),
    )
}

fn criterion_6(x: &Experiment) -> (bool, String) {
    let accs: Vec<f64> = TABLE_KS.iter().map(|&k| top(&x.lstm_eval, k)).collect();
    let drops: Vec<f64> = accs.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    let pass = drops.is_empty() || (drops.len() == 1 && drops[0] <= 2.0);
    let shown = accs.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(", ");
    (pass, format!("top-k hour accuracy k=1..5: {shown}"))
}

fn criterion_7() -> (bool, String) {
    let cfg = SyntheticConfig {
        days: 1_002,
        seed: 77,
        ..Default::default()
    };
    let trace = generate_synthetic(&cfg).unwrap();
    let battery = BatterySpec::default();
    let tariff = TariffSpec::default();
    let profile = |d: NaiveDate| -> [f64; HOURS] {
        std::array::from_fn(|h| trace.day(d).unwrap()[h].demand_kw)
    };
    let mut worst_balance: f64 = 0.0;
    let mut soc_ok = true;
    let mut dominated = 0;
    let mut months = 0;
    for k in 1..=5 {
        let mut oracle = Vec::new();
        let mut predicted = Vec::new();
        for i in 2..1_002 {
            let date = cfg.start + TimeDelta::days(i);
            let raw = profile(date);
            let forecast = seasonal_naive_predict(&trace, date).unwrap();
            oracle.push((date, raw, label_day(&raw, k).unwrap()));
            predicted.push((date, raw, label_day(&forecast, k).unwrap()));
        }
        let (o_days, o_months) = simulate_days(&oracle, &battery, &tariff).unwrap();
        let (p_days, p_months) = simulate_days(&predicted, &battery, &tariff).unwrap();
        for d in o_days.iter().chain(&p_days) {
            let r = &d.result;
            soc_ok &= r.soc_kwh.iter().all(|s| (0.0..=battery.capacity_kwh).contains(s));
            let grid: f64 = r.net_load_kw.iter().zip(&d.raw_kw).map(|(n, raw)| n - raw).sum();
            let flow = r.charged_kwh - r.discharged_kwh;
            let scale = (r.charged_kwh + r.discharged_kwh).max(1.0);
            let stored = r.final_soc() - r.soc_kwh[0] - (r.charged_kwh * battery.round_trip_efficiency - r.discharged_kwh);
            worst_balance = worst_balance.max((grid - flow).abs() / scale).max(stored.abs() / scale);
        }
        for (o, p) in o_months.iter().zip(&p_months) {
            assert_eq!((o.year, o.month), (p.year, p.month));
            months += 1;
            if o.savings_usd >= p.savings_usd {
                dominated += 1;
            }
        }
    }
    (
        soc_ok && worst_balance <= 1e-9 && dominated == months,
        format!(
            "1000 days x k=1..5: soc in range {soc_ok}, worst energy imbalance {worst_balance:.1e}, oracle >= predicted in {dominated}/{months} months"
        ),
    )
}

fn criterion_8(x: &Experiment) -> (bool, String) {
    let stored = StoredModel::Lstm(x.lstm.clone());
    let dir = TempDir::new().unwrap();
    let full_path = dir.path().join("full.pkfc");
    let half_path = dir.path().join("half.pkfc");
    model_file::save(&stored, Precision::Full, &full_path).unwrap();
    model_file::save(&stored, Precision::Half, &half_path).unwrap();
    let (full, _) = model_file::load(&full_path).unwrap();
    let (half, _) = model_file::load(&half_path).unwrap();

    let mut identical = true;
    let mut base = Vec::new();
    let mut halved = Vec::new();
    for s in &x.test {
        let a = stored.predict_day(&s.inputs).unwrap();
        let b = full.predict_day(&s.inputs).unwrap();
        identical &= a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits());
        base.extend(a);
        halved.extend(half.predict_day(&s.inputs).unwrap());
    }
    let drift = mape(&base, &halved).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_peakcast"))
        .args(["info", "--model", full_path.to_str().unwrap(), "--runs", "5"])
        .output()
        .unwrap();
    let info = String::from_utf8_lossy(&out.stdout);
    let reported: Option<usize> = info
        .lines()
        .find_map(|l| l.strip_prefix("parameter_count: "))
        .and_then(|v| v.parse().ok());
    let expected = closed_form_parameter_count(FEATURE_DIM, &DEFAULT_HIDDEN, TARGET_HOURS);
    (
        identical && reported == Some(expected) && drift < 0.5,
        format!(
            "f64 round trip bit-identical {identical}; info parameter_count {} vs closed form {expected}; f16 drift {drift:.4}% MAPE",
            reported.map(|r| r.to_string()).unwrap_or_else(|| "missing".into())
        ),
    )
}

fn pipeline_once() -> Vec<u8> {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_peakcast")).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let (trace, model, metrics) = (path("trace.csv"), path("lstm.pkfc"), path("metrics.csv"));
    run(&["synth", "--days", "730", "--out", &trace]);
    run(&[
        "train", "--trace", &trace, "--train-days", "600", "--epochs", "2", "--lr-start", "0.01", "--lr-end", "0.001",
        "--dropout", "0.2", "--quiet", "--out", &model,
    ]);
    run(&[
        "evaluate", "--trace", &trace, "--model", &model, "--seasonal-naive", "--test-days", "130", "--out", &metrics,
        "--mape-out", &path("mape.csv"),
    ]);
    let mut bytes = fs::read(&metrics).unwrap();
    bytes.extend(fs::read(path("mape.csv")).unwrap());
    bytes
}

fn criterion_9() -> (bool, String) {
    let a = pipeline_once();
    let b = pipeline_once();
    (
        a == b && !a.is_empty(),
        format!("two synth -> train -> evaluate runs, {} bytes of metrics, identical {}", a.len(), a == b),
    )
}

fn criterion_10(x: &Experiment) -> (bool, String) {
    let inputs = &x.test[0].inputs;
    predict_day(&x.lstm, inputs).unwrap();
    let runs = 50;
    let mut slowest: f64 = 0.0;
    let started = Instant::now();
    for _ in 0..runs {
        let t = Instant::now();
        std::hint::black_box(predict_day(&x.lstm, std::hint::black_box(inputs)).unwrap());
        slowest = slowest.max(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean = started.elapsed().as_secs_f64() * 1e3 / runs as f64;
    (slowest < 100.0, format!("predict_day mean {mean:.2} ms, slowest {slowest:.2} ms over {runs} runs"))
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    for (id, check) in [(1, criterion_1 as fn() -> (bool, String)), (2, criterion_2), (3, criterion_3), (4, criterion_4)] {
        let (pass, detail) = check();
        report.line(id, pass, detail);
    }
    let x = run_experiment();
    let (pass, detail) = criterion_5(&x);
    report.line(5, pass, detail);
    let (pass, detail) = criterion_6(&x);
    report.line(6, pass, detail);
    let (pass, detail) = criterion_7();
    report.line(7, pass, detail);
    let (pass, detail) = criterion_8(&x);
    report.line(8, pass, detail);
    let (pass, detail) = criterion_9();
    report.line(9, pass, detail);
    let (pass, detail) = criterion_10(&x);
    report.line(10, pass, detail);

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance: {} of 10 criteria passed", 10 - report.failures);
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
