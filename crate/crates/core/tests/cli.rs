use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn peakcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peakcast")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = peakcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    peakcast(args).status.code().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn synth(dir: &TempDir, days: usize) -> String {
    let trace = p(dir, "trace.csv");
    ok(&["synth", "--days", &days.to_string(), "--seed", "3", "--out", &trace]);
    trace
}

fn small_lstm(dir: &TempDir, trace: &str, name: &str, extra: &[&str]) -> String {
    let model = p(dir, name);
    let mut args = vec![
        "train", "--trace", trace, "--hidden", "6,5", "--epochs", "2", "--lr-start", "0.01", "--lr-end", "0.001",
        "--quiet", "--out", &model,
    ];
    args.extend_from_slice(extra);
    ok(&args);
    model
}

#[test]
fn synth_writes_one_row_per_hour() {
    let out = ok(&["synth", "--days", "730"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("timestamp,demand_kw,temp_f,humidity_pct"));
    assert_eq!(lines.count(), 17_520);
    assert_eq!(out, ok(&["synth", "--days", "730"]));
    assert_ne!(out, ok(&["synth", "--days", "730", "--seed", "8"]));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["train", "--trace", "/no/such/file.csv", "--out", "/tmp/x.pkfc"]), 2);
    assert_eq!(code(&["sweep"]), 2);
    assert_eq!(code(&["sweep", "--accuracies", "0.5", "--capacities", "-5"]), 2);
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 10);
    assert_eq!(code(&["predict", "--trace", &trace, "--model", &p(&dir, "missing.pkfc")]), 2);
    assert_eq!(code(&["evaluate", "--trace", &trace]), 2);
    assert_eq!(code(&["simulate", "--trace", &trace, "--oracle", "--k", "13"]), 2);
}

#[test]
fn domain_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 10);
    let junk = p(&dir, "junk.pkfc");
    fs::write(&junk, b"not a model at all").unwrap();
    assert_eq!(code(&["predict", "--trace", &trace, "--model", &junk]), 1);
    assert_eq!(code(&["info", "--model", &junk]), 1);

    let bad = p(&dir, "bad.csv");
    fs::write(&bad, "timestamp,demand_kw,temp_f,humidity_pct\n2020-01-01T00:00,-5,50,50\n").unwrap();
    assert_eq!(code(&["train", "--trace", &bad, "--out", &p(&dir, "m.pkfc")]), 1);
}

#[test]
fn info_reports_closed_form_count() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 10);
    let model = small_lstm(&dir, &trace, "m.pkfc", &[]);
    let info = ok(&["info", "--model", &model, "--runs", "3"]);
    let field = |key: &str| {
        info.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}: ")))
            .unwrap_or_else(|| panic!("no {key} in {info}"))
            .to_string()
    };
    assert_eq!(field("model_type"), "lstm");
    assert_eq!(field("parameter_count"), field("closed_form_parameter_count"));
    // 4·6·(39+6+1) + 4·5·(6+5+1) + 24·(5+1)
    assert_eq!(field("parameter_count"), "1488");
    assert_eq!(field("file_bytes"), fs::metadata(&model).unwrap().len().to_string());
    assert!(field("latency_ms").ends_with("(mean of 3 runs)"));
}

#[test]
fn forecast_ignores_data_after_its_inputs() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 12);
    let model = small_lstm(&dir, &trace, "m.pkfc", &[]);
    let full = ok(&["predict", "--trace", &trace, "--model", &model, "--date", "2018-01-10"]);

    let text = fs::read_to_string(&trace).unwrap();
    let cut: String = text.lines().take(1 + 9 * 24).map(|l| format!("{l}\n")).collect();
    let short = p(&dir, "short.csv");
    fs::write(&short, cut).unwrap();
    let truncated = ok(&["predict", "--trace", &short, "--model", &model]);
    assert_eq!(full, truncated);
    assert_eq!(full.lines().count(), 25);
    assert!(full.starts_with("date,hour,forecast_kw,label_k1,label_k2,label_k3,label_k4,label_k5\n"));
}

#[test]
fn synth_train_evaluate_is_reproducible() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let trace = synth(&dir, 40);
        let lstm = small_lstm(&dir, &trace, "lstm.pkfc", &["--train-days", "30"]);
        let lin = p(&dir, "lin.pkfc");
        ok(&["train", "--trace", &trace, "--model-type", "linreg", "--train-days", "30", "--out", &lin]);
        let metrics = p(&dir, "metrics.csv");
        let mape = p(&dir, "mape.csv");
        ok(&[
            "evaluate", "--trace", &trace, "--model", &lstm, "--model", &lin, "--seasonal-naive", "--test-days", "10",
            "--out", &metrics, "--mape-out", &mape,
        ]);
        (fs::read(&metrics).unwrap(), fs::read(&mape).unwrap(), fs::read(&lstm).unwrap())
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let metrics = String::from_utf8(a.0).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 * 5);
    assert!(metrics.lines().nth(1).unwrap().starts_with("lstm,1,"));
}

#[test]
fn config_file_and_flags() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 10);
    let cfg = p(&dir, "train.toml");
    fs::write(&cfg, "[train]\nepochs = 1\nlr_start = 0.01\nlr_end = 0.01\n[model]\nhidden = [4, 3]\n").unwrap();
    let out = ok(&["train", "--trace", &trace, "--config", &cfg, "--quiet", "--out", &p(&dir, "a.pkfc")]);
    assert!(out.contains("parameter_count: 896"), "{out}");
    let out = ok(&[
        "train", "--trace", &trace, "--config", &cfg, "--hidden", "5", "--quiet", "--out", &p(&dir, "b.pkfc"),
    ]);
    assert!(out.contains("parameter_count: 1044"), "{out}");

    fs::write(&cfg, "[train]\nepochz = 1\n").unwrap();
    assert_eq!(code(&["train", "--trace", &trace, "--config", &cfg, "--out", &p(&dir, "c.pkfc")]), 2);
}

#[test]
fn simulate_and_sweep() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, 70);
    let monthly = ok(&["simulate", "--trace", &trace, "--oracle", "--k", "2", "--out", &p(&dir, "dispatch.csv")]);
    let rows: Vec<&str> = monthly.lines().collect();
    assert_eq!(rows[0], "month,raw_peak_kw,net_peak_kw,savings_usd");
    // Days 3..70 starting 2018-01-01 cover February only.
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("2018-02,"));
    let dispatch = fs::read_to_string(dir.path().join("dispatch.csv")).unwrap();
    assert_eq!(dispatch.lines().count(), 1 + 68 * 24);

    let sweep = ok(&["sweep", "--accuracies", "0.47,0.74,0.89,0.95,1.0"]);
    assert_eq!(sweep.lines().count(), 16);
    assert!(sweep.contains("\n4000.0000,1,0.4700,496320.0000,1.6119\n"));
    assert!(sweep.contains("\n4000.0000,5,1.0000,211200.0000,3.7879\n"));
}

#[test]
fn sweep_reads_metrics_csv() {
    let dir = TempDir::new().unwrap();
    let metrics = dir.path().join("metrics.csv");
    fs::write(
        &metrics,
        "model,k,top_acc_hour,top_acc_day,bottom_acc_hour,bottom_acc_day\nlstm,1,47.0000,47.0000,90.0000,90.0000\n",
    )
    .unwrap();
    let out = ok(&[
        "sweep", "--metrics", metrics.to_str().unwrap(), "--metrics-model", "lstm", "--capacities", "4000",
    ]);
    assert_eq!(out.lines().nth(1), Some("4000.0000,1,0.4700,496320.0000,1.6119"));
    assert!(Path::new(&metrics).exists());
}
