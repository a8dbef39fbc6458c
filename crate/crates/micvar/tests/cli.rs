//! End-to-end tests of the binary: exit codes, output formats, and
//! byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use micvar::io;
use micvar_core::timeseries::TimeSeries;
use micvar_core::var_process::{simulate, NoiseSpec, VarCoefficients};
use nalgebra::{DMatrix, DVector};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_micvar"))
}

fn tmp_dir() -> PathBuf {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    std::mem::forget(dir);
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_white_noise_csv(path: &Path, n: usize, seed: u64) {
    let coef = VarCoefficients::white_noise(1);
    let noise = NoiseSpec::gaussian_diagonal(DVector::from_element(1, 1.0)).unwrap();
    let series = simulate(&coef, &noise, n, seed).unwrap();
    io::write_csv(&series, path).unwrap();
}

fn write_ar2_csv(path: &Path, n: usize, seed: u64) {
    let coef = VarCoefficients::new(
        1,
        vec![
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.3),
        ],
    )
    .unwrap();
    let noise = NoiseSpec::gaussian_diagonal(DVector::from_element(1, 1.0)).unwrap();
    let series = simulate(&coef, &noise, n, seed).unwrap();
    io::write_csv(&series, path).unwrap();
}

#[test]
fn simulate_is_reproducible_and_shaped() {
    let dir = tmp_dir();
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{ "schema_version": 1, "process": { "kind": "named", "setting": "ar2" } }"#,
    )
    .unwrap();
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    for (out_path, _) in [(&out_a, 0), (&out_b, 1)] {
        let out = run(&[
            "simulate",
            "--spec",
            spec.to_str().unwrap(),
            "--n",
            "50",
            "--seed",
            "9",
            "--output",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert_eq!(text.lines().next().unwrap(), "y1");
}

#[test]
fn simulate_rejects_unstable_spec_with_exit_3() {
    let dir = tmp_dir();
    let spec = dir.join("unstable.json");
    std::fs::write(
        &spec,
        r#"{
            "schema_version": 1,
            "process": {
                "kind": "custom",
                "lags": [[[1.05]]],
                "noise": { "kind": "gaussian_diagonal", "variances": [1.0] }
            }
        }"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--n",
        "50",
        "--output",
        dir.join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(!dir.join("x.csv").exists(), "no partial output on error");
}

#[test]
fn select_reports_white_noise_as_order_zero() {
    let dir = tmp_dir();
    let data = dir.join("wn.csv");
    write_white_noise_csv(&data, 2000, 41);
    let report = dir.join("report.json");
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "5",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["n"], 2000);
    let selections = doc["selections"].as_array().unwrap();
    assert_eq!(selections.len(), 4, "--criteria all is the four rules");
    let mic = selections
        .iter()
        .find(|s| s["criterion"] == "mic")
        .unwrap();
    assert_eq!(mic["chosen_order"], 0);
    assert_eq!(mic["scores"].as_array().unwrap().len(), 6);
}

#[test]
fn select_rejects_malformed_csv_with_exit_2() {
    let dir = tmp_dir();
    let data = dir.join("bad.csv");
    std::fs::write(&data, "1,2\n3,banana\n").unwrap();
    let out = run(&["select", "--input", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("parse error"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn select_writes_two_column_score_curves() {
    let dir = tmp_dir();
    let data = dir.join("ar2.csv");
    write_ar2_csv(&data, 600, 8);
    let scores = dir.join("scores.csv");
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "4",
        "--criteria",
        "mic,bic",
        "--output",
        dir.join("r.json").to_str().unwrap(),
        "--scores-csv",
        scores.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["scores-mic.csv", "scores-bic.csv"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "p,score");
        assert_eq!(lines.count(), 5);
    }
}

#[test]
fn diff_flag_prints_stationarity_reminder() {
    let dir = tmp_dir();
    let data = dir.join("ar2.csv");
    write_ar2_csv(&data, 300, 2);
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "3",
        "--diff",
        "--output",
        dir.join("r.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("ADF"), "stderr: {}", stderr_of(&out));
}

#[test]
fn experiment_output_is_byte_identical_across_thread_counts() {
    let dir = tmp_dir();
    let config = dir.join("cfg.json");
    std::fs::write(
        &config,
        r#"{
            "schema_version": 1,
            "process": { "kind": "named", "setting": "ar2" },
            "sample_sizes": [300, 400],
            "replicates": 4,
            "p_max": 3,
            "criteria": ["mic", "aic"],
            "master_seed": 31
        }"#,
    )
    .unwrap();
    let out_one = dir.join("one.csv");
    let out_many = dir.join("many.csv");
    for (path, threads) in [(&out_one, "1"), (&out_many, "3")] {
        let out = run(&[
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--output",
            path.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let one = std::fs::read(&out_one).unwrap();
    let many = std::fs::read(&out_many).unwrap();
    assert_eq!(one, many);

    let text = String::from_utf8(one).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "setting,criterion,n,accuracy,se,over,under,failures"
    );
    assert_eq!(lines.count(), 4, "2 criteria x 2 sample sizes");
}

#[test]
fn experiment_thread_env_fallback_and_plot_data() {
    let dir = tmp_dir();
    let config = dir.join("cfg.json");
    std::fs::write(
        &config,
        r#"{
            "schema_version": 1,
            "process": { "kind": "named", "setting": "ar2" },
            "sample_sizes": [300],
            "replicates": 2,
            "p_max": 3,
            "criteria": ["mic", "hq"],
            "master_seed": 5
        }"#,
    )
    .unwrap();
    let plots = dir.join("plots");
    let out = bin()
        .env("MICVAR_THREADS", "2")
        .args([
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--output",
            dir.join("out.csv").to_str().unwrap(),
            "--emit-plot-data",
            plots.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let acc = std::fs::read_to_string(plots.join("accuracy_vs_n.csv")).unwrap();
    assert_eq!(acc.lines().next().unwrap(), "n,mic,hq");
    assert!(plots.join("over_under.csv").exists());

    let bad = bin()
        .env("MICVAR_THREADS", "lots")
        .args([
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--output",
            dir.join("out2.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn forecast_emits_report_and_errors_csv() {
    let dir = tmp_dir();
    let data = dir.join("ar2.csv");
    write_ar2_csv(&data, 250, 12);
    let report = dir.join("fc.json");
    let errors = dir.join("errors.csv");
    let out = run(&[
        "forecast",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "3",
        "--criteria",
        "mic,aic",
        "--output",
        report.to_str().unwrap(),
        "--errors-csv",
        errors.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["window_length"], 200);
    assert_eq!(doc["windows"], 50);
    assert_eq!(doc["units"], "standardized");
    let per = doc["per_criterion"].as_array().unwrap();
    assert_eq!(per.len(), 2);
    for c in per {
        let wmsfe = c["wmsfe"].as_f64().unwrap();
        assert!(wmsfe.is_finite() && wmsfe > 0.0);
        let sq = c["squared_errors"].as_array().unwrap();
        assert_eq!(sq.len(), 50);
        // The report's wmsfe is the mean of its stored squared errors.
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in sq {
            for v in row.as_array().unwrap() {
                sum += v.as_f64().unwrap();
                count += 1;
            }
        }
        assert!((sum / count as f64 - wmsfe).abs() < 1e-12);
    }

    let text = std::fs::read_to_string(&errors).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "criterion,t,series,actual,forecast,sq_error"
    );
    assert_eq!(lines.count(), 2 * 50, "2 criteria x 50 windows x 1 series");
}

#[test]
fn forecast_zero_length_test_segment_exits_2() {
    let dir = tmp_dir();
    let data = dir.join("short.csv");
    // 10 rows with split 0.95 leaves an empty forecast segment.
    let values = DMatrix::from_fn(10, 1, |i, _| (i as f64 * 0.7).sin());
    let series = TimeSeries::from_values(values).unwrap();
    io::write_csv(&series, &data).unwrap();
    let out = run(&[
        "forecast",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "1",
        "--split",
        "0.95",
        "--criteria",
        "aic",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn select_dump_fits_writes_the_full_grid() {
    let dir = tmp_dir();
    let data = dir.join("ar2.csv");
    write_ar2_csv(&data, 240, 5);
    let fits_all = dir.join("fits_all.json");
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "3",
        "--dump-fits",
        fits_all.to_str().unwrap(),
        "--output",
        dir.join("sel.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fits_all).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["k"], 1);
    let fits = doc["fits"].as_array().unwrap();
    // The default criteria include the self-tuned MIC, which reads losses
    // out to twice the candidate bound.
    assert_eq!(fits.len(), 7);
    for (i, fit) in fits.iter().enumerate() {
        assert_eq!(fit["p"], i as u64);
        let a_hat = fit["a_hat"].as_array().unwrap();
        assert_eq!(a_hat.len(), 1);
        assert_eq!(a_hat[0].as_array().unwrap().len(), i);
        assert_eq!(fit["sigma_hat"].as_array().unwrap().len(), 1);
        assert!(fit["sample_loss"].as_f64().unwrap() > 0.0);
        assert_eq!(fit["n_effective"], (240 - i) as u64);
    }

    // Without the self-tuned MIC the grid stops at the candidate bound.
    let fits_aic = dir.join("fits_aic.json");
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--header",
        "--pmax",
        "3",
        "--criteria",
        "aic",
        "--dump-fits",
        fits_aic.to_str().unwrap(),
        "--output",
        dir.join("sel2.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fits_aic).unwrap()).unwrap();
    assert_eq!(doc["fits"].as_array().unwrap().len(), 4);
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut experiment_configs = 0;
    let mut process_files = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        if text.contains("\"sample_sizes\"") {
            micvar::schema::ExperimentConfigJson::parse(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            experiment_configs += 1;
        } else {
            micvar::schema::ProcessFileJson::parse(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            process_files += 1;
        }
    }
    assert!(experiment_configs >= 5, "found {experiment_configs}");
    assert!(process_files >= 2, "found {process_files}");
}
