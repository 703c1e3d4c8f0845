use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn riskattrib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskattrib"))
        .args(args)
        .env_remove("RISKATTRIB_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn estimate_small_sample_prior() {
    let n3 = data("indices_n3.csv");
    let v = json(&riskattrib(&["estimate", n3.to_str().unwrap()]));
    assert_eq!(v["estimator"], "dhd");
    assert_eq!(v["n"], 3);
    assert_eq!(v["p"], 5);
    assert_eq!(v["n0"], 3.5);
    assert!((v["q_or_rho"].as_f64().unwrap() - 19.0 / 23.0).abs() < 1e-15);
    assert!(v["min_eigenvalue"].as_f64().unwrap() > 0.0);
    assert_eq!(v["matrix"].as_array().unwrap().len(), 5);
}

#[test]
fn sample_estimator_refuses_rank_deficient_data() {
    let out = riskattrib(&["estimate", data("indices_n3.csv").to_str().unwrap(), "--estimator", "sample"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("rank deficient"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_input_is_an_input_error() {
    let out = riskattrib(&["estimate", "/nonexistent/returns.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_estimator_is_an_input_error() {
    let out = riskattrib(&["estimate", data("indices_n3.csv").to_str().unwrap(), "--estimator", "ledoit"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_from_prices() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    std::fs::write(
        &prices,
        "date,a,b,c\n2020-01-31,100,50,10\n2020-02-29,101,49,10.5\n2020-03-31,99,51,10.2\n2020-04-30,102,52,10.1\n",
    )
    .unwrap();
    let v = json(&riskattrib(&["estimate", prices.to_str().unwrap(), "--kind", "prices", "--estimator", "blw"]));
    assert_eq!(v["n"], 3);
    assert_eq!(v["p"], 3);
    assert_eq!(v["n0"], 1.5);
}

fn attribute(extra: &[&str]) -> Output {
    let input = data("indices_n3.csv");
    let weights = data("adhoc_weights.csv");
    let mut args = vec![
        "attribute",
        input.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--normalize-weights",
    ];
    args.extend_from_slice(extra);
    riskattrib(&args)
}

#[test]
fn attribution_report_is_coherent() {
    let v = json(&attribute(&["--sims", "2000", "--seed", "5"]));
    assert_eq!(v["sims"], 2000);
    let sources = v["sources"].as_array().unwrap();
    assert_eq!(sources.len(), 5);
    let mut mean_total = 0.0;
    for s in sources {
        let c = &s["cctr"];
        let (pos, neg) = (c["prob_positive"].as_f64().unwrap(), c["prob_negative"].as_f64().unwrap());
        assert!((0.0..=1.0).contains(&pos) && (0.0..=1.0).contains(&neg));
        assert!(pos + neg <= 1.0 + 1e-12);
        assert!(c["ci_lo"].as_f64().unwrap() <= c["ci_hi"].as_f64().unwrap());
        mean_total += c["mean"].as_f64().unwrap();
    }
    let vol = v["total_volatility"]["mean"].as_f64().unwrap();
    assert!((mean_total - vol).abs() <= 1e-10 * vol);
    let tail = &v["tail_risk"];
    assert!(tail["esf"].as_f64().unwrap() >= tail["var"].as_f64().unwrap());
}

#[test]
fn attribution_is_independent_of_thread_count() {
    let one = attribute(&["--sims", "3000", "--threads", "1"]);
    let four = attribute(&["--sims", "3000", "--threads", "4"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn thread_env_var_must_be_a_count() {
    let out = Command::new(env!("CARGO_BIN_EXE_riskattrib"))
        .args(["validate", "--quick"])
        .env("RISKATTRIB_THREADS", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("RISKATTRIB_THREADS"));
}

#[test]
fn too_few_simulations_rejected() {
    assert_eq!(attribute(&["--sims", "0"]).status.code(), Some(2));
}

#[test]
fn unnormalized_weights_rejected_without_flag() {
    let input = data("indices_n3.csv");
    let weights = data("adhoc_weights.csv");
    let out = riskattrib(&["attribute", input.to_str().unwrap(), "--weights", weights.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimized_attribution_holds_a_simplex_portfolio() {
    let input = data("indices_n3.csv");
    let v = json(&riskattrib(&["attribute", input.to_str().unwrap(), "--optimize", "--estimator", "blw", "--sims", "500"]));
    assert_eq!(v["weights_from"], "optimized:blw");
    let total: f64 = v["sources"].as_array().unwrap().iter().map(|s| s["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn histograms_count_every_draw() {
    let dir = tempfile::tempdir().unwrap();
    let out = attribute(&["--sims", "1000", "--histograms", dir.path().to_str().unwrap(), "--bins", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 6);
    for f in files {
        let mut rdr = csv::Reader::from_path(&f).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["bin_lo", "bin_hi", "count"]);
        let total: u64 = rdr.records().map(|r| r.unwrap()[2].parse::<u64>().unwrap()).sum();
        assert_eq!(total, 1000, "{}", f.display());
    }
}

#[test]
fn backtest_reports_every_period_after_the_first() {
    let input = data("weekly_halfyears.csv");
    let out = riskattrib(&["backtest", input.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_reader(&out.stdout[..]);
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["Period", "Return", "Risk", "Sharpe", "Portfolio Size", "Market Size", "Ex-ante Risk"]
    );
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "2010 (Jul-Dec)");
    for r in &rows {
        let size: usize = r[4].parse().unwrap();
        let market: usize = r[5].parse().unwrap();
        assert!(size >= 1 && size <= market);
    }
}

#[test]
fn backtest_estimators_share_the_layout() {
    let input = data("weekly_halfyears.csv");
    let dhd = riskattrib(&["backtest", input.to_str().unwrap(), "--estimator", "dhd"]);
    let lw = riskattrib(&["backtest", input.to_str().unwrap(), "--estimator", "lw13"]);
    let lines = |o: &Output| String::from_utf8(o.stdout.clone()).unwrap().lines().count();
    assert_eq!(lines(&dhd), lines(&lw));
}

#[test]
fn backtest_needs_two_periods() {
    let input = data("weekly_halfyears.csv");
    let out = riskattrib(&["backtest", input.to_str().unwrap(), "--ranges", "2010-01-01:2010-06-30"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_flags_only_the_diagonal_risk_formula() {
    let out = riskattrib(&["validate", "--quick"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let failing: Vec<_> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|l| l.contains("beta^2 formula")), "{failing:?}");
    assert_eq!(riskattrib(&["validate", "--quick"]).stdout, out.stdout);
}
