//! End-to-end runs of the `bjel` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bjel_cli::AnalysisOutput;
use bjel_core::bjel::{LikelihoodSetup, Method, SurveySample};
use bjel_core::design::{draw_sample, DesignKind};
use bjel_core::simharness::{generate_population, PopulationSpec};
use bjel_core::ustat::{jackknife_pseudovalues, Kernel};

fn bjel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bjel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

/// Compares against `tests/golden/<name>`; set `BJEL_UPDATE_GOLDEN=1` to rewrite.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("BJEL_UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn sample_probabilities_follow_sizes() {
    let o = bjel(&[
        "sample",
        "--population-size",
        "5",
        "--sample-size",
        "2",
        "--sizes",
        "1,1,1,1,2",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(text.lines().next(), Some("index,pi,d"));
    assert_eq!(rows.len(), 2);
    for row in rows {
        let f: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        let expected = if f[0] == 4.0 { 2.0 / 3.0 } else { 1.0 / 3.0 };
        assert!((f[1] - expected).abs() < 1e-12, "{row}");
        assert!((f[2] * f[1] - 1.0).abs() < 1e-12, "{row}");
    }
}

#[test]
fn sample_is_reproducible() {
    let args = [
        "sample",
        "--population-size",
        "50",
        "--sample-size",
        "6",
        "--seed",
        "11",
    ];
    let a = bjel(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, bjel(&args).stdout);
    golden("sample_srswor.csv", &stdout(&a));
}

#[test]
fn sample_reads_sizes_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.csv");
    fs::write(&path, "z\n1\n1\n1\n1\n2\n").unwrap();
    let from_file = bjel(&[
        "sample",
        "--population-size",
        "5",
        "--sample-size",
        "2",
        "--sizes",
        path.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    let inline = bjel(&[
        "sample",
        "--population-size",
        "5",
        "--sample-size",
        "2",
        "--sizes",
        "1,1,1,1,2",
        "--seed",
        "3",
    ]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, inline.stdout);
}

#[test]
fn sample_rejects_full_population() {
    let o = bjel(&[
        "sample",
        "--population-size",
        "5",
        "--sample-size",
        "5",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = bjel(&[
        "sample",
        "--population-size",
        "5",
        "--sample-size",
        "2",
        "--sizes",
        "1,1,1,30,1",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_arguments_exit_2() {
    assert_eq!(bjel(&["sample", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(
        bjel(&["analyze", "--input", "x.csv", "--kernel", "mean", "--method", "nope"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_missing_config_names_the_path() {
    let o = bjel(&[
        "simulate",
        "--config",
        "/nonexistent/run.cfg",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("/nonexistent/run.cfg"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_single_replicate_smoke() {
    let cfg = data("smoke.cfg");
    let o = bjel(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--replicates",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("B=1 used=1"));
}

#[test]
fn simulate_table_and_json_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let cfg = data("smoke.cfg");
    let o = bjel(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    golden("smoke_seed5.txt", &table);
    assert_eq!(
        fs::read_to_string(out.with_extension("txt")).unwrap(),
        table
    );
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["replicates"], 8);
    assert_eq!(json["metrics"].as_array().unwrap().len(), 6);

    let cfg_json = data("smoke.json");
    let o2 = bjel(&[
        "simulate",
        "--config",
        cfg_json.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(stdout(&o2), table);
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(
        &path,
        "rho = 0.3\nsample_size = 20\nkernel = pwm\ncolour = blue\n",
    )
    .unwrap();
    let o = bjel(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

/// One Rao-Sampford sample from a seeded population as `y,w,x` rows.
fn survey_csv(dir: &Path) -> (PathBuf, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let pop = generate_population(&PopulationSpec {
        target_rho: 0.5,
        seed: 21,
        ..PopulationSpec::default()
    })
    .unwrap();
    let draw = draw_sample(&pop.design(DesignKind::RaoSampford, 80), 22).unwrap();
    let y: Vec<f64> = draw.indices.iter().map(|&i| pop.y[i]).collect();
    let x: Vec<f64> = draw.indices.iter().map(|&i| pop.x[i]).collect();
    let w = draw.design_weights.clone();
    let mut text = String::from("y,w,x\n");
    for i in 0..y.len() {
        text.push_str(&format!("{},{},{}\n", y[i], w[i], x[i]));
    }
    let path = dir.join("survey.csv");
    fs::write(&path, text).unwrap();
    let total = pop.x.iter().sum::<f64>();
    (path, y, w, x, total)
}

fn parse_output(o: &Output) -> AnalysisOutput {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn analyze_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let (path, y, w, x, total) = survey_csv(dir.path());
    let o = bjel(&[
        "analyze",
        "--input",
        path.to_str().unwrap(),
        "--kernel",
        "variance",
        "--method",
        "bjel_d",
        "--weight-col",
        "w",
        "--aux-cols",
        "x",
        "--aux-totals",
        &total.to_string(),
    ]);
    let got = parse_output(&o);

    let pv = jackknife_pseudovalues(&y, &Kernel::variance()).unwrap();
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let mean = [total / w.iter().sum::<f64>()];
    let s = SurveySample {
        values: &pv.values,
        design_weights: &w,
        incl_probs: None,
        aux: Some((&rows, &mean)),
        calibration_weights: None,
    };
    let setup = LikelihoodSetup::design(&s).unwrap();
    let ci = setup.interval(Method::BjelD, 0.95).unwrap();
    assert_eq!(got.method, Method::BjelD);
    assert_eq!(got.n, y.len());
    assert!((got.lower - ci.lower).abs() < 1e-10);
    assert!((got.upper - ci.upper).abs() < 1e-10);
    assert!((got.estimate - setup.estimate().unwrap()).abs() < 1e-10);
    assert!((got.scale_used - setup.scale).abs() < 1e-10);
    assert!(got.lower < got.estimate && got.estimate < got.upper);
}

#[test]
fn analyze_all_methods_and_text_format() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ..) = survey_csv(dir.path());
    let p = path.to_str().unwrap();
    for m in ["jel", "bjel", "jel_w", "bjel_w"] {
        let o = bjel(&[
            "analyze",
            "--input",
            p,
            "--kernel",
            "pwm",
            "--method",
            m,
            "--weight-col",
            "w",
        ]);
        let out = parse_output(&o);
        assert!(out.lower < out.upper, "{m}");
    }
    let o = bjel(&[
        "analyze", "--input", p, "--kernel", "mean", "--method", "bjel", "--format", "text",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("method    BJEL\nn         80\n"), "{text}");
    assert!(text.contains("95% CI"));
}

#[test]
fn analyze_equal_weights_without_aux_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ..) = survey_csv(dir.path());
    let p = path.to_str().unwrap();
    let a = parse_output(&bjel(&[
        "analyze", "--input", p, "--kernel", "variance", "--method", "bjel",
    ]));
    let d = parse_output(&bjel(&[
        "analyze", "--input", p, "--kernel", "variance", "--method", "bjel_d",
    ]));
    assert!((a.lower - d.lower).abs() < 1e-12 && (a.upper - d.upper).abs() < 1e-12);
    assert!((a.scale_used - 80.0).abs() < 1e-12);
}

#[test]
fn analyze_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,w\n1,1\n2,x\n3,1\n").unwrap();
    let p = bad.to_str().unwrap();
    let o = bjel(&[
        "analyze",
        "--input",
        p,
        "--kernel",
        "mean",
        "--method",
        "bjel",
        "--weight-col",
        "w",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"));
    let o = bjel(&[
        "analyze", "--input", p, "--kernel", "mean", "--method", "bjel", "--y-col", "z",
    ]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&bad, "y,w\n1,1\n2,0\n3,1\n").unwrap();
    let o = bjel(&[
        "analyze",
        "--input",
        p,
        "--kernel",
        "mean",
        "--method",
        "bjel",
        "--weight-col",
        "w",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_constant_response_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("const.csv");
    fs::write(&path, "y\n3\n3\n3\n3\n3\n3\n").unwrap();
    let o = bjel(&[
        "analyze",
        "--input",
        path.to_str().unwrap(),
        "--kernel",
        "mean",
        "--method",
        "bjel",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
