use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sparsefeat::sparse::FeatureMask;
use sparsefeat::tensorio::{self, Matrix};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparsefeat"));
    c.env_remove("SPARSEFEAT_OUT_DIR");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn synth(dir: &Path, n: &str, d: &str, informative: &str) {
    let o = run(
        &[
            "synth",
            "--n-samples",
            n,
            "--n-features",
            d,
            "--n-informative",
            informative,
            "--seed",
            "3",
            "--out-dir",
            "data",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lasso_writes_coefficients_and_mask() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "80", "30", "4");
    let o = run(
        &[
            "lasso",
            "--lambda",
            "0.01",
            "--features",
            "data/features.spfm",
            "--labels",
            "data/labels.txt",
            "--center",
            "--out-dir",
            "fit",
        ],
        t.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let coef = tensorio::load_matrix_bin(t.path().join("fit/coef.spfm")).unwrap();
    assert_eq!(coef.shape(), (1, 30));
    let mask = FeatureMask::load(t.path().join("fit/mask.txt"), None).unwrap();
    let nonzero: Vec<usize> = (0..30).filter(|&j| coef.get(0, j).abs() > 1e-12).collect();
    assert_eq!(mask.selected(), nonzero.as_slice());
    assert!(!mask.is_empty());
}

#[test]
fn pgd_writes_monotone_objective_history() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "60", "40", "5");
    let o = run(
        &[
            "pgd",
            "--lambda",
            "0.1",
            "--algo",
            "ista",
            "--features",
            "data/features.spfm",
            "--targets",
            "data/targets.csv",
            "--out-dir",
            "fit",
        ],
        t.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("fit/objective_history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,objective"));
    let hist: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(hist.len() > 1);
    assert!(hist.windows(2).all(|w| w[1] <= w[0]));
    assert!(t.path().join("fit/coef.spfm").exists() && t.path().join("fit/mask.txt").exists());
}

#[test]
fn eval_reports_hand_example() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("t.txt"), "0\n0\n1\n1\n").unwrap();
    fs::write(t.path().join("p.txt"), "0\n1\n1\n1\n").unwrap();
    let o = run(&["eval", "--truth", "t.txt", "--pred", "p.txt"], t.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["accuracy"], 0.75);
    assert_eq!(v["f1"], 0.8);
    assert_eq!(v["confusion"]["tp"], 2);
}

#[test]
fn exit_codes_separate_usage_from_io() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["lasso", "--lambda", "0.1"], t.path())), 1);
    let o = run(
        &["eval", "--truth", "missing.txt", "--pred", "missing.txt"],
        t.path(),
    );
    assert_eq!(code(&o), 2);
    fs::write(t.path().join("bad.spfm"), b"NOPE").unwrap();
    fs::write(t.path().join("y.txt"), "0\n1\n").unwrap();
    let o = run(
        &[
            "lasso",
            "--lambda",
            "0.1",
            "--features",
            "bad.spfm",
            "--labels",
            "y.txt",
        ],
        t.path(),
    );
    assert_eq!(code(&o), 2);
    // a well-formed but mismatched pair is a contract violation
    tensorio::save_matrix_bin(&Matrix::zeros(3, 2), t.path().join("x.spfm")).unwrap();
    let o = run(
        &[
            "lasso",
            "--lambda",
            "0.1",
            "--features",
            "x.spfm",
            "--labels",
            "y.txt",
        ],
        t.path(),
    );
    assert_eq!(code(&o), 1);
    let o = run(
        &[
            "lasso",
            "--lambda",
            "-1",
            "--features",
            "x.spfm",
            "--targets",
            "x.spfm",
        ],
        t.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn out_dir_defaults_to_environment() {
    let t = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "synth",
            "--n-samples",
            "10",
            "--n-features",
            "4",
            "--n-informative",
            "1",
        ])
        .env("SPARSEFEAT_OUT_DIR", "from-env")
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(t.path().join("from-env/features.spfm").exists());
}

#[test]
fn composable_subcommands() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "60", "12", "3");
    let steps: &[&[&str]] = &[
        &[
            "split",
            "--labels",
            "data/labels.txt",
            "--seed",
            "1",
            "--train-out",
            "tr.txt",
            "--test-out",
            "te.txt",
        ],
        &[
            "standardize",
            "--input",
            "data/features.spfm",
            "--output",
            "z.spfm",
            "--stats-out",
            "stats.spfm",
        ],
        &[
            "standardize",
            "--input",
            "data/features.spfm",
            "--output",
            "z2.spfm",
            "--stats",
            "stats.spfm",
        ],
        &[
            "oversample",
            "--features",
            "z.spfm",
            "--labels",
            "data/labels.txt",
            "--out-features",
            "o.spfm",
            "--out-labels",
            "o.txt",
        ],
        &[
            "enet",
            "--alpha",
            "0.01",
            "--l1-ratio",
            "0.5",
            "--features",
            "z.spfm",
            "--labels",
            "data/labels.txt",
            "--center",
            "--out-dir",
            "en",
        ],
        &[
            "select",
            "--input",
            "z.spfm",
            "--mask",
            "en/mask.txt",
            "--output",
            "sel.spfm",
        ],
        &[
            "pca",
            "--input",
            "z.spfm",
            "--k",
            "3",
            "--model-out",
            "pca",
            "--output",
            "p.csv",
        ],
        &[
            "pca", "--input", "z.spfm", "--model", "pca", "--output", "p2.csv",
        ],
        &[
            "kpca", "--input", "z.spfm", "--k", "3", "--output", "kp.spfm",
        ],
        &[
            "knn",
            "--train-features",
            "sel.spfm",
            "--train-labels",
            "data/labels.txt",
            "--query",
            "sel.spfm",
            "--k",
            "1",
            "--output",
            "pred.txt",
        ],
        &[
            "relevance",
            "--mask",
            "en/mask.txt",
            "--height",
            "2",
            "--width",
            "2",
            "--channels",
            "3",
            "--output",
            "rel.csv",
        ],
    ];
    for s in steps {
        let o = run(s, t.path());
        assert_eq!(code(&o), 0, "{s:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let p = |f: &str| t.path().join(f);
    let tr = tensorio::load_labels(p("tr.txt")).unwrap();
    let te = tensorio::load_labels(p("te.txt")).unwrap();
    assert_eq!(tr.len() + te.len(), 60);
    assert_eq!(
        fs::read(p("z.spfm")).unwrap(),
        fs::read(p("z2.spfm")).unwrap()
    );
    assert_eq!(
        fs::read(p("p.csv")).unwrap(),
        fs::read(p("p2.csv")).unwrap()
    );
    let o = tensorio::load_labels(p("o.txt")).unwrap();
    assert_eq!(o.counts()[0], o.counts()[1]);
    // 1-NN on the training set itself reproduces the labels
    let truth = tensorio::load_labels(p("data/labels.txt")).unwrap();
    assert_eq!(tensorio::load_labels(p("pred.txt")).unwrap(), truth);
    let grid = tensorio::load_matrix_csv(p("rel.csv"), false).unwrap();
    let mask = FeatureMask::load(p("en/mask.txt"), None).unwrap();
    assert_eq!(grid.shape(), (2, 2));
    assert_eq!(grid.values().iter().sum::<f64>(), mask.len() as f64);
}

fn write_config(dir: &Path, selector: &str, out: &str) -> String {
    let cfg = format!(
        r#"{{"features": "data/features.spfm", "labels": "data/labels.txt", "seed": 11,
            "selector": {selector}, "relevance_shape": {{"height": 5, "width": 4, "channels": 2}},
            "output_dir": "{out}"}}"#
    );
    let name = format!("{out}.json");
    fs::write(dir.join(&name), cfg).unwrap();
    name
}

#[test]
fn run_is_deterministic_and_writes_artifacts() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "120", "40", "6");
    for out in ["a", "b"] {
        let cfg = write_config(t.path(), r#"{"kind": "lasso", "lambda": 0.01}"#, out);
        let o = run(&["run", "--config", &cfg], t.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "mask.txt",
        "coef.spfm",
        "objective_history.csv",
        "relevance.csv",
        "predictions.txt",
        "stats.spfm",
    ] {
        let a = fs::read(t.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
    let report = |d: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(t.path().join(d).join("report.json")).unwrap(),
        )
        .unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v["config"].as_object_mut().unwrap().remove("output_dir");
        v
    };
    let (a, b) = (report("a"), report("b"));
    assert_eq!(a, b);
    let coef = tensorio::load_matrix_bin(t.path().join("a/coef.spfm")).unwrap();
    let support = coef.values().iter().filter(|c| c.abs() > 1e-12).count();
    assert_eq!(a["selected_features"], support);
    assert_eq!(a["input_features"], 40);
    assert_eq!(a["config"]["knn_k"], 5);
    assert!(a["evaluation"]["accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn run_failure_leaves_no_artifacts() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "60", "10", "2");
    let cfg = write_config(t.path(), r#"{"kind": "lasso", "lambda": 1000.0}"#, "out");
    let o = run(&["run", "--config", &cfg], t.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("empty feature selection") && err.contains("select"),
        "{err}"
    );
    let out = t.path().join("out");
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());

    let cfg = write_config(t.path(), r#"{"kind": "nonsense"}"#, "out");
    assert_eq!(code(&run(&["run", "--config", &cfg], t.path())), 1);
    fs::write(
        t.path().join("missing.json"),
        r#"{"features": "nope.spfm", "labels": "data/labels.txt", "selector": {"kind": "none"}}"#,
    )
    .unwrap();
    assert_eq!(
        code(&run(&["run", "--config", "missing.json"], t.path())),
        2
    );
}

#[test]
fn run_from_annotations() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "40", "6", "2");
    let labels = tensorio::load_labels(t.path().join("data/labels.txt")).unwrap();
    fs::create_dir(t.path().join("ann")).unwrap();
    let mut manifest = String::new();
    for (i, &l) in labels.as_slice().iter().enumerate() {
        manifest.push_str(&format!("img{i:03}\n"));
        // positives get a box; negatives alternate between empty and absent files
        if l == 1 {
            fs::write(
                t.path().join(format!("ann/img{i:03}.txt")),
                "0 0.5 0.5 0.1 0.2\n",
            )
            .unwrap();
        } else if i % 2 == 0 {
            fs::write(t.path().join(format!("ann/img{i:03}.txt")), "").unwrap();
        }
    }
    fs::write(t.path().join("manifest.txt"), manifest).unwrap();
    fs::write(
        t.path().join("cfg.json"),
        r#"{"features": "data/features.spfm", "annotations": {"manifest": "manifest.txt", "dir": "ann"},
            "selector": {"kind": "none"}, "output_dir": "out"}"#,
    )
    .unwrap();
    let o = run(&["run", "--config", "cfg.json"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(r["n_samples"], 40);
}
