use std::fs;
use std::path::Path;
use std::process::Command;

use omnitab_core::harness::{write_config, BenchConfig, DatasetSpec, ModelName};
use omnitab_core::DatasetKind;

fn run(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_omnitab"))
        .args(args)
        .output()
        .expect("spawn omnitab");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (success, out, err) = run(args);
    assert!(success, "{args:?} failed\nstdout: {out}\nstderr: {err}");
    out
}

fn fails(args: &[&str]) -> String {
    let (success, out, err) = run(args);
    assert!(!success, "{args:?} unexpectedly succeeded\nstdout: {out}");
    err
}

/// Five categorical attributes; b and c copy a except on fixed strides, so
/// there is structure to learn but nothing random about the file.
fn cat_csv(path: &Path, n: usize) {
    let mut text = String::from("a,b,c,d,e\n");
    for i in 0..n {
        let a = i % 4;
        let b = if i % 13 == 0 { (a + 1) % 4 } else { a };
        let c = if i % 17 == 0 { (a + 2) % 4 } else { a };
        let d = i % 3;
        let e = (i * 7) % 5;
        text.push_str(&format!("v{a},v{b},v{c},w{d},u{e}\n"));
    }
    fs::write(path, text).unwrap();
}

/// Five continuous attributes tied to a common sweep variable.
fn cont_csv(path: &Path, n: usize) {
    let mut text = String::from("x,y,z,u,w\n");
    for i in 0..n {
        let t = (i as f64) / (n as f64) * 2.0 - 1.0;
        let jitter = ((i * 37) % 97) as f64 / 97.0 * 0.05;
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            t,
            2.0 * t + jitter,
            -t + jitter,
            t * t,
            ((i * 53) % 89) as f64 / 89.0
        ));
    }
    fs::write(path, text).unwrap();
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn categorical_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    cat_csv(&raw, 300);

    let out = ok(&["ingest", "--input", &path_str(&raw), "--out", &path_str(&dir.path().join("ing"))]);
    assert!(out.contains("300 instances x 5 attributes (5 categorical, 0 continuous)"), "{out}");
    assert!(dir.path().join("ing/data.csv").exists());
    assert!(dir.path().join("ing/schema.json").exists());

    let split_dir = dir.path().join("split");
    let out = ok(&[
        "split",
        "--input",
        &path_str(&dir.path().join("ing/data.csv")),
        "--schema",
        &path_str(&dir.path().join("ing/schema.json")),
        "--ratio",
        "0.8",
        "--seed",
        "7",
        "--out",
        &path_str(&split_dir),
    ]);
    assert!(out.contains("240 train / 60 test"), "{out}");

    let model_dir = dir.path().join("model");
    let out = ok(&[
        "train",
        "--model",
        "chordal",
        "--input",
        &path_str(&split_dir.join("train.csv")),
        "--schema",
        &path_str(&split_dir.join("schema.json")),
        "--kind",
        "categorical",
        "--seed",
        "7",
        "--out",
        &path_str(&model_dir),
    ]);
    assert!(out.contains("trained chordal on 240 instances"), "{out}");
    assert!(model_dir.join("model.json").exists());

    let imp = dir.path().join("imp");
    let out = ok(&[
        "impute",
        "--model",
        &path_str(&model_dir),
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--schema",
        &path_str(&split_dir.join("schema.json")),
        "--rate",
        "0.2",
        "--seed",
        "7",
        "--out",
        &path_str(&imp),
    ]);
    // rate 0.2 on 5 attributes masks ceil(1) = 1 cell per instance.
    assert!(out.contains("predicted 60 cells over 60 instances at rate 0.2"), "{out}");
    assert!(imp.join("plan.txt").exists());

    let eval = dir.path().join("eval");
    let out = ok(&[
        "evaluate",
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--schema",
        &path_str(&split_dir.join("schema.json")),
        "--plan",
        &path_str(&imp.join("plan.txt")),
        "--preds",
        &path_str(&imp.join("predictions.csv")),
        "--metric",
        "wapmc",
        "--out",
        &path_str(&eval),
    ]);
    let value: f64 = out
        .split("wapmc = ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap_or_else(|| panic!("no wapmc in {out}"))
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&value), "wapmc {value} out of range");
    assert!(out.contains("over 60 cells"), "{out}");
    let per_attr = fs::read_to_string(eval.join("per_attr.csv")).unwrap();
    assert!(per_attr.starts_with("attr,name,m_j,value,sigma\n"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metric"], "wapmc");
    assert_eq!(report["m"], 60);
}

#[test]
fn impute_replays_a_stored_plan_identically() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    cat_csv(&raw, 120);
    let model_dir = dir.path().join("model");
    ok(&[
        "train", "--model", "most_freq", "--input", &path_str(&raw), "--out", &path_str(&model_dir),
    ]);

    let first = dir.path().join("first");
    ok(&[
        "impute",
        "--model",
        &path_str(&model_dir),
        "--input",
        &path_str(&raw),
        "--rate",
        "0.4",
        "--seed",
        "11",
        "--out",
        &path_str(&first),
    ]);
    let replay = dir.path().join("replay");
    ok(&[
        "impute",
        "--model",
        &path_str(&model_dir),
        "--input",
        &path_str(&raw),
        "--plan",
        &path_str(&first.join("plan.txt")),
        "--seed",
        "999",
        "--out",
        &path_str(&replay),
    ]);
    let a = fs::read_to_string(first.join("predictions.csv")).unwrap();
    let b = fs::read_to_string(replay.join("predictions.csv")).unwrap();
    assert_eq!(a, b);
    // replay draws no plan of its own
    assert!(!replay.join("plan.txt").exists());

    let err = fails(&[
        "impute",
        "--model",
        &path_str(&model_dir),
        "--input",
        &path_str(&raw),
        "--out",
        &path_str(&dir.path().join("neither")),
    ]);
    assert!(err.contains("one of --plan or --rate"), "{err}");
}

#[test]
fn continuous_pipeline_with_discretizer_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    cont_csv(&raw, 250);
    let split_dir = dir.path().join("split");
    ok(&[
        "split", "--input", &path_str(&raw), "--ratio", "0.8", "--seed", "3", "--out",
        &path_str(&split_dir),
    ]);

    let disc_dir = dir.path().join("disc");
    let out = ok(&[
        "discretize",
        "--input",
        &path_str(&split_dir.join("train.csv")),
        "--bins",
        "5",
        "--out",
        &path_str(&disc_dir),
    ]);
    assert!(out.contains("binned 5 continuous attributes into <= 5 bins"), "{out}");
    let applied = dir.path().join("disc_test");
    ok(&[
        "discretize",
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--apply",
        &path_str(&disc_dir.join("discretizer.json")),
        "--out",
        &path_str(&applied),
    ]);
    let binned = fs::read_to_string(applied.join("binned.csv")).unwrap();
    assert!(binned.starts_with("x,y,z,u,w\n"));

    let model_dir = dir.path().join("median");
    ok(&[
        "train",
        "--model",
        "median",
        "--input",
        &path_str(&split_dir.join("train.csv")),
        "--kind",
        "continuous",
        "--out",
        &path_str(&model_dir),
    ]);
    let imp = dir.path().join("imp");
    ok(&[
        "impute",
        "--model",
        &path_str(&model_dir),
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--rate",
        "0.4",
        "--seed",
        "5",
        "--out",
        &path_str(&imp),
    ]);
    let out = ok(&[
        "evaluate",
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--plan",
        &path_str(&imp.join("plan.txt")),
        "--preds",
        &path_str(&imp.join("predictions.csv")),
        "--metric",
        "wnrmse",
        "--train",
        &path_str(&split_dir.join("train.csv")),
    ]);
    let value: f64 = out
        .split("wnrmse = ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap_or_else(|| panic!("no wnrmse in {out}"))
        .parse()
        .unwrap();
    // constant imputation on a sweep: near 1 by construction
    assert!(value > 0.4 && value < 2.0, "wnrmse {value}");

    let err = fails(&[
        "evaluate",
        "--input",
        &path_str(&split_dir.join("test.csv")),
        "--plan",
        &path_str(&imp.join("plan.txt")),
        "--preds",
        &path_str(&imp.join("predictions.csv")),
        "--metric",
        "wnrmse",
    ]);
    assert!(err.contains("--train is required"), "{err}");
}

#[test]
fn bench_runs_from_config_and_ranks_rebuild_matches() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("chain.csv");
    cat_csv(&data, 200);
    let out_dir = dir.path().join("bench_out");
    let mut cfg = BenchConfig::new(42, &out_dir);
    cfg.datasets.push(DatasetSpec {
        name: "chain".into(),
        path: data,
        kind: DatasetKind::Categorical,
        schema: None,
    });
    cfg.models = vec![ModelName::MostFreq, ModelName::Chordal];
    cfg.test_rates = vec![0.2, 0.4];
    cfg.timings = false;
    let cfg_path = dir.path().join("bench.json");
    write_config(&cfg, &cfg_path).unwrap();

    let out = ok(&["bench", "--config", &path_str(&cfg_path)]);
    assert!(out.contains("chain / most_freq @ 0.2: wapmc ="), "{out}");
    assert!(out.contains("chain / chordal @ 0.4: wapmc ="), "{out}");
    for f in ["metrics.csv", "ranks.csv", "ranks.md", "cd_data.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }

    // a seed override lands in a different directory but the same protocol
    let out2_dir = dir.path().join("bench_out2");
    ok(&[
        "bench",
        "--config",
        &path_str(&cfg_path),
        "--seed",
        "42",
        "--chunks",
        "3",
        "--out",
        &path_str(&out2_dir),
    ]);
    let a = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let b = fs::read_to_string(out2_dir.join("metrics.csv")).unwrap();
    assert_eq!(a, b, "same seed and config must reproduce metrics exactly");

    let ranks_dir = dir.path().join("ranks_rebuilt");
    ok(&[
        "ranks",
        "--input",
        &path_str(&out_dir.join("metrics.csv")),
        "--out",
        &path_str(&ranks_dir),
    ]);
    for f in ["ranks.csv", "ranks.md", "cd_data.csv"] {
        let x = fs::read_to_string(out_dir.join(f)).unwrap();
        let y = fs::read_to_string(ranks_dir.join(f)).unwrap();
        assert_eq!(x, y, "{f} rebuilt from metrics.csv must match the bench output");
    }
}

#[test]
fn bench_reports_incomplete_runs_through_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let mut cfg = BenchConfig::new(1, &out_dir);
    cfg.datasets.push(DatasetSpec {
        name: "ghost".into(),
        path: dir.path().join("missing.csv"),
        kind: DatasetKind::Categorical,
        schema: None,
    });
    cfg.models = vec![ModelName::MostFreq];
    let cfg_path = dir.path().join("bench.json");
    write_config(&cfg, &cfg_path).unwrap();

    let err = fails(&["bench", "--config", &path_str(&cfg_path)]);
    assert!(err.contains("run incomplete"), "{err}");
    // the failed run still leaves a manifest behind
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn plt_check_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "plt-check",
        "--seed",
        "1",
        "--replicates",
        "3",
        "--grid",
        "1000,10000",
        "--out",
        &path_str(dir.path()),
    ]);
    assert!(out.contains("median error shrinks along the grid: yes"), "{out}");
    assert!(out.contains("estimators agree at n = 10000"), "{out}");
    let report = fs::read_to_string(dir.path().join("plt_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 7, "header + 2 sizes x 3 seeds");
    assert!(report.starts_with("n,seed,pl_err,ml_err,pl_ml_gap\n"));
}

#[test]
fn bad_arguments_exit_nonzero() {
    let (success, _, _) = run(&[]);
    assert!(!success);
    let err = fails(&["train", "--model", "nonsense", "--input", "x.csv", "--out", "y"]);
    assert!(err.contains("unknown model"), "{err}");
    let err = fails(&["train", "--model", "median", "--input", "x.csv", "--kind", "weird", "--out", "y"]);
    assert!(err.contains("unknown dataset kind"), "{err}");
}
