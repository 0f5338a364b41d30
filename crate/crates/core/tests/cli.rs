use std::path::Path;
use std::process::{Command, Output};

use lyapnet::pipeline::{load_splits, Manifest};
use lyapnet::sweep::read_sweep_csv;

fn lyapnet(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapnet"))
        .args(args)
        .env("LYAPNET_OUT", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn failed_mentioning(out: &Output, needle: &str) {
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success(), "expected failure");
    assert!(err.contains(needle), "stderr lacks '{needle}':\n{err}");
}

fn manifest(path: &Path) -> Manifest {
    Manifest::parse(&std::fs::read_to_string(path).unwrap())
}

const TINY: &[&str] = &[
    "--pool-size",
    "40",
    "--n-train",
    "16",
    "--n-val",
    "6",
    "--n-test",
    "6",
    "--measure-time",
    "100",
];

#[test]
fn full_pipeline_from_config_file() {
    let root = tempfile::tempdir().unwrap();
    let conf = root.path().join("run.conf");
    std::fs::write(
        &conf,
        "system = lorenz\nregime = random\nprofile = desk\nseed = 3\nepochs = 2\n",
    )
    .unwrap();
    let conf = conf.to_str().unwrap();
    let mut gen = vec!["gen-data", "--config", conf, "--seed", "7"];
    gen.extend_from_slice(TINY);
    ok(&lyapnet(root.path(), &gen));

    let data = root.path().join("data");
    let splits = load_splits(&data).unwrap();
    assert_eq!((splits.train.len(), splits.val.len(), splits.test.len()), (16, 6, 6));
    let dm = manifest(&data.join("dataset.manifest"));
    assert_eq!(dm.get("seed"), Some("7"));
    assert_eq!(dm.get("command"), Some("gen-data"));
    assert!(!data.join(".lyapnet.lock").exists());

    ok(&lyapnet(
        root.path(),
        &["train", "--config", conf, "--seed", "7", "--epochs", "1"],
    ));
    let models = root.path().join("models");
    let mm = manifest(&models.join("models.manifest"));
    let files: Vec<&str> = mm.get("model_files").unwrap().split(',').collect();
    assert_eq!(files.len(), 10);
    for f in &files {
        assert!(models.join(f).exists());
    }
    let seeds: std::collections::BTreeSet<&str> = mm.get("model_seeds").unwrap().split(',').collect();
    assert_eq!(seeds.len(), 10);
    assert_eq!(mm.get("epochs"), Some("1"));
    let history = std::fs::read_to_string(models.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 10);
    assert!(history.starts_with("model,epoch,train_loss,val_loss\n"));

    let pred = root.path().join("results/predict_lorenz_plane-50x50.csv");
    ok(&lyapnet(
        root.path(),
        &["predict-sweep", "--config", conf, "--plane", "50x50"],
    ));
    let res = read_sweep_csv(&pred).unwrap();
    assert_eq!(res.cells.len(), 2500);
    let text = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2500);
    let sm = manifest(&root.path().join("results/predict_lorenz_plane-50x50.csv.manifest"));
    assert_eq!(sm.get("sweep_seed"), Some("3"));
    assert!(sm.get("ensemble_model_seeds").is_some());

    // Small grid with truth, then the histogram and the report.
    let with_truth = [
        "predict-sweep",
        "--with-truth",
        "--config",
        conf,
        "--line",
        "2.5",
        "--points",
        "6",
        "--r-range",
        "1:40",
    ];
    ok(&lyapnet(root.path(), &with_truth));
    let line = root.path().join("results/predict_lorenz_line-b2.5-n6.csv");
    let hist = root.path().join("results/hist.csv");
    ok(&lyapnet(
        root.path(),
        &[
            "error-analysis",
            "--pred",
            line.to_str().unwrap(),
            "--output",
            hist.to_str().unwrap(),
        ],
    ));
    let rows: Vec<String> = std::fs::read_to_string(&hist)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 3 * 5 * 4);

    let out = lyapnet(root.path(), &["report", "--config", conf]);
    ok(&out);
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("test Huber"), "{report}");
    assert!(report.contains("over 10 models"), "{report}");
    assert!(root.path().join("results/report.txt").exists());
}

#[test]
fn classical_then_merge_for_error_analysis() {
    let root = tempfile::tempdir().unwrap();
    let mut gen = vec!["gen-data"];
    gen.extend_from_slice(TINY);
    ok(&lyapnet(root.path(), &gen));
    ok(&lyapnet(root.path(), &["train", "--epochs", "1", "--models", "2"]));
    let grid = ["--plane", "3x2", "--r-range", "5:30"];
    let mut classical = vec!["classical-sweep"];
    classical.extend_from_slice(&grid);
    ok(&lyapnet(root.path(), &classical));
    let mut pred = vec!["predict-sweep"];
    pred.extend_from_slice(&grid);
    ok(&lyapnet(root.path(), &pred));
    let dir = root.path().join("results");
    let p = dir.join("predict_lorenz_plane-3x2.csv");
    let t = dir.join("classical_lorenz_plane-3x2.csv");
    let p = p.to_str().unwrap();
    failed_mentioning(
        &lyapnet(root.path(), &["error-analysis", "--pred", p]),
        "classical-sweep",
    );
    ok(&lyapnet(
        root.path(),
        &["error-analysis", "--pred", p, "--truth", t.to_str().unwrap()],
    ));
    assert!(dir.join("predict_lorenz_plane-3x2_errors.csv").exists());
}

#[test]
fn missing_inputs_name_the_producing_command() {
    let root = tempfile::tempdir().unwrap();
    failed_mentioning(&lyapnet(root.path(), &["train"]), "gen-data");
    failed_mentioning(&lyapnet(root.path(), &["predict-sweep", "--line", "2"]), "train");
    failed_mentioning(&lyapnet(root.path(), &["report"]), "train");
}

#[test]
fn failures_leave_no_partial_outputs() {
    let root = tempfile::tempdir().unwrap();
    let out = lyapnet(
        root.path(),
        &[
            "gen-data",
            "--pool-size",
            "5",
            "--n-train",
            "10",
            "--measure-time",
            "100",
        ],
    );
    failed_mentioning(&out, "shortage");
    let data = root.path().join("data");
    let left: Vec<_> = std::fs::read_dir(&data).unwrap().collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn bad_config_and_held_lock_fail() {
    let root = tempfile::tempdir().unwrap();
    let conf = root.path().join("bad.conf");
    std::fs::write(&conf, "model_seeds = 4,4\n").unwrap();
    failed_mentioning(
        &lyapnet(root.path(), &["train", "--config", conf.to_str().unwrap()]),
        "distinct",
    );
    let results = root.path().join("results");
    std::fs::create_dir_all(&results).unwrap();
    std::fs::write(results.join(".lyapnet.lock"), "1").unwrap();
    failed_mentioning(
        &lyapnet(root.path(), &["classical-sweep", "--line", "2", "--points", "2"]),
        "in use",
    );
}
