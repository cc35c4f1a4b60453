use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfnade::data::{planted_ratings, to_movielens_text, PlantedSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfnade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ratings_file(dir: &Path) -> PathBuf {
    let triples = planted_ratings(
        &PlantedSpec {
            users: 30,
            items: 12,
            density: 0.8,
            ..PlantedSpec::default()
        },
        3,
    )
    .unwrap();
    let file = dir.join("ratings.dat");
    std::fs::write(&file, to_movielens_text(&triples, "::")).unwrap();
    file
}

fn prepared(dir: &Path, extra: &[&str]) -> PathBuf {
    let input = ratings_file(dir);
    let out = dir.join("prep");
    let mut args = vec!["prepare", "--input", path(&input), "--out", path(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn trained(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "train",
        "--data",
        path(data),
        "--out",
        path(&out),
        "--hidden-units",
        "6",
        "--max-epochs",
        "2",
        "--batch-size",
        "8",
        "--deterministic",
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn prepare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = ratings_file(dir.path());
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["prepare", "--input", path(&input), "--out", path(&out), "--seed", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["train.cfds", "valid.cfds", "test.cfds", "id_map.json", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn prepare_item_basis_counts_items_as_entities() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepared(dir.path(), &["--basis", "item"]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entities"], summary["num_items"]);
    assert_eq!(summary["targets"], summary["num_users"]);
}

#[test]
fn rescaling_whole_ratings_warns_and_doubles_the_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = ratings_file(dir.path());
    let out = dir.path().join("prep");
    let o = run(&[
        "prepare",
        "--input",
        path(&input),
        "--out",
        path(&out),
        "--rescale-half-stars",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("warn"), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["rating_scale"], 10);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.dat");
    std::fs::write(&input, "1::2::3::0\n1::x::3::0\n").unwrap();
    let o = run(&["prepare", "--input", path(&input), "--out", path(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"lambda": 1.0, "hidden_units": 5, "max_epochs": 1}"#).unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "train",
        "--config",
        path(&cfg),
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--lambda",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["lambda"], 0.0);
    assert_eq!(resolved["hidden_units"], 5);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let first = trained(dir.path(), &data, "first", &[]);
    let again = dir.path().join("again");
    let o = run(&[
        "train",
        "--config",
        path(&first.join("resolved_config.json")),
        "--out",
        path(&again),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("model.cfnd")).unwrap(),
        std::fs::read(again.join("model.cfnd")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"hidden_unit": 5}"#).unwrap();
    let o = run(&[
        "train",
        "--config",
        path(&cfg),
        "--data",
        path(&data),
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hidden_unit"), "{}", stderr(&o));

    let o = run(&[
        "train",
        "--data",
        path(&data),
        "--out",
        path(&dir.path().join("y")),
        "--lambda",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));

    let o = run(&["train", "--nonsense"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--data",
        path(&dir.path().join("nope")),
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn numeric_blowup_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let o = run(&[
        "train",
        "--data",
        path(&data),
        "--out",
        path(&dir.path().join("o")),
        "--hidden-units",
        "4",
        "--learning-rate",
        "1e300",
        "--max-epochs",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn eval_reports_rmse_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let run_dir = trained(dir.path(), &data, "run", &[]);
    let o = run(&[
        "eval",
        "--checkpoint",
        path(&run_dir.join("model.cfnd")),
        "--data",
        path(&data),
        "--baseline",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("baseline RMSE"), "{text}");
    let record = text.lines().last().unwrap();
    let rmse: f64 = record
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("rmse="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rmse.is_finite() && rmse >= 0.0);
    assert!(record.contains("seed=1"), "{record}");
}

#[test]
fn eval_with_wrong_scale_names_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let input = dir.path().join("ratings.dat");
    let wide = dir.path().join("wide");
    let o = run(&[
        "prepare",
        "--input",
        path(&input),
        "--out",
        path(&wide),
        "--rescale-half-stars",
    ]);
    assert!(o.status.success());
    let run_dir = trained(dir.path(), &wide, "run", &[]);
    let o = run(&[
        "eval",
        "--checkpoint",
        path(&run_dir.join("model.cfnd")),
        "--data",
        path(&data),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("K=5") && err.contains("K=10"), "{err}");
}

#[test]
fn predict_prints_one_rating_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), &[]);
    let run_dir = trained(dir.path(), &data, "run", &[]);
    let ckpt = run_dir.join("model.cfnd");

    for history in ["", "1:5,4:4"] {
        let o = run(&[
            "predict",
            "--checkpoint",
            path(&ckpt),
            "--history",
            history,
            "--target",
            "7",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert_eq!(out.lines().count(), 1);
        let v: f64 = out.trim().parse().unwrap();
        assert!((1.0..=5.0).contains(&v), "{v}");
    }

    let o = run(&[
        "predict",
        "--checkpoint",
        path(&ckpt),
        "--history",
        "1:5,7:2",
        "--target",
        "7",
    ]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("dropping"), "{}", stderr(&o));

    let o = run(&[
        "predict",
        "--checkpoint",
        path(&ckpt),
        "--history",
        "1:5,999:2",
        "--target",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("999:2"), "{}", stderr(&o));
}
