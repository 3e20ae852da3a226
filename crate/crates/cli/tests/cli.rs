use std::path::Path;
use std::process::{Command, Output};

fn agentrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentrank")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = agentrank(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, split: &str, extra: &[&str]) -> String {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "gen-data", "--split", split, "--scenes", "12", "--agents", "8", "--seed", "3", "--out", out,
        "--set", "scenario.duration_s=2.0",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

const SMALL: [&str; 6] = ["--set", "cnn.epochs=1", "--set", "cnn_train_iterations=12", "--set", "gbdt.n_trees=2"];

#[test]
fn gen_data_writes_split_files() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = gen(dir.path(), "train", &["--method", "both"]);
    for f in [
        "train.scenes.jsonl",
        "train.ranking.jsonl",
        "train.summary.json",
        "train.blackbox.ranking.jsonl",
        "agreement.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("train.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 12);
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["records"], 12 * 8);
    assert_eq!(summary["config"]["scenario"]["n_agents"], 8);
    assert!(stdout.contains("grade_histogram"));
    let ranking = std::fs::read_to_string(dir.path().join("train.ranking.jsonl")).unwrap();
    assert_eq!(ranking.lines().count(), 96);
    assert!(ranking.lines().all(|l| l.contains("\"features\"")));

    let again = tempfile::tempdir().unwrap();
    gen(again.path(), "train", &["--method", "both"]);
    for f in ["train.scenes.jsonl", "train.ranking.jsonl", "agreement.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "seed = 11\nscenario.n_agents = 5\n# comment\nscenario.duration_s = 2.0\n").unwrap();
    let out = dir.path().join("d");
    let run = |extra: &[&str]| {
        let mut args = vec!["gen-data", "--scenes", "3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        ok(&args);
        let s: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("train.summary.json")).unwrap()).unwrap();
        (s["seed"].as_u64().unwrap(), s["config"]["scenario"]["n_agents"].as_u64().unwrap())
    };
    assert_eq!(run(&[]), (11, 5));
    assert_eq!(run(&["--set", "seed=12", "--set", "scenario.n_agents=6"]), (12, 6));
    assert_eq!(run(&["--set", "seed=12", "--seed", "13", "--agents", "7"]), (13, 7));

    let bad = agentrank(&["gen-data", "--scenes", "1", "--set", "no.such.key=1", "--out", out.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("no.such.key"));
}

#[test]
fn train_eval_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let models = dir.path().join("models");
    let report = dir.path().join("report");
    gen(&data, "train", &[]);
    gen(&data, "test", &[]);
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", models.to_str().unwrap(), "--depth", "4"];
    args.extend_from_slice(&SMALL);
    ok(&args);
    assert!(models.join("manifest.json").exists());
    assert!(models.join("training-log.json").exists());

    let table = ok(&[
        "eval",
        "--models",
        models.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(table.contains("NDCG@1"));
    for name in ["pairwise-gbdt", "pairwise-cnn+pairwise-gbdt", "heuristics"] {
        assert!(table.contains(name), "{name}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 9);
    assert!(std::fs::read_to_string(report.join("report.csv")).unwrap().starts_with("approach,k,ndcg"));

    let ranged = ok(&[
        "eval",
        "--models",
        models.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--scope",
        "cnn-range",
        "--approach",
        "hybrid-pairwise",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(ranged.contains("pairwise-cnn+pairwise-gbdt"));

    let bench = ok(&["bench", "--models", models.to_str().unwrap(), "--agents", "50", "--repeats", "3"]);
    for mode in ["gbdt_only", "hybrid_pipelined", "hybrid_fresh"] {
        assert!(bench.contains(mode), "{mode}");
    }
}

#[test]
fn eval_names_the_missing_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let models = dir.path().join("models");
    gen(&data, "train", &[]);
    gen(&data, "test", &[]);
    let mut args =
        vec!["train", "--data", data.to_str().unwrap(), "--out", models.to_str().unwrap(), "--approach", "pairwise-gbdt"];
    args.extend_from_slice(&SMALL);
    ok(&args);
    let out = agentrank(&[
        "eval",
        "--models",
        models.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--approach",
        "pointwise-gbdt",
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pointwise-gbdt"));
}

#[test]
fn train_refuses_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("train.scenes.jsonl"), "").unwrap();
    std::fs::write(data.join("train.ranking.jsonl"), "").unwrap();
    let models = dir.path().join("models");
    let out = agentrank(&["train", "--data", data.to_str().unwrap(), "--out", models.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    assert!(!models.exists());
}

#[test]
fn inspect_raster_writes_pgms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    ok(&["inspect-raster", "--scripted", "lead_brake", "--out", out.to_str().unwrap()]);
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 11);
    assert!(names[0].starts_with("ch00-"));
    assert!(names[9].starts_with("ch09-"));
    assert_eq!(names[10], "labels.pgm");
    let labels = std::fs::read(out.join("labels.pgm")).unwrap();
    assert!(labels.starts_with(b"P5\n64 64\n255\n"));
    assert_eq!(labels.len(), 13 + 64 * 64);
    assert!(labels[13..].contains(&240));

    let data = dir.path().join("d");
    gen(&data, "test", &[]);
    let scenes = data.join("test.scenes.jsonl");
    ok(&["inspect-raster", "--scenes", scenes.to_str().unwrap(), "--index", "11", "--grid", "32", "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read(out.join("labels.pgm")).unwrap().len(), 13 + 32 * 32);

    let missing = agentrank(&["inspect-raster", "--scenes", scenes.to_str().unwrap(), "--index", "12"]);
    assert!(!missing.status.success());
    assert!(!agentrank(&["inspect-raster"]).status.success());
}
