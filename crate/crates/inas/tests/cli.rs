use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inas::runner::{self, ROUNDS_HEADER};
use inas::{checkpoint, report};
use inas_core::curve::{self, LearningCurve};

fn inas(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inas")).args(args).env(inas::OUTPUT_ROOT_ENV, root).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn config(strategy: &str, budget: usize) -> String {
    format!(
        r#"{{
        "name": "tiny",
        "dataset": {{"kind": "blobs", "n_classes": 3, "dim": 4, "n_per_class": 40, "spread": 0.8, "seed": 5}},
        "grid": {{"block_kind": "residual-dense", "base_width": 6, "n_blocks": 3, "n_stacks": 2}},
        "k": 18, "budget": {budget}, "batch_schedule": [[0, 6]],
        "train_cfg": {{"epochs": 4, "nominal_epoch_size": 64, "lr_decay_epochs": [3]}},
        "strategy": "{strategy}",
        "save_checkpoints": true
    }}"#
    )
}

#[test]
fn usage_errors_exit_with_one() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&inas(&[], root.path())), 1);
    assert_eq!(code(&inas(&["frobnicate"], root.path())), 1);
    assert_eq!(code(&inas(&["compare", "--runs", "x"], root.path())), 1);
    assert_eq!(code(&inas(&["space", "--image", "3x3"], root.path())), 1);
    assert_eq!(code(&inas(&["--help"], root.path())), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("missing.json");
    assert_eq!(code(&inas(&["run", "--config", missing.to_str().unwrap()], root.path())), 2);
    let bad = root.path().join("bad.json");
    fs::write(&bad, config("entropy", 30)).unwrap();
    assert_eq!(code(&inas(&["run", "--config", bad.to_str().unwrap()], root.path())), 2);
    let over = root.path().join("over.json");
    fs::write(&over, config("random", 10_000)).unwrap();
    assert_eq!(code(&inas(&["run", "--config", over.to_str().unwrap()], root.path())), 2);
    let empty = root.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&inas(&["report", "--runs", empty.to_str().unwrap(), "--out", "r"], root.path())), 2);
}

#[test]
fn divergence_exits_with_three() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("hot.json");
    let text = config("random", 30).replace(r#""lr_decay_epochs": [3]"#, r#""lr_decay_epochs": [3], "lr_initial": 1e300, "max_grad_norm": null"#);
    fs::write(&path, text).unwrap();
    let out = inas(&["run", "--config", path.to_str().unwrap()], root.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn space_writes_edges_and_diagram_under_the_output_root() {
    let root = tempfile::tempdir().unwrap();
    let out = inas(&["space", "--n-blocks", "2", "--n-stacks", "2", "--base-width", "4"], root.path());
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("reachable from (1,1): true"));
    let edges = fs::read_to_string(root.path().join("space/edges.txt")).unwrap();
    assert_eq!(edges, "1,1 -> 2,1\n1,1 -> 1,2\n2,1 -> 2,2\n1,2 -> 2,2\n");
    assert!(fs::read_to_string(root.path().join("space/grid.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn run_compare_and_report_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    for strategy in ["softmax-response", "random"] {
        let path = root.path().join(format!("{strategy}.json"));
        fs::write(&path, config(strategy, 30)).unwrap();
        let out = inas(&["run", "--config", path.to_str().unwrap(), "--seed", "3"], root.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let active = root.path().join("tiny-softmax-response-inas-seed3");
    let passive = root.path().join("tiny-random-inas-seed3");

    let header = fs::read_to_string(active.join("rounds.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), ROUNDS_HEADER.join(","));
    assert_eq!(header.lines().next().unwrap(), "round,labels_used,arch_i,arch_j,depth,params,val_risk,test_error,wall_time_s");
    let rows = runner::read_rounds(&active).unwrap();
    assert_eq!(rows.iter().map(|r| r.labels_used).collect::<Vec<_>>(), [18, 24, 30]);
    let info = runner::read_run_info(&active).unwrap();
    assert_eq!((info.seed, info.pool_seed, info.dataset.pool_size), (3, 3, 90));
    assert_eq!(info.rounds.len(), 3);
    let last = checkpoint::load(active.join("final.ckpt")).unwrap();
    assert_eq!(last.spec().arch, info.final_arch);
    assert!(active.join("round-003.ckpt").exists());

    let curve = |dir: &Path| {
        let rows = runner::read_rounds(dir).unwrap();
        LearningCurve::new(rows.iter().map(|r| (r.labels_used as f64, r.test_error)).collect()).unwrap()
    };
    let expected = curve::auc_gain(&curve(&passive), &curve(&active), 30.0).unwrap();

    let runs = vec![active.clone(), passive.clone()];
    let rows = report::compare(&report::load_runs(&runs).unwrap(), 30.0).unwrap();
    let row = rows.iter().find(|r| r.strategy == "softmax-response").unwrap();
    assert_eq!(row.auc_gain, Some(expected));
    assert_eq!(row.twin.as_deref(), Some("tiny-random-inas-seed3"));
    assert_eq!(rows.iter().find(|r| r.strategy == "random").unwrap().auc_gain, None);

    let cmp = inas(&["compare", "--runs", root.path().to_str().unwrap(), "--budget", "30"], root.path());
    assert_eq!(code(&cmp), 0, "{}", String::from_utf8_lossy(&cmp.stderr));
    assert_eq!(code(&inas(&["compare", "--runs", root.path().to_str().unwrap(), "--budget", "99"], root.path())), 2);

    let (r1, r2) = (root.path().join("report1"), root.path().join("report2"));
    for out in [&r1, &r2] {
        let o = inas(&["report", "--runs", active.to_str().unwrap(), passive.to_str().unwrap(), "--out", out.to_str().unwrap()], root.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["curves.csv", "compare.csv", "summary.csv", "learning_curves.svg", "auc_gain.svg"] {
        let a = fs::read(r1.join(file)).unwrap();
        assert!(!a.is_empty(), "{file} empty");
        assert_eq!(a, fs::read(r2.join(file)).unwrap(), "{file} differs between reports");
    }
}

#[test]
fn reruns_with_the_same_seed_reproduce_the_curve() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("c.json");
    fs::write(&path, config("coreset", 24)).unwrap();
    let mut curves = Vec::new();
    for out in ["a", "b"] {
        let dir = root.path().join(out);
        let o = inas(&["run", "--config", path.to_str().unwrap(), "--out", dir.to_str().unwrap()], root.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let rows = runner::read_rounds(&dir).unwrap();
        curves.push(rows.iter().map(|r| (r.labels_used, r.arch_i, r.arch_j, r.test_error.to_bits())).collect::<Vec<_>>());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn misspelled_training_keys_are_rejected() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("typo.json");
    fs::write(&path, config("random", 30).replace(r#""epochs": 4"#, r#""epoch": 4"#)).unwrap();
    assert_eq!(code(&inas(&["run", "--config", path.to_str().unwrap()], root.path())), 2);
}
