use std::path::Path;

use duca::runner::{compare, load_records, record_path, run, write_report, ExperimentConfig, ResultRecord, RunStatus};
use duca::Error;

fn config(name: &str, method: &str, out: &Path, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        name = "{name}"
        method = "{method}"
        seeds = [3, 4]
        output_dir = "{}"
        [dataset]
        kind = "synthetic"
        num_classes = 4
        train_per_class = 10
        test_per_class = 4
        shape = [3, 8, 8]
        [stream]
        setting = "class-il"
        num_tasks = 2
        [arch]
        name = "small-cnn"
        width = 4
        depth = 2
        [train]
        batch_size = 5
        buffer_capacity = 8
        {}
        "#,
        out.display(),
        if extra.contains("epochs_per_task") { extra.to_string() } else { format!("epochs_per_task = 1\n{extra}") }
    ))
    .unwrap()
}

#[test]
fn same_config_and_seed_reproduce_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["duca", "er", "derpp", "sgd", "joint"] {
        let a = run(&config("a", method, dir.path(), "")).unwrap();
        let b = run(&config("b", method, dir.path(), "")).unwrap();
        assert_eq!(a.seeds.len(), 2);
        for (x, y) in a.seeds.iter().zip(&b.seeds) {
            assert_eq!(x.accuracy, y.accuracy, "{method}");
            assert_eq!(x.metrics, y.metrics, "{method}");
            assert_eq!(x.steps, y.steps);
        }
        assert_ne!(a.config_sha256, b.config_sha256, "names differ so configs differ");
        assert_eq!(a.stream_id, b.stream_id);
    }
}

#[test]
fn records_persist_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("persist", "duca", dir.path(), "");
    let rec = run(&cfg).unwrap();
    let path = record_path(&cfg);
    assert!(path.is_file());
    let back = ResultRecord::load(&path).unwrap();
    assert!(back.completed());
    assert_eq!(back.seeds.len(), rec.seeds.len());
    assert_eq!(back.seeds[0].accuracy, rec.seeds[0].accuracy);
    assert_eq!(ExperimentConfig::from_toml(&back.config).unwrap(), cfg);
    // no temporary files are left behind
    let names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, vec!["persist.json".to_string()]);
}

#[test]
fn missing_data_writes_a_failed_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("nodata", "er", dir.path(), "");
    cfg.dataset = duca::runner::DatasetSpec::Mnist { path: dir.path().join("nowhere") };
    cfg.stream = toml::from_str("setting = \"domain-il\"\nnum_tasks = 3").unwrap();
    cfg.arch = toml::from_str("name = \"mlp\"").unwrap();
    let e = run(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    let rec = ResultRecord::load(&record_path(&cfg)).unwrap();
    match rec.status {
        RunStatus::Failed { exit_code, .. } => assert_eq!(exit_code, 2),
        s => panic!("expected failure, got {s:?}"),
    }
    assert!(rec.seeds.is_empty());
}

#[test]
fn exploding_learning_rate_is_a_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("boom", "sgd", dir.path(), "lr = 1e30\nepochs_per_task = 3");
    cfg.arch = toml::from_str("name = \"mlp\"").unwrap();
    let e = run(&cfg).unwrap_err();
    assert!(matches!(e, Error::Divergence { .. }), "{e}");
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn comparison_requires_a_shared_stream() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&config("a", "er", dir.path(), "")).unwrap();
    let mut other = config("b", "er", dir.path(), "");
    other.stream.shuffle_seed = Some(9);
    let b = run(&other).unwrap();
    assert!(matches!(compare(&[a.clone(), b]), Err(Error::Comparison(_))));
    let c = run(&config("c", "derpp", dir.path(), "")).unwrap();
    let cmp = compare(&[a, c]).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    assert!(cmp.rows[0].accuracy.mean >= cmp.rows[1].accuracy.mean);
}

#[test]
fn report_writes_plot_ready_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    run(&config("duca", "duca", &runs, "")).unwrap();
    run(&config("er", "er", &runs, "")).unwrap();
    let records = load_records(&runs).unwrap();
    assert_eq!(records.len(), 2);
    let out = dir.path().join("report");
    let text = write_report(&records, &out).unwrap();
    assert!(text.contains("duca") && text.contains("er"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let m = std::fs::read_to_string(out.join("duca.seed3.accuracy.csv")).unwrap();
    assert_eq!(m.lines().next().unwrap(), "after,task0,task1");
    assert_eq!(m.lines().count(), 3);
    let recency = std::fs::read_to_string(out.join("recency.csv")).unwrap();
    assert_eq!(recency.lines().count(), 1 + 2 * 2 * 2);
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 2 * 2 * 2);
    assert!(matches!(load_records(&out), Err(Error::Data(_))));
}
