use std::path::Path;
use std::process::{Command, Output};

use duca::data::loaders::{load_image, save_image};
use ndarray::Array3;

fn duca(args: &[&str], data_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duca"))
        .args(args)
        .env("DUCA_DATA_ROOT", data_root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SYNTHETIC: &str = r#"
name = "cli-synthetic"
method = "duca"
seeds = [0, 1]
[dataset]
kind = "synthetic"
num_classes = 4
train_per_class = 8
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
epochs_per_task = 1
batch_size = 4
buffer_capacity = 8
"#;

#[test]
fn train_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, SYNTHETIC).unwrap();
    let runs = dir.path().join("runs");
    let o = duca(
        &["train", "--config", cfg.to_str().unwrap(), "--output-dir", runs.to_str().unwrap(), "--seeds", "5,6"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cli-synthetic"));
    assert!(runs.join("cli-synthetic.json").is_file());

    let report = dir.path().join("report");
    let o = duca(&["report", "--records", runs.to_str().unwrap(), "--out", report.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report.join("summary.csv").is_file());
    assert!(report.join("cli-synthetic.seed5.accuracy.csv").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nmethod = \"nonsense\"\n").unwrap();
    assert_eq!(duca(&["train", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(1));
    assert_eq!(duca(&["train", "--config", "/definitely/not/here.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(duca(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(duca(&["presets", "no-such-preset"], dir.path()).status.code(), Some(1));

    // valid preset, but the data root is an empty directory
    let cfg = dir.path().join("rm.toml");
    std::fs::write(&cfg, format!("preset = \"rmnist-er-b200\"\noutput_dir = \"{}\"\n", dir.path().join("runs").display())).unwrap();
    let o = duca(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(duca(&["report", "--records", dir.path().join("empty").to_str().unwrap()], dir.path()).status.code(), Some(2));

    let diverge = dir.path().join("boom.toml");
    let boom = SYNTHETIC.replace("method = \"duca\"", "method = \"sgd\"").replace("small-cnn", "mlp")
        .replace("epochs_per_task = 1", "epochs_per_task = 3\nlr = 1e30");
    std::fs::write(&diverge, boom).unwrap();
    let o = duca(&["train", "--config", diverge.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn presets_list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let o = duca(&["presets"], dir.path());
    assert!(o.status.success());
    let names = stdout(&o);
    assert!(names.lines().any(|l| l == "seq-cifar10-duca-b200"));
    assert!(names.lines().any(|l| l == "rmnist-joint"));
    let o = duca(&["presets", "dn4il-duca-b500"], dir.path());
    assert!(o.status.success());
    assert!(duca::runner::ExperimentConfig::from_toml(&stdout(&o)).is_ok());
}

#[test]
fn dn4il_validate_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.tsv");
    let table = duca::dn4il::ClassTable::standard();
    let c0 = table.class_names()[0];
    std::fs::write(
        &good,
        format!("path\tclass\tdomain\tsplit\nreal/{c0}/a.jpg\t0\treal\ttrain\nreal/{c0}/b.jpg\t0\treal\ttest\n"),
    )
    .unwrap();
    let o = duca(&["dn4il", "validate", "--manifest", good.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));

    let leak = dir.path().join("leak.tsv");
    std::fs::write(
        &leak,
        format!("path\tclass\tdomain\tsplit\nreal/{c0}/a.jpg\t0\treal\ttrain\nreal/{c0}/a.jpg\t0\treal\ttest\n"),
    )
    .unwrap();
    let o = duca(&["dn4il", "validate", "--manifest", leak.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("both train and test"));

    let o = duca(&["dn4il", "build", "--root", dir.path().join("nothing").to_str().unwrap(), "--out", "x.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shape_preview_writes_an_edge_map() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("square.png");
    let img = Array3::from_shape_fn((3, 32, 32), |(_, y, x)| if (8..24).contains(&y) && (8..24).contains(&x) { 1.0 } else { 0.0 });
    save_image(&input, &img).unwrap();
    let output = dir.path().join("edges.png");
    let o = duca(
        &["shape-preview", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--size", "32"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let edges = load_image(&output, (1, 32, 32)).unwrap();
    assert!(edges[[0, 16, 16]] < 0.05, "flat interior");
    assert!(edges[[0, 16, 8]] > 0.5 || edges[[0, 16, 7]] > 0.5, "edge at the border");
    assert_eq!(duca(&["shape-preview", "--input", "/nope.png", "--output", output.to_str().unwrap()], dir.path()).status.code(), Some(2));
}
