// Own test binary: it mutates the process environment.

use duca::runner::{ExperimentConfig, DATA_ROOT_ENV};

#[test]
fn env_var_overrides_the_configured_root() {
    let mut cfg = ExperimentConfig::from_toml(r#"preset = "rmnist-er-b200""#).unwrap();
    cfg.data_root = Some("from-config".into());
    std::env::remove_var(DATA_ROOT_ENV);
    assert_eq!(cfg.data_root(), std::path::PathBuf::from("from-config"));
    std::env::set_var(DATA_ROOT_ENV, "/srv/datasets");
    assert_eq!(cfg.data_root(), std::path::PathBuf::from("/srv/datasets"));
    std::env::set_var(DATA_ROOT_ENV, "");
    assert_eq!(cfg.data_root(), std::path::PathBuf::from("from-config"));
    cfg.data_root = None;
    assert_eq!(cfg.data_root(), std::path::PathBuf::from("data"));

    // a dataset under the override is found by the loader
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var(DATA_ROOT_ENV, dir.path());
    let e = duca::runner::build_stream(&cfg).unwrap_err();
    assert!(e.to_string().contains(&dir.path().display().to_string()), "{e}");
    std::env::remove_var(DATA_ROOT_ENV);
}
