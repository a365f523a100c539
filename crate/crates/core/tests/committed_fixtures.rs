//! The CSV and config files under `fixtures/` are generated; this keeps them
//! in sync. Run with `ENERFIT_REGENERATE_FIXTURES=1` to rewrite them.

use std::path::{Path, PathBuf};

use enerfit_core::config::{parse_config_document, validate_run_config};
use enerfit_core::fixtures::{fixture_config_yaml, pv_fixture_csv, retrofit_fixture_csv, DEFAULT_SEARCH, QUICK_SEARCH};
use enerfit_core::orchestrate::Service;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn expected() -> Vec<(&'static str, String)> {
    vec![
        ("retrofit.csv", retrofit_fixture_csv(42)),
        ("pv.csv", pv_fixture_csv(42)),
        (
            "retrofit.yaml",
            fixture_config_yaml(Service::Retrofit, Path::new("fixtures/retrofit.csv"), DEFAULT_SEARCH),
        ),
        (
            "retrofit-quick.yaml",
            fixture_config_yaml(Service::Retrofit, Path::new("fixtures/retrofit.csv"), QUICK_SEARCH),
        ),
        ("pv.yaml", fixture_config_yaml(Service::Pv, Path::new("fixtures/pv.csv"), QUICK_SEARCH)),
    ]
}

#[test]
fn committed_fixtures_are_current() {
    let dir = fixtures_dir();
    let regenerate = std::env::var_os("ENERFIT_REGENERATE_FIXTURES").is_some();
    for (name, contents) in expected() {
        let path = dir.join(name);
        if regenerate {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &contents).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_default();
        assert_eq!(on_disk, contents, "{} is stale; regenerate it", path.display());
        if name.ends_with(".yaml") {
            validate_run_config(&parse_config_document(&on_disk).unwrap()).unwrap();
        }
    }
}
