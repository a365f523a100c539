//! Deterministic synthetic datasets for the retrofit classifier and the PV
//! regressor.
//!
//! Retrofit targets are linear threshold functions of the min-max scaled
//! features, with rows near any decision boundary rejected so every target
//! is separable with a margin. PV targets follow fixed formulas of the
//! inputs.

use std::path::{Path, PathBuf};

use crate::config::{parse_config_document, validate_run_config, RunConfig};
use crate::domain::{EnergyClass, PV_FEATURES, PV_TARGETS, RETROFIT_FEATURES, RETROFIT_TARGETS};
use crate::ingest::{load_ingest_artifacts, run_ingestion};
use crate::orchestrate::{OrchestrateError, Service};
use crate::rng::SplitMix64;
use crate::tune::{run_study, SearchSpace, StudyOptions};

pub const FIXTURE_ROWS: usize = 200;
/// Rows of the retrofit fixture with one blank target.
pub const BLANK_TARGET_ROWS: usize = 5;
/// Rows of the retrofit fixture with a cell that fails type coercion.
pub const MALFORMED_ROWS: usize = 3;
/// Regions present in the PV fixture. `Zemgale` is deliberately absent so
/// it can exercise the unseen-category path.
pub const PV_REGIONS: [&str; 4] = ["Kurzeme", "Latgale", "Riga", "Vidzeme"];

const MARGIN: f64 = 0.05;

fn to_csv(header: Vec<&str>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Raw retrofit feature values plus their separable targets.
fn retrofit_row(rng: &mut SplitMix64) -> Vec<String> {
    loop {
        let area = rng.uniform(100.0, 5000.0).round();
        let floors = 1 + rng.below(10);
        let consumption = (rng.uniform(10.0, 400.0) * 10.0).round() / 10.0;
        let initial = 2 + rng.below(5) as u8;
        let after = rng.below(u64::from(initial) + 1) as u8;

        let a = (area - 100.0) / 4900.0;
        let f = (floors - 1) as f64 / 9.0;
        let c = (consumption - 10.0) / 390.0;
        let i = f64::from(initial) / 6.0;
        let e = f64::from(after) / 6.0;
        let scores = [
            c + 0.5 * (i - e) - 0.6,
            a + f - 1.0,
            i - 0.5 * c - 0.45,
            0.5 * a + e - 0.45,
        ];
        if scores.iter().any(|s| s.abs() < MARGIN) {
            continue;
        }
        let mut row = vec![
            area.to_string(),
            floors.to_string(),
            consumption.to_string(),
            EnergyClass::ALL[usize::from(initial)].label().to_string(),
            EnergyClass::ALL[usize::from(after)].label().to_string(),
        ];
        row.extend(scores.iter().map(|s| flag(*s > 0.0)));
        return row;
    }
}

/// `n` clean, margin-separable retrofit rows.
pub fn separable_retrofit_csv(n: usize, seed: u64) -> String {
    let mut rng = SplitMix64::new(seed);
    let rows = (0..n).map(|_| retrofit_row(&mut rng)).collect();
    to_csv(RETROFIT_FEATURES.iter().chain(&RETROFIT_TARGETS).copied().collect(), rows)
}

/// The 200-row retrofit fixture: separable rows, of which
/// [`BLANK_TARGET_ROWS`] have a blank target and [`MALFORMED_ROWS`] carry a
/// malformed cell, so cleaning retains `200 - 5 - 3` rows.
pub fn retrofit_fixture_csv(seed: u64) -> String {
    let mut rng = SplitMix64::new(seed);
    let mut rows: Vec<Vec<String>> = (0..FIXTURE_ROWS).map(|_| retrofit_row(&mut rng)).collect();
    for k in 0..BLANK_TARGET_ROWS {
        rows[17 + 37 * k][5 + k % 4] = String::new();
    }
    rows[3][1] = "two".into();
    rows[101][3] = "Z".into();
    rows[188][0] = "n/a".into();
    to_csv(RETROFIT_FEATURES.iter().chain(&RETROFIT_TARGETS).copied().collect(), rows)
}

fn region_factor(region: &str) -> f64 {
    match region {
        "Kurzeme" => 1.05,
        "Latgale" => 0.95,
        "Vidzeme" => 0.97,
        _ => 1.0,
    }
}

/// Target values for one PV input row, in [`PV_TARGETS`] order.
pub fn pv_targets(price: f64, monthly: f64, cost: f64, planned_kw: f64, region: &str) -> [f64; 7] {
    let produced = planned_kw * 1100.0 * region_factor(region);
    let after = monthly * 12.0 * 1.2 - 0.3 * produced + 100.0;
    let reduction = produced * 1.2;
    let co2 = produced * 0.109;
    let self_consumption = produced.min(monthly * 12.0) * 0.8;
    let savings = self_consumption * price;
    let payback = cost / savings.max(1.0);
    [produced, after, reduction, co2, self_consumption, savings, payback]
}

/// The 200-row PV fixture. Roughly 15% of rows leave
/// `average_energy_generated` blank.
pub fn pv_fixture_csv(seed: u64) -> String {
    let mut rng = SplitMix64::new(seed);
    let rows = (0..FIXTURE_ROWS)
        .map(|_| {
            let price = (rng.uniform(0.1, 0.4) * 1000.0).round() / 1000.0;
            let monthly = rng.uniform(200.0, 3000.0).round();
            let cost = rng.uniform(1000.0, 20000.0).round();
            let current = if rng.next_f64() < 0.4 { 0.0 } else { (rng.uniform(0.5, 5.0) * 10.0).round() / 10.0 };
            let planned = (rng.uniform(1.0, 10.0) * 10.0).round() / 10.0;
            let generated = (rng.uniform(500.0, 8000.0)).round();
            let blank = rng.next_f64() < 0.15;
            let region = *rng.choose(&PV_REGIONS);
            let mut row = vec![
                price.to_string(),
                monthly.to_string(),
                cost.to_string(),
                current.to_string(),
                planned.to_string(),
                if blank { String::new() } else { generated.to_string() },
                region.to_string(),
            ];
            row.extend(pv_targets(price, monthly, cost, planned, region).iter().map(|v| format!("{v:.6}")));
            row
        })
        .collect();
    to_csv(PV_FEATURES.iter().chain(&PV_TARGETS).copied().collect(), rows)
}

pub fn write_fixture(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}

/// Search space of the reference classifier configuration.
pub const DEFAULT_SEARCH: &str = "batch_size: [256, 512, 1024]
l_rate: [0.0001, 0.001]
layer_sizes: [128, 256, 512, 1024, 2048]
n_layers: [2, 6]
max_epochs: 10
n_trials: 3
";

/// A small search space that trains the fixtures to convergence in about a
/// second.
pub const QUICK_SEARCH: &str = "batch_size: [16]
l_rate: [0.005, 0.01]
layer_sizes: [32, 64]
n_layers: [1, 2]
max_epochs: 60
n_trials: 2
patience: 5
";

/// Run config document for `service` reading `data`, with the given search
/// space block appended.
pub fn fixture_config_yaml(service: Service, data: &Path, search: &str) -> String {
    let (features, targets, class) = match service {
        Service::Retrofit => (
            "[Building total area, Above ground floors, Initial energy class, Energy consumption before, Energy class after]",
            "[Carrying out construction works, Reconstruction of engineering systems, Heat installation, Water heating system]",
            "Classifier",
        ),
        Service::Pv => (
            "[average_electricity_price, average_monthly_consumption_before, installation_cost, current_inverter_set_power, planned_inverter_set_power, average_energy_generated, region]",
            "[electricity_produced, primary_energy_consumption_after, reduction_of_primary_energy, co2_emissions_reduction, expected_annual_self_consumption, annual_financial_savings, payback_period]",
            "Regressor",
        ),
    };
    format!(
        "input_filepath: \"{}\"\nfeature_cols: {features}\ntarget_cols: {targets}\nmlClass: {class}\nactivation: ReLU\noptimizer_name: Adam\nnum_workers: 2\nseed: 42\n{search}",
        data.display()
    )
}

pub fn fixture_config(service: Service, data: &Path, search: &str) -> RunConfig {
    let raw = parse_config_document(&fixture_config_yaml(service, data, search)).expect("fixture config parses");
    validate_run_config(&raw).expect("fixture config is valid")
}

/// Writes the service's 200-row fixture under `work_dir`, ingests it and
/// runs a quick study. Returns the checkpoint directory, ready to deploy.
pub fn train_fixture_model(service: Service, work_dir: &Path) -> Result<PathBuf, OrchestrateError> {
    let data = work_dir.join(format!("{service}.csv"));
    let csv = match service {
        Service::Retrofit => retrofit_fixture_csv(42),
        Service::Pv => pv_fixture_csv(42),
    };
    write_fixture(&data, &csv).map_err(|e| OrchestrateError::Io(e.to_string()))?;
    let config = fixture_config(service, &data, QUICK_SEARCH);
    let ingest = run_ingestion(&config, &work_dir.join("ingest"))?;
    let loaded = load_ingest_artifacts(&ingest)?;
    let outcome = run_study(
        &SearchSpace::from_config(&config),
        &loaded.data,
        &loaded.scalers,
        &StudyOptions {
            patience: config.patience,
            ..Default::default()
        },
        &work_dir.join("train"),
        &work_dir.join("train/checkpoint"),
    )?;
    Ok(outcome.checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DatasetSchema;
    use crate::ingest::{clean, RawTable};

    fn table(text: &str) -> RawTable {
        RawTable::from_csv_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn retrofit_fixture_cleans_to_known_count() {
        let raw = table(&retrofit_fixture_csv(42));
        assert_eq!(raw.len(), FIXTURE_ROWS);
        let t = clean(&raw, &DatasetSchema::retrofit()).unwrap();
        assert_eq!(t.report.rows_retained, FIXTURE_ROWS - BLANK_TARGET_ROWS - MALFORMED_ROWS);
    }

    #[test]
    fn retrofit_targets_are_not_constant() {
        let raw = table(&separable_retrofit_csv(200, 42));
        for j in 5..9 {
            let ones = raw.rows.iter().filter(|r| r[j] == "1").count();
            assert!((20..=180).contains(&ones), "target {j}: {ones} positives");
        }
    }

    #[test]
    fn pv_fixture_shape() {
        let raw = table(&pv_fixture_csv(42));
        let blanks = raw.rows.iter().filter(|r| r[5].is_empty()).count();
        assert!((10..=50).contains(&blanks), "{blanks}");
        assert!(raw.rows.iter().all(|r| r[6] != "Zemgale"));
        let t = clean(&raw, &DatasetSchema::pv()).unwrap();
        assert_eq!(t.report.rows_retained, FIXTURE_ROWS);
    }

    #[test]
    fn deterministic() {
        assert_eq!(pv_fixture_csv(7), pv_fixture_csv(7));
        assert_eq!(retrofit_fixture_csv(7), retrofit_fixture_csv(7));
    }
}
