//! Acceptance suite. Every check prints one `PASS`/`FAIL` line; the test
//! fails if any check fails. Run with
//! `cargo test -p enerfit-cli --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use ndarray::Array2;
use serde_json::{json, Value};
use tower::ServiceExt;

use enerfit_core::domain::{ColumnKind, EnergyClass, Task, PV_TARGETS, RETROFIT_TARGETS};
use enerfit_core::evaluate::{
    classification_metrics, confusion_matrix, evaluate_model, param_importance, regression_metrics, METRICS_FILE,
};
use enerfit_core::fixtures::{
    fixture_config, pv_fixture_csv, retrofit_fixture_csv, separable_retrofit_csv,
    train_fixture_model, write_fixture, DEFAULT_SEARCH, QUICK_SEARCH,
};
use enerfit_core::ingest::{
    clean, fingerprint_rows, fit_scalers, load_ingest_artifacts, run_ingestion, split, Cell, IngestArtifacts,
    RawTable, SCALERS_FILE,
};
use enerfit_core::neural::{
    init_model, load_checkpoint, loss, save_checkpoint, LossKind, Manifest, MlpConfig, NeuralError, OutputHead,
    CHECKPOINT_FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
use enerfit_core::orchestrate::{ArtifactStore, OrchestrateError, Orchestrator, Registry, Service, Step};
use enerfit_core::rng::SplitMix64;
use enerfit_core::tune::{
    best_trial, run_study, should_prune, SearchSpace, Study, StudyOptions, TrialParams, TrialRecord, TrialState,
    STUDY_FILE,
};
use enerfit_serve::{router, ApiKeys, AppState};

type Check = Result<String, String>;
type NamedCheck = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.uniform(lo, hi))
}

// ---------------------------------------------------------------- 1

const FD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that parameters with a (near) zero gradient are
/// judged on absolute error.
const GRAD_FLOOR: f64 = 1e-6;

fn gradient_check() -> Check {
    let started = Instant::now();
    let mut rng = SplitMix64::new(2024);
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    for case in 0..20 {
        let n_layers = 2 + rng.below(2) as usize;
        let sizes: Vec<usize> = (0..n_layers).map(|_| 2 + rng.below(63) as usize).collect();
        let input_dim = 1 + rng.below(12) as usize;
        let output_dim = 1 + rng.below(7) as usize;
        let head = if case % 2 == 0 { OutputHead::Sigmoid } else { OutputHead::Linear };
        let kind = head.loss_kind();
        let config = MlpConfig::new(input_dim, sizes, output_dim, head).map_err(|e| e.to_string())?;
        let mut model = init_model(&config, rng.next_u64()).map_err(|e| e.to_string())?;
        // Initial biases are zero, so a sample that no unit of a layer
        // passes would leave the next layer exactly on the ReLU kink.
        for layer in &mut model.layers {
            layer.bias.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
        }
        let x = random_matrix(&mut rng, 8, input_dim, -1.0, 1.0);
        let y = match kind {
            LossKind::Bce => Array2::from_shape_fn((8, output_dim), |_| (rng.below(2)) as f64),
            LossKind::Mse => random_matrix(&mut rng, 8, output_dim, -1.0, 1.0),
        };
        let (_, grads) = model.gradients(x.view(), y.view(), kind).map_err(|e| e.to_string())?;
        let objective = |m: &enerfit_core::neural::MlpModel| loss(m.forward(x.view()).unwrap().view(), y.view(), kind).unwrap();
        for l in 0..model.layers.len() {
            let (fan_in, fan_out) = model.layers[l].shape();
            for i in 0..=fan_in {
                for j in 0..fan_out {
                    // Row `fan_in` stands for the bias.
                    let (analytic, original) = if i == fan_in {
                        (grads[l].bias[j], model.layers[l].bias[j])
                    } else {
                        (grads[l].weights[[i, j]], model.layers[l].weights[[i, j]])
                    };
                    let set = |m: &mut enerfit_core::neural::MlpModel, v: f64| {
                        if i == fan_in {
                            m.layers[l].bias[j] = v;
                        } else {
                            m.layers[l].weights[[i, j]] = v;
                        }
                    };
                    set(&mut model, original + FD_STEP);
                    let plus = objective(&model);
                    set(&mut model, original - FD_STEP);
                    let minus = objective(&model);
                    set(&mut model, original);
                    let numeric = (plus - minus) / (2.0 * FD_STEP);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(worst < GRAD_TOLERANCE, "max relative error {worst:.3e} >= {GRAD_TOLERANCE:e}");
    ensure!(elapsed < 10.0, "took {elapsed:.1}s (limit 10s)");
    Ok(format!("20 configs, {checked} parameters, max rel err {worst:.2e}, {elapsed:.2}s"))
}

// ---------------------------------------------------------------- 2

/// Files whose bytes must match between two identical runs, relative to
/// the run directory.
fn deterministic_files(run_dir: &Path) -> Vec<PathBuf> {
    let checkpoint = run_dir.join("train/checkpoint");
    vec![
        run_dir.join("train").join(STUDY_FILE),
        checkpoint.join(MANIFEST_FILE),
        checkpoint.join(WEIGHTS_FILE),
        checkpoint.join(SCALERS_FILE),
        run_dir.join("eval").join(METRICS_FILE),
    ]
}

fn run_all_once(root: &Path) -> Result<(PathBuf, f64), String> {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_enerfit"))
        .current_dir(workspace_root())
        .args(["--output", "json", "--artifact-root"])
        .arg(root)
        .args(["run-all", "--config", "fixtures/retrofit.yaml"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(out.status.success(), "run-all failed: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let id = v["run_id"].as_str().ok_or("no run_id")?;
    Ok((root.join("runs").join(id), elapsed))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fs::read_to_string(workspace_root().join("fixtures/retrofit.yaml")).map_err(|e| e.to_string())?;
    for needle in ["seed: 42", "n_trials: 3", "max_epochs: 10", "mlClass: Classifier"] {
        ensure!(config.contains(needle), "fixtures/retrofit.yaml lacks `{needle}`");
    }
    let (a, ta) = run_all_once(&dir.path().join("a"))?;
    let (b, tb) = run_all_once(&dir.path().join("b"))?;
    for (fa, fb) in deterministic_files(&a).iter().zip(deterministic_files(&b)) {
        let ba = fs::read(fa).map_err(|e| format!("{}: {e}", fa.display()))?;
        let bb = fs::read(&fb).map_err(|e| format!("{}: {e}", fb.display()))?;
        ensure!(ba == bb, "{} differs between runs", fa.strip_prefix(&a).unwrap().display());
    }
    ensure!(ta < 60.0 && tb < 60.0, "runs took {ta:.1}s and {tb:.1}s (limit 60s)");
    Ok(format!("study, checkpoint and metrics identical; runs {ta:.1}s / {tb:.1}s"))
}

// ---------------------------------------------------------------- 3

fn learning_sanity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("separable.csv");
    write_fixture(&data, &separable_retrofit_csv(200, 7)).map_err(|e| e.to_string())?;
    let config = fixture_config(Service::Retrofit, &data, QUICK_SEARCH);
    let artifacts = run_ingestion(&config, &dir.path().join("ingest")).map_err(|e| e.to_string())?;
    let loaded = load_ingest_artifacts(&artifacts).map_err(|e| e.to_string())?;
    let options = StudyOptions {
        patience: config.patience,
        min_delta: config.min_delta,
        warmup_trials: config.warmup_trials,
        warmup_epochs: config.warmup_epochs,
        reference_trials: Vec::new(),
    };
    let outcome = run_study(
        &SearchSpace::from_config(&config),
        &loaded.data,
        &loaded.scalers,
        &options,
        &dir.path().join("train"),
        &dir.path().join("checkpoint"),
    )
    .map_err(|e| e.to_string())?;
    let best = best_trial(&outcome.study).map_err(|e| e.to_string())?;
    let first = best.intermediate_values[0];
    let last = *best.intermediate_values.last().unwrap();
    ensure!(last < 0.5 * first, "final BCE {last:.4} is not below half of epoch-0 BCE {first:.4}");

    let checkpoint = load_checkpoint(&outcome.checkpoint).map_err(|e| e.to_string())?;
    let report = evaluate_model(&checkpoint.model, &loaded.scalers, &loaded.data.test, None).map_err(|e| e.to_string())?;
    let targets = report.classification.ok_or("no classification report")?.targets;
    ensure!(targets.len() == 4, "expected 4 targets, got {}", targets.len());
    let mut accs = Vec::new();
    for t in &targets {
        ensure!(t.metrics.accuracy >= 0.95, "{} accuracy {:.3} < 0.95", t.target, t.metrics.accuracy);
        accs.push(format!("{:.3}", t.metrics.accuracy));
    }
    Ok(format!("BCE {first:.4} -> {last:.4}; accuracy per target [{}]", accs.join(", ")))
}

// ---------------------------------------------------------------- 4

fn reference(number: usize, at_epoch_3: f64) -> TrialRecord {
    TrialRecord::synthetic(number, TrialState::Complete, vec![1.0, 1.0, 1.0, at_epoch_3], Some(at_epoch_3))
}

/// Replays the median rule over the recorded values of every trial.
fn replay_prunes(study: &Study, options: &StudyOptions) -> Result<(), String> {
    for (k, trial) in study.trials.iter().enumerate() {
        let history: Vec<&TrialRecord> = study.trials[..k].iter().chain(&options.reference_trials).collect();
        let values = &trial.intermediate_values;
        let decisions: Vec<bool> = (0..values.len())
            .map(|e| should_prune(history.iter().copied(), &values[..=e], e, options.warmup_trials, options.warmup_epochs))
            .collect();
        let expected = decisions.iter().position(|&d| d);
        ensure!(
            expected == trial.pruned_at_epoch,
            "trial {}: replay prunes at {expected:?}, study recorded {:?}",
            trial.number,
            trial.pruned_at_epoch
        );
        ensure!(
            (trial.state == TrialState::Pruned) == expected.is_some(),
            "trial {} state {:?} disagrees with replay",
            trial.number,
            trial.state
        );
    }
    Ok(())
}

fn pruning_rule() -> Check {
    let completed = [reference(0, 0.2), reference(1, 0.4), reference(2, 0.6)];
    let prune_high = should_prune(&completed, &[1.0, 1.0, 1.0, 0.9], 3, 1, 1);
    let prune_low = should_prune(&completed, &[1.0, 1.0, 1.0, 0.1], 3, 1, 1);
    ensure!(prune_high && !prune_low, "0.9 pruned: {prune_high}, 0.1 pruned: {prune_low}");

    // Re-run a study whose pruning history includes fixed reference trials.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("retrofit.csv");
    write_fixture(&data, &retrofit_fixture_csv(42)).map_err(|e| e.to_string())?;
    let config = fixture_config(Service::Retrofit, &data, QUICK_SEARCH);
    let artifacts = run_ingestion(&config, &dir.path().join("ingest")).map_err(|e| e.to_string())?;
    let loaded = load_ingest_artifacts(&artifacts).map_err(|e| e.to_string())?;
    let mut space = SearchSpace::from_config(&config);
    space.n_trials = 6;
    space.max_epochs = 20;
    let options = StudyOptions {
        patience: 20,
        min_delta: 0.0,
        warmup_trials: 1,
        warmup_epochs: 1,
        reference_trials: (0..3)
            .map(|n| {
                let values = (0..20).map(|e| 0.55 - 0.01 * e as f64 - 0.05 * n as f64).collect::<Vec<_>>();
                let last = values.last().copied();
                TrialRecord::synthetic(100 + n, TrialState::Complete, values, last)
            })
            .collect(),
    };
    let mut studies = Vec::new();
    for k in 0..2 {
        let study_dir = dir.path().join(format!("study-{k}"));
        run_study(&space, &loaded.data, &loaded.scalers, &options, &study_dir, &dir.path().join(format!("ckpt-{k}")))
            .map_err(|e| e.to_string())?;
        studies.push((Study::load(&study_dir).map_err(|e| e.to_string())?, fs::read(study_dir.join(STUDY_FILE)).unwrap()));
    }
    ensure!(studies[0].1 == studies[1].1, "study.json differs between re-runs");
    replay_prunes(&studies[0].0, &options)?;
    let pruned: Vec<String> = studies[0]
        .0
        .trials
        .iter()
        .filter_map(|t| t.pruned_at_epoch.map(|e| format!("#{}@{e}", t.number)))
        .collect();
    Ok(format!("0.9 pruned, 0.1 kept; re-run identical, pruned [{}]", pruned.join(", ")))
}

// ---------------------------------------------------------------- 5

fn metric_oracles() -> Check {
    let mut rng = SplitMix64::new(5);
    for case in 0..1000 {
        let n = 1 + rng.below(60) as usize;
        let truth: Vec<bool> = (0..n).map(|_| rng.below(2) == 1).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.below(2) == 1).collect();
        let count = |p: bool, t: bool| pred.iter().zip(&truth).filter(|&(&a, &b)| a == p && b == t).count();
        let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
        let cm = confusion_matrix(&pred, &truth).map_err(|e| e.to_string())?;
        ensure!(
            (cm.tp, cm.fp, cm.fn_, cm.tn) == (tp as u64, fp as u64, fn_ as u64, tn as u64),
            "case {case}: confusion counts differ"
        );
        let m = classification_metrics(&cm);
        let correct = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let accuracy = correct as f64 / n as f64;
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        ensure!(
            m.accuracy == accuracy && m.precision == precision && m.recall == recall,
            "case {case}: metrics ({}, {}, {}) vs brute force ({accuracy}, {precision}, {recall})",
            m.accuracy,
            m.precision,
            m.recall
        );
    }
    for case in 0..1000 {
        let n = 2 + rng.below(50) as usize;
        let scale = 10f64.powf(rng.uniform(-3.0, 4.0));
        let truth: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
        let m = regression_metrics(&pred, &truth).map_err(|e| e.to_string())?;
        ensure!(m.rmse >= m.mae, "case {case}: rmse {} < mae {}", m.rmse, m.mae);
    }

    // Only l_rate moves the objective, monotonically.
    let trials = (0..12)
        .map(|i| {
            let l_rate = 1e-4 * (1.0 + i as f64);
            let mut t = TrialRecord::synthetic(i, TrialState::Complete, vec![1.0 / (1.0 + i as f64)], Some(1.0 / (1.0 + i as f64)));
            t.params = TrialParams { batch_size: 512, l_rate, n_layers: 2, layer_sizes: vec![256, 256] };
            t
        })
        .collect();
    let study = Study {
        task: Task::Classifier,
        objective: "validation_bce".into(),
        search_space: SearchSpace::default(),
        seed: 42,
        trials,
        best_trial_number: Some(11),
    };
    let importance = param_importance(&study);
    let score = importance.get("l_rate").ok_or("no l_rate score")?;
    ensure!((score - 1.0).abs() <= 1e-9, "l_rate importance {score}");
    Ok(format!("1000 confusion cases exact, 1000 rmse>=mae, l_rate importance {score}"))
}

// ---------------------------------------------------------------- 6

fn random_cell(rng: &mut SplitMix64, kind: ColumnKind, lo: f64, hi: f64, categories: &[String]) -> Cell {
    match kind {
        ColumnKind::Continuous => Cell::Number(rng.uniform(lo, hi)),
        ColumnKind::OrdinalClass => Cell::Class(EnergyClass::ALL[rng.below(7) as usize]),
        ColumnKind::Categorical => Cell::Category(rng.choose(categories).clone()),
        ColumnKind::Boolean => Cell::Flag(rng.below(2) == 1),
    }
}

fn cells_match(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Number(x), Cell::Number(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
        _ => a == b,
    }
}

fn scaler_round_trip() -> Check {
    let mut rng = SplitMix64::new(6);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for service in [Service::Retrofit, Service::Pv] {
        let csv = match service {
            Service::Retrofit => retrofit_fixture_csv(42),
            Service::Pv => pv_fixture_csv(42),
        };
        let data = dir.path().join(format!("{service}.csv"));
        write_fixture(&data, &csv).map_err(|e| e.to_string())?;
        let config = fixture_config(service, &data, QUICK_SEARCH);
        let schema = config.schema().map_err(|e| e.to_string())?;
        let table = clean(&RawTable::from_csv_reader(csv.as_bytes()).map_err(|e| e.to_string())?, &schema)
            .map_err(|e| e.to_string())?;
        let scalers = fit_scalers(&table).map_err(|e| e.to_string())?;
        let columns: Vec<_> = schema.columns().cloned().collect();
        let categories: Vec<Vec<String>> = (0..columns.len())
            .map(|j| {
                let set: BTreeSet<String> = table
                    .rows
                    .iter()
                    .filter_map(|r| match &r[j] {
                        Cell::Category(c) => Some(c.clone()),
                        _ => None,
                    })
                    .collect();
                set.into_iter().collect()
            })
            .collect();
        for _ in 0..1000 {
            let row: Vec<Cell> = columns
                .iter()
                .enumerate()
                .map(|(j, c)| random_cell(&mut rng, c.kind, -500.0, 6000.0, &categories[j]))
                .collect();
            let encoded = scalers.transform(&row).map_err(|e| e.to_string())?;
            let decoded = scalers.inverse_transform(&encoded).map_err(|e| e.to_string())?;
            for ((c, a), b) in columns.iter().zip(&row).zip(&decoded) {
                ensure!(cells_match(a, b), "{service} {}: {a:?} round-trips to {b:?}", c.name);
            }
        }

        // Scalers written by ingestion are fitted on the training partition.
        let artifacts = run_ingestion(&config, &dir.path().join(format!("ingest-{service}"))).map_err(|e| e.to_string())?;
        let loaded = load_ingest_artifacts(&artifacts).map_err(|e| e.to_string())?;
        let (train, _) = split(&table.rows, config.split_ratio, config.seed).map_err(|e| e.to_string())?;
        ensure!(
            loaded.scalers.fingerprint == fingerprint_rows(&columns, &train),
            "{service} scalers are not fitted on the training rows"
        );
        ensure!(
            loaded.scalers.fingerprint != fingerprint_rows(&columns, &table.rows),
            "{service} fingerprint matches the full table"
        );
        ensure!(loaded.scalers.fit_rows == train.len(), "{service} fit_rows {}", loaded.scalers.fit_rows);
        summary.push(format!("{service}: 1000 rows, fit on {} of {}", train.len(), table.rows.len()));
    }
    Ok(summary.join("; "))
}

// ---------------------------------------------------------------- 7

const KEY: &str = "APIKEY-acceptance-0001";

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>, key: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("Authorization", k);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(Arc::clone(state)).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn key_set(v: &Value) -> BTreeSet<String> {
    v.as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default()
}

async fn api_contract_async(state: Arc<AppState>) -> Check {
    let retrofit = json!({
        "building_total_area": 500,
        "above_ground_floors": 2,
        "energy_consumption_before": 30,
        "initial_energy_class": "E",
        "energy_class_after": "B"
    });
    let (status, body) = call(&state, Method::POST, "/api/v1/retrofit/predict", Some(retrofit.clone()), Some(KEY)).await;
    ensure!(status == StatusCode::OK, "retrofit predict returned {status}: {body}");
    let expected: BTreeSet<String> = RETROFIT_TARGETS.iter().map(|s| s.to_string()).collect();
    ensure!(key_set(&body["outputs"]) == expected, "retrofit outputs {}", body["outputs"]);

    let pv = json!({
        "average_monthly_consumption_before": 1500,
        "average_electricity_price": 0.3,
        "installation_cost": 5000,
        "average_energy_generated": "",
        "current_inverter_set_power": 0,
        "planned_inverter_set_power": 2,
        "region": "Riga"
    });
    let (status, body) = call(&state, Method::POST, "/api/v1/pv/predict", Some(pv.clone()), Some(KEY)).await;
    ensure!(status == StatusCode::OK, "pv predict returned {status}: {body}");
    let expected: BTreeSet<String> = PV_TARGETS.iter().map(|s| s.to_string()).collect();
    ensure!(key_set(&body["outputs"]) == expected, "pv outputs {}", body["outputs"]);
    ensure!(body["imputed_fields"] == json!(["average_energy_generated"]), "imputed_fields {}", body["imputed_fields"]);

    let routes: [(Method, &str, Option<Value>); 9] = [
        (Method::POST, "/api/v1/retrofit/predict", Some(retrofit)),
        (Method::POST, "/api/v1/pv/predict", Some(pv)),
        (Method::GET, "/api/v1/retrofit/report?format=csv", None),
        (Method::GET, "/api/v1/pv/report?format=csv", None),
        (Method::GET, "/api/v1/models", None),
        (Method::POST, "/api/v1/runs", Some(json!({}))),
        (Method::GET, "/api/v1/runs/01ARZ3NDEKTSV4RRFFQ69G5FAV", None),
        (Method::GET, "/api/v1/unknown", None),
        (Method::DELETE, "/", None),
    ];
    for (method, uri, body) in routes {
        for key in [None, Some("APIKEY-wrong")] {
            let (status, _) = call(&state, method.clone(), uri, body.clone(), key).await;
            ensure!(status == StatusCode::UNAUTHORIZED, "{method} {uri} with {key:?} returned {status}");
        }
    }
    Ok("retrofit 4 targets, pv 7 targets with imputed average_energy_generated, 9 routes x 2 keys -> 401".into())
}

fn api_contract() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let state = AppState::new(dir.path().join("store"), ApiKeys::new(vec![KEY.into()]).map_err(|e| e.to_string())?, 1000)
        .map_err(|e| e.to_string())?;
    for service in [Service::Retrofit, Service::Pv] {
        let ckpt = train_fixture_model(service, &dir.path().join(format!("work-{service}"))).map_err(|e| e.to_string())?;
        state.registry.deploy_checkpoint(service, &ckpt).map_err(|e| e.to_string())?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(api_contract_async(Arc::new(state)))
}

// ---------------------------------------------------------------- 8

fn ingestion_artifacts() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("retrofit.csv");
    write_fixture(&data, &retrofit_fixture_csv(42)).map_err(|e| e.to_string())?;
    let config = fixture_config(Service::Retrofit, &data, DEFAULT_SEARCH);
    let out = dir.path().join("ingest");
    let artifacts = run_ingestion(&config, &out).map_err(|e| e.to_string())?;
    ensure!(artifacts == IngestArtifacts::in_dir(&out), "unexpected artifact paths {artifacts:?}");
    let mut names: Vec<String> = fs::read_dir(&out)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    ensure!(
        names == ["ingest_meta.json", "scalers.json", "test.csv", "train.csv"],
        "ingestion wrote {names:?}"
    );
    let loaded = load_ingest_artifacts(&artifacts).map_err(|e| e.to_string())?;
    ensure!(
        loaded.data.train.len() + loaded.data.test.len() == loaded.meta.rows_retained,
        "partitions do not cover the retained rows"
    );

    let orch = Orchestrator::new(ArtifactStore::new(dir.path().join("store")).map_err(|e| e.to_string())?);
    let err = orch.launch(config, &[Step::Training]).err();
    let expected = OrchestrateError::MissingArtifact { step: "Training".into(), dependency: "train-data".into() };
    ensure!(err.as_ref() == Some(&expected), "training without ingestion gave {err:?}");
    Ok(format!(
        "train-data ({} rows), test-data ({} rows), scalers, metadata; training alone -> MissingArtifact",
        loaded.data.train.len(),
        loaded.data.test.len()
    ))
}

// ---------------------------------------------------------------- 9

fn checkpoint_integrity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = SplitMix64::new(9);
    let config = MlpConfig::new(9, vec![32, 16], 4, OutputHead::Sigmoid).map_err(|e| e.to_string())?;
    let model = init_model(&config, 99).map_err(|e| e.to_string())?;
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        task: Task::Classifier,
        config,
        feature_columns: names("f", 9),
        encoded_feature_columns: names("f", 9),
        target_columns: names("t", 4),
        scalers_fingerprint: "00".into(),
        objective: None,
        trial_number: None,
    };
    let path = dir.path().join("ckpt");
    save_checkpoint(&model, &manifest, &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let x = random_matrix(&mut rng, 64, 9, -3.0, 3.0);
    let before = model.forward(x.view()).map_err(|e| e.to_string())?;
    let after = loaded.model.forward(x.view()).map_err(|e| e.to_string())?;
    ensure!(
        before.iter().zip(after.iter()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "forward outputs differ after reload"
    );

    let weights = fs::read(path.join(WEIGHTS_FILE)).map_err(|e| e.to_string())?;
    for cut in [weights.len() - 1, weights.len() - 8, weights.len() / 2, 10, 0] {
        fs::write(path.join(WEIGHTS_FILE), &weights[..cut]).map_err(|e| e.to_string())?;
        let result = load_checkpoint(&path);
        ensure!(
            matches!(result, Err(NeuralError::CorruptWeights(_))),
            "weights truncated to {cut} bytes gave {:?}",
            result.map(|_| ())
        );
    }

    // A trained retrofit classifier must not be deployable as the PV service.
    let ckpt = train_fixture_model(Service::Retrofit, &dir.path().join("work")).map_err(|e| e.to_string())?;
    let registry = Registry::new(dir.path().join("registry"));
    let err = registry.deploy_checkpoint(Service::Pv, &ckpt).err();
    ensure!(matches!(err, Some(OrchestrateError::TaskMismatch { .. })), "pv deploy of a classifier gave {err:?}");
    ensure!(registry.active_version(Service::Pv).ok().flatten().is_none(), "rejected deploy left an active version");
    Ok("bitwise forward round-trip, 5 truncations rejected, task-mismatched deploy rejected".into())
}

#[test]
fn acceptance() {
    let checks: [NamedCheck; 9] = [
        ("gradient correctness", gradient_check),
        ("determinism", determinism),
        ("learning sanity", learning_sanity),
        ("pruning rule", pruning_rule),
        ("metric oracles", metric_oracles),
        ("scaler round-trip", scaler_round_trip),
        ("api contract", api_contract),
        ("ingestion artifacts", ingestion_artifacts),
        ("checkpoint integrity", checkpoint_integrity),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                println!("criterion {} {name}: FAIL ({why}) [{secs:.1}s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
