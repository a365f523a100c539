//! `enerfit`: run pipeline steps, deploy checkpoints, serve the API and
//! make one-shot predictions.

use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use enerfit_core::config::{apply_override, load_config_document, validate_run_config, ConfigError, RunConfig};
use enerfit_core::evaluate::METRICS_FILE;
use enerfit_core::orchestrate::{
    ArtifactStore, OrchestrateError, Orchestrator, Registry, RunRecord, RunStatus, Service, Step,
};
use enerfit_serve::{predict, ApiError, ApiKeys, AppState, LoadedModel, DEFAULT_RETENTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "enerfit", version, about = "Tabular MLP pipeline and prediction service")]
struct Cli {
    /// Output format for results.
    #[arg(long, value_enum, default_value = "text", global = true)]
    output: OutputFormat,
    /// Directory holding runs and the model registry.
    #[arg(long, default_value = "artifacts", global = true, env = "ENERFIT_ARTIFACT_ROOT")]
    artifact_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct PipelineArgs {
    /// Run config document (YAML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch, clean, split and scale the configured dataset.
    Ingest(PipelineArgs),
    /// Run the hyperparameter study; needs ingestion artifacts via `from_run`.
    Train(PipelineArgs),
    /// Score a checkpoint on held-out data; needs a checkpoint via `from_run`.
    Evaluate(PipelineArgs),
    /// Ingestion, training and evaluation in one run.
    RunAll(PipelineArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Accepted API key; repeatable.
        #[arg(long = "api-key", env = "ENERFIT_API_KEYS", value_delimiter = ',')]
        api_keys: Vec<String>,
        /// Accept requests without an API key.
        #[arg(long)]
        no_auth: bool,
        /// Number of predictions kept for report export.
        #[arg(long, default_value_t = DEFAULT_RETENTION)]
        retention: usize,
    },
    /// Predict with the deployed model; reads a JSON body from a file or stdin.
    Predict {
        #[arg(long)]
        service: String,
        /// Request body file; `-` or absent reads stdin.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Register a checkpoint as the active model of a service.
    Deploy {
        #[arg(long)]
        service: String,
        /// Checkpoint directory.
        #[arg(long, conflicts_with = "run", required_unless_present = "run")]
        checkpoint: Option<PathBuf>,
        /// Deploy the checkpoint produced by this run.
        #[arg(long)]
        run: Option<String>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Orchestrate(#[from] OrchestrateError),
    #[error("{}: {}", .0.problem.code, .0.problem.message)]
    Predict(ApiError),
    #[error("run {run_id} failed: {message}")]
    RunFailed { run_id: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

fn load_config(args: &PipelineArgs) -> Result<RunConfig, CliError> {
    let mut raw = load_config_document(&args.config)?;
    for o in &args.overrides {
        apply_override(&mut raw, o)?;
    }
    Ok(validate_run_config(&raw)?)
}

fn emit(format: OutputFormat, json: Value, text: String) {
    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&json).expect("json output")),
        OutputFormat::Text => println!("{text}"),
    }
}

fn run_steps(cli: &Cli, args: &PipelineArgs, steps: &[Step]) -> Result<(), CliError> {
    let config = load_config(args)?;
    let orchestrator = Orchestrator::new(ArtifactStore::new(&cli.artifact_root)?);
    let run_id = orchestrator.launch(config, steps)?;
    let record = orchestrator.wait(&run_id, Duration::from_secs(24 * 3600))?;
    orchestrator.shutdown();
    report_run(cli.output, &record)?;
    if record.status != RunStatus::Succeeded {
        return Err(CliError::RunFailed {
            run_id,
            message: record.error.unwrap_or_default(),
        });
    }
    Ok(())
}

fn report_run(format: OutputFormat, record: &RunRecord) -> Result<(), CliError> {
    let metrics = record
        .step(Step::Evaluation)
        .and_then(|s| s.artifacts.iter().find(|a| a.ends_with(METRICS_FILE)).cloned());
    let mut text = format!("run_id: {}\nstatus: {:?}", record.run_id, record.status);
    for s in &record.step_records {
        text.push_str(&format!("\n{}: {:?}", s.step, s.status));
        for a in &s.artifacts {
            text.push_str(&format!("\n  {a}"));
        }
    }
    if let Some(m) = &metrics {
        text.push_str(&format!("\nmetrics: {m}"));
    }
    let json = json!({
        "run_id": record.run_id,
        "status": record.status,
        "metrics_path": metrics,
        "record": record,
    });
    if record.status == RunStatus::Succeeded {
        emit(format, json, text);
    } else if format == OutputFormat::Json {
        emit(format, json, String::new());
    }
    Ok(())
}

fn read_body(input: Option<&Path>) -> Result<Value, CliError> {
    let text = match input {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
        }
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
            s
        }
    };
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("request body is not JSON: {e}")))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => run_steps(cli, a, &[Step::Ingestion]),
        Command::Train(a) => run_steps(cli, a, &[Step::Training]),
        Command::Evaluate(a) => run_steps(cli, a, &[Step::Evaluation]),
        Command::RunAll(a) => run_steps(cli, a, &Step::ALL),
        Command::Serve {
            listen,
            api_keys,
            no_auth,
            retention,
        } => {
            let keys = if *no_auth {
                ApiKeys::disabled()
            } else {
                ApiKeys::new(api_keys.clone()).map_err(|e| CliError::Other(e.to_string()))?
            };
            let state = Arc::new(AppState::new(&cli.artifact_root, keys, *retention)?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime
                .block_on(enerfit_serve::serve(*listen, state))
                .map_err(|e| CliError::Io(format!("{listen}: {e}")))
        }
        Command::Predict { service, input } => {
            let service: Service = service.parse()?;
            let registry = Registry::new(ArtifactStore::new(&cli.artifact_root)?.registry_dir());
            let (version, checkpoint, scalers) = registry
                .load_active(service)?
                .ok_or_else(|| CliError::Other(format!("no {service} model is deployed")))?;
            let model = LoadedModel {
                service,
                version,
                checkpoint,
                scalers,
            };
            let response = predict(&model, &read_body(input.as_deref())?).map_err(CliError::Predict)?;
            let mut text = format!("{service} prediction ({})", response.model_version);
            for (k, v) in &response.outputs {
                let p = response
                    .probabilities
                    .as_ref()
                    .and_then(|m| m.get(k))
                    .map(|p| format!(" (p={p})"))
                    .unwrap_or_default();
                text.push_str(&format!("\n  {k}: {v}{p}"));
            }
            if !response.imputed_fields.is_empty() {
                text.push_str(&format!("\nimputed: {}", response.imputed_fields.join(", ")));
            }
            emit(cli.output, serde_json::to_value(&response).expect("response serializes"), text);
            Ok(())
        }
        Command::Deploy { service, checkpoint, run } => {
            let service: Service = service.parse()?;
            let store = ArtifactStore::new(&cli.artifact_root)?;
            let dir = match (checkpoint, run) {
                (Some(dir), _) => dir.clone(),
                (None, Some(run_id)) => {
                    let record = store.load_record(run_id)?;
                    let base = store.run_dir(run_id);
                    let p = Path::new(&record.config.ml_path);
                    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
                }
                (None, None) => unreachable!("clap requires one of --checkpoint or --run"),
            };
            let info = Registry::new(store.registry_dir()).deploy_checkpoint(service, &dir)?;
            emit(
                cli.output,
                serde_json::to_value(&info).expect("version info serializes"),
                format!("deployed {} as {service} {}", dir.display(), info.version),
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
