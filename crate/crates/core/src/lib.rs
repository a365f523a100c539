//! Tabular MLP pipeline behind the building retrofit and photovoltaic
//! decision tools: ingestion, training with hyperparameter search and
//! median pruning, evaluation, run orchestration and model registry.

pub mod config;
pub mod domain;
pub mod evaluate;
pub mod fixtures;
pub mod ingest;
pub mod neural;
pub mod orchestrate;
pub mod rng;
pub mod tune;
