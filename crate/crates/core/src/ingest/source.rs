use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DataSource {
    LocalFile(PathBuf),
    HttpEndpoint(url::Url),
    ConnectionString(String),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::LocalFile(p) => write!(f, "{}", p.display()),
            DataSource::HttpEndpoint(u) => write!(f, "{u}"),
            DataSource::ConnectionString(d) => write!(f, "{d}"),
        }
    }
}

const DSN_SCHEMES: &[&str] = &[
    "postgres",
    "postgresql",
    "mysql",
    "mariadb",
    "sqlite",
    "mssql",
    "sqlserver",
    "oracle",
    "mongodb",
    "mongodb+srv",
    "redshift",
];

/// Classifies a source string, trying URL, then DSN, then file path.
pub fn validate_source(text: &str) -> Result<DataSource, IngestError> {
    let text = text.trim();
    let unrecognized = || IngestError::UnrecognizedSource(text.to_string());
    if text.is_empty() {
        return Err(unrecognized());
    }
    if let Ok(url) = url::Url::parse(text) {
        match url.scheme() {
            "http" | "https" if url.host_str().is_some_and(|h| !h.is_empty()) => {
                return Ok(DataSource::HttpEndpoint(url));
            }
            scheme if DSN_SCHEMES.contains(&scheme) => {
                return Ok(DataSource::ConnectionString(text.to_string()));
            }
            _ => return Err(unrecognized()),
        }
    }
    if is_key_value_dsn(text) {
        return Ok(DataSource::ConnectionString(text.to_string()));
    }
    if is_path(text) {
        return Ok(DataSource::LocalFile(PathBuf::from(text)));
    }
    Err(unrecognized())
}

/// libpq-style `host=... dbname=...` strings.
fn is_key_value_dsn(text: &str) -> bool {
    let mut keys = Vec::new();
    for pair in text.split_whitespace() {
        match pair.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                if !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return false;
                }
                keys.push(k.to_ascii_lowercase());
            }
            _ => return false,
        }
    }
    keys.iter()
        .any(|k| matches!(k.as_str(), "host" | "hostaddr" | "dbname" | "database" | "server"))
}

fn is_path(text: &str) -> bool {
    !text.contains("://")
        && text
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '/' | '\\' | '.' | '_' | '-' | ' ' | '~' | '+'))
        && text.chars().any(|c| c.is_alphanumeric())
}

/// Credentials for fetching from a data-space provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorConfig {
    pub authorization: String,
    pub consumer_agent_id: String,
    pub provider_agent_id: String,
}

pub const API_KEY_PREFIX: &str = "APIKEY-";
pub const CONSUMER_HEADER: &str = "X-Consumer-Agent-Id";
pub const PROVIDER_HEADER: &str = "X-Provider-Agent-Id";

impl ConnectorConfig {
    pub fn new(
        authorization: impl Into<String>,
        consumer_agent_id: impl Into<String>,
        provider_agent_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let config = Self {
            authorization: authorization.into(),
            consumer_agent_id: consumer_agent_id.into(),
            provider_agent_id: provider_agent_id.into(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.authorization.len() <= API_KEY_PREFIX.len()
            || !self.authorization.starts_with(API_KEY_PREFIX)
        {
            return Err(IngestError::Connector(format!(
                "authorization must be `{API_KEY_PREFIX}` followed by a token"
            )));
        }
        if self.consumer_agent_id.trim().is_empty() || self.provider_agent_id.trim().is_empty() {
            return Err(IngestError::Connector("agent ids must be non-empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_examples() {
        assert!(matches!(
            validate_source("https://baseurl/data-app-path/openapi/v1/endpoint"),
            Ok(DataSource::HttpEndpoint(_))
        ));
        assert_eq!(
            validate_source("/app/shared_storage/data.csv").unwrap(),
            DataSource::LocalFile("/app/shared_storage/data.csv".into())
        );
        assert!(matches!(
            validate_source("ht!tp:::bad"),
            Err(IngestError::UnrecognizedSource(_))
        ));
    }

    #[test]
    fn classifies_dsns_and_relative_paths() {
        assert!(matches!(
            validate_source("postgresql://user:pw@db:5432/energy"),
            Ok(DataSource::ConnectionString(_))
        ));
        assert!(matches!(
            validate_source("host=db dbname=energy user=me"),
            Ok(DataSource::ConnectionString(_))
        ));
        assert!(matches!(
            validate_source("fixtures/retrofit.csv"),
            Ok(DataSource::LocalFile(_))
        ));
        assert!(validate_source("ftp://host/file.csv").is_err());
        assert!(validate_source("").is_err());
        assert!(validate_source("http://").is_err());
    }

    #[test]
    fn connector_rules() {
        assert!(ConnectorConfig::new("APIKEY-abc", "urn:a", "urn:b").is_ok());
        assert!(ConnectorConfig::new("abc", "urn:a", "urn:b").is_err());
        assert!(ConnectorConfig::new("APIKEY-", "urn:a", "urn:b").is_err());
        assert!(ConnectorConfig::new("APIKEY-abc", " ", "urn:b").is_err());
    }
}
