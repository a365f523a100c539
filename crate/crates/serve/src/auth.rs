use thiserror::Error;

use enerfit_core::ingest::API_KEY_PREFIX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthConfigError {
    #[error("authentication is enabled but no API key is configured")]
    NoKeys,
    #[error("API keys must start with `{API_KEY_PREFIX}`")]
    BadPrefix,
}

/// Accepted API keys, checked against the `Authorization` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiKeys {
    keys: Vec<Vec<u8>>,
    enabled: bool,
}

/// Compares in time independent of where the inputs first differ.
fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl ApiKeys {
    pub fn new(keys: Vec<String>) -> Result<Self, AuthConfigError> {
        if keys.is_empty() {
            return Err(AuthConfigError::NoKeys);
        }
        if keys.iter().any(|k| !k.starts_with(API_KEY_PREFIX) || k.len() == API_KEY_PREFIX.len()) {
            return Err(AuthConfigError::BadPrefix);
        }
        Ok(Self {
            keys: keys.into_iter().map(String::into_bytes).collect(),
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        Self {
            keys: Vec::new(),
            enabled: false,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Accepts the bare key or `Bearer <key>`.
    pub fn accepts(&self, header: Option<&str>) -> bool {
        if !self.enabled {
            return true;
        }
        let Some(value) = header else { return false };
        let value = value.trim();
        let key = value.strip_prefix("Bearer ").unwrap_or(value).trim().as_bytes();
        // Check every key so the time taken does not reveal which matched.
        self.keys.iter().fold(false, |hit, k| ct_eq(k, key) | hit)
    }
}
