use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::queue::DEFAULT_LEASE_MS;
use crate::ReviewError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub bind: SocketAddr,
    /// Directory holding the decision log, candidate images and pairs.
    pub store: PathBuf,
    pub lease_ms: u64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store: PathBuf::from("review-store"),
            lease_ms: DEFAULT_LEASE_MS,
        }
    }
}

impl ReviewConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ReviewError> {
        toml::from_str(text).map_err(|e| ReviewError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ReviewError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReviewError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
