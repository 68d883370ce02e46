//! Model clients. Every external model sits behind a trait from the stage
//! that uses it; this module holds adapters and deterministic mocks.

pub mod glyph;
pub mod mock;

#[cfg(feature = "sandbox")]
pub mod command;
#[cfg(feature = "http")]
pub mod http;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend `{backend}` failed: {message}")]
    Failed { backend: String, message: String },
    #[error("backend `{backend}` timed out after {ms} ms")]
    Timeout { backend: String, ms: u64 },
    #[error("backend `{backend}` returned malformed output: {message}")]
    Protocol { backend: String, message: String },
}

impl BackendError {
    pub fn failed(backend: &str, message: impl Into<String>) -> Self {
        Self::Failed {
            backend: backend.to_string(),
            message: message.into(),
        }
    }

    pub fn protocol(backend: &str, message: impl Into<String>) -> Self {
        Self::Protocol {
            backend: backend.to_string(),
            message: message.into(),
        }
    }
}
