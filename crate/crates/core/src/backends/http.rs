//! JSON-over-HTTP client for a hosted refinement model. Request and
//! response bodies follow `schemas/diffusion-backend.schema.json`.

use std::collections::BTreeMap;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::imaging::RasterImage;
use crate::refine::{DiffusionBackend, RefinementRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionHttpRequest {
    pub prompt: String,
    pub strength: f64,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Base64 PNG, white edges on black.
    pub edge_map: String,
    /// Base64 PNG, white where the caller will restore original pixels.
    pub preservation_mask: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_image: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionHttpResponse {
    /// Base64 PNG.
    pub image: String,
}

impl DiffusionHttpRequest {
    pub fn from_request(r: &RefinementRequest) -> Self {
        Self {
            prompt: r.style.prompt.clone(),
            strength: r.style.strength(),
            seed: r.style.seed,
            width: r.width,
            height: r.height,
            edge_map: STANDARD.encode(r.edge_map.encode_png()),
            preservation_mask: STANDARD.encode(r.preservation_mask.encode_png()),
            init_image: r.init_image.as_ref().map(|i| STANDARD.encode(i.encode_png())),
            params: r.params.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpDiffusion {
    pub name: String,
    pub url: String,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    120_000
}

impl HttpDiffusion {
    pub fn decode_response(&self, body: &DiffusionHttpResponse) -> Result<RasterImage, BackendError> {
        let bytes = STANDARD
            .decode(body.image.trim())
            .map_err(|e| BackendError::protocol(&self.name, format!("image is not base64: {e}")))?;
        RasterImage::decode_png(&bytes).map_err(|e| BackendError::protocol(&self.name, e.to_string()))
    }
}

impl DiffusionBackend for HttpDiffusion {
    fn name(&self) -> &str {
        &self.name
    }

    fn refine(&self, request: &RefinementRequest) -> Result<RasterImage, BackendError> {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms)))
            .build();
        let agent = ureq::Agent::new_with_config(config);
        let mut call = agent.post(&self.url);
        if let Some(var) = &self.auth_env {
            let token = std::env::var(var)
                .map_err(|_| BackendError::failed(&self.name, format!("environment variable {var} is not set")))?;
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let body = DiffusionHttpRequest::from_request(request);
        let mut resp = call.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout {
                backend: self.name.clone(),
                ms: self.timeout_ms,
            },
            other => BackendError::failed(&self.name, other.to_string()),
        })?;
        let parsed: DiffusionHttpResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::protocol(&self.name, e.to_string()))?;
        self.decode_response(&parsed)
    }
}
