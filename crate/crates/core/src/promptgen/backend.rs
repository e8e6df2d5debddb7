use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Decoding settings forwarded to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub num_beams: u32,
    pub forbid_repeated_bigrams: bool,
    pub early_stopping: bool,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            num_beams: 10,
            forbid_repeated_bigrams: true,
            early_stopping: true,
            max_new_tokens: 16,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_beams == 0 || self.max_new_tokens == 0 {
            return Err(Error::InvalidArgument(
                "num_beams and max_new_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub output: String,
    pub token_count: u32,
}

/// A text-generation service. Must tolerate concurrent calls.
pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, input: &str, params: &GenerationParams) -> Result<Generation>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, input: &str, params: &GenerationParams) -> Result<Generation> {
        (**self).generate(input, params)
    }
}

/// Runs one generation and returns the raw continuation.
pub fn generate(
    backend: &dyn GenerationBackend,
    input: &str,
    params: &GenerationParams,
) -> Result<String> {
    params.validate()?;
    backend.generate(input, params).map(|g| g.output)
}

/// Deterministic offline backend.
///
/// Inputs found in the lookup table get the mapped output; anything else
/// echoes the first `max_new_tokens` whitespace-separated tokens of the input.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    responses: HashMap<String, String>,
}

impl StubBackend {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self { responses }
    }

    /// Loads a JSON object mapping input → output.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let responses = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self { responses })
    }
}

impl GenerationBackend for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn generate(&self, input: &str, params: &GenerationParams) -> Result<Generation> {
        let output = match self.responses.get(input) {
            Some(out) => out.clone(),
            None => input
                .split_whitespace()
                .take(params.max_new_tokens as usize)
                .collect::<Vec<_>>()
                .join(" "),
        };
        let token_count = output.split_whitespace().count() as u32;
        Ok(Generation { output, token_count })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    input: &'a str,
    params: &'a GenerationParams,
}

/// JSON-over-HTTP backend: POSTs `{input, params}` to the endpoint and expects
/// `{output, token_count}` back.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
    max_attempts: u32,
    retry_delay: Duration,
}

impl HttpBackend {
    pub const TOKEN_VAR: &'static str = "EQK_BACKEND_TOKEN";

    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            token: std::env::var(Self::TOKEN_VAR).ok().filter(|t| !t.is_empty()),
            max_attempts: 3,
            retry_delay: Duration::from_millis(500),
        })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_retries(mut self, max_attempts: u32, delay: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.retry_delay = delay;
        self
    }

    fn call_once(&self, input: &str, params: &GenerationParams) -> std::result::Result<Generation, String> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&WireRequest { input, params });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| e.to_string())?;
        let g: Generation = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        if g.token_count > params.max_new_tokens {
            return Err(format!(
                "backend returned {} tokens, limit is {}",
                g.token_count, params.max_new_tokens
            ));
        }
        Ok(g)
    }
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn generate(&self, input: &str, params: &GenerationParams) -> Result<Generation> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.call_once(input, params) {
                Ok(g) => return Ok(g),
                Err(e) => {
                    log::warn!("backend attempt {attempt}/{} failed: {e}", self.max_attempts);
                    last = e;
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.retry_delay);
                    }
                }
            }
        }
        Err(Error::Backend {
            attempts: self.max_attempts,
            message: last,
        })
    }
}

/// Settings handed to an external fine-tuning job. Nothing here trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub optimizer: String,
    pub learning_rate: f64,
    pub epochs: u32,
    pub max_input_length: u32,
    pub validation_fraction: f64,
    pub checkpoint_metric: String,
    pub generation: GenerationParams,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            optimizer: "adafactor".into(),
            learning_rate: 1e-3,
            epochs: 10,
            max_input_length: 512,
            validation_fraction: 0.15,
            checkpoint_metric: "levenshtein_ratio".into(),
            generation: GenerationParams::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params() {
        let p = GenerationParams::default();
        assert_eq!((p.num_beams, p.forbid_repeated_bigrams, p.early_stopping, p.max_new_tokens), (10, true, true, 16));
        assert!(GenerationParams { num_beams: 0, ..p }.validate().is_err());
    }

    #[test]
    fn stub_mapping_and_fallback() {
        let stub = StubBackend::new(HashMap::from([("X".into(), "oecd growth forecast".into())]));
        let p = GenerationParams::default();
        assert_eq!(generate(&stub, "X", &p).unwrap(), "oecd growth forecast");
        let long: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let out = generate(&stub, &long.join("  "), &p).unwrap();
        assert_eq!(out, long[..16].join(" "));
    }

    #[test]
    fn trainer_config_values() {
        let json = serde_json::to_value(TrainerConfig::default()).unwrap();
        assert_eq!(json["optimizer"], "adafactor");
        assert_eq!(json["learning_rate"], 1e-3);
        assert_eq!(json["epochs"], 10);
        assert_eq!(json["max_input_length"], 512);
    }
}
