//! Chat-completions backend over HTTP.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::prompt::{fill_prompt, nested_prompt, parse_fillings, parse_invariants, refine_prompt, system_prompt, think_prompt};
use super::{Backend, Candidate, SynthError, SynthesisRequest};

#[derive(Clone, Debug)]
pub struct HttpBackend {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl HttpBackend {
    /// Reads `SESPEC_API_URL`, `SESPEC_API_KEY`, `SESPEC_MODEL` and
    /// `SESPEC_TEMPERATURE`.
    pub fn from_env() -> Result<HttpBackend, SynthError> {
        let url = std::env::var("SESPEC_API_URL").map_err(|_| SynthError::Config("SESPEC_API_URL is not set".into()))?;
        let temperature = match std::env::var("SESPEC_TEMPERATURE") {
            Ok(t) => t
                .parse()
                .map_err(|_| SynthError::Config(format!("bad SESPEC_TEMPERATURE `{t}`")))?,
            Err(_) => 0.7,
        };
        Ok(HttpBackend {
            url,
            api_key: std::env::var("SESPEC_API_KEY").ok(),
            model: std::env::var("SESPEC_MODEL").unwrap_or_else(|_| "gpt-4o".into()),
            temperature,
            timeout: Duration::from_secs(120),
        })
    }

    fn complete(&self, user: &str, round: u64) -> Result<String, SynthError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "seed": round,
            "messages": [
                {"role": "system", "content": system_prompt()},
                {"role": "user", "content": user},
            ],
        });
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .new_agent();
        let mut req = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| SynthError::Transport(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SynthError::Transport(e.to_string()))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| SynthError::Malformed(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| SynthError::Malformed("no message content in response".into()))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn think(&self, req: &SynthesisRequest) -> Result<String, SynthError> {
        self.complete(&think_prompt(req), req.round)
    }

    fn fill(&self, req: &SynthesisRequest) -> Result<BTreeMap<String, Candidate>, SynthError> {
        Ok(parse_fillings(&self.complete(&fill_prompt(req), req.round)?))
    }

    fn propose_nested(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError> {
        Ok(parse_invariants(&self.complete(&nested_prompt(req), req.round)?))
    }

    fn refine(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError> {
        Ok(parse_invariants(&self.complete(&refine_prompt(req), req.round)?))
    }
}
