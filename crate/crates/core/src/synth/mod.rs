//! Candidate-invariant synthesis backends.
//!
//! A backend answers four kinds of request: a free-text analysis of the
//! function, placeholder fillings for the outer-loop templates, whole
//! invariants for a nested loop, and a refinement of a failing invariant
//! set. The mock backend is deterministic and rule based; the HTTP backend
//! talks to a chat-completions endpoint.

pub mod http;
pub mod mock;
pub mod prompt;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::frontend::{parse_assertion, Assertion};
use crate::loopanalysis::LoopInfo;
use crate::memstore::MemoryLayout;
use crate::templates::InvariantTemplate;
use crate::verifier::report::ErrorClass;

pub use http::HttpBackend;
pub use mock::MockBackend;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("backend request failed: {0}")]
    Transport(String),
    #[error("backend answer could not be read: {0}")]
    Malformed(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Structured loop facts, used by the mock instead of the prompt text.
#[derive(Clone, Copy, Debug)]
pub struct LoopContext<'a> {
    pub info: &'a LoopInfo,
    pub templates: &'a [InvariantTemplate],
    pub layout: &'a MemoryLayout,
    /// Whether this loop sits inside another loop.
    pub nested: bool,
}

/// One refinement instruction derived from a verifier failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Guidance {
    pub class: ErrorClass,
    /// Clause the instruction is about, in printed form.
    pub clause: Option<String>,
    /// `name = value` lines of the failing state.
    pub counterexample: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct SynthesisRequest<'a> {
    pub function: String,
    /// The function with its current annotations.
    pub function_source: String,
    pub loop_source: String,
    pub precondition: String,
    pub templates: Vec<String>,
    /// Earlier free-text analysis, passed back as context.
    pub analysis: Option<String>,
    /// Current invariants of the loop being refined, in printed form.
    pub current: Vec<String>,
    pub guidance: Vec<Guidance>,
    pub calibration: bool,
    /// Sampling round; only meaningful for stochastic backends.
    pub round: u64,
    pub context: Option<LoopContext<'a>>,
}

/// A clause proposed by a backend.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Candidate {
    Parsed(Assertion),
    /// Text that did not parse, with the parser's message.
    Raw { text: String, message: String },
}

impl Candidate {
    pub fn from_text(text: &str) -> Candidate {
        let text = text.trim().trim_end_matches(';').trim();
        match parse_assertion(text) {
            Ok(a) => Candidate::Parsed(a),
            Err(e) => Candidate::Raw {
                text: text.to_string(),
                message: e.to_string(),
            },
        }
    }

    pub fn text(&self) -> String {
        match self {
            Candidate::Parsed(a) => a.to_string(),
            Candidate::Raw { text, .. } => text.clone(),
        }
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Free-text analysis of the function's loops.
    fn think(&self, req: &SynthesisRequest) -> Result<String, SynthError>;

    /// Fillings for the placeholders of `req.templates`, keyed by
    /// placeholder name without the prefix.
    fn fill(&self, req: &SynthesisRequest) -> Result<BTreeMap<String, Candidate>, SynthError>;

    /// Complete invariants for a nested loop.
    fn propose_nested(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError>;

    /// A revised invariant set following `req.guidance`.
    fn refine(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError>;
}

/// Picks the backend from `SESPEC_BACKEND` (`mock` by default, or `http`).
pub fn backend_from_env() -> Result<Box<dyn Backend>, SynthError> {
    match std::env::var("SESPEC_BACKEND").as_deref() {
        Err(_) | Ok("") | Ok("mock") => Ok(Box::new(MockBackend::new())),
        Ok("http") => Ok(Box::new(HttpBackend::from_env()?)),
        Ok(other) => Err(SynthError::Config(format!("unknown backend `{other}`"))),
    }
}
