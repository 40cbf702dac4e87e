//! Specification generation for a small C subset.

pub mod frontend;
pub mod memstore;
pub mod logic;
pub mod symexec;
pub mod loopanalysis;
pub mod templates;
pub mod verifier;
pub mod synth;
pub mod refine;
pub mod pipeline;
pub mod metrics;
pub mod cli;
