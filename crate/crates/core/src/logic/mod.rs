//! Formula machinery shared by the symbolic executor and the verifier:
//! normal forms, lowering to an evaluable form, and bounded model search.

pub mod eval;
pub mod lower;
pub mod poly;
pub mod search;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::memstore::Location;

pub use lower::{LowerError, Lowerer};
pub use poly::{simplify, terms_equal};
pub use search::{entails, find_counterexample, find_model, Model, SearchOutcome};

/// Bounds of the verifier's finite search space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Inclusive integer range for free values.
    pub int_range: (i64, i64),
    /// Array cells at or past this index share one representative cell.
    pub max_array_len: usize,
    /// Enumeration cap per check.
    pub max_states: usize,
    /// Seed for the sampling phase.
    pub seed: u64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            int_range: (-8, 8),
            max_array_len: 4,
            max_states: 20_000,
            seed: 0,
        }
    }
}

impl DomainConfig {
    pub fn with_range(lo: i64, hi: i64) -> DomainConfig {
        DomainConfig {
            int_range: (lo, hi),
            ..DomainConfig::default()
        }
    }

    /// Maps a location to the cell that stands for it in the search space.
    pub fn tie(&self, loc: &Location) -> Location {
        let mut l = loc.clone();
        for s in &mut l.steps {
            if let crate::memstore::LocStep::Index(k) = s {
                if *k > self.max_array_len {
                    *k = self.max_array_len;
                }
            }
        }
        l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Cur,
    Pre,
    LoopEntry,
}

/// One free integer of a search problem.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Cell(Region, Location),
    Sym(String),
    Result,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Cell(Region::Cur, l) => write!(f, "{l}"),
            Slot::Cell(Region::Pre, l) => write!(f, "\\at({l}, Pre)"),
            Slot::Cell(Region::LoopEntry, l) => write!(f, "\\at({l}, LoopEntry)"),
            Slot::Sym(s) => f.write_str(s),
            Slot::Result => f.write_str("\\result"),
        }
    }
}
