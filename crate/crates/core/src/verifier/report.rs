//! Verification verdicts, counterexamples and error classes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::frontend::{Assertion, LoopId};
use crate::logic::DomainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Base,
    Preservation,
    Termination,
    Goal,
    Ensures,
    Safety,
}

/// A state in which the hypotheses hold and the goal does not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: Check,
    pub hyps: Vec<String>,
    pub goal: String,
    /// Value per memory slot (`x`, `\at(p->f, Pre)`, ...) and havoc symbol.
    pub model: BTreeMap<String, i64>,
}

impl Counterexample {
    /// `name = value` lines.
    pub fn render(&self) -> String {
        self.model
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail(Counterexample),
    Error(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn failed(&self) -> bool {
        matches!(self, Verdict::Fail(_))
    }

    fn merge(&mut self, other: Verdict) {
        if self.passed() && !other.passed() {
            *self = other;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseVerdict {
    pub loop_id: u32,
    pub index: usize,
    pub text: String,
    pub base: Verdict,
    pub preservation: Verdict,
}

impl ClauseVerdict {
    pub fn merge_base(&mut self, v: Verdict) {
        self.base.merge(v);
    }

    pub fn merge_preservation(&mut self, v: Verdict) {
        self.preservation.merge(v);
    }

    pub fn is_error(&self) -> bool {
        matches!(self.base, Verdict::Error(_)) || matches!(self.preservation, Verdict::Error(_))
    }

    pub fn passed(&self) -> bool {
        self.base.passed() && self.preservation.passed()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalVerdict {
    pub check: Check,
    /// Loop the failure is blamed on.
    pub loop_id: Option<u32>,
    pub text: String,
    pub verdict: Verdict,
}

/// A candidate that never reached the verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxIssue {
    pub loop_id: u32,
    pub text: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    Verified,
    InvalidInvariants,
    GoalsUnproven,
    SyntaxErrors,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub function: String,
    pub clauses: Vec<ClauseVerdict>,
    pub goals: Vec<GoalVerdict>,
    pub syntax: Vec<SyntaxIssue>,
    /// Loops without invariants; code after them was not explored.
    pub unannotated_loops: Vec<u32>,
    pub bounded: bool,
    pub domain: DomainConfig,
    pub overall: Overall,
}

impl VerificationReport {
    pub fn new(function: &str, cfg: &DomainConfig) -> VerificationReport {
        VerificationReport {
            function: function.to_string(),
            clauses: Vec::new(),
            goals: Vec::new(),
            syntax: Vec::new(),
            unannotated_loops: Vec::new(),
            bounded: true,
            domain: cfg.clone(),
            overall: Overall::Verified,
        }
    }

    pub fn register_loop(&mut self, id: LoopId, inv: &[Assertion]) {
        for (k, c) in inv.iter().enumerate() {
            if !self.clauses.iter().any(|v| v.loop_id == id.0 && v.index == k) {
                self.clauses.push(ClauseVerdict {
                    loop_id: id.0,
                    index: k,
                    text: c.to_string(),
                    base: Verdict::Pass,
                    preservation: Verdict::Pass,
                });
            }
        }
    }

    pub fn clause_mut(&mut self, id: LoopId, k: usize) -> &mut ClauseVerdict {
        self.clauses
            .iter_mut()
            .find(|v| v.loop_id == id.0 && v.index == k)
            .expect("clause registered")
    }

    pub fn push_goal(&mut self, check: Check, loop_id: Option<LoopId>, text: String, verdict: Verdict) {
        let loop_id = loop_id.map(|l| l.0);
        if let Some(g) = self
            .goals
            .iter_mut()
            .find(|g| g.check == check && g.loop_id == loop_id && g.text == text)
        {
            g.verdict.merge(verdict);
        } else {
            self.goals.push(GoalVerdict {
                check,
                loop_id,
                text,
                verdict,
            });
        }
    }

    /// Computes the overall status.
    pub fn finish(&mut self) {
        self.overall = if !self.syntax.is_empty() || self.clauses.iter().any(ClauseVerdict::is_error) {
            Overall::SyntaxErrors
        } else if self.clauses.iter().any(|c| !c.passed())
            || self
                .goals
                .iter()
                .any(|g| g.check == Check::Preservation && !g.verdict.passed())
        {
            Overall::InvalidInvariants
        } else if self.goals.iter().any(|g| !g.verdict.passed()) {
            Overall::GoalsUnproven
        } else {
            Overall::Verified
        };
    }

    /// Clause verdicts of one loop, in clause order.
    pub fn loop_clauses(&self, id: LoopId) -> Vec<&ClauseVerdict> {
        let mut v: Vec<&ClauseVerdict> = self.clauses.iter().filter(|c| c.loop_id == id.0).collect();
        v.sort_by_key(|c| c.index);
        v
    }

    /// Whether the clauses of `id` pass Base and Preservation.
    pub fn loop_valid(&self, id: LoopId) -> bool {
        self.loop_clauses(id).iter().all(|c| c.passed())
            && !self
                .goals
                .iter()
                .any(|g| g.check == Check::Preservation && g.loop_id == Some(id.0) && !g.verdict.passed())
            && !self.syntax.iter().any(|s| s.loop_id == id.0)
    }

    /// Failed goal checks blamed on `id`.
    pub fn loop_goal_failures(&self, id: LoopId) -> Vec<&GoalVerdict> {
        self.goals
            .iter()
            .filter(|g| g.loop_id == Some(id.0) && !g.verdict.passed())
            .collect()
    }

    /// Every counterexample in the report.
    pub fn counterexamples(&self) -> Vec<&Counterexample> {
        let mut out = Vec::new();
        for c in &self.clauses {
            for v in [&c.base, &c.preservation] {
                if let Verdict::Fail(cex) = v {
                    out.push(cex);
                }
            }
        }
        for g in &self.goals {
            if let Verdict::Fail(cex) = &g.verdict {
                out.push(cex);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorClass {
    Repair,
    Weaken,
    Adjust,
    Strengthen,
    Regenerate,
}

/// What an error class applies to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ErrorTarget {
    Clause(usize),
    /// Unparsed candidate text.
    Text(String),
    /// The invariant set as a whole.
    All,
}

/// Maps the failures of loop `id` to refinement strategies.
pub fn classify_errors(report: &VerificationReport, id: LoopId) -> Vec<(ErrorClass, ErrorTarget)> {
    let mut out = Vec::new();
    for s in report.syntax.iter().filter(|s| s.loop_id == id.0) {
        out.push((ErrorClass::Repair, ErrorTarget::Text(s.text.clone())));
    }
    for c in report.loop_clauses(id) {
        let class = if c.is_error() {
            Some(ErrorClass::Repair)
        } else {
            match (c.base.failed(), c.preservation.failed()) {
                (true, true) => Some(ErrorClass::Regenerate),
                (true, false) => Some(ErrorClass::Weaken),
                (false, true) => Some(ErrorClass::Adjust),
                (false, false) => None,
            }
        };
        if let Some(class) = class {
            let target = if class == ErrorClass::Repair {
                ErrorTarget::Text(c.text.clone())
            } else {
                ErrorTarget::Clause(c.index)
            };
            out.push((class, target));
        }
    }
    if out.is_empty() && !report.loop_goal_failures(id).is_empty() {
        out.push((ErrorClass::Strengthen, ErrorTarget::All));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cex() -> Counterexample {
        Counterexample {
            check: Check::Base,
            hyps: vec![],
            goal: "false".into(),
            model: BTreeMap::from([("len".to_string(), -1)]),
        }
    }

    fn report(base: Verdict, pres: Verdict) -> VerificationReport {
        let mut r = VerificationReport::new("f", &DomainConfig::default());
        r.clauses.push(ClauseVerdict {
            loop_id: 0,
            index: 0,
            text: "c".into(),
            base,
            preservation: pres,
        });
        r.finish();
        r
    }

    #[test]
    fn mapping() {
        let l = LoopId(0);
        let w = classify_errors(&report(Verdict::Fail(cex()), Verdict::Pass), l);
        assert_eq!(w, vec![(ErrorClass::Weaken, ErrorTarget::Clause(0))]);
        let a = classify_errors(&report(Verdict::Pass, Verdict::Fail(cex())), l);
        assert_eq!(a, vec![(ErrorClass::Adjust, ErrorTarget::Clause(0))]);
        let g = classify_errors(&report(Verdict::Fail(cex()), Verdict::Fail(cex())), l);
        assert_eq!(g, vec![(ErrorClass::Regenerate, ErrorTarget::Clause(0))]);
        let mut t = report(Verdict::Pass, Verdict::Pass);
        t.push_goal(Check::Termination, Some(l), "assert".into(), Verdict::Fail(cex()));
        t.finish();
        assert_eq!(t.overall, Overall::GoalsUnproven);
        assert_eq!(classify_errors(&t, l), vec![(ErrorClass::Strengthen, ErrorTarget::All)]);
    }

    #[test]
    fn cex_renders_lines() {
        assert_eq!(cex().render(), "len = -1");
    }
}
