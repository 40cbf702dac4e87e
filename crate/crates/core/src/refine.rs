//! Verifier-guided repair of one loop's invariants.

use thiserror::Error;

use crate::frontend::{Assertion, FnAnnotations, LoopId};
use crate::synth::{Backend, Candidate, Guidance, SynthError, SynthesisRequest};
use crate::verifier::{
    classify_errors, AnnotationMap, ErrorClass, SyntaxIssue, Verdict, VerificationReport, Verifier, VerifyError,
};
use crate::verifier::report::ErrorTarget;

pub const DEFAULT_BUDGET: usize = 3;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    /// Invariants kept for the loop.
    pub invariants: Vec<Assertion>,
    /// Whether they pass Base and Preservation.
    pub valid: bool,
    /// Backend refinement calls made.
    pub calls: usize,
    /// Report of the first verification, before any refinement.
    pub first_report: VerificationReport,
    /// Report for the kept invariants.
    pub report: VerificationReport,
    /// Error classes seen per round.
    pub history: Vec<Vec<ErrorClass>>,
    /// Clauses removed by elimination after the budget ran out.
    pub eliminated: Vec<String>,
}

/// Verifies `fname` with `cands` as the invariants of loop `id`.
/// Unparsed candidates are reported as syntax issues.
pub fn verify_candidates(
    verifier: &mut Verifier,
    fname: &str,
    anns: &mut AnnotationMap,
    id: LoopId,
    cands: &[Candidate],
) -> Result<(Vec<Assertion>, VerificationReport), VerifyError> {
    let parsed: Vec<Assertion> = cands
        .iter()
        .filter_map(|c| match c {
            Candidate::Parsed(a) => Some(a.clone()),
            Candidate::Raw { .. } => None,
        })
        .collect();
    let f = verifier
        .prog
        .function(fname)
        .ok_or_else(|| VerifyError::UnknownFunction(fname.to_string()))?;
    anns.entry(fname.to_string())
        .or_insert_with(|| FnAnnotations::from_function(f))
        .loop_invariants
        .insert(id, parsed.clone());
    let mut report = verifier.verify_function(fname, anns)?;
    for c in cands {
        if let Candidate::Raw { text, message } = c {
            report.syntax.push(SyntaxIssue {
                loop_id: id.0,
                text: text.clone(),
                message: message.clone(),
            });
        }
    }
    report.finish();
    Ok((parsed, report))
}

fn failing_verdict(report: &VerificationReport, id: LoopId, index: usize) -> Option<&Verdict> {
    report
        .loop_clauses(id)
        .into_iter()
        .find(|c| c.index == index)
        .map(|c| if c.base.passed() { &c.preservation } else { &c.base })
}

/// Turns classified errors into backend instructions.
pub fn select_guidance(
    report: &VerificationReport,
    id: LoopId,
    clauses: &[Assertion],
    errors: &[(ErrorClass, ErrorTarget)],
) -> Vec<Guidance> {
    errors
        .iter()
        .map(|(class, target)| {
            let (clause, verdict) = match target {
                ErrorTarget::Clause(i) => (clauses.get(*i).map(|c| c.to_string()), failing_verdict(report, id, *i)),
                ErrorTarget::Text(t) => (Some(t.clone()), None),
                ErrorTarget::All => (
                    None,
                    report.loop_goal_failures(id).first().map(|g| &g.verdict),
                ),
            };
            let counterexample = match verdict {
                Some(Verdict::Fail(cex)) => Some(cex.render()),
                _ => None,
            };
            let message = match (class, verdict) {
                (_, Some(Verdict::Error(e))) => format!("the clause cannot be checked: {e}"),
                (ErrorClass::Repair, _) => report
                    .syntax
                    .iter()
                    .find(|s| Some(&s.text) == clause.as_ref())
                    .map(|s| format!("syntax error: {}", s.message))
                    .unwrap_or_else(|| "syntax error".into()),
                (ErrorClass::Weaken, _) => "does not hold on loop entry".into(),
                (ErrorClass::Adjust, _) => "holds on entry but is not preserved by the body".into(),
                (ErrorClass::Regenerate, _) => "neither holds on entry nor is preserved".into(),
                (ErrorClass::Strengthen, _) => {
                    let goals: Vec<String> = report.loop_goal_failures(id).iter().map(|g| g.text.clone()).collect();
                    format!("invariants hold but are too weak to prove: {}", goals.join("; "))
                }
            };
            Guidance {
                class: *class,
                clause,
                counterexample,
                message,
            }
        })
        .collect()
}

/// Drops failing clauses until the rest pass Base and Preservation.
pub fn eliminate(
    verifier: &mut Verifier,
    fname: &str,
    anns: &mut AnnotationMap,
    id: LoopId,
    mut clauses: Vec<Assertion>,
) -> Result<(Vec<Assertion>, VerificationReport, Vec<String>), VerifyError> {
    let mut removed = Vec::new();
    loop {
        let cands: Vec<Candidate> = clauses.iter().cloned().map(Candidate::Parsed).collect();
        let (_, report) = verify_candidates(verifier, fname, anns, id, &cands)?;
        let bad: Vec<usize> = report
            .loop_clauses(id)
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.index)
            .collect();
        if bad.is_empty() {
            return Ok((clauses, report, removed));
        }
        let mut k = 0;
        clauses.retain(|c| {
            let keep = !bad.contains(&k);
            if !keep {
                removed.push(c.to_string());
            }
            k += 1;
            keep
        });
    }
}

/// Verify, classify and refine loop `id` of `fname` until its invariants
/// are valid and no goal blamed on it fails, or `budget` backend calls
/// were made. Leftover failing clauses are then eliminated.
#[allow(clippy::too_many_arguments)]
pub fn refine_loop(
    verifier: &mut Verifier,
    backend: &dyn Backend,
    fname: &str,
    anns: &mut AnnotationMap,
    id: LoopId,
    initial: Vec<Candidate>,
    base: &SynthesisRequest,
    budget: usize,
) -> Result<RefineOutcome, RefineError> {
    let mut cands = initial;
    let mut calls = 0;
    let mut history = Vec::new();
    let mut first_report = None;
    loop {
        let (parsed, report) = verify_candidates(verifier, fname, anns, id, &cands)?;
        if first_report.is_none() {
            first_report = Some(report.clone());
        }
        let errors = classify_errors(&report, id);
        history.push(errors.iter().map(|(c, _)| *c).collect());
        if errors.is_empty() || calls >= budget {
            let first_report = first_report.expect("verified at least once");
            if report.loop_valid(id) {
                return Ok(RefineOutcome {
                    invariants: parsed,
                    valid: true,
                    calls,
                    first_report,
                    report,
                    history,
                    eliminated: Vec::new(),
                });
            }
            let (kept, report, eliminated) = eliminate(verifier, fname, anns, id, parsed)?;
            log::debug!("{fname} loop {id}: eliminated {eliminated:?}");
            return Ok(RefineOutcome {
                valid: report.loop_valid(id),
                invariants: kept,
                calls,
                first_report,
                report,
                history,
                eliminated,
            });
        }
        log::debug!("{fname} loop {id}: round {calls}, errors {:?}", history.last());
        let mut req = base.clone();
        req.current = cands.iter().map(Candidate::text).collect();
        req.guidance = select_guidance(&report, id, &parsed, &errors);
        cands = backend.refine(&req)?;
        calls += 1;
    }
}
