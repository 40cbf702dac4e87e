//! Bounded verifier for loop invariants, contracts and assertions.
//!
//! Every check is an entailment `hyps |= goal` over symbolic states,
//! decided by bounded model search. A failing check carries the model it
//! found.

pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::frontend::{Assertion, Contract, FnAnnotations, GoalId, Label, LoopId, Program, Stmt};
use crate::logic::{find_counterexample, simplify, DomainConfig, LowerError};
use crate::memstore::{surface_requires, MemError, MemoryLayout};
use crate::symexec::{
    cond_assertion, Env, Executor, Hooks, ObligationKind, Status, SymError, SymState,
};

pub use report::{
    classify_errors, Check, ClauseVerdict, Counterexample, ErrorClass, GoalVerdict, Overall,
    SyntaxIssue, Verdict, VerificationReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// Annotations of every function, keyed by name.
pub type AnnotationMap = BTreeMap<String, FnAnnotations>;

/// Verifies functions against annotations, caching individual checks.
pub struct Verifier<'a> {
    pub prog: &'a Program,
    pub cfg: DomainConfig,
    cache: HashMap<String, Verdict>,
    /// Number of entailment checks actually searched.
    pub searches: usize,
}

impl<'a> Verifier<'a> {
    pub fn new(prog: &'a Program, cfg: DomainConfig) -> Verifier<'a> {
        Verifier {
            prog,
            cfg,
            cache: HashMap::new(),
            searches: 0,
        }
    }

    /// Decides `hyps |= goal`.
    pub fn check(
        &mut self,
        fname: &str,
        layout: &MemoryLayout,
        hyps: &[Assertion],
        goal: &Assertion,
        check: Check,
    ) -> Verdict {
        let goal = simplify(goal);
        if goal == Assertion::Bool(true) {
            return Verdict::Pass;
        }
        let hyps: Vec<Assertion> = hyps.iter().map(simplify).collect();
        let key = format!(
            "{fname}|{check:?}|{}|{goal}",
            hyps.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" ; ")
        );
        if let Some(v) = self.cache.get(&key) {
            return v.clone();
        }
        self.searches += 1;
        let v = match find_counterexample(layout, &self.cfg, &hyps, &goal) {
            Ok(r) => match r.model {
                None => Verdict::Pass,
                Some(m) => Verdict::Fail(Counterexample {
                    check,
                    hyps: hyps.iter().map(|h| h.to_string()).collect(),
                    goal: goal.to_string(),
                    model: m.values.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
                }),
            },
            Err(e) => Verdict::Error(lower_message(&e)),
        };
        self.cache.insert(key, v.clone());
        v
    }

    /// Verifies `fname` under `anns`. Loops without an entry in the
    /// function's annotations stop exploration; nothing after them is
    /// checked.
    pub fn verify_function(&mut self, fname: &str, anns: &AnnotationMap) -> Result<VerificationReport, VerifyError> {
        let prog = self.prog;
        let f = prog
            .function(fname)
            .ok_or_else(|| VerifyError::UnknownFunction(fname.to_string()))?;
        let layout = MemoryLayout::for_function(f, prog)?;
        let own = anns.get(fname).cloned().unwrap_or_else(|| FnAnnotations::from_function(f));
        let cfg = self.cfg.clone();
        let mut ex = Executor::new(&layout, prog, f, &cfg);

        let mut st = ex.entry_state();
        let entry_store = st.store.clone();
        let mut requires = surface_requires(f, &layout);
        requires.extend(own.contract.requires.iter().cloned());
        let mut hyps = Vec::new();
        for r in &requires {
            let r = simplify(&ex.subst(&r.at_label(Label::Pre, &BTreeSet::new()), Env::of(&entry_store)));
            if r != Assertion::Bool(true) && !hyps.contains(&r) {
                hyps.push(r);
            }
        }
        let mut report = VerificationReport::new(fname, &cfg);
        let mut reachable = true;
        for h in &hyps {
            match ex.assume(st.clone(), h.clone()) {
                Some(s) => st = s,
                None => {
                    reachable = false;
                    break;
                }
            }
        }
        if !reachable {
            report.goals.push(GoalVerdict {
                check: Check::Goal,
                loop_id: None,
                text: "precondition is satisfiable".into(),
                verdict: Verdict::Error("precondition has no model in the domain".into()),
            });
            report.finish();
            return Ok(report);
        }

        let mut hooks = VerifyHooks {
            v: self,
            fname: fname.to_string(),
            anns,
            own: &own,
            hyps: hyps.clone(),
            ctx: vec![Ctx::Top { last_loop: None }],
            checked_preservation: BTreeSet::new(),
            report: &mut report,
        };
        let end = ex.exec(vec![st], &f.body, &mut hooks)?;
        hooks.drain_obligations(&mut ex);
        // Postconditions on every exit path.
        let attributed = hooks.attributed_loop();
        for s in end.iter().filter(|s| matches!(s.status, Status::Running | Status::Returned)) {
            for e in &own.contract.ensures {
                let env = Env {
                    store: &s.store,
                    pre: None,
                    loop_entry: None,
                    ret: s.ret.as_ref(),
                };
                let g = ex.subst(e, env);
                let (check, loop_id) = match attributed {
                    Some(l) => (Check::Termination, Some(l)),
                    None => (Check::Ensures, None),
                };
                let verdict = hooks.v.check(fname, &layout, &s.pc, &g, check);
                hooks.report.push_goal(check, loop_id, format!("ensures {e}"), verdict);
            }
        }
        for l in f.loops() {
            if let Stmt::While { id, .. } = l {
                if !own.loop_invariants.contains_key(id) {
                    hooks.report.unannotated_loops.push(id.0);
                }
            }
        }
        report.finish();
        Ok(report)
    }
}

fn lower_message(e: &LowerError) -> String {
    e.to_string()
}

enum Ctx {
    /// Straight-line code of the function; failures are blamed on the
    /// loop exited last.
    Top { last_loop: Option<LoopId> },
    /// Inside one iteration of a loop being checked for preservation.
    Body(LoopId),
}

struct VerifyHooks<'v, 'a, 'r> {
    v: &'v mut Verifier<'a>,
    fname: String,
    anns: &'r AnnotationMap,
    own: &'r FnAnnotations,
    hyps: Vec<Assertion>,
    ctx: Vec<Ctx>,
    checked_preservation: BTreeSet<LoopId>,
    report: &'r mut VerificationReport,
}

impl VerifyHooks<'_, '_, '_> {
    fn attributed_loop(&self) -> Option<LoopId> {
        match self.ctx.last() {
            Some(Ctx::Top { last_loop }) => *last_loop,
            Some(Ctx::Body(l)) => Some(*l),
            None => None,
        }
    }

    /// Checks pending safety obligations in the current context.
    fn drain_obligations(&mut self, ex: &mut Executor) {
        let obs = std::mem::take(&mut ex.obligations);
        let (check, loop_id) = match self.ctx.last() {
            Some(Ctx::Body(l)) => (Check::Preservation, Some(*l)),
            Some(Ctx::Top { last_loop: Some(l) }) => (Check::Termination, Some(*l)),
            _ => (Check::Safety, None),
        };
        for o in obs {
            let text = match &o.kind {
                ObligationKind::Bounds(e) => format!("index in bounds: {e}"),
                ObligationKind::DivByZero(e) => format!("nonzero divisor: {e}"),
                ObligationKind::CalleeRequires(c) => format!("requires of {c}: {}", o.cond),
            };
            let verdict = self.v.check(&self.fname, ex.layout, &o.hyps, &o.cond, check);
            self.report.push_goal(check, loop_id, text, verdict);
        }
    }

    fn invariants(&self, id: LoopId) -> Option<&Vec<Assertion>> {
        self.own.loop_invariants.get(&id)
    }
}

impl Hooks for VerifyHooks<'_, '_, '_> {
    fn on_loop(
        &mut self,
        ex: &mut Executor,
        states: Vec<SymState>,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError> {
        let Stmt::While { id, cond, body, .. } = stmt else {
            return Ok(states);
        };
        self.drain_obligations(ex);
        let Some(inv) = self.invariants(*id).cloned() else {
            return Ok(Vec::new());
        };
        let layout = ex.layout;
        self.report.register_loop(*id, &inv);

        // Base: every clause holds on entry.
        for s in &states {
            let env = Env {
                store: &s.store,
                pre: None,
                loop_entry: Some(&s.store),
                ret: None,
            };
            for (k, c) in inv.iter().enumerate() {
                let g = ex.subst(c, env);
                let verdict = self.v.check(&self.fname, layout, &s.pc, &g, Check::Base);
                self.report.clause_mut(*id, k).merge_base(verdict);
            }
        }

        // Preservation: one iteration from an arbitrary state satisfying
        // the invariant and the guard.
        if self.checked_preservation.insert(*id) {
            let mut st = ex.generic_state();
            let mut assumed = self.hyps.clone();
            assumed.extend(inv.iter().cloned());
            assumed.push(cond_assertion(cond));
            let mut feasible = true;
            for a in &assumed {
                match ex.assume(st.clone(), simplify(a)) {
                    Some(s) => st = s,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if feasible {
                let saved = std::mem::take(&mut ex.obligations);
                self.ctx.push(Ctx::Body(*id));
                let out = ex.exec(vec![st], body, self);
                self.drain_obligations(ex);
                self.ctx.pop();
                ex.obligations = saved;
                let out = out?;
                for s in &out {
                    if s.status == Status::Returned {
                        return Err(SymError::Unsupported(format!("`return` inside loop {id}")));
                    }
                    let env = Env::of(&s.store);
                    for (k, c) in inv.iter().enumerate() {
                        let g = ex.subst(c, env);
                        let verdict = self.v.check(&self.fname, layout, &s.pc, &g, Check::Preservation);
                        self.report.clause_mut(*id, k).merge_preservation(verdict);
                    }
                }
            }
        }

        let out = ex.exit_loop(states, stmt, &inv)?;
        if let Some(Ctx::Top { last_loop }) = self.ctx.last_mut() {
            *last_loop = Some(*id);
        }
        Ok(out)
    }

    fn on_call(&mut self, ex: &mut Executor, state: SymState, stmt: &Stmt) -> Result<Vec<SymState>, SymError> {
        let Stmt::Call { callee, .. } = stmt else {
            return Ok(vec![state]);
        };
        let contract = callee_contract(self.v.prog, self.anns, callee);
        ex.apply_callee_summary(state, stmt, &contract)
    }

    fn on_assert(&mut self, ex: &mut Executor, state: &SymState, id: GoalId, cond: &Assertion) -> Result<(), SymError> {
        self.drain_obligations(ex);
        let g = ex.subst(cond, Env::of(&state.store));
        let (check, loop_id) = match self.attributed_loop() {
            Some(l) => (Check::Termination, Some(l)),
            None => (Check::Goal, None),
        };
        let verdict = self.v.check(&self.fname, ex.layout, &state.pc, &g, check);
        self.report.push_goal(check, loop_id, format!("assert#{} {cond}", id.0), verdict);
        Ok(())
    }
}

/// The contract used for calls to `name`: generated annotations first, then
/// whatever the source carries.
pub fn callee_contract(prog: &Program, anns: &AnnotationMap, name: &str) -> Contract {
    if let Some(a) = anns.get(name) {
        return a.contract.clone();
    }
    prog.function(name).and_then(|f| f.spec.clone()).unwrap_or_default()
}

/// Verifies every function of a program as annotated in its source.
pub fn verify_program(prog: &Program, cfg: &DomainConfig) -> Result<Vec<VerificationReport>, VerifyError> {
    let anns: AnnotationMap = prog
        .functions
        .iter()
        .map(|f| (f.name.clone(), FnAnnotations::from_function(f)))
        .collect();
    let mut v = Verifier::new(prog, cfg.clone());
    prog.functions
        .iter()
        .map(|f| v.verify_function(&f.name, &anns))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn verify(src: &str, fname: &str) -> VerificationReport {
        let p = parse_program(src).unwrap();
        let anns: AnnotationMap = p
            .functions
            .iter()
            .map(|f| (f.name.clone(), FnAnnotations::from_function(f)))
            .collect();
        let mut v = Verifier::new(&p, DomainConfig::default());
        v.verify_function(fname, &anns).unwrap()
    }

    #[test]
    fn true_invariant_verifies() {
        let r = verify(
            "void f(int n) { int i = 0; /*@ loop invariant \\true; */ while (i < n) { i = i + 1; } }",
            "f",
        );
        assert_eq!(r.overall, Overall::Verified);
    }

    #[test]
    fn counter_invariant() {
        let r = verify(
            "void f(int n) { int i = 0; /*@ loop invariant 0 <= n ==> 0 <= i <= n; \
             loop invariant !(0 <= n) ==> i == 0; */ while (i < n) { i = i + 1; } }",
            "f",
        );
        assert_eq!(r.overall, Overall::Verified, "{r:#?}");
    }

    #[test]
    fn unguarded_bound_fails_base_with_negative_len() {
        let r = verify(
            "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
             void f(struct CheckCal *pIp) { int chksum = 0; int i = 0; \
             /*@ loop invariant 0 <= i <= pIp->len; */ \
             for (; i < pIp->len; i++) chksum += pIp->pkv[i]; }",
            "f",
        );
        assert_eq!(r.overall, Overall::InvalidInvariants);
        let c = &r.clauses[0];
        let Verdict::Fail(cex) = &c.base else { panic!("{c:?}") };
        assert!(cex.model.get("\\at(pIp->len, Pre)").copied().unwrap() < 0);
        assert_eq!(c.preservation, Verdict::Pass);
    }

    #[test]
    fn non_inductive_clause_fails_preservation() {
        let r = verify(
            "void f(int n) { int i = 0; /*@ loop invariant i <= 1; */ while (i < n) { i = i + 1; } }",
            "f",
        );
        assert_eq!(r.clauses[0].base, Verdict::Pass);
        assert!(matches!(r.clauses[0].preservation, Verdict::Fail(_)));
    }

    #[test]
    fn goal_after_loop() {
        let src = "void f(int n) { int i = 0; /*@ loop invariant 0 <= n ==> 0 <= i <= n; \
             loop invariant !(0 <= n) ==> i == 0; */ while (i < n) { i = i + 1; } /*@ assert i >= 0; */ }";
        let r = verify(src, "f");
        assert_eq!(r.overall, Overall::Verified, "{r:#?}");
        let src = src.replace("i >= 0", "i == n");
        let r = verify(&src, "f");
        assert_eq!(r.overall, Overall::GoalsUnproven);
        assert_eq!(r.goals[0].check, Check::Termination);
    }

    #[test]
    fn loop_free_ensures() {
        let r = verify("/*@ ensures \\result >= 0; */ int f(int x) { if (x < 0) return -x; return x; }", "f");
        assert_eq!(r.overall, Overall::Verified, "{r:#?}");
        let r = verify("/*@ ensures \\result > 0; */ int f(int x) { if (x < 0) return -x; return x; }", "f");
        assert_eq!(r.overall, Overall::GoalsUnproven);
    }
}

#[cfg(test)]
mod checkcal_tests {
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn checkcal_full_annotations() {
        let src = "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
            /*@ requires 0 <= pIp->len <= 10;\n  ensures pIp->chksum == \\sum(0, \\at(pIp->len, Pre) - 1, k |-> \\at(pIp->pkv[k], Pre)); */\n\
            void f(struct CheckCal *pIp) { int chksum = 0; int i = 0;\n\
            /*@ loop invariant pIp == \\at(pIp, Pre);\n\
                loop invariant pIp->pkv == \\at(pIp->pkv, Pre);\n\
                loop invariant pIp->len == \\at(pIp->len, Pre);\n\
                loop invariant !(0 < \\at(pIp, Pre)->len) ==> i == 0;\n\
                loop invariant !(0 < \\at(pIp, Pre)->len) ==> chksum == 0;\n\
                loop invariant (0 < \\at(pIp, Pre)->len) ==> 0 <= i <= \\at(pIp, Pre)->len;\n\
                loop invariant (0 < \\at(pIp, Pre)->len) ==> chksum == \\sum(0, i - 1, k |-> \\at(pIp, Pre)->pkv[k]); */\n\
            for (; i < pIp->len; i++) chksum += pIp->pkv[i];\n\
            pIp->chksum = chksum; }";
        let p = parse_program(src).unwrap();
        let anns: AnnotationMap = p
            .functions
            .iter()
            .map(|f| (f.name.clone(), FnAnnotations::from_function(f)))
            .collect();
        let mut v = Verifier::new(&p, DomainConfig::default());
        let t = std::time::Instant::now();
        let r = v.verify_function("f", &anns).unwrap();
        assert!(t.elapsed().as_secs() < 10);
        assert_eq!(r.overall, Overall::Verified, "{}", r.to_json());

        let wrong = src.replace("Pre) - 1, k", "Pre) - 2, k");
        let p = parse_program(&wrong).unwrap();
        let anns: AnnotationMap = p
            .functions
            .iter()
            .map(|f| (f.name.clone(), FnAnnotations::from_function(f)))
            .collect();
        let mut v = Verifier::new(&p, DomainConfig::default());
        let r = v.verify_function("f", &anns).unwrap();
        assert_eq!(r.overall, Overall::GoalsUnproven);
    }
}
