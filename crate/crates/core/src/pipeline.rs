//! Whole-program specification generation.
//!
//! Functions are processed on demand: symbolic execution of a function
//! stops at each loop to synthesize and refine its invariants and at each
//! call to generate the callee's contract first. The contract of a
//! function is its surface precondition plus the strongest postcondition
//! of its exit states over pointer-reachable cells and the return value.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::frontend::assertion::PLACEHOLDER_PREFIX;
use crate::frontend::render::{render_function_for_prompt, render_loop};
use crate::frontend::{
    render_annotated, Assertion, Contract, FnAnnotations, FrontendError, GoalId, Label, LoopId, Program, RetType,
    Stmt,
};
use crate::logic::{simplify, DomainConfig};
use crate::loopanalysis::{analyze_loop, LoopError};
use crate::memstore::{surface_requires, MemError, MemoryLayout};
use crate::refine::{eliminate, refine_loop, RefineError, DEFAULT_BUDGET};
use crate::symexec::{Env, Executor, Hooks, Status, SymError, SymState};
use crate::synth::{Backend, Candidate, LoopContext, SynthError, SynthesisRequest};
use crate::templates::{generate_templates, instantiate, Family, InvariantTemplate};
use crate::verifier::report::Counterexample;
use crate::verifier::{callee_contract, AnnotationMap, Check, Overall, VerificationReport, Verifier, VerifyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("recursive call cycle through `{0}`")]
    Recursion(String),
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Render(#[from] FrontendError),
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Backend refinement calls allowed per loop.
    pub budget: usize,
    /// Hide `assert` goals from generation.
    pub mask_goals: bool,
    /// Add worked examples to prompts.
    pub calibration: bool,
    /// Ask the backend for a free-text analysis before filling templates.
    pub think: bool,
    /// Sampling round passed to the backend.
    pub round: u64,
    /// Start from the loop invariants written in the source, where a loop
    /// has any, instead of filling templates.
    pub repair: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            budget: DEFAULT_BUDGET,
            mask_goals: false,
            calibration: true,
            think: true,
            round: 0,
            repair: false,
        }
    }
}

/// What happened at one loop.
#[derive(Clone, Debug, Serialize)]
pub struct LoopRecord {
    pub function: String,
    pub loop_id: u32,
    pub nested: bool,
    pub templates: Vec<String>,
    /// Closed template clauses and those that failed on first verification.
    pub closed: Vec<String>,
    pub closed_failed: Vec<String>,
    /// Candidates the backend returned that did not parse or type-check.
    pub syntax_issues: usize,
    pub refine_calls: usize,
    pub valid: bool,
    pub invariants: Vec<String>,
    pub eliminated: Vec<String>,
    /// Counterexamples from the first verification of the loop's candidates.
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Clone, Debug)]
pub struct SpecResult {
    pub annotations: AnnotationMap,
    pub loops: Vec<LoopRecord>,
    /// How many times each function's contract was generated.
    pub generations: BTreeMap<String, usize>,
    /// Final verification of each function against the unmasked program.
    pub reports: BTreeMap<String, VerificationReport>,
    pub analysis: BTreeMap<String, String>,
}

impl SpecResult {
    /// Annotated program source.
    pub fn render(&self, prog: &Program) -> Result<String, FrontendError> {
        render_annotated(prog, &self.annotations)
    }

    /// Every generated annotation parsed and type-checked.
    pub fn syntactic(&self) -> bool {
        self.reports.values().all(|r| r.syntax.is_empty() && !r.clauses.iter().any(|c| c.is_error()))
    }

    /// Invariants and contracts hold, whether or not goals are proven.
    pub fn valid(&self) -> bool {
        self.reports.values().all(report_valid)
    }

    /// Every goal of the program is proven.
    pub fn accurate(&self) -> bool {
        self.reports.values().all(|r| r.overall == Overall::Verified)
    }
}

/// Whether a report shows no invalid invariant, postcondition or safety check.
pub fn report_valid(r: &VerificationReport) -> bool {
    r.syntax.is_empty()
        && r.clauses.iter().all(|c| c.passed())
        && r.goals.iter().all(|g| {
            g.verdict.passed()
                || !(matches!(g.check, Check::Preservation | Check::Ensures | Check::Safety) || g.text.starts_with("ensures "))
        })
}

struct Pipeline<'p> {
    prog: &'p Program,
    cfg: DomainConfig,
    backend: &'p dyn Backend,
    opts: PipelineOptions,
    verifier: Verifier<'p>,
    anns: AnnotationMap,
    stack: Vec<String>,
    done: BTreeSet<String>,
    generations: BTreeMap<String, usize>,
    loops: Vec<LoopRecord>,
    analysis: BTreeMap<String, String>,
}

/// Generates annotations for every function of `prog`.
pub fn generate(
    prog: &Program,
    backend: &dyn Backend,
    cfg: &DomainConfig,
    opts: &PipelineOptions,
) -> Result<SpecResult, PipelineError> {
    let names: Vec<String> = prog.bottom_up_order();
    generate_for(prog, backend, cfg, opts, &names)
}

/// Generates annotations for `roots` and everything they call.
pub fn generate_for(
    prog: &Program,
    backend: &dyn Backend,
    cfg: &DomainConfig,
    opts: &PipelineOptions,
    roots: &[String],
) -> Result<SpecResult, PipelineError> {
    let work = if opts.mask_goals { prog.without_goals() } else { prog.clone() };
    let mut p = Pipeline {
        prog: &work,
        cfg: cfg.clone(),
        backend,
        opts: opts.clone(),
        verifier: Verifier::new(&work, cfg.clone()),
        anns: AnnotationMap::new(),
        stack: Vec::new(),
        done: BTreeSet::new(),
        generations: BTreeMap::new(),
        loops: Vec::new(),
        analysis: BTreeMap::new(),
    };
    for r in roots {
        p.func_spec(r)?;
    }
    let Pipeline {
        anns,
        loops,
        generations,
        analysis,
        ..
    } = p;
    let mut final_verifier = Verifier::new(prog, cfg.clone());
    let mut reports = BTreeMap::new();
    for name in anns.keys() {
        reports.insert(name.clone(), final_verifier.verify_function(name, &anns)?);
    }
    Ok(SpecResult {
        annotations: anns,
        loops,
        generations,
        reports,
        analysis,
    })
}

impl<'p> Pipeline<'p> {
    fn func_spec(&mut self, fname: &str) -> Result<(), PipelineError> {
        if self.done.contains(fname) {
            return Ok(());
        }
        if self.stack.iter().any(|s| s == fname) {
            return Err(PipelineError::Recursion(fname.to_string()));
        }
        let prog = self.prog;
        let f = prog
            .function(fname)
            .ok_or_else(|| PipelineError::UnknownFunction(fname.to_string()))?;
        self.stack.push(fname.to_string());
        *self.generations.entry(fname.to_string()).or_insert(0) += 1;

        let layout = MemoryLayout::for_function(f, prog)?;
        let requires = surface_requires(f, &layout);
        self.anns.insert(
            fname.to_string(),
            FnAnnotations {
                contract: Contract {
                    requires: requires.clone(),
                    ensures: Vec::new(),
                },
                loop_invariants: BTreeMap::new(),
            },
        );

        let cfg = self.cfg.clone();
        let mut ex = Executor::new(&layout, prog, f, &cfg);
        let mut st = ex.entry_state();
        let entry_store = st.store.clone();
        let mut reachable = true;
        for r in &requires {
            let r = simplify(&ex.subst(&r.at_label(Label::Pre, &BTreeSet::new()), Env::of(&entry_store)));
            match ex.assume(st.clone(), r) {
                Some(s) => st = s,
                None => {
                    reachable = false;
                    break;
                }
            }
        }
        let end = if reachable {
            let mut hooks = PipelineHooks {
                pipe: self,
                fname: fname.to_string(),
                requires: requires.clone(),
                layout: &layout,
                depth: 0,
                nested: Vec::new(),
                error: None,
            };
            let out = ex.exec(vec![st], &f.body, &mut hooks);
            if let Some(e) = hooks.error.take() {
                return Err(e);
            }
            out?
        } else {
            Vec::new()
        };

        let live: Vec<SymState> = end
            .into_iter()
            .filter(|s| matches!(s.status, Status::Running | Status::Returned))
            .collect();
        if !live.is_empty() {
            let locs: Vec<_> = layout
                .locations
                .iter()
                .filter(|l| layout.is_pointer(&l.root) && !l.steps.is_empty())
                .cloned()
                .collect();
            let sp = ex.strongest_post(&live, &locs, f.ret != RetType::Void)?;
            let ensures: Vec<Assertion> = ensures_clauses(&sp)
                .into_iter()
                .filter(|c| *c != Assertion::Bool(true) && talks_about_post(c))
                .collect();
            self.set_ensures(fname, ensures)?;
        }
        self.stack.pop();
        self.done.insert(fname.to_string());
        Ok(())
    }

    /// Installs `ensures`, dropping clauses the verifier rejects.
    fn set_ensures(&mut self, fname: &str, mut ensures: Vec<Assertion>) -> Result<(), PipelineError> {
        loop {
            self.anns.get_mut(fname).expect("registered").contract.ensures = ensures.clone();
            if ensures.is_empty() {
                return Ok(());
            }
            let report = self.verifier.verify_function(fname, &self.anns)?;
            let bad: Vec<String> = report
                .goals
                .iter()
                .filter(|g| g.text.starts_with("ensures ") && !g.verdict.passed())
                .map(|g| g.text["ensures ".len()..].to_string())
                .collect();
            if bad.is_empty() {
                return Ok(());
            }
            ensures.retain(|e| !bad.contains(&e.to_string()));
        }
    }
}

/// Splits a postcondition into clauses. Conjunctions under an implication
/// are distributed, and clauses about existentially bound havoc values are
/// dropped: they only say that some value exists.
fn ensures_clauses(sp: &Assertion) -> Vec<Assertion> {
    let mut body = sp;
    let mut bound = BTreeSet::new();
    while let Assertion::Exists(v, b) = body {
        bound.insert(v.clone());
        body = b;
    }
    let mut out = Vec::new();
    for c in simplify(body).conjuncts() {
        match c {
            Assertion::Implies(a, b) => {
                for d in b.conjuncts() {
                    out.push(Assertion::implies((**a).clone(), d.clone()));
                }
            }
            other => out.push(other.clone()),
        }
    }
    out.retain(|c| !c.lvals().iter().any(|lv| lv.label().is_none() && bound.contains(lv.root())));
    out
}

/// Whether `c` reads the exit state; facts about the entry state alone
/// repeat the precondition.
fn talks_about_post(c: &Assertion) -> bool {
    let bound = c.bound_vars();
    c.mentions_result()
        || c
            .lvals()
            .iter()
            .any(|lv| lv.label().is_none() && !bound.contains(lv.root()))
}

struct PipelineHooks<'h, 'p> {
    pipe: &'h mut Pipeline<'p>,
    fname: String,
    requires: Vec<Assertion>,
    layout: &'h MemoryLayout,
    depth: usize,
    /// Nested loops met while analysing the current outer loop.
    nested: Vec<LoopId>,
    error: Option<PipelineError>,
}

impl PipelineHooks<'_, '_> {
    fn fail(&mut self, e: PipelineError) -> SymError {
        let msg = e.to_string();
        if self.error.is_none() {
            self.error = Some(e);
        }
        SymError::Hook(msg)
    }

    fn base_request<'r>(&self, stmt: &Stmt) -> SynthesisRequest<'r> {
        let f = self.pipe.prog.function(&self.fname).expect("function exists");
        let ann = &self.pipe.anns[&self.fname];
        SynthesisRequest {
            function: self.fname.clone(),
            function_source: render_function_for_prompt(f, ann),
            loop_source: render_loop(stmt),
            precondition: self.requires.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" && "),
            calibration: self.pipe.opts.calibration,
            round: self.pipe.opts.round,
            analysis: self.pipe.analysis.get(&self.fname).cloned(),
            ..Default::default()
        }
    }

    fn outer_loop(&mut self, ex: &mut Executor, states: &[SymState], stmt: &Stmt, id: LoopId) -> Result<Vec<Assertion>, PipelineError> {
        ex.obligations.clear();
        self.depth += 1;
        self.nested.clear();
        let requires = self.requires.clone();
        let info = analyze_loop(ex, states, stmt, &requires, self);
        self.depth -= 1;
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let info = info?;
        ex.obligations.clear();
        let prog = self.pipe.prog;
        let f = prog.function(&self.fname).expect("function exists");
        let goals: Vec<(GoalId, Assertion)> = f.goals().into_iter().map(|(g, a)| (g, a.clone())).collect();
        let templates = generate_templates(&info, self.layout, &goals);
        let mut req = self.base_request(stmt);
        req.templates = templates.iter().map(|t| t.to_string()).collect();
        req.context = Some(LoopContext {
            info: &info,
            templates: &templates,
            layout: self.layout,
            nested: false,
        });
        let backend = self.pipe.backend;
        let written = f.loop_annotations.get(&id).filter(|a| !a.is_empty());
        if let (true, Some(written)) = (self.pipe.opts.repair, written) {
            let initial = written.iter().cloned().map(Candidate::Parsed).collect();
            return self.finish_outer(id, &templates, &req, initial, 0);
        }
        if self.pipe.opts.think && req.analysis.is_none() {
            let a = backend.think(&req)?;
            self.pipe.analysis.insert(self.fname.clone(), a.clone());
            req.analysis = Some(a);
        }
        let fills = backend.fill(&req)?;

        let mut initial = Vec::new();
        let mut syntax_issues = 0;
        for t in &templates {
            let Some(name) = &t.placeholder else {
                initial.push(Candidate::Parsed(t.fixed_part.clone()));
                continue;
            };
            match fills.get(name) {
                Some(Candidate::Parsed(a)) => match instantiate(t, a, self.layout) {
                    Ok(c) if simplify(&c) == Assertion::Bool(true) => {}
                    Ok(c) => initial.push(Candidate::Parsed(c)),
                    Err(e) => {
                        syntax_issues += 1;
                        initial.push(Candidate::Raw {
                            text: t.fixed_part.fill_placeholder(name, a).to_string(),
                            message: e.to_string(),
                        });
                    }
                },
                Some(Candidate::Raw { text, message }) => {
                    syntax_issues += 1;
                    initial.push(Candidate::Raw {
                        text: t
                            .fixed_part
                            .to_string()
                            .replace(&format!("{PLACEHOLDER_PREFIX}{name}"), &format!("({text})")),
                        message: message.clone(),
                    });
                }
                None => {}
            }
        }
        let mut seen = BTreeSet::new();
        initial.retain(|c| seen.insert(c.text()));
        self.finish_outer(id, &templates, &req, initial, syntax_issues)
    }

    /// Refines `initial`, settles nested loops and records the outcome.
    fn finish_outer(
        &mut self,
        id: LoopId,
        templates: &[InvariantTemplate],
        req: &SynthesisRequest,
        initial: Vec<Candidate>,
        syntax_issues: usize,
    ) -> Result<Vec<Assertion>, PipelineError> {
        let backend = self.pipe.backend;

        let closed: Vec<String> = templates
            .iter()
            .filter(|t| t.is_closed() && matches!(t.family, Family::Unchanged | Family::LoopSkip))
            .map(|t| t.fixed_part.to_string())
            .collect();
        let out = refine_loop(
            &mut self.pipe.verifier,
            backend,
            &self.fname,
            &mut self.pipe.anns,
            id,
            initial,
            req,
            self.pipe.opts.budget,
        )?;
        let closed_failed: Vec<String> = out
            .first_report
            .loop_clauses(id)
            .iter()
            .filter(|c| closed.contains(&c.text) && !c.passed())
            .map(|c| c.text.clone())
            .collect();
        let mut invariants = out.invariants.clone();
        let mut valid = out.valid;
        let mut eliminated = out.eliminated.clone();

        // Nested invariants were proposed without verification.
        let nested = std::mem::take(&mut self.nested);
        if !nested.is_empty() {
            let report = self.pipe.verifier.verify_function(&self.fname, &self.pipe.anns)?;
            for n in &nested {
                if !report.loop_valid(*n) {
                    let inv = self.pipe.anns[&self.fname].loop_invariants.get(n).cloned().unwrap_or_default();
                    let (kept, _, removed) = eliminate(&mut self.pipe.verifier, &self.fname, &mut self.pipe.anns, *n, inv)?;
                    self.record_nested(*n, &kept, removed);
                } else {
                    let kept = self.pipe.anns[&self.fname].loop_invariants.get(n).cloned().unwrap_or_default();
                    self.record_nested(*n, &kept, Vec::new());
                }
            }
            let (kept, report, removed) =
                eliminate(&mut self.pipe.verifier, &self.fname, &mut self.pipe.anns, id, invariants)?;
            invariants = kept;
            valid = report.loop_valid(id);
            eliminated.extend(removed);
        }

        self.pipe
            .anns
            .get_mut(&self.fname)
            .expect("registered")
            .loop_invariants
            .insert(id, invariants.clone());
        self.pipe.loops.push(LoopRecord {
            function: self.fname.clone(),
            loop_id: id.0,
            nested: false,
            templates: req.templates.clone(),
            closed,
            closed_failed,
            syntax_issues,
            refine_calls: out.calls,
            valid,
            invariants: invariants.iter().map(|a| a.to_string()).collect(),
            eliminated,
            counterexamples: out.first_report.counterexamples().into_iter().cloned().collect(),
        });
        Ok(invariants)
    }

    fn record_nested(&mut self, id: LoopId, kept: &[Assertion], eliminated: Vec<String>) {
        self.pipe.loops.push(LoopRecord {
            function: self.fname.clone(),
            loop_id: id.0,
            nested: true,
            templates: Vec::new(),
            closed: Vec::new(),
            closed_failed: Vec::new(),
            syntax_issues: 0,
            refine_calls: 0,
            valid: eliminated.is_empty(),
            invariants: kept.iter().map(|a| a.to_string()).collect(),
            eliminated,
            counterexamples: Vec::new(),
        });
    }

    fn nested_loop(&mut self, ex: &mut Executor, states: &[SymState], stmt: &Stmt, id: LoopId) -> Result<Vec<Assertion>, PipelineError> {
        let saved = std::mem::take(&mut ex.obligations);
        self.depth += 1;
        let info = analyze_loop(ex, states, stmt, &[], self);
        self.depth -= 1;
        ex.obligations = saved;
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let info = info?;
        let templates = generate_templates(&info, self.layout, &[]);
        let mut req = self.base_request(stmt);
        req.templates = templates.iter().map(|t| t.to_string()).collect();
        req.context = Some(LoopContext {
            info: &info,
            templates: &templates,
            layout: self.layout,
            nested: true,
        });
        let inv: Vec<Assertion> = self
            .pipe
            .backend
            .propose_nested(&req)?
            .into_iter()
            .filter_map(|c| match c {
                Candidate::Parsed(a) if a.is_closed() => Some(a),
                _ => None,
            })
            .collect();
        self.pipe
            .anns
            .get_mut(&self.fname)
            .expect("registered")
            .loop_invariants
            .insert(id, inv.clone());
        if !self.nested.contains(&id) {
            self.nested.push(id);
        }
        Ok(inv)
    }
}

impl Hooks for PipelineHooks<'_, '_> {
    fn on_loop(&mut self, ex: &mut Executor, states: Vec<SymState>, stmt: &Stmt) -> Result<Vec<SymState>, SymError> {
        let Stmt::While { id, .. } = stmt else {
            return Ok(states);
        };
        if states.is_empty() {
            return Ok(states);
        }
        let known = self.pipe.anns[&self.fname].loop_invariants.get(id).cloned();
        let inv = match known {
            Some(inv) if self.depth == 0 || self.nested.contains(id) => Ok(inv),
            _ if self.depth > 0 => self.nested_loop(ex, &states, stmt, *id),
            _ => self.outer_loop(ex, &states, stmt, *id),
        };
        match inv {
            Ok(inv) => ex.exit_loop(states, stmt, &inv),
            Err(e) => Err(self.fail(e)),
        }
    }

    fn on_call(&mut self, ex: &mut Executor, state: SymState, stmt: &Stmt) -> Result<Vec<SymState>, SymError> {
        let Stmt::Call { callee, .. } = stmt else {
            return Ok(vec![state]);
        };
        if let Err(e) = self.pipe.func_spec(callee) {
            return Err(self.fail(e));
        }
        let contract = callee_contract(self.pipe.prog, &self.pipe.anns, callee);
        ex.apply_callee_summary(state, stmt, &contract)
    }
}
