//! Deterministic rule-based backend.
//!
//! Fillings come from simple recurrences read off the one-iteration
//! unfolding: counters `v += c` bounded by the guard, accumulators adding a
//! constant or a term over unchanged cells, and copies of loop-invariant
//! expressions. Anything else is filled with `\true`. The sampling round is
//! ignored, so every round gives the same answer.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{ArithOp, Assertion, CmpOp, Label, Lval, LvBase};
use crate::logic::poly::{norm_cmp, poly_of, simplify_term, NormOp, Poly};
use crate::logic::{simplify, terms_equal};
use crate::loopanalysis::{constant_prefix, pointer_form, LoopInfo};
use crate::memstore::{LocStep, Location, MemoryLayout};
use crate::templates::{instantiate, Family, InvariantTemplate};
use crate::verifier::report::ErrorClass;

use super::{Backend, Candidate, LoopContext, SynthError, SynthesisRequest};

/// Name of the bound variable in generated sums.
const SUM_VAR: &str = "k";

#[derive(Clone, Debug, Default)]
pub struct MockBackend {
    /// Raw answers returned instead of the computed filling, by placeholder.
    overrides: BTreeMap<String, String>,
}

impl MockBackend {
    pub fn new() -> MockBackend {
        MockBackend::default()
    }

    /// Answers `text` for placeholder `name`, whether or not it parses.
    pub fn with_fill_override(mut self, name: &str, text: &str) -> MockBackend {
        self.overrides.insert(name.to_string(), text.to_string());
        self
    }
}

#[derive(Clone, Debug)]
struct Counter {
    loc: Location,
    step: i64,
    /// `loc <= e` (upper) or `loc >= e` (lower) while the guard holds.
    upper: Option<Assertion>,
    lower: Option<Assertion>,
}

impl Counter {
    fn bounded(&self) -> bool {
        if self.step > 0 {
            self.upper.is_some()
        } else {
            self.lower.is_some()
        }
    }
}

struct Facts<'a> {
    info: &'a LoopInfo,
    layout: &'a MemoryLayout,
    stable: BTreeSet<Location>,
    counters: Vec<Counter>,
}

impl<'a> Facts<'a> {
    fn new(ctx: &LoopContext<'a>) -> Facts<'a> {
        let mut f = Facts {
            info: ctx.info,
            layout: ctx.layout,
            stable: ctx.info.stable_cells(),
            counters: Vec::new(),
        };
        f.counters = f.find_counters();
        f
    }

    fn loc_of(&self, subject: &str) -> Option<&'a Location> {
        self.info.scope.iter().find(|l| l.to_string() == subject)
    }

    /// Constant per-iteration change of `l` on every exit path.
    fn deltas(&self, l: &Location) -> Option<Vec<Poly>> {
        let cur = poly_of(&l.term())?;
        self.info
            .exits
            .iter()
            .map(|e| poly_of(e.get(l)?)?.sub(&cur))
            .collect()
    }

    /// Whether every unlabelled read in `t` is of a cell the loop leaves alone.
    fn reads_unchanged(&self, t: &Assertion, bound: &BTreeSet<String>) -> bool {
        t.lvals().iter().all(|lv| match &lv.base {
            LvBase::At(..) => true,
            LvBase::Var(r) if bound.contains(r) => true,
            LvBase::Var(_) => {
                let cells = self.layout.cells_under(&constant_prefix(lv));
                !cells.is_empty() && cells.iter().all(|c| self.info.unchanged.contains(c))
            }
        })
    }

    fn find_counters(&self) -> Vec<Counter> {
        let mut out = Vec::new();
        for l in self.info.scope.iter().filter(|l| self.info.inductive.contains(*l)) {
            let Some(ds) = self.deltas(l) else { continue };
            let Some(step) = ds.first().and_then(Poly::as_const) else { continue };
            if step == 0 || ds.iter().any(|d| d.as_const() != Some(step)) {
                continue;
            }
            let mut c = Counter {
                loc: l.clone(),
                step,
                upper: None,
                lower: None,
            };
            let atom = l.term();
            for g in simplify(&self.info.guard).conjuncts() {
                let Assertion::Cmp(op, a, b) = g else { continue };
                let Some((nop, p)) = norm_cmp(*op, a, b) else { continue };
                let Some(coeff) = p.linear_coeff(&atom) else { continue };
                if coeff.abs() != 1 {
                    continue;
                }
                let mut rest = p.clone();
                rest.terms.remove(&vec![atom.clone()]);
                let rest_t = rest.to_assertion();
                if !self.reads_unchanged(&rest_t, &BTreeSet::new()) {
                    continue;
                }
                // coeff * v + rest <= 0, or != 0
                let bound = |r: &Poly| simplify_term(&r.scale(-coeff).unwrap_or_default().to_assertion());
                match (nop, coeff, step > 0) {
                    (NormOp::Le, 1, _) => c.upper = Some(bound(&rest)),
                    (NormOp::Le, -1, _) => c.lower = Some(bound(&rest)),
                    (NormOp::Ne, _, true) if step == 1 => {
                        let e = rest.scale(-coeff).and_then(|e| e.sub(&Poly::constant(1)));
                        c.upper = e.map(|e| simplify_term(&e.to_assertion()));
                    }
                    (NormOp::Ne, _, false) if step == -1 => {
                        let e = rest.scale(-coeff).and_then(|e| e.add(&Poly::constant(1)));
                        c.lower = e.map(|e| simplify_term(&e.to_assertion()));
                    }
                    _ => {}
                }
            }
            out.push(c);
        }
        out.sort_by_key(|c| (!c.bounded(), c.step.abs() != 1, c.step < 0));
        out
    }

    /// Spells reads of stable pointer cells as `\at(p, Pre)->...`.
    fn render(&self, t: &Assertion) -> Assertion {
        let pre = t.rewrite(&mut |x| match x {
            Assertion::Lval(lv) if lv.label().is_none() && !lv.path.is_empty() && self.layout.is_pointer(lv.root()) => {
                let cells = self.layout.cells_under(&constant_prefix(&lv));
                if !cells.is_empty() && cells.iter().all(|c| self.stable.contains(c)) {
                    Assertion::Lval(Lval {
                        base: LvBase::At(Box::new(Lval::var(lv.root().to_string())), Label::Pre),
                        path: lv.path,
                    })
                } else {
                    Assertion::Lval(lv)
                }
            }
            other => other,
        });
        pointer_form(self.layout, &pre, &self.stable)
    }

    fn entry(&self, j: usize, l: &Location) -> Assertion {
        self.info.paths[j].values.get(l).cloned().unwrap_or_else(|| l.at(Label::LoopEntry))
    }

    /// Iterations done so far, in terms of counter `c` on path `j`.
    fn iterations(&self, j: usize, c: &Counter) -> Assertion {
        let (v, v0) = (c.loc.term(), self.entry(j, &c.loc));
        let diff = if c.step > 0 {
            Assertion::sub(v, v0)
        } else {
            Assertion::sub(v0, v)
        };
        if c.step.abs() == 1 {
            diff
        } else {
            Assertion::arith(ArithOp::Div, diff, Assertion::Int(c.step.abs()))
        }
    }

    fn counter_filling(&self, j: usize, c: &Counter) -> Assertion {
        let (v, v0) = (c.loc.term(), self.entry(j, &c.loc));
        let mut parts = Vec::new();
        if c.step > 0 {
            parts.push(Assertion::cmp(CmpOp::Le, v0.clone(), v.clone()));
            if let Some(u) = &c.upper {
                let b = simplify_term(&Assertion::add(u.clone(), Assertion::Int(c.step)));
                parts.push(Assertion::cmp(CmpOp::Le, v.clone(), self.render(&b)));
            }
        } else {
            if let Some(lo) = &c.lower {
                let b = simplify_term(&Assertion::add(lo.clone(), Assertion::Int(c.step)));
                parts.push(Assertion::cmp(CmpOp::Le, self.render(&b), v.clone()));
            }
            parts.push(Assertion::cmp(CmpOp::Le, v.clone(), v0.clone()));
        }
        if c.step.abs() > 1 {
            let m = Assertion::arith(ArithOp::Mod, simplify_term(&Assertion::sub(v, v0)), Assertion::Int(c.step.abs()));
            parts.push(Assertion::eq(m, Assertion::Int(0)));
        }
        Assertion::and(parts)
    }

    fn accumulator_filling(&self, j: usize, l: &Location) -> Option<Assertion> {
        let c = self.counters.iter().find(|c| &c.loc != l)?;
        let ds = self.deltas(l)?;
        let (v, v0) = (l.term(), self.entry(j, l));
        let n = self.iterations(j, c);
        if let Some(consts) = ds.iter().map(Poly::as_const).collect::<Option<Vec<i64>>>() {
            let (lo, hi) = (*consts.iter().min()?, *consts.iter().max()?);
            let at = |d: i64| simplify_term(&Assertion::add(v0.clone(), Assertion::mul(Assertion::Int(d), n.clone())));
            return Some(if lo == hi {
                Assertion::eq(v, at(lo))
            } else {
                Assertion::and([Assertion::cmp(CmpOp::Le, at(lo), v.clone()), Assertion::cmp(CmpOp::Le, v, at(hi))])
            });
        }
        let d = ds.first()?.to_assertion();
        if ds.iter().any(|x| x.to_assertion() != d) {
            return None;
        }
        let ctr = c.loc.term();
        let k = Assertion::var(SUM_VAR);
        let body = d.rewrite(&mut |x| if x == ctr { k.clone() } else { x });
        let bound = BTreeSet::from([SUM_VAR.to_string()]);
        if !self.reads_unchanged(&body, &bound) {
            return None;
        }
        let rhs = if body == d {
            Assertion::add(v0, Assertion::mul(self.render(&d), n))
        } else {
            if c.step.abs() != 1 || body.bound_vars().contains(SUM_VAR) {
                return None;
            }
            let c0 = self.entry(j, &c.loc);
            let (lo, hi) = if c.step > 0 {
                (c0, simplify_term(&Assertion::sub(ctr, Assertion::Int(1))))
            } else {
                (simplify_term(&Assertion::add(ctr, Assertion::Int(1))), c0)
            };
            let sum = Assertion::Sum {
                lo: Box::new(lo),
                hi: Box::new(hi),
                var: SUM_VAR.to_string(),
                body: Box::new(self.render(&body)),
            };
            Assertion::add(v0, sum)
        };
        Some(Assertion::eq(v, simplify_term(&rhs)))
    }

    /// Array cell written once per iteration at the counter's index:
    /// cells between the counter's start and current value hold the
    /// written value, the others their entry value.
    fn written_cell_filling(&self, j: usize, l: &Location) -> Option<Assertion> {
        let Some(LocStep::Index(idx)) = l.steps.last() else {
            return None;
        };
        let idx = *idx as i64;
        let own = l.term();
        let mut hit: Option<(&Counter, &Assertion)> = None;
        for (e, pc) in self.info.exits.iter().zip(&self.info.exit_conditions) {
            let v = e.get(l)?;
            if terms_equal(v, &own) {
                continue;
            }
            let c = self
                .counters
                .iter()
                .filter(|c| c.step.abs() == 1)
                .find(|c| pc.conjuncts().iter().any(|cj| pins(cj, &c.loc.term(), idx)))?;
            match hit {
                Some((c0, v0)) if c0.loc != c.loc || v0 != v => return None,
                _ => hit = Some((c, v)),
            }
        }
        let (c, v) = hit?;
        let ctr = c.loc.term();
        let t = v.rewrite(&mut |x| if x == ctr { Assertion::Int(idx) } else { x });
        if !self.reads_unchanged(&t, &BTreeSet::new()) {
            return None;
        }
        let c0 = self.entry(j, &c.loc);
        let k = Assertion::Int(idx);
        let parts = if c.step > 0 {
            [Assertion::cmp(CmpOp::Le, c0, k.clone()), Assertion::cmp(CmpOp::Lt, k, ctr)]
        } else {
            [Assertion::cmp(CmpOp::Lt, ctr, k.clone()), Assertion::cmp(CmpOp::Le, k, c0)]
        };
        let mut kept = Vec::new();
        for p in parts {
            match &p {
                Assertion::Cmp(op, a, b) => match (&**a, &**b) {
                    (Assertion::Int(x), Assertion::Int(y)) if op.holds(*x, *y) => {}
                    (Assertion::Int(_), Assertion::Int(_)) => return Some(Assertion::eq(own, self.entry(j, l))),
                    _ => kept.push(p),
                },
                _ => kept.push(p),
            }
        }
        let w = Assertion::and(kept);
        Some(Assertion::and([
            Assertion::implies(w.clone(), Assertion::eq(own.clone(), self.render(&simplify_term(&t)))),
            Assertion::implies(Assertion::not(w), Assertion::eq(own, self.entry(j, l))),
        ]))
    }

    fn noninductive_filling(&self, l: &Location) -> Option<Assertion> {
        let first = self.info.exits.first()?.get(l)?;
        if self.info.exits.iter().any(|e| e.get(l) != Some(first)) || !self.reads_unchanged(first, &BTreeSet::new()) {
            return None;
        }
        Some(Assertion::eq(l.term(), self.render(first)))
    }

    fn filling(&self, t: &InvariantTemplate) -> Assertion {
        let found = match t.family {
            Family::Inductive => self.loc_of(&t.subject).and_then(|l| {
                match self.counters.iter().find(|c| &c.loc == l) {
                    Some(c) if c.bounded() => Some(self.counter_filling(t.path_index, c)),
                    Some(c) => self
                        .accumulator_filling(t.path_index, l)
                        .or_else(|| Some(self.counter_filling(t.path_index, c))),
                    None => self
                        .accumulator_filling(t.path_index, l)
                        .or_else(|| self.written_cell_filling(t.path_index, l)),
                }
            }),
            Family::NonInductive => self.loc_of(&t.subject).and_then(|l| self.noninductive_filling(l)),
            _ => None,
        };
        found.unwrap_or_else(Assertion::tt)
    }

    /// Every template instantiated with the computed filling; trivial
    /// clauses are left out.
    fn proposals(&self, templates: &[InvariantTemplate]) -> Vec<Assertion> {
        let mut seen = BTreeSet::new();
        templates
            .iter()
            .filter_map(|t| instantiate(t, &self.filling(t), self.layout).ok())
            .filter(|a| simplify(a) != Assertion::Bool(true))
            .filter(|a| seen.insert(a.to_string()))
            .collect()
    }

    /// `v == t` for cells overwritten with `t` every iteration, guarded by
    /// the counter having moved.
    fn after_first_iteration(&self) -> Vec<Assertion> {
        let Some(c) = self.counters.first() else {
            return Vec::new();
        };
        let moved = Assertion::cmp(CmpOp::Ne, c.loc.term(), self.entry(0, &c.loc));
        let moved = if self.info.paths.len() == 1 {
            moved
        } else {
            Assertion::cmp(CmpOp::Ne, c.loc.term(), c.loc.at(Label::LoopEntry))
        };
        self.info
            .noninductive
            .iter()
            .filter_map(|l| self.noninductive_filling(l))
            .map(|f| Assertion::implies(moved.clone(), f))
            .collect()
    }

    fn summary(&self) -> String {
        let mut lines = vec![format!("Loop {} with guard {}:", self.info.loop_id.0, self.info.guard)];
        for c in &self.counters {
            lines.push(format!("- `{}` is a counter stepping by {}.", c.loc, c.step));
        }
        for l in self.info.scope.iter().filter(|l| self.info.inductive.contains(*l)) {
            if self.counters.iter().any(|c| &c.loc == l && c.bounded()) {
                continue;
            }
            match self.accumulator_filling(0, l) {
                Some(f) => lines.push(format!("- `{l}` is an accumulator: {f}.")),
                None => lines.push(format!("- `{l}` changes in a way with no closed form here.")),
            }
        }
        for l in &self.info.noninductive {
            lines.push(format!("- `{l}` is overwritten each iteration without reading itself."));
        }
        let unchanged: Vec<String> = self.info.unchanged.iter().map(|l| l.to_string()).collect();
        if !unchanged.is_empty() {
            lines.push(format!("- unchanged: {}.", unchanged.join(", ")));
        }
        lines.join("\n")
    }
}

fn context<'a>(req: &SynthesisRequest<'a>) -> Result<LoopContext<'a>, SynthError> {
    req.context
        .ok_or_else(|| SynthError::Config("the mock backend needs structured loop context".into()))
}

/// Whether `a` says `v == k`.
fn pins(a: &Assertion, v: &Assertion, k: i64) -> bool {
    let Assertion::Cmp(op, x, y) = a else { return false };
    match norm_cmp(*op, x, y) {
        Some((NormOp::Eq, p)) => {
            let c = p.linear_coeff(v);
            let rest = {
                let mut r = p.clone();
                r.terms.remove(&vec![v.clone()]);
                r
            };
            match (c, rest.as_const()) {
                (Some(1), Some(r)) => r == -k,
                (Some(-1), Some(r)) => r == k,
                _ => false,
            }
        }
        _ => false,
    }
}

/// Textual fixes for common near-miss spellings.
fn repair_text(text: &str) -> String {
    let mut t = text.replace("\\lambda integer k;", "k |->").replace("\\lambda int k;", "k |->");
    if t.contains("sum(") && !t.contains("\\sum(") {
        t = t.replace("sum(", "\\sum(");
    }
    t.replace("==>>", "==>")
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn think(&self, req: &SynthesisRequest) -> Result<String, SynthError> {
        Ok(Facts::new(&context(req)?).summary())
    }

    fn fill(&self, req: &SynthesisRequest) -> Result<BTreeMap<String, Candidate>, SynthError> {
        let ctx = context(req)?;
        let facts = Facts::new(&ctx);
        Ok(ctx
            .templates
            .iter()
            .filter_map(|t| {
                let name = t.placeholder.clone()?;
                let cand = match self.overrides.get(&name) {
                    Some(text) => Candidate::from_text(text),
                    None => Candidate::Parsed(facts.filling(t)),
                };
                Some((name, cand))
            })
            .collect())
    }

    fn propose_nested(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError> {
        let ctx = context(req)?;
        let facts = Facts::new(&ctx);
        Ok(facts.proposals(ctx.templates).into_iter().map(Candidate::Parsed).collect())
    }

    fn refine(&self, req: &SynthesisRequest) -> Result<Vec<Candidate>, SynthError> {
        let ctx = context(req)?;
        let facts = Facts::new(&ctx);
        let mut current: Vec<Candidate> = req.current.iter().map(|t| Candidate::from_text(t)).collect();
        let mut dropped: BTreeSet<String> = BTreeSet::new();
        let mut add = false;
        for g in &req.guidance {
            let pos = g.clause.as_ref().and_then(|c| current.iter().position(|x| &x.text() == c));
            match (g.class, pos) {
                (ErrorClass::Repair, Some(i)) => {
                    let text = current[i].text();
                    let fixed = repair_text(&text);
                    match Candidate::from_text(&fixed) {
                        c @ Candidate::Parsed(_) if fixed != text => current[i] = c,
                        _ => {
                            dropped.insert(current.remove(i).text());
                        }
                    }
                }
                (ErrorClass::Weaken, Some(i)) => {
                    let ec = ctx.info.entry_condition.clone();
                    match &current[i] {
                        Candidate::Parsed(Assertion::Implies(a, _)) if **a == ec => {
                            dropped.insert(current.remove(i).text());
                        }
                        Candidate::Parsed(a) => current[i] = Candidate::Parsed(Assertion::implies(ec, a.clone())),
                        Candidate::Raw { .. } => {
                            dropped.insert(current.remove(i).text());
                        }
                    }
                }
                (ErrorClass::Adjust | ErrorClass::Regenerate, Some(i)) => {
                    dropped.insert(current.remove(i).text());
                    add = true;
                }
                (ErrorClass::Strengthen, _) => {
                    add = true;
                    for extra in facts.after_first_iteration() {
                        if !current.iter().any(|c| c.text() == extra.to_string()) {
                            current.push(Candidate::Parsed(extra));
                        }
                    }
                }
                _ => {}
            }
        }
        if add {
            for p in facts.proposals(ctx.templates) {
                let text = p.to_string();
                if !dropped.contains(&text) && !current.iter().any(|c| c.text() == text) {
                    current.push(Candidate::Parsed(p));
                }
            }
        }
        Ok(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, GoalId};
    use crate::logic::DomainConfig;
    use crate::loopanalysis::analyze_loop;
    use crate::symexec::{se_start, AnnotatedHooks, Executor, Suspension};
    use crate::templates::generate_templates;

    fn fill(src: &str) -> BTreeMap<String, String> {
        let p = parse_program(src).unwrap();
        let f = &p.functions[0];
        let layout = MemoryLayout::for_function(f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, f, &cfg, &[]).unwrap();
        let Suspension::LoopEntry(id) = r.reason else { panic!() };
        let stmt = f.find_loop(id).unwrap();
        let mut ex = Executor::new(&layout, &p, f, &cfg);
        let info = analyze_loop(&mut ex, &r.states, stmt, &[], &mut AnnotatedHooks).unwrap();
        let goals: Vec<(GoalId, Assertion)> = Vec::new();
        let ts = generate_templates(&info, &layout, &goals);
        let req = SynthesisRequest {
            context: Some(LoopContext {
                info: &info,
                templates: &ts,
                layout: &layout,
                nested: false,
            }),
            ..Default::default()
        };
        MockBackend::new()
            .fill(&req)
            .unwrap()
            .into_iter()
            .map(|(k, v)| (k, v.text()))
            .collect()
    }

    #[test]
    fn checkcal_fillings() {
        let m = fill(
            "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
             void f(struct CheckCal *pIp) { int chksum = 0; int i = 0; \
             for (; i < pIp->len; i++) chksum += pIp->pkv[i]; pIp->chksum = chksum; }",
        );
        assert_eq!(m["i"], "0 <= i <= \\at(pIp, Pre)->len");
        assert_eq!(m["chksum"], "chksum == \\sum(0, i - 1, k |-> \\at(pIp, Pre)->pkv[k])");
    }

    #[test]
    fn stepping_counter_and_linear_accumulator() {
        let m = fill("void f(int n) { int i = 0; int s = 0; while (i < n) { i = i + 2; s = s + 3; } }");
        assert_eq!(m["i"], "0 <= i <= n + 1 && i % 2 == 0");
        assert!(m["s"].starts_with("s == 3 * "), "{}", m["s"]);
    }

    #[test]
    fn repair_rewrites_sum_spelling() {
        assert_eq!(repair_text("s == sum(0, i - 1, \\lambda integer k; a[k])"), "s == \\sum(0, i - 1, k |-> a[k])");
    }
}
