//! Single-iteration unfolding of a loop body and variable classification.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::frontend::{Assertion, Label, LoopId, Lval, LvBase, Stmt};
use crate::logic::poly::simplify_term;
use crate::logic::{find_counterexample, simplify, terms_equal};
use crate::memstore::{Location, MemoryLayout};
use crate::symexec::{cond_assertion, Env, Executor, Hooks, Status, Store, SymError, SymState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoopError {
    #[error("statement is not a loop")]
    NotALoop,
    #[error("loop {0:?} is unreachable")]
    Unreachable(LoopId),
    #[error("`return` inside loop {0:?}")]
    ReturnInLoop(LoopId),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// One path reaching the loop head, rendered over entry snapshots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryPath {
    /// Path condition without the function's own requires.
    pub pc: Assertion,
    /// The loop guard evaluated in this path's entry store.
    pub guard: Assertion,
    /// Entry value of every in-scope cell.
    pub values: BTreeMap<Location, Assertion>,
}

impl EntryPath {
    /// `pc && B[σ]`.
    pub fn entry_condition(&self) -> Assertion {
        Assertion::and([self.pc.clone(), self.guard.clone()])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopInfo {
    pub loop_id: LoopId,
    pub guard: Assertion,
    pub paths: Vec<EntryPath>,
    /// Cells live at the loop head, in layout order.
    pub scope: Vec<Location>,
    /// Pointer parameters (always unchanged).
    pub pointer_roots: Vec<String>,
    pub unchanged: BTreeSet<Location>,
    pub noninductive: BTreeSet<Location>,
    pub inductive: BTreeSet<Location>,
    pub entry_condition: Assertion,
    /// Value of every in-scope cell after one iteration, per exit path,
    /// over the iteration-entry values.
    pub exits: Vec<BTreeMap<Location, Assertion>>,
    /// Path condition of each exit path, over the iteration-entry values.
    pub exit_conditions: Vec<Assertion>,
}

/// Runs the body once from the generic state under the guard.
pub fn unfold(
    ex: &mut Executor,
    stmt: &Stmt,
    hooks: &mut dyn Hooks,
) -> Result<Vec<SymState>, LoopError> {
    let Stmt::While { id, cond, body, .. } = stmt else {
        return Err(LoopError::NotALoop);
    };
    let st = ex.generic_state();
    let g = simplify(&cond_assertion(cond));
    let Some(st) = ex.assume(st, g) else {
        return Ok(Vec::new());
    };
    let saved = ex.obligations.len();
    let out = ex.exec(vec![st], body, hooks);
    ex.obligations.truncate(saved);
    let out = out?;
    if out.iter().any(|s| s.status == Status::Returned) {
        return Err(LoopError::ReturnInLoop(*id));
    }
    Ok(out)
}

/// Splits `scope` into unchanged, non-inductive and inductive cells.
pub fn classify(
    ex: &Executor,
    scope: &[Location],
    exits: &[SymState],
) -> (BTreeSet<Location>, BTreeSet<Location>, BTreeSet<Location>) {
    let mut uv = BTreeSet::new();
    let mut nv = BTreeSet::new();
    let mut iv = BTreeSet::new();
    for loc in scope {
        let own = loc.term();
        let vals: Vec<(&SymState, Assertion)> = exits
            .iter()
            .map(|s| (s, s.store.get(loc).cloned().unwrap_or_else(|| own.clone())))
            .collect();
        let same = vals
            .iter()
            .all(|(s, v)| terms_equal(v, &own) || semantically_equal(ex, s, v, &own));
        if same {
            uv.insert(loc.clone());
        } else if vals
            .iter()
            .all(|(_, v)| v.syms().is_empty() && !may_reference(ex, v, loc))
        {
            nv.insert(loc.clone());
        } else {
            iv.insert(loc.clone());
        }
    }
    (uv, nv, iv)
}

/// Exhaustive bounded check that `v == own` on the path.
fn semantically_equal(ex: &Executor, s: &SymState, v: &Assertion, own: &Assertion) -> bool {
    let goal = Assertion::eq(v.clone(), own.clone());
    match find_counterexample(ex.layout, ex.cfg, &s.pc, &goal) {
        Ok(r) => r.model.is_none() && r.exhaustive,
        Err(_) => false,
    }
}

/// Whether `term` may read the current value of `loc`.
fn may_reference(ex: &Executor, term: &Assertion, loc: &Location) -> bool {
    term.lvals().iter().any(|lv| {
        if lv.label().is_some() && !matches!(&lv.base, LvBase::At(inner, _) if inner.path.is_empty() && ex.layout.is_pointer(inner.root()))
        {
            return false;
        }
        if lv.root() != loc.root {
            return false;
        }
        let cur = match &lv.base {
            LvBase::Var(_) => lv.clone(),
            LvBase::At(inner, _) => Lval {
                base: LvBase::Var(inner.root().to_string()),
                path: lv.path.clone(),
            },
        };
        match Location::from_lval(&cur) {
            Some(l) => l == *loc,
            // A symbolic index may denote any cell under the constant prefix.
            None => constant_prefix(&cur).is_prefix_of(loc),
        }
    })
}

pub fn constant_prefix(lv: &Lval) -> Location {
    let mut out = Location::root(lv.root().to_string());
    for a in &lv.path {
        let step = Lval {
            base: LvBase::Var(lv.root().to_string()),
            path: vec![a.clone()],
        };
        match Location::from_lval(&step).and_then(|l| l.steps.last().cloned()) {
            Some(s) => out = out.push(s),
            None => break,
        }
    }
    out
}

impl LoopInfo {
    /// Unchanged cells that hold their function-entry value on every path.
    pub fn stable_cells(&self) -> BTreeSet<Location> {
        self.unchanged
            .iter()
            .filter(|l| self.paths.iter().all(|p| p.values.get(*l) == Some(&l.at(Label::Pre))))
            .cloned()
            .collect()
    }
}

/// Full analysis of the loop at `stmt` entered in `entry` states. `hyps`
/// are the function's requires, read at entry; they are left out of the
/// rendered path conditions.
pub fn analyze_loop(
    ex: &mut Executor,
    entry: &[SymState],
    stmt: &Stmt,
    hyps: &[Assertion],
    hooks: &mut dyn Hooks,
) -> Result<LoopInfo, LoopError> {
    let Stmt::While { id, cond, .. } = stmt else {
        return Err(LoopError::NotALoop);
    };
    if entry.is_empty() {
        return Err(LoopError::Unreachable(*id));
    }
    let scope: Vec<Location> = ex
        .layout
        .locations
        .iter()
        .filter(|l| entry.iter().all(|s| s.store.contains_key(*l)))
        .cloned()
        .collect();
    let exits = unfold(ex, stmt, hooks)?;
    let (unchanged, noninductive, inductive) = classify(ex, &scope, &exits);
    let guard = cond_assertion(cond);

    // Cells whose entry value is the function-entry value and which the loop
    // never writes: `\at(p->f, Pre)` may be spelled `\at(p, Pre)->f`.
    let stable: BTreeSet<Location> = scope
        .iter()
        .filter(|l| unchanged.contains(*l) && entry.iter().all(|s| s.store[*l] == l.at(Label::Pre)))
        .cloned()
        .collect();
    let hyp_parts: Vec<Assertion> = hyps
        .iter()
        .flat_map(|h| simplify(h).conjuncts().into_iter().cloned().collect::<Vec<_>>())
        .collect();

    let mut paths = Vec::new();
    for st in entry {
        let rho = render_store(ex, &st.store, &scope, &unchanged);
        let pc_parts: Vec<Assertion> = st
            .pc
            .iter()
            .flat_map(|c| simplify(c).conjuncts().into_iter().cloned().collect::<Vec<_>>())
            .filter(|c| c.syms().is_empty() && !hyp_parts.contains(c))
            .filter(|c| !scope.iter().any(|l| !unchanged.contains(l) && may_reference(ex, c, l)))
            .map(|c| pointer_form(ex.layout, &c, &stable))
            .collect();
        let g = tidy(&ex.subst(&guard, Env::of(&rho)));
        let g = pointer_form(ex.layout, &g, &stable);
        paths.push(EntryPath {
            pc: Assertion::and(pc_parts),
            guard: g,
            values: scope.iter().map(|l| (l.clone(), rho[l].clone())).collect(),
        });
    }
    let entry_condition = Assertion::or(paths.iter().map(EntryPath::entry_condition));
    let exit_values = exits
        .iter()
        .map(|s| {
            scope
                .iter()
                .map(|l| (l.clone(), simplify(&s.store.get(l).cloned().unwrap_or_else(|| l.term()))))
                .collect()
        })
        .collect();
    let exit_conditions = exits.iter().map(|s| simplify(&s.pc_formula())).collect();
    let pointer_roots = ex
        .layout
        .roots
        .iter()
        .filter(|r| r.is_param && ex.layout.is_pointer(&r.name))
        .map(|r| r.name.clone())
        .collect();
    Ok(LoopInfo {
        loop_id: *id,
        guard,
        paths,
        scope,
        pointer_roots,
        unchanged,
        noninductive,
        inductive,
        entry_condition,
        exits: exit_values,
        exit_conditions,
    })
}

/// Entry store in printable form. Values holding havoc symbols, or reading
/// cells the loop writes, become `\at(loc, LoopEntry)`.
fn render_store(ex: &Executor, store: &Store, scope: &[Location], unchanged: &BTreeSet<Location>) -> Store {
    scope
        .iter()
        .map(|l| {
            let v = &store[l];
            let reads_modified = v
                .lvals()
                .iter()
                .filter(|lv| lv.label().is_none())
                .any(|lv| scope.iter().any(|c| !unchanged.contains(c) && may_reference(ex, &Assertion::Lval(lv.clone()), c)));
            let v = if v.syms().is_empty() && !reads_modified {
                v.clone()
            } else {
                l.at(Label::LoopEntry)
            };
            (l.clone(), v)
        })
        .collect()
}

/// Folds constants inside comparison operands but keeps their orientation,
/// so `i < n` with `i = 0` reads `0 < n`.
pub fn tidy(a: &Assertion) -> Assertion {
    let s = simplify(a);
    if matches!(s, Assertion::Bool(_)) {
        return s;
    }
    a.rewrite(&mut |x| match x {
        Assertion::Cmp(op, l, r) => Assertion::Cmp(op, Box::new(simplify_term(&l)), Box::new(simplify_term(&r))),
        other => other,
    })
}

/// Rewrites `\at(p->path, Pre)` to `\at(p, Pre)->path` when every cell under
/// the path is in `stable`.
pub fn pointer_form(layout: &MemoryLayout, a: &Assertion, stable: &BTreeSet<Location>) -> Assertion {
    a.rewrite(&mut |x| match x {
        Assertion::Lval(Lval {
            base: LvBase::At(inner, Label::Pre),
            path,
        }) if !inner.path.is_empty() && layout.is_pointer(inner.root()) => {
            let prefix = constant_prefix(&inner);
            let cells = layout.cells_under(&prefix);
            if !cells.is_empty() && cells.iter().all(|c| stable.contains(c)) {
                let mut p = inner.path.clone();
                p.extend(path);
                Assertion::Lval(Lval {
                    base: LvBase::At(Box::new(Lval::var(inner.root().to_string())), Label::Pre),
                    path: p,
                })
            } else {
                Assertion::Lval(Lval {
                    base: LvBase::At(inner, Label::Pre),
                    path,
                })
            }
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::logic::DomainConfig;
    use crate::memstore::MemoryLayout;
    use crate::symexec::{se_start, AnnotatedHooks, Suspension};

    fn info(src: &str) -> LoopInfo {
        let p = parse_program(src).unwrap();
        let f = &p.functions[0];
        let layout = MemoryLayout::for_function(f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, f, &cfg, &[]).unwrap();
        let Suspension::LoopEntry(id) = r.reason else { panic!() };
        let stmt = f.find_loop(id).unwrap();
        let mut ex = Executor::new(&layout, &p, f, &cfg);
        analyze_loop(&mut ex, &r.states, stmt, &[], &mut AnnotatedHooks).unwrap()
    }

    fn names(s: &BTreeSet<Location>) -> Vec<String> {
        s.iter().map(|l| l.to_string()).collect()
    }

    #[test]
    fn checkcal_classification() {
        let li = info(
            "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
             void f(struct CheckCal *pIp) { int chksum = 0; int i = 0; \
             for (; i < pIp->len; i++) chksum += pIp->pkv[i]; pIp->chksum = chksum; }",
        );
        assert_eq!(names(&li.inductive), vec!["chksum", "i"]);
        assert!(li.unchanged.contains(&Location::root("pIp").push(crate::memstore::LocStep::Arrow("len".into()))));
        assert_eq!(li.entry_condition.to_string(), "0 < \\at(pIp, Pre)->len");
    }

    #[test]
    fn noninductive_temp() {
        let li = info("void f(int n) { int t = 0; int i = 0; while (i < n) { t = n * 2; i = i + 1; } }");
        assert_eq!(names(&li.noninductive), vec!["t"]);
        assert_eq!(names(&li.inductive), vec!["i"]);
        assert_eq!(names(&li.unchanged), vec!["n"]);
    }

    #[test]
    fn plus_zero_is_unchanged() {
        let li = info("void f(int n) { int x = 1; int i = 0; while (i < n) { x = x + 0; i = i + 1; } }");
        assert!(names(&li.unchanged).contains(&"x".to_string()));
    }

    #[test]
    fn branch_before_loop_gives_two_paths() {
        let li = info("void f(int n) { int i = 0; if (n > 5) i = 1; while (i < n) { i = i + 1; } }");
        assert_eq!(li.paths.len(), 2);
    }
}
