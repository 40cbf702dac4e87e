//! Path-sensitive symbolic execution over the flattened memory model.
//!
//! A state maps every atomic location to a term. Terms are built from
//! entry snapshots (`\at(loc, Pre)`), plain locations (the generic start
//! state used for loop bodies), and fresh symbols introduced by havoc.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::frontend::{
    Access, ArithOp, Assertion, BinOp, CType, CmpOp, Contract, Expr, FunctionDef, GoalId, Label,
    LoopId, Lval, LvBase, Program, Stmt, UnOp,
};
use crate::logic::poly::{atom_key, negate, poly_of};
use crate::logic::{find_model, simplify, DomainConfig};
use crate::memstore::{LocStep, Location, MemError, MemoryLayout};

pub type Store = BTreeMap<Location, Assertion>;

pub const DEFAULT_PATH_BUDGET: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("path budget of {0} states exceeded")]
    PathBudgetExceeded(usize),
    #[error("no states to summarize")]
    EmptyStates,
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error("{0}")]
    Hook(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Returned,
    Break,
    Continue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymState {
    pub pc: Vec<Assertion>,
    pub store: Store,
    pub ret: Option<Assertion>,
    pub status: Status,
}

impl SymState {
    pub fn pc_formula(&self) -> Assertion {
        Assertion::and(self.pc.iter().cloned())
    }

    fn is_dead(&self) -> bool {
        self.pc.contains(&Assertion::Bool(false))
    }

    pub fn syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.pc {
            out.extend(c.syms());
        }
        for v in self.store.values() {
            out.extend(v.syms());
        }
        if let Some(r) = &self.ret {
            out.extend(r.syms());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObligationKind {
    Bounds(String),
    DivByZero(String),
    CalleeRequires(String),
}

/// A safety condition that must hold whenever `hyps` do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub hyps: Vec<Assertion>,
    pub cond: Assertion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Suspension {
    LoopEntry(LoopId),
    CallSite(crate::frontend::CallId),
    Exit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuspensionResult {
    pub reason: Suspension,
    pub states: Vec<SymState>,
}

/// Callbacks for the points where straight-line execution stops.
pub trait Hooks {
    fn on_loop(
        &mut self,
        ex: &mut Executor,
        states: Vec<SymState>,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError>;

    fn on_call(&mut self, ex: &mut Executor, state: SymState, stmt: &Stmt)
        -> Result<Vec<SymState>, SymError>;

    fn on_assert(
        &mut self,
        _ex: &mut Executor,
        _state: &SymState,
        _id: GoalId,
        _cond: &Assertion,
    ) -> Result<(), SymError> {
        Ok(())
    }
}

/// Uses whatever annotations the program already carries: loop invariants
/// for loops and contracts for callees.
pub struct AnnotatedHooks;

impl Hooks for AnnotatedHooks {
    fn on_loop(
        &mut self,
        ex: &mut Executor,
        states: Vec<SymState>,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError> {
        let Stmt::While { id, .. } = stmt else {
            return Ok(states);
        };
        let inv = ex.func.loop_annotations.get(id).cloned().unwrap_or_default();
        ex.exit_loop(states, stmt, &inv)
    }

    fn on_call(
        &mut self,
        ex: &mut Executor,
        state: SymState,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError> {
        let Stmt::Call { callee, .. } = stmt else {
            return Ok(vec![state]);
        };
        let contract = ex
            .prog
            .function(callee)
            .and_then(|f| f.spec.clone())
            .unwrap_or_default();
        ex.apply_callee_summary(state, stmt, &contract)
    }
}

/// Stops at the first loop or call and keeps the states found there.
#[derive(Default)]
pub struct StopHooks {
    pub hit: Option<SuspensionResult>,
}

impl Hooks for StopHooks {
    fn on_loop(
        &mut self,
        _ex: &mut Executor,
        states: Vec<SymState>,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError> {
        if self.hit.is_none() {
            if let Stmt::While { id, .. } = stmt {
                self.hit = Some(SuspensionResult {
                    reason: Suspension::LoopEntry(*id),
                    states,
                });
            }
        }
        Ok(Vec::new())
    }

    fn on_call(
        &mut self,
        _ex: &mut Executor,
        state: SymState,
        stmt: &Stmt,
    ) -> Result<Vec<SymState>, SymError> {
        if let Stmt::Call { id, .. } = stmt {
            match &mut self.hit {
                None => {
                    self.hit = Some(SuspensionResult {
                        reason: Suspension::CallSite(*id),
                        states: vec![state],
                    })
                }
                Some(SuspensionResult {
                    reason: Suspension::CallSite(c),
                    states,
                }) if c == id => states.push(state),
                _ => {}
            }
        }
        Ok(Vec::new())
    }
}

/// How labelled and unlabelled l-values are read during substitution.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub store: &'a Store,
    /// Store for `\at(.., Pre)`; `None` keeps Pre terms as they are.
    pub pre: Option<&'a Store>,
    /// Store for `\at(.., LoopEntry)`; `None` keeps them as they are.
    pub loop_entry: Option<&'a Store>,
    pub ret: Option<&'a Assertion>,
}

impl<'a> Env<'a> {
    pub fn of(store: &'a Store) -> Env<'a> {
        Env {
            store,
            pre: None,
            loop_entry: None,
            ret: None,
        }
    }
}

enum Val {
    Int(Assertion),
    Bool(Assertion),
}

impl Val {
    fn int(self) -> Assertion {
        match self {
            Val::Int(a) => a,
            Val::Bool(b) => match b {
                Assertion::Bool(t) => Assertion::Int(t as i64),
                b => Assertion::Ite(Box::new(b), Box::new(Assertion::Int(1)), Box::new(Assertion::Int(0))),
            },
        }
    }

    fn cond(self) -> Assertion {
        match self {
            Val::Bool(b) => b,
            Val::Int(a) => simplify(&Assertion::cmp(CmpOp::Ne, a, Assertion::Int(0))),
        }
    }
}

enum PStep {
    Fixed(LocStep),
    Idx(Assertion),
}

pub struct Executor<'a> {
    pub layout: &'a MemoryLayout,
    pub prog: &'a Program,
    pub func: &'a FunctionDef,
    pub cfg: &'a DomainConfig,
    pub obligations: Vec<Obligation>,
    pub path_budget: usize,
    /// Search budget for pruning infeasible branches.
    pub prune_budget: usize,
    fresh: usize,
}

impl<'a> Executor<'a> {
    pub fn new(
        layout: &'a MemoryLayout,
        prog: &'a Program,
        func: &'a FunctionDef,
        cfg: &'a DomainConfig,
    ) -> Executor<'a> {
        Executor {
            layout,
            prog,
            func,
            cfg,
            obligations: Vec::new(),
            path_budget: DEFAULT_PATH_BUDGET,
            prune_budget: (cfg.max_states / 8).max(64),
            fresh: 0,
        }
    }

    /// Function entry: parameter cells hold their `Pre` snapshot.
    pub fn entry_state(&self) -> SymState {
        let mut store = Store::new();
        for l in self.layout.param_locations() {
            store.insert(l.clone(), l.at(Label::Pre));
        }
        SymState {
            pc: Vec::new(),
            store,
            ret: None,
            status: Status::Running,
        }
    }

    /// Every cell holds its own current value.
    pub fn generic_state(&self) -> SymState {
        let store = self
            .layout
            .locations
            .iter()
            .map(|l| (l.clone(), l.term()))
            .collect();
        SymState {
            pc: Vec::new(),
            store,
            ret: None,
            status: Status::Running,
        }
    }

    pub fn fresh_sym(&mut self, hint: &str) -> String {
        self.fresh += 1;
        format!("h_{}_{}", crate::frontend::assertion::sanitize_path(hint), self.fresh)
    }

    // ---- statements -------------------------------------------------

    pub fn exec(
        &mut self,
        states: Vec<SymState>,
        stmts: &[Stmt],
        hooks: &mut dyn Hooks,
    ) -> Result<Vec<SymState>, SymError> {
        let mut states = states;
        for s in stmts {
            let (run, done): (Vec<_>, Vec<_>) =
                states.into_iter().partition(|s| s.status == Status::Running);
            let mut next = self.exec_stmt(run, s, hooks)?;
            next.extend(done);
            if next.len() > self.path_budget {
                return Err(SymError::PathBudgetExceeded(self.path_budget));
            }
            states = next;
        }
        Ok(states)
    }

    fn exec_stmt(
        &mut self,
        states: Vec<SymState>,
        stmt: &Stmt,
        hooks: &mut dyn Hooks,
    ) -> Result<Vec<SymState>, SymError> {
        if states.is_empty() {
            return Ok(states);
        }
        match stmt {
            Stmt::While { .. } => hooks.on_loop(self, states, stmt),
            Stmt::Block(b) => self.exec(states, b, hooks),
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let mut thens = Vec::new();
                let mut elses = Vec::new();
                for mut st in states {
                    let c = self.eval(&mut st, cond, &[])?.cond();
                    let c = simplify(&c);
                    let nc = negate(&c);
                    if let Some(t) = self.assume(st.clone(), c) {
                        thens.push(t);
                    }
                    if let Some(e) = self.assume(st, nc) {
                        elses.push(e);
                    }
                }
                let mut out = self.exec(thens, then_branch, hooks)?;
                out.extend(self.exec(elses, else_branch, hooks)?);
                Ok(out)
            }
            _ => {
                let mut out = Vec::new();
                for st in states {
                    out.extend(self.exec_simple(st, stmt, hooks)?);
                }
                Ok(out)
            }
        }
    }

    fn exec_simple(
        &mut self,
        mut st: SymState,
        stmt: &Stmt,
        hooks: &mut dyn Hooks,
    ) -> Result<Vec<SymState>, SymError> {
        match stmt {
            Stmt::Decl { name, ty, init } => {
                let root = Location::root(name.clone());
                match init {
                    Some(e) if ty.is_scalar() => {
                        let v = self.eval(&mut st, e, &[])?.int();
                        st.store.insert(root, simplify(&v));
                    }
                    Some(_) => return Err(SymError::Unsupported(format!("initializer for `{name}`"))),
                    None => {
                        for l in self.layout.cells_under(&root) {
                            let s = self.fresh_sym(&l.to_string());
                            st.store.insert(l, Assertion::Sym(s));
                        }
                    }
                }
                Ok(vec![st])
            }
            Stmt::Assign { target, value } => {
                let lhs_prefix = self.layout.resolve_prefix(target, &mut |_| Some(0));
                let aggregate = matches!(&lhs_prefix, Ok(l) if !self.layout.is_scalar(l));
                if aggregate {
                    return self.assign_aggregate(st, target, value).map(|s| vec![s]);
                }
                let v = self.eval(&mut st, value, &[])?.int();
                let v = simplify(&v);
                self.write(st, target, v)
            }
            Stmt::Call { .. } => hooks.on_call(self, st, stmt),
            Stmt::Return(e) => {
                if let Some(e) = e {
                    let v = self.eval(&mut st, e, &[])?.int();
                    st.ret = Some(simplify(&v));
                }
                st.status = Status::Returned;
                Ok(vec![st])
            }
            Stmt::Assert { id, cond, .. } => {
                hooks.on_assert(self, &st, *id, cond)?;
                Ok(vec![st])
            }
            Stmt::Break => {
                st.status = Status::Break;
                Ok(vec![st])
            }
            Stmt::Continue => {
                st.status = Status::Continue;
                Ok(vec![st])
            }
            Stmt::While { .. } | Stmt::If { .. } | Stmt::Block(_) => {
                self.exec_stmt(vec![st], stmt, hooks)
            }
        }
    }

    fn assign_aggregate(&mut self, mut st: SymState, target: &Expr, value: &Expr) -> Result<SymState, SymError> {
        let dst = self.const_prefix(&mut st, target)?;
        let src = self.const_prefix(&mut st, value)?;
        let n_dst = dst.steps.len();
        let n_src = src.steps.len();
        let src_cells = self.layout.cells_under(&src);
        let dst_cells = self.layout.cells_under(&dst);
        if src_cells.len() != dst_cells.len()
            || src_cells.iter().zip(&dst_cells).any(|(a, b)| a.steps[n_src..] != b.steps[n_dst..])
        {
            return Err(SymError::Unsupported(format!("aggregate assignment `{target} = {value}`")));
        }
        let vals: Vec<Assertion> = src_cells.iter().map(|c| self.read_loc(&st.store, c)).collect();
        for (d, v) in dst_cells.into_iter().zip(vals) {
            st.store.insert(d, v);
        }
        Ok(st)
    }

    fn const_prefix(&mut self, st: &mut SymState, e: &Expr) -> Result<Location, SymError> {
        let (root, steps) = self.expr_path(st, e, &[])?;
        let mut loc = Location::root(root);
        for s in steps {
            match s {
                PStep::Fixed(f) => loc = loc.push(f),
                PStep::Idx(Assertion::Int(k)) if k >= 0 => loc = loc.push(LocStep::Index(k as usize)),
                _ => return Err(SymError::Unsupported(format!("symbolic index in aggregate `{e}`"))),
            }
        }
        self.layout.type_of(&loc)?;
        Ok(loc)
    }

    // ---- expressions ------------------------------------------------

    fn eval(&mut self, st: &mut SymState, e: &Expr, guard: &[Assertion]) -> Result<Val, SymError> {
        Ok(match e {
            Expr::Int(n) => Val::Int(Assertion::Int(*n)),
            Expr::Var(_) | Expr::Index(..) | Expr::Field(..) | Expr::Arrow(..) => {
                Val::Int(self.read(st, e, guard)?)
            }
            Expr::Unary(UnOp::Neg, x) => {
                let v = self.eval(st, x, guard)?.int();
                Val::Int(simplify(&Assertion::Neg(Box::new(v))))
            }
            Expr::Unary(UnOp::Not, x) => {
                let v = self.eval(st, x, guard)?.cond();
                Val::Bool(simplify(&Assertion::not(v)))
            }
            Expr::Binary(op, x, y) => match op {
                BinOp::And | BinOp::Or => {
                    let a = self.eval(st, x, guard)?.cond();
                    let mut g = guard.to_vec();
                    g.push(if *op == BinOp::And { a.clone() } else { negate(&a) });
                    let b = self.eval(st, y, &g)?.cond();
                    let r = if *op == BinOp::And {
                        Assertion::and([a, b])
                    } else {
                        Assertion::or([a, b])
                    };
                    Val::Bool(simplify(&r))
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => {
                    let a = self.eval(st, x, guard)?.int();
                    let b = self.eval(st, y, guard)?.int();
                    let cop = match op {
                        BinOp::Lt => CmpOp::Lt,
                        BinOp::Le => CmpOp::Le,
                        BinOp::Gt => CmpOp::Gt,
                        BinOp::Ge => CmpOp::Ge,
                        BinOp::Eq => CmpOp::Eq,
                        _ => CmpOp::Ne,
                    };
                    Val::Bool(simplify(&Assertion::cmp(cop, a, b)))
                }
                _ => {
                    let a = self.eval(st, x, guard)?.int();
                    let b = self.eval(st, y, guard)?.int();
                    let aop = match op {
                        BinOp::Add => ArithOp::Add,
                        BinOp::Sub => ArithOp::Sub,
                        BinOp::Mul => ArithOp::Mul,
                        BinOp::Div => ArithOp::Div,
                        _ => ArithOp::Mod,
                    };
                    if matches!(aop, ArithOp::Div | ArithOp::Mod) {
                        let nz = simplify(&Assertion::cmp(CmpOp::Ne, b.clone(), Assertion::Int(0)));
                        self.require(st, guard, nz, ObligationKind::DivByZero(e.to_string()));
                    }
                    Val::Int(simplify(&Assertion::arith(aop, a, b)))
                }
            },
        })
    }

    /// Records an obligation and assumes it on the current path.
    fn require(&mut self, st: &mut SymState, guard: &[Assertion], cond: Assertion, kind: ObligationKind) {
        if cond == Assertion::Bool(true) {
            return;
        }
        let mut hyps = st.pc.clone();
        hyps.extend(guard.iter().cloned());
        self.obligations.push(Obligation {
            kind,
            hyps,
            cond: cond.clone(),
        });
        let assumed = simplify(&Assertion::implies(Assertion::and(guard.iter().cloned()), cond));
        if assumed != Assertion::Bool(true) {
            st.pc.push(assumed);
        }
    }

    fn expr_path(
        &mut self,
        st: &mut SymState,
        e: &Expr,
        guard: &[Assertion],
    ) -> Result<(String, Vec<PStep>), SymError> {
        match e {
            Expr::Var(v) => {
                if self.layout.root(v).is_none() {
                    return Err(MemError::UnknownVariable(v.clone()).into());
                }
                Ok((v.clone(), Vec::new()))
            }
            Expr::Field(b, f) => {
                let (r, mut s) = self.expr_path(st, b, guard)?;
                s.push(PStep::Fixed(LocStep::Dot(f.clone())));
                Ok((r, s))
            }
            Expr::Arrow(b, f) => {
                let (r, mut s) = self.expr_path(st, b, guard)?;
                s.push(PStep::Fixed(LocStep::Arrow(f.clone())));
                Ok((r, s))
            }
            Expr::Index(b, i) => {
                let (r, mut s) = self.expr_path(st, b, guard)?;
                let iv = self.eval(st, i, guard)?.int();
                s.push(PStep::Idx(simplify(&iv)));
                Ok((r, s))
            }
            _ => Err(MemError::BadAccess(e.to_string()).into()),
        }
    }

    /// Checks index bounds along the path; returns false when some
    /// constant index is out of bounds.
    fn check_bounds(
        &mut self,
        st: &mut SymState,
        root: &str,
        steps: &[PStep],
        guard: &[Assertion],
        what: &Expr,
    ) -> Result<bool, SymError> {
        let mut ty = self
            .layout
            .root(root)
            .map(|r| r.ty.clone())
            .ok_or_else(|| MemError::UnknownVariable(root.to_string()))?;
        for s in steps {
            ty = match s {
                PStep::Fixed(f) => self.layout.step_type(&ty, f)?,
                PStep::Idx(i) => {
                    let CType::Array(elem, n) = &ty else {
                        return Err(MemError::BadAccess(what.to_string()).into());
                    };
                    let cond = simplify(&Assertion::and([
                        Assertion::cmp(CmpOp::Le, Assertion::Int(0), i.clone()),
                        Assertion::cmp(CmpOp::Lt, i.clone(), Assertion::Int(*n as i64)),
                    ]));
                    let fails = cond == Assertion::Bool(false);
                    self.require(st, guard, cond, ObligationKind::Bounds(what.to_string()));
                    if fails {
                        return Ok(false);
                    }
                    (**elem).clone()
                }
            };
        }
        if ty != CType::Int {
            return Err(MemError::NotScalar(what.to_string()).into());
        }
        Ok(true)
    }

    fn read(&mut self, st: &mut SymState, e: &Expr, guard: &[Assertion]) -> Result<Assertion, SymError> {
        let (root, steps) = self.expr_path(st, e, guard)?;
        if !self.check_bounds(st, &root, &steps, guard, e)? {
            return Ok(Assertion::Int(0));
        }
        Ok(self.read_path(&st.store, &root, &steps))
    }

    fn read_loc(&self, store: &Store, loc: &Location) -> Assertion {
        store.get(loc).cloned().unwrap_or_else(|| loc.term())
    }

    /// Value of a path whose indices may be symbolic. Cells that still hold
    /// a uniform snapshot (all current, or all `Pre`) are read through one
    /// labelled l-value; the others become an if-then-else chain.
    fn read_path(&self, store: &Store, root: &str, steps: &[PStep]) -> Assertion {
        let combos = self.expand(root, steps);
        if let [(idx, loc)] = &combos[..] {
            if idx.is_empty() || steps.iter().all(|s| !matches!(s, PStep::Idx(i) if !matches!(i, Assertion::Int(_)))) {
                return self.read_loc(store, loc);
            }
        }
        let dyn_terms: Vec<&Assertion> = steps
            .iter()
            .filter_map(|s| match s {
                PStep::Idx(i) => Some(i),
                _ => None,
            })
            .collect();
        if combos.is_empty() {
            return Assertion::Int(0);
        }
        let form_of = |loc: &Location, v: &Assertion| -> Option<u8> {
            if *v == loc.term() {
                Some(0)
            } else if *v == loc.at(Label::Pre) {
                Some(1)
            } else if *v == loc.at(Label::LoopEntry) {
                Some(2)
            } else {
                None
            }
        };
        let mut counts = [0usize; 3];
        let vals: Vec<Assertion> = combos.iter().map(|(_, l)| self.read_loc(store, l)).collect();
        for ((_, l), v) in combos.iter().zip(&vals) {
            if let Some(f) = form_of(l, v) {
                counts[f as usize] += 1;
            }
        }
        let best = (0..3).max_by_key(|f| (counts[*f], 3 - *f)).unwrap();
        let (mut acc, skip_form) = if counts[best] > 0 {
            (self.labelled_path(root, steps, best), Some(best as u8))
        } else {
            (vals.last().cloned().unwrap(), None)
        };
        for ((idx, l), v) in combos.iter().zip(&vals).rev() {
            if skip_form.is_some() && form_of(l, v) == skip_form {
                continue;
            }
            let conds: Vec<Assertion> = idx
                .iter()
                .zip(&dyn_terms)
                .filter(|(_, t)| !matches!(t, Assertion::Int(_)))
                .map(|(k, t)| Assertion::eq((*t).clone(), Assertion::Int(*k as i64)))
                .collect();
            acc = Assertion::Ite(Box::new(Assertion::and(conds)), Box::new(v.clone()), Box::new(acc));
        }
        acc
    }

    /// The path as an l-value read at one snapshot. Constant steps before
    /// the first symbolic index go inside `\at`.
    fn labelled_path(&self, root: &str, steps: &[PStep], form: usize) -> Assertion {
        let first_dyn = steps
            .iter()
            .position(|s| matches!(s, PStep::Idx(i) if !matches!(i, Assertion::Int(_))))
            .unwrap_or(steps.len());
        let mut inner = Lval::var(root.to_string());
        for s in &steps[..first_dyn] {
            inner = push_step(inner, s);
        }
        let mut lv = match form {
            0 => inner,
            1 => Lval::at(inner, Label::Pre),
            _ => Lval::at(inner, Label::LoopEntry),
        };
        for s in &steps[first_dyn..] {
            lv = push_step(lv, s);
        }
        Assertion::Lval(lv)
    }

    /// All concrete locations a path may denote, with the chosen index per
    /// index step.
    fn expand(&self, root: &str, steps: &[PStep]) -> Vec<(Vec<usize>, Location)> {
        let Some(info) = self.layout.root(root) else {
            return Vec::new();
        };
        let mut out = vec![(Vec::new(), Location::root(root.to_string()), info.ty.clone())];
        for s in steps {
            let mut next = Vec::new();
            for (idx, loc, ty) in out {
                match s {
                    PStep::Fixed(f) => {
                        if let Ok(t) = self.layout.step_type(&ty, f) {
                            next.push((idx, loc.push(f.clone()), t));
                        }
                    }
                    PStep::Idx(i) => {
                        let CType::Array(elem, n) = &ty else { continue };
                        let range: Vec<usize> = match i {
                            Assertion::Int(k) if *k >= 0 && (*k as usize) < *n => vec![*k as usize],
                            Assertion::Int(_) => Vec::new(),
                            _ => (0..*n).collect(),
                        };
                        for k in range {
                            let mut idx2 = idx.clone();
                            idx2.push(k);
                            next.push((idx2, loc.push(LocStep::Index(k)), (**elem).clone()));
                        }
                    }
                }
            }
            out = next;
        }
        out.into_iter().map(|(i, l, _)| (i, l)).collect()
    }

    fn write(&mut self, mut st: SymState, target: &Expr, v: Assertion) -> Result<Vec<SymState>, SymError> {
        let (root, steps) = self.expr_path(&mut st, target, &[])?;
        if !self.check_bounds(&mut st, &root, &steps, &[], target)? {
            st.pc.push(Assertion::Bool(false));
            return Ok(Vec::new());
        }
        let combos = self.expand(&root, &steps);
        let dyn_terms: Vec<Assertion> = steps
            .iter()
            .filter_map(|s| match s {
                PStep::Idx(i) => Some(i.clone()),
                _ => None,
            })
            .collect();
        if combos.len() == 1 {
            st.store.insert(combos[0].1.clone(), v);
            return Ok(vec![st]);
        }
        let mut out = Vec::new();
        for (idx, loc) in combos {
            let conds: Vec<Assertion> = idx
                .iter()
                .zip(&dyn_terms)
                .filter(|(_, t)| !matches!(t, Assertion::Int(_)))
                .map(|(k, t)| Assertion::eq(t.clone(), Assertion::Int(*k as i64)))
                .collect();
            if let Some(mut s) = self.assume(st.clone(), simplify(&Assertion::and(conds))) {
                s.store.insert(loc, v.clone());
                out.push(s);
            }
        }
        Ok(out)
    }

    // ---- path conditions --------------------------------------------

    /// Adds `cond` to the path condition; `None` when the path is shown
    /// infeasible.
    pub fn assume(&self, mut st: SymState, cond: Assertion) -> Option<SymState> {
        match cond {
            Assertion::Bool(true) => return Some(st),
            Assertion::Bool(false) => return None,
            _ => {}
        }
        for c in cond.conjuncts() {
            if !self.entailed_syntactically(&st.pc, c) {
                st.pc.push(c.clone());
            }
        }
        if self.feasible(&st.pc) {
            Some(st)
        } else {
            None
        }
    }

    fn entailed_syntactically(&self, pc: &[Assertion], c: &Assertion) -> bool {
        let k = atom_key(c);
        pc.iter().any(|p| p == c || (k.is_some() && atom_key(p) == k))
    }

    /// Conservative check: false only when the bounded search covered the
    /// whole domain without finding a model.
    pub fn feasible(&self, pc: &[Assertion]) -> bool {
        if simplify(&Assertion::and(pc.iter().cloned())) == Assertion::Bool(false) {
            return false;
        }
        let cfg = DomainConfig {
            max_states: self.prune_budget,
            ..self.cfg.clone()
        };
        match find_model(self.layout, &cfg, pc) {
            Ok(r) => r.model.is_some() || !r.exhaustive,
            Err(_) => true,
        }
    }

    // ---- substitution -----------------------------------------------

    /// Evaluates an assertion in a state: unlabelled l-values read the
    /// store, labelled ones read the snapshot stores in `env` when given.
    pub fn subst(&self, a: &Assertion, env: Env) -> Assertion {
        self.subst_in(a, env, &mut Vec::new())
    }

    fn subst_in(&self, a: &Assertion, env: Env, bound: &mut Vec<String>) -> Assertion {
        let rec = |x: &Assertion, bound: &mut Vec<String>| self.subst_in(x, env, bound);
        match a {
            Assertion::Int(_) | Assertion::Bool(_) | Assertion::Sym(_) | Assertion::Placeholder(_) => a.clone(),
            Assertion::Result => env.ret.cloned().unwrap_or(Assertion::Result),
            Assertion::Lval(lv) => self.subst_lval(lv, env, bound),
            Assertion::Neg(x) => Assertion::Neg(Box::new(rec(x, bound))),
            Assertion::Not(x) => Assertion::Not(Box::new(rec(x, bound))),
            Assertion::Arith(op, x, y) => {
                Assertion::Arith(*op, Box::new(rec(x, bound)), Box::new(rec(y, bound)))
            }
            Assertion::Cmp(op, x, y) => {
                if matches!(op, CmpOp::Eq | CmpOp::Ne) {
                    if let Some(e) = self.expand_aggregate_eq(*op, x, y, bound) {
                        return rec(&e, bound);
                    }
                }
                Assertion::Cmp(*op, Box::new(rec(x, bound)), Box::new(rec(y, bound)))
            }
            Assertion::And(v) => Assertion::And(v.iter().map(|x| rec(x, bound)).collect()),
            Assertion::Or(v) => Assertion::Or(v.iter().map(|x| rec(x, bound)).collect()),
            Assertion::Implies(x, y) => {
                Assertion::Implies(Box::new(rec(x, bound)), Box::new(rec(y, bound)))
            }
            Assertion::Ite(c, x, y) => Assertion::Ite(
                Box::new(rec(c, bound)),
                Box::new(rec(x, bound)),
                Box::new(rec(y, bound)),
            ),
            Assertion::Forall(v, b) | Assertion::Exists(v, b) => {
                bound.push(v.clone());
                let nb = rec(b, bound);
                bound.pop();
                if matches!(a, Assertion::Forall(..)) {
                    Assertion::Forall(v.clone(), Box::new(nb))
                } else {
                    Assertion::Exists(v.clone(), Box::new(nb))
                }
            }
            Assertion::Sum { lo, hi, var, body } => {
                let lo = rec(lo, bound);
                let hi = rec(hi, bound);
                bound.push(var.clone());
                let body = rec(body, bound);
                bound.pop();
                Assertion::Sum {
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    var: var.clone(),
                    body: Box::new(body),
                }
            }
            Assertion::Valid(_) | Assertion::Separated(..) => a.clone(),
        }
    }

    fn subst_index(&self, a: &Access, env: Env, bound: &mut Vec<String>) -> PStep {
        match a {
            Access::Dot(f) => PStep::Fixed(LocStep::Dot(f.clone())),
            Access::Arrow(f) => PStep::Fixed(LocStep::Arrow(f.clone())),
            Access::Index(i) => PStep::Idx(simplify(&self.subst_in(i, env, bound))),
        }
    }

    fn subst_lval(&self, lv: &Lval, env: Env, bound: &mut Vec<String>) -> Assertion {
        match &lv.base {
            LvBase::Var(v) if bound.contains(v) => Assertion::Lval(lv.clone()),
            LvBase::Var(v) => {
                if self.layout.root(v).is_none() {
                    return Assertion::Lval(lv.clone());
                }
                if lv.path.is_empty() && self.layout.is_pointer(v) {
                    return Assertion::Lval(lv.clone());
                }
                let steps: Vec<PStep> = lv.path.iter().map(|a| self.subst_index(a, env, bound)).collect();
                self.read_path(env.store, v, &steps)
            }
            LvBase::At(inner, label) => {
                let LvBase::Var(root) = &inner.base else {
                    return Assertion::Lval(lv.clone());
                };
                if self.layout.root(root).is_none() {
                    return Assertion::Lval(lv.clone());
                }
                if inner.path.is_empty() && self.layout.is_pointer(root) {
                    // `\at(p, L)->f` is the current `p->f`.
                    if lv.path.is_empty() {
                        return Assertion::Lval(lv.clone());
                    }
                    let cur = Lval {
                        base: LvBase::Var(root.clone()),
                        path: lv.path.clone(),
                    };
                    return self.subst_lval(&cur, env, bound);
                }
                let snap = match label {
                    Label::Pre => env.pre,
                    Label::LoopEntry => env.loop_entry,
                };
                match snap {
                    Some(s) => {
                        let senv = Env { store: s, ..env };
                        let mut steps: Vec<PStep> =
                            inner.path.iter().map(|a| self.subst_index(a, senv, bound)).collect();
                        steps.extend(lv.path.iter().map(|a| self.subst_index(a, env, bound)));
                        self.read_path(s, root, &steps)
                    }
                    None => {
                        // Keep the snapshot; only the outer indices are current.
                        let mut out = Lval::at((**inner).clone(), *label);
                        for a in &lv.path {
                            out.path.push(match a {
                                Access::Index(i) => {
                                    Access::Index(Box::new(simplify(&self.subst_in(i, env, bound))))
                                }
                                other => other.clone(),
                            });
                        }
                        Assertion::Lval(out)
                    }
                }
            }
        }
    }

    /// `p->a == \at(p->a, Pre)` over aggregates becomes per-cell equalities.
    fn expand_aggregate_eq(
        &self,
        op: CmpOp,
        x: &Assertion,
        y: &Assertion,
        bound: &[String],
    ) -> Option<Assertion> {
        let (Assertion::Lval(lx), Assertion::Lval(ly)) = (x, y) else {
            return None;
        };
        if bound.iter().any(|b| b == lx.root() || b == ly.root()) {
            return None;
        }
        let px = self.lval_prefix(lx)?;
        let py = self.lval_prefix(ly)?;
        let tx = self.layout.type_of(&px).ok()?;
        let ty = self.layout.type_of(&py).ok()?;
        if tx == CType::Int && ty == CType::Int {
            return None;
        }
        if let (CType::PtrToStruct(_), CType::PtrToStruct(_)) = (&tx, &ty) {
            if lx.path.is_empty() && ly.path.is_empty() {
                let same = px.root == py.root;
                return Some(Assertion::Bool(if op == CmpOp::Eq { same } else { !same }));
            }
        }
        let cx = self.layout.cells_under(&px);
        let cy = self.layout.cells_under(&py);
        let (nx, ny) = (px.steps.len(), py.steps.len());
        if cx.len() != cy.len() || cx.iter().zip(&cy).any(|(a, b)| a.steps[nx..] != b.steps[ny..]) {
            return None;
        }
        let eqs: Vec<Assertion> = cx
            .iter()
            .map(|c| {
                let suffix = &c.steps[nx..];
                Assertion::eq(
                    Assertion::Lval(extend_lval(lx, suffix)),
                    Assertion::Lval(extend_lval(ly, suffix)),
                )
            })
            .collect();
        let all = Assertion::and(eqs);
        Some(if op == CmpOp::Eq { all } else { Assertion::not(all) })
    }

    /// Location prefix named by an l-value with constant indices.
    fn lval_prefix(&self, lv: &Lval) -> Option<Location> {
        let (root, mut path) = match &lv.base {
            LvBase::Var(v) => (v.clone(), Vec::new()),
            LvBase::At(inner, _) => (inner.root().to_string(), inner.path.clone()),
        };
        path.extend(lv.path.iter().cloned());
        Location::from_lval(&Lval {
            base: LvBase::Var(root),
            path,
        })
    }

    // ---- loops and calls --------------------------------------------

    /// Locations a statement list may write.
    pub fn modified_locations(&self, stmts: &[Stmt]) -> BTreeSet<Location> {
        let mut out = BTreeSet::new();
        crate::frontend::visit_stmts(stmts, &mut |s| match s {
            Stmt::Assign { target, .. } => {
                if let Some(p) = widen_prefix(self.layout, target) {
                    out.extend(self.layout.cells_under(&p));
                }
            }
            Stmt::Decl { name, .. } => {
                out.extend(self.layout.cells_under(&Location::root(name.clone())));
            }
            Stmt::Call { target, args, .. } => {
                if let Some(t) = target {
                    if let Some(p) = widen_prefix(self.layout, t) {
                        out.extend(self.layout.cells_under(&p));
                    }
                }
                for a in args {
                    if let Expr::Var(v) = a {
                        if self.layout.is_pointer(v) {
                            out.extend(self.layout.cells_under(&Location::root(v.clone())));
                        }
                    }
                }
            }
            _ => {}
        });
        out
    }

    /// Replaces the given cells with fresh symbols.
    pub fn havoc(&mut self, st: &mut SymState, locs: &BTreeSet<Location>) -> BTreeSet<String> {
        let mut syms = BTreeSet::new();
        for l in locs {
            let s = self.fresh_sym(&l.to_string());
            st.store.insert(l.clone(), Assertion::Sym(s.clone()));
            syms.insert(s);
        }
        syms
    }

    /// Loop exit from the invariant: havoc the modified cells and assume
    /// `Inv && !B` (only `Inv` when the body can `break`).
    pub fn exit_loop(
        &mut self,
        states: Vec<SymState>,
        stmt: &Stmt,
        inv: &[Assertion],
    ) -> Result<Vec<SymState>, SymError> {
        let Stmt::While { cond, body, .. } = stmt else {
            return Ok(states);
        };
        let has_break = contains_break(body);
        let modified = self.modified_locations(body);
        let guard = cond_assertion(cond);
        let mut out = Vec::new();
        for st in states {
            let entry = st.store.clone();
            let mut s = st;
            let fresh = self.havoc(&mut s, &modified);
            let env = Env {
                store: &s.store,
                pre: None,
                loop_entry: Some(&entry),
                ret: None,
            };
            let mut parts: Vec<Assertion> = inv.iter().map(|c| self.subst(c, env)).collect();
            if !has_break {
                parts.push(Assertion::not(self.subst(&guard, env)));
            }
            let f = Assertion::and(parts);
            out.extend(self.assume_solve(s, &f, &fresh)?);
        }
        Ok(out)
    }

    /// Assumes `f` in `st`, case-splitting on implication guards and
    /// disjunctions and solving equalities for the symbols in `fresh`.
    pub fn assume_solve(
        &mut self,
        st: SymState,
        f: &Assertion,
        fresh: &BTreeSet<String>,
    ) -> Result<Vec<SymState>, SymError> {
        let mut fresh = fresh.clone();
        let mut work: Vec<(SymState, Vec<Assertion>)> = vec![(st, flat_conjuncts(&simplify(f)))];
        let mut out = Vec::new();
        while let Some((mut s, mut pending)) = work.pop() {
            // Skolemize top-level existentials.
            let mut i = 0;
            while i < pending.len() {
                if let Assertion::Exists(v, body) = &pending[i] {
                    let sym = self.fresh_sym(v);
                    fresh.insert(sym.clone());
                    let inst = instantiate(body, v, &Assertion::Sym(sym));
                    pending.remove(i);
                    pending.extend(flat_conjuncts(&simplify(&inst)));
                    continue;
                }
                i += 1;
            }
            // Solve equalities first.
            if let Some((k, name, val)) = find_solvable(&pending, &fresh) {
                pending.remove(k);
                let sub = |a: &Assertion| simplify(&subst_sym(a, &name, &val));
                pending = pending.iter().map(sub).collect();
                s.pc = s.pc.iter().map(sub).collect();
                for v in s.store.values_mut() {
                    *v = sub(v);
                }
                if let Some(r) = &mut s.ret {
                    *r = sub(r);
                }
                pending = flat_conjuncts(&simplify(&Assertion::and(pending)));
                if pending.contains(&Assertion::Bool(false)) {
                    continue;
                }
                work.push((s, pending));
                continue;
            }
            // Split on a guard that does not mention fresh symbols.
            let split = pending.iter().find_map(|p| match p {
                Assertion::Implies(a, _) if a.syms().is_disjoint(&fresh) => Some((**a).clone()),
                _ => None,
            });
            if let Some(a) = split {
                for val in [false, true] {
                    let c = if val { a.clone() } else { negate(&a) };
                    let c = simplify(&c);
                    let Some(s2) = self.assume(s.clone(), c) else {
                        continue;
                    };
                    let p2 = Assertion::and(pending.iter().map(|p| replace_atom(p, &a, val)));
                    let p2 = flat_conjuncts(&simplify(&p2));
                    if p2.contains(&Assertion::Bool(false)) {
                        continue;
                    }
                    work.push((s2, p2));
                }
                continue;
            }
            if let Some(k) = pending.iter().position(|p| matches!(p, Assertion::Or(_))) {
                let Assertion::Or(ds) = pending.remove(k) else { unreachable!() };
                for d in ds.into_iter().rev() {
                    let mut p2 = pending.clone();
                    p2.extend(flat_conjuncts(&d));
                    work.push((s.clone(), p2));
                }
                continue;
            }
            // Whatever is left constrains the path.
            let mut ok = true;
            for p in pending {
                let p = simplify(&p);
                match p {
                    Assertion::Bool(true) => {}
                    Assertion::Bool(false) => ok = false,
                    p => {
                        if !self.entailed_syntactically(&s.pc, &p) {
                            s.pc.push(p);
                        }
                    }
                }
            }
            s.pc = s.pc.iter().map(simplify).filter(|c| *c != Assertion::Bool(true)).collect();
            if ok && !s.is_dead() && self.feasible(&s.pc) {
                out.push(s);
            }
        }
        out.reverse();
        if out.len() > self.path_budget {
            return Err(SymError::PathBudgetExceeded(self.path_budget));
        }
        Ok(out)
    }

    /// Applies a callee contract at a call: checks `requires`, havocs the
    /// cells reachable from pointer arguments and assumes `ensures`.
    pub fn apply_callee_summary(
        &mut self,
        mut st: SymState,
        stmt: &Stmt,
        contract: &Contract,
    ) -> Result<Vec<SymState>, SymError> {
        let Stmt::Call {
            callee, args, target, ..
        } = stmt
        else {
            return Ok(vec![st]);
        };
        let cf = self
            .prog
            .function(callee)
            .ok_or_else(|| SymError::Unsupported(format!("unknown callee `{callee}`")))?;
        if cf.params.len() != args.len() {
            return Err(SymError::Unsupported(format!("arity mismatch calling `{callee}`")));
        }
        // Parameter bindings: pointer params rename, others bind values.
        let mut renames: BTreeMap<String, Lval> = BTreeMap::new();
        let mut values: BTreeMap<String, Assertion> = BTreeMap::new();
        let mut touched = BTreeSet::new();
        for (k, (p, a)) in cf.params.iter().zip(args).enumerate() {
            match &p.ty {
                CType::PtrToStruct(_) => {
                    let Expr::Var(q) = a else {
                        return Err(SymError::Unsupported(format!("pointer argument `{a}`")));
                    };
                    if !self.layout.is_pointer(q) {
                        return Err(SymError::Unsupported(format!("pointer argument `{a}`")));
                    }
                    renames.insert(p.name.clone(), Lval::var(q.clone()));
                    touched.extend(self.layout.cells_under(&Location::root(q.clone())));
                }
                CType::Int => {
                    let v = self.eval(&mut st, a, &[])?.int();
                    let tag = format!("__arg{k}");
                    values.insert(tag.clone(), simplify(&v));
                    renames.insert(p.name.clone(), Lval::var(tag));
                }
                _ => {
                    let lv = expr_to_lval(a)
                        .ok_or_else(|| SymError::Unsupported(format!("aggregate argument `{a}`")))?;
                    renames.insert(p.name.clone(), lv);
                }
            }
        }
        let translate = |a: &Assertion| rename_roots(a, &renames);
        let pre_store = st.store.clone();
        let bind = |a: &Assertion| -> Assertion {
            let mut a = a.clone();
            for (tag, v) in &values {
                a = a.rewrite(&mut |x| match x {
                    Assertion::Lval(lv) if lv.as_var() == Some(tag.as_str()) => v.clone(),
                    Assertion::Lval(Lval {
                        base: LvBase::At(inner, _),
                        ref path,
                    }) if path.is_empty() && inner.as_var() == Some(tag.as_str()) => v.clone(),
                    other => other,
                });
            }
            a
        };
        // requires, read in the caller's current state
        let env = Env {
            store: &pre_store,
            pre: Some(&pre_store),
            loop_entry: None,
            ret: None,
        };
        for r in &contract.requires {
            let r = simplify(&bind(&self.subst(&translate(r), env)));
            if r != Assertion::Bool(true) {
                self.obligations.push(Obligation {
                    kind: ObligationKind::CalleeRequires(callee.clone()),
                    hyps: st.pc.clone(),
                    cond: r,
                });
            }
        }
        let mut fresh = self.havoc(&mut st, &touched);
        let rsym = self.fresh_sym(&format!("{callee}_result"));
        fresh.insert(rsym.clone());
        let ret = Assertion::Sym(rsym.clone());
        let env = Env {
            store: &st.store,
            pre: Some(&pre_store),
            loop_entry: None,
            ret: Some(&ret),
        };
        let ens: Vec<Assertion> = contract
            .ensures
            .iter()
            .map(|e| bind(&self.subst(&translate(e), env)))
            .collect();
        // The result symbol rides in `ret` so that solving rewrites it too.
        let saved_ret = st.ret.replace(ret.clone());
        let post = self.assume_solve(st, &Assertion::and(ens), &fresh)?;
        let mut out = Vec::new();
        for mut s in post {
            let r = std::mem::replace(&mut s.ret, saved_ret.clone()).unwrap_or(ret.clone());
            if let Some(t) = target {
                out.extend(self.write(s, t, r)?);
            } else {
                s.status = Status::Running;
                out.push(s);
            }
        }
        Ok(out)
    }

    // ---- summaries --------------------------------------------------

    /// `\/_i (pc_i && /\_loc loc == store_i(loc))`, restricted to `locs`,
    /// with the remaining symbols existentially bound.
    pub fn strongest_post(&self, states: &[SymState], locs: &[Location], with_result: bool) -> Result<Assertion, SymError> {
        if states.is_empty() {
            return Err(SymError::EmptyStates);
        }
        let mut disjuncts: Vec<Vec<Assertion>> = Vec::new();
        for s in states {
            let mut parts: Vec<Assertion> = Vec::new();
            for c in &s.pc {
                parts.extend(flat_conjuncts(&simplify(c)));
            }
            let mut eqs: Vec<(Location, Assertion)> = Vec::new();
            for l in locs {
                if let Some(v) = s.store.get(l) {
                    eqs.push((l.clone(), simplify(v)));
                }
            }
            parts.extend(group_equalities(self.layout, &eqs));
            if with_result {
                if let Some(r) = &s.ret {
                    parts.push(Assertion::eq(Assertion::Result, simplify(r)));
                }
            }
            let mut c: Vec<Assertion> = Vec::new();
            for p in parts {
                if !c.contains(&p) && p != Assertion::Bool(true) {
                    c.push(p);
                }
            }
            if !disjuncts.contains(&c) {
                disjuncts.push(c);
            }
        }
        let f = factor(disjuncts);
        Ok(bind_syms(&f))
    }
}

fn push_step(lv: Lval, s: &PStep) -> Lval {
    match s {
        PStep::Fixed(LocStep::Dot(f)) => lv.dot(f.clone()),
        PStep::Fixed(LocStep::Arrow(f)) => lv.arrow(f.clone()),
        PStep::Fixed(LocStep::Index(k)) => lv.index(Assertion::Int(*k as i64)),
        PStep::Idx(i) => lv.index(i.clone()),
    }
}

fn extend_lval(lv: &Lval, suffix: &[LocStep]) -> Lval {
    let mut out = lv.clone();
    for s in suffix {
        out = match s {
            LocStep::Dot(f) => out.dot(f.clone()),
            LocStep::Arrow(f) => out.arrow(f.clone()),
            LocStep::Index(k) => out.index(Assertion::Int(*k as i64)),
        };
    }
    out
}

/// Prefix of an assignment target up to its first non-constant index.
fn widen_prefix(layout: &MemoryLayout, e: &Expr) -> Option<Location> {
    match e {
        Expr::Var(v) => layout.root(v).map(|_| Location::root(v.clone())),
        Expr::Field(b, f) => widen_prefix(layout, b).map(|p| p.push(LocStep::Dot(f.clone()))),
        Expr::Arrow(b, f) => widen_prefix(layout, b).map(|p| p.push(LocStep::Arrow(f.clone()))),
        Expr::Index(b, i) => {
            let p = widen_prefix(layout, b)?;
            match (i.as_ref(), p.steps.last()) {
                (Expr::Int(k), _) if *k >= 0 && is_exact(layout, &p) => Some(p.push(LocStep::Index(*k as usize))),
                _ => Some(p),
            }
        }
        _ => None,
    }
}

fn is_exact(layout: &MemoryLayout, p: &Location) -> bool {
    matches!(layout.type_of(p), Ok(CType::Array(..)))
}

pub fn contains_break(body: &[Stmt]) -> bool {
    // Only breaks that leave this loop count; nested loops own theirs.
    fn go(stmts: &[Stmt]) -> bool {
        stmts.iter().any(|s| match s {
            Stmt::Break => true,
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => go(then_branch) || go(else_branch),
            Stmt::Block(b) => go(b),
            _ => false,
        })
    }
    go(body)
}

fn flat_conjuncts(a: &Assertion) -> Vec<Assertion> {
    match a {
        Assertion::Bool(true) => Vec::new(),
        other => other.conjuncts().into_iter().cloned().collect(),
    }
}

/// Finds `k`, a fresh symbol and its value from an equality in `pending`.
fn find_solvable(pending: &[Assertion], fresh: &BTreeSet<String>) -> Option<(usize, String, Assertion)> {
    for (k, p) in pending.iter().enumerate() {
        let Assertion::Cmp(CmpOp::Eq, x, y) = p else { continue };
        let (Some(px), Some(py)) = (poly_of(x), poly_of(y)) else { continue };
        let Some(d) = px.sub(&py) else { continue };
        for s in p.syms() {
            if !fresh.contains(&s) {
                continue;
            }
            if let Some(v) = d.solve_for(&Assertion::Sym(s.clone())) {
                if !v.mentions_sym(&s) {
                    return Some((k, s, v));
                }
            }
        }
    }
    None
}

pub fn subst_sym(a: &Assertion, name: &str, val: &Assertion) -> Assertion {
    a.rewrite(&mut |x| match x {
        Assertion::Sym(ref s) if s == name => val.clone(),
        other => other,
    })
}

/// Replaces occurrences of atom `a` (up to normal form) by a constant.
fn replace_atom(f: &Assertion, a: &Assertion, val: bool) -> Assertion {
    let key = atom_key(a);
    let na = negate(a);
    let nkey = atom_key(&na);
    f.rewrite(&mut |x| {
        if x == *a || (key.is_some() && atom_key(&x) == key) {
            Assertion::Bool(val)
        } else if x == na || (nkey.is_some() && atom_key(&x) == nkey) {
            Assertion::Bool(!val)
        } else {
            x
        }
    })
}

/// Substitutes a term for a bound variable.
pub fn instantiate(body: &Assertion, v: &str, t: &Assertion) -> Assertion {
    body.rewrite(&mut |x| match x {
        Assertion::Lval(ref lv) if lv.as_var() == Some(v) => t.clone(),
        other => other,
    })
}

fn rename_roots(a: &Assertion, renames: &BTreeMap<String, Lval>) -> Assertion {
    fn rl(lv: &Lval, renames: &BTreeMap<String, Lval>) -> Lval {
        match &lv.base {
            LvBase::Var(v) => match renames.get(v) {
                Some(r) => {
                    let mut out = r.clone();
                    out.path.extend(lv.path.iter().cloned());
                    out
                }
                None => lv.clone(),
            },
            LvBase::At(inner, l) => Lval {
                base: LvBase::At(Box::new(rl(inner, renames)), *l),
                path: lv.path.clone(),
            },
        }
    }
    a.rewrite(&mut |x| match x {
        Assertion::Lval(lv) => Assertion::Lval(rl(&lv, renames)),
        Assertion::Valid(lv) => Assertion::Valid(rl(&lv, renames)),
        Assertion::Separated(p, q) => Assertion::Separated(rl(&p, renames), rl(&q, renames)),
        other => other,
    })
}

fn expr_to_lval(e: &Expr) -> Option<Lval> {
    Some(match e {
        Expr::Var(v) => Lval::var(v.clone()),
        Expr::Field(b, f) => expr_to_lval(b)?.dot(f.clone()),
        Expr::Arrow(b, f) => expr_to_lval(b)?.arrow(f.clone()),
        Expr::Index(b, i) => expr_to_lval(b)?.index(term_assertion(i)),
        _ => return None,
    })
}

/// C expression as an integer term.
pub fn term_assertion(e: &Expr) -> Assertion {
    match e {
        Expr::Int(n) => Assertion::Int(*n),
        Expr::Var(_) | Expr::Index(..) | Expr::Field(..) | Expr::Arrow(..) => {
            Assertion::Lval(expr_to_lval(e).expect("l-value"))
        }
        Expr::Unary(UnOp::Neg, x) => Assertion::Neg(Box::new(term_assertion(x))),
        Expr::Binary(op, x, y) => match op {
            BinOp::Add => Assertion::add(term_assertion(x), term_assertion(y)),
            BinOp::Sub => Assertion::sub(term_assertion(x), term_assertion(y)),
            BinOp::Mul => Assertion::mul(term_assertion(x), term_assertion(y)),
            BinOp::Div => Assertion::arith(ArithOp::Div, term_assertion(x), term_assertion(y)),
            BinOp::Mod => Assertion::arith(ArithOp::Mod, term_assertion(x), term_assertion(y)),
            _ => Assertion::Ite(
                Box::new(cond_assertion(e)),
                Box::new(Assertion::Int(1)),
                Box::new(Assertion::Int(0)),
            ),
        },
        Expr::Unary(UnOp::Not, _) => Assertion::Ite(
            Box::new(cond_assertion(e)),
            Box::new(Assertion::Int(1)),
            Box::new(Assertion::Int(0)),
        ),
    }
}

/// C expression as a condition.
pub fn cond_assertion(e: &Expr) -> Assertion {
    match e {
        Expr::Unary(UnOp::Not, x) => Assertion::not(cond_assertion(x)),
        Expr::Binary(op, x, y) => {
            let cmp = |o| Assertion::cmp(o, term_assertion(x), term_assertion(y));
            match op {
                BinOp::And => Assertion::and([cond_assertion(x), cond_assertion(y)]),
                BinOp::Or => Assertion::or([cond_assertion(x), cond_assertion(y)]),
                BinOp::Lt => cmp(CmpOp::Lt),
                BinOp::Le => cmp(CmpOp::Le),
                BinOp::Gt => cmp(CmpOp::Gt),
                BinOp::Ge => cmp(CmpOp::Ge),
                BinOp::Eq => cmp(CmpOp::Eq),
                BinOp::Ne => cmp(CmpOp::Ne),
                _ => Assertion::cmp(CmpOp::Ne, term_assertion(e), Assertion::Int(0)),
            }
        }
        _ => Assertion::cmp(CmpOp::Ne, term_assertion(e), Assertion::Int(0)),
    }
}

/// Per-cell equalities, with whole aggregates that kept their entry value
/// folded into one equality such as `p->a == \at(p->a, Pre)`.
pub fn group_equalities(layout: &MemoryLayout, eqs: &[(Location, Assertion)]) -> Vec<Assertion> {
    let unchanged: BTreeSet<&Location> = eqs
        .iter()
        .filter(|(l, v)| *v == l.at(Label::Pre))
        .map(|(l, _)| l)
        .collect();
    let present: BTreeSet<&Location> = eqs.iter().map(|(l, _)| l).collect();
    let mut covered: BTreeSet<Location> = BTreeSet::new();
    let mut out = Vec::new();
    for (l, v) in eqs {
        if covered.contains(l) {
            continue;
        }
        if unchanged.contains(l) {
            // Widest aggregate prefix whose cells are all unchanged.
            let mut best: Option<Location> = None;
            for n in 1..l.steps.len() {
                let p = Location {
                    root: l.root.clone(),
                    steps: l.steps[..n].to_vec(),
                };
                let cells = layout.cells_under(&p);
                if cells.len() > 1
                    && cells.iter().all(|c| unchanged.contains(c) && present.contains(c))
                {
                    best = Some(p);
                    break;
                }
            }
            if let Some(p) = best {
                for c in layout.cells_under(&p) {
                    covered.insert(c);
                }
                out.push(Assertion::eq(p.term(), p.at(Label::Pre)));
                continue;
            }
        }
        out.push(Assertion::eq(l.term(), v.clone()));
    }
    out
}

/// Disjunction of conjunction lists, with shared conjuncts pulled out and
/// complementary guards turned into implications.
pub fn factor(mut ds: Vec<Vec<Assertion>>) -> Assertion {
    if ds.is_empty() {
        return Assertion::Bool(false);
    }
    if ds.len() == 1 {
        return Assertion::and(ds.pop().unwrap());
    }
    let common: Vec<Assertion> = ds[0]
        .iter()
        .filter(|c| ds.iter().all(|d| d.contains(c)))
        .cloned()
        .collect();
    for d in &mut ds {
        d.retain(|c| !common.contains(c));
    }
    let rest = if ds.iter().any(|d| d.is_empty()) {
        Assertion::Bool(true)
    } else if let Some(atom) = split_atom(&ds) {
        let na = negate(&atom);
        let key = atom_key(&atom);
        let is_pos = |c: &Assertion| *c == atom || (key.is_some() && atom_key(c) == key);
        let (pos, neg): (Vec<_>, Vec<_>) = ds.into_iter().partition(|d| d.iter().any(is_pos));
        let strip = |v: Vec<Vec<Assertion>>, keep_out: &dyn Fn(&Assertion) -> bool| -> Vec<Vec<Assertion>> {
            v.into_iter()
                .map(|d| d.into_iter().filter(|c| !keep_out(c)).collect())
                .collect()
        };
        let nkey = atom_key(&na);
        let is_neg = |c: &Assertion| *c == na || (nkey.is_some() && atom_key(c) == nkey);
        let pos = strip(pos, &is_pos);
        let neg = strip(neg, &is_neg);
        Assertion::and([
            Assertion::implies(atom.clone(), factor(pos)),
            Assertion::implies(na, factor(neg)),
        ])
    } else {
        Assertion::or(ds.into_iter().map(Assertion::and))
    };
    Assertion::and(common.into_iter().chain([rest]))
}

/// An atom such that every disjunct contains it or its negation, and both
/// occur.
fn split_atom(ds: &[Vec<Assertion>]) -> Option<Assertion> {
    for c in &ds[0] {
        let key = atom_key(c);
        let nc = negate(c);
        let nkey = atom_key(&nc);
        let has = |d: &Vec<Assertion>, x: &Assertion, k: &Option<_>| {
            d.iter().any(|e| e == x || (k.is_some() && atom_key(e) == *k))
        };
        let mut saw_pos = false;
        let mut saw_neg = false;
        let ok = ds.iter().all(|d| {
            let p = has(d, c, &key);
            let n = has(d, &nc, &nkey);
            saw_pos |= p;
            saw_neg |= n;
            p != n
        });
        if ok && saw_pos && saw_neg {
            // Prefer the positive reading of a negated guard.
            return Some(match c {
                Assertion::Not(inner) => (**inner).clone(),
                _ => c.clone(),
            });
        }
    }
    None
}

/// Wraps remaining symbols in existential quantifiers.
pub fn bind_syms(f: &Assertion) -> Assertion {
    let syms = f.syms();
    let mut body = f.rewrite(&mut |x| match x {
        Assertion::Sym(s) => Assertion::Lval(Lval::var(s)),
        other => other,
    });
    for s in syms.into_iter().rev() {
        body = Assertion::Exists(s, Box::new(body));
    }
    body
}

/// Runs from the start of `f` until the first loop or call.
pub fn se_start(
    layout: &MemoryLayout,
    prog: &Program,
    f: &FunctionDef,
    cfg: &DomainConfig,
    pre: &[Assertion],
) -> Result<SuspensionResult, SymError> {
    let mut ex = Executor::new(layout, prog, f, cfg);
    let mut st = ex.entry_state();
    let env_store = st.store.clone();
    for p in pre {
        let p = simplify(&ex.subst(&p.at_label(Label::Pre, &BTreeSet::new()), Env::of(&env_store)));
        match ex.assume(st, p) {
            Some(s) => st = s,
            None => {
                return Ok(SuspensionResult {
                    reason: Suspension::Exit,
                    states: Vec::new(),
                })
            }
        }
    }
    let mut hooks = StopHooks::default();
    let states = ex.exec(vec![st], &f.body, &mut hooks)?;
    Ok(match hooks.hit {
        Some(h) => h,
        None => SuspensionResult {
            reason: Suspension::Exit,
            states,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn run(src: &str) -> (Program, Vec<SymState>) {
        let p = parse_program(src).unwrap();
        let f = p.functions[0].clone();
        let layout = MemoryLayout::for_function(&f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, &f, &cfg, &[]).unwrap();
        (p, r.states)
    }

    #[test]
    fn increment() {
        let (_, s) = run("void f(int x) { x = x + 1; }");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].store[&Location::root("x")].to_string(), "\\at(x, Pre) + 1");
    }

    #[test]
    fn abs_forks_two_paths() {
        let (_, s) = run("void f(int x) { if (x < 0) x = -x; }");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].pc[0].to_string(), "\\at(x, Pre) < 0");
        assert_eq!(s[0].store[&Location::root("x")].to_string(), "-\\at(x, Pre)");
    }

    #[test]
    fn contradiction_pruned() {
        let (_, s) = run("void f(int x) { if (x > 0) { if (x < 0) x = 5; } }");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn checkcal_prefix_suspends_at_loop() {
        let src = "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
            void f(struct CheckCal *pIp) { int chksum = 0; int i = 0; \
            for (; i < pIp->len; i++) chksum += pIp->pkv[i]; pIp->chksum = chksum; }";
        let p = parse_program(src).unwrap();
        let f = &p.functions[0];
        let layout = MemoryLayout::for_function(f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, f, &cfg, &[]).unwrap();
        assert!(matches!(r.reason, Suspension::LoopEntry(_)));
        assert_eq!(r.states.len(), 1);
        assert_eq!(r.states[0].store[&Location::root("i")], Assertion::Int(0));
    }

    #[test]
    fn sp_of_abs_uses_guards() {
        let src = "void f(int x) { if (x < 0) x = -x; }";
        let p = parse_program(src).unwrap();
        let f = &p.functions[0];
        let layout = MemoryLayout::for_function(f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, f, &cfg, &[]).unwrap();
        let ex = Executor::new(&layout, &p, f, &cfg);
        let sp = ex
            .strongest_post(&r.states, &layout.locations, false)
            .unwrap();
        assert_eq!(
            sp.to_string(),
            "((\\at(x, Pre) < 0) ==> x == -\\at(x, Pre)) && ((\\at(x, Pre) >= 0) ==> x == \\at(x, Pre))"
        );
    }
}
