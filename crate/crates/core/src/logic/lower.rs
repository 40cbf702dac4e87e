//! Lowering of assertions to `CExpr`, resolving l-values against a memory
//! layout and numbering the free slots.

use std::collections::HashMap;

use thiserror::Error;

use super::{DomainConfig, Region, Slot};
use crate::frontend::{Access, ArithOp, Assertion, CType, CmpOp, Label, Lval, LvBase};
use crate::memstore::{LocStep, Location, MemoryLayout};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LowerError {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("open placeholder `{0}`")]
    Placeholder(String),
    #[error("ill-typed term `{0}`")]
    IllTyped(String),
}

/// Evaluable form. `Var` indexes the lowerer's slot table, `Bound` the
/// binder stack (outermost first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CExpr {
    Int(i64),
    Bool(bool),
    Var(usize),
    Bound(usize),
    /// A read that is out of bounds whatever the free values are.
    Fault,
    Select(Box<CExpr>, Vec<CExpr>),
    Neg(Box<CExpr>),
    Arith(ArithOp, Box<CExpr>, Box<CExpr>),
    Cmp(CmpOp, Box<CExpr>, Box<CExpr>),
    Not(Box<CExpr>),
    And(Vec<CExpr>),
    Or(Vec<CExpr>),
    Implies(Box<CExpr>, Box<CExpr>),
    Ite(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Forall(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Exists(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Sum(Box<CExpr>, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    pub fn vars(&self, out: &mut Vec<usize>) {
        match self {
            CExpr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            CExpr::Int(_) | CExpr::Bool(_) | CExpr::Bound(_) | CExpr::Fault => {}
            CExpr::Neg(a) | CExpr::Not(a) => a.vars(out),
            CExpr::Select(i, opts) => {
                i.vars(out);
                opts.iter().for_each(|o| o.vars(out));
            }
            CExpr::Arith(_, a, b) | CExpr::Cmp(_, a, b) | CExpr::Implies(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            CExpr::And(v) | CExpr::Or(v) => v.iter().for_each(|a| a.vars(out)),
            CExpr::Ite(a, b, c)
            | CExpr::Forall(a, b, c)
            | CExpr::Exists(a, b, c)
            | CExpr::Sum(a, b, c) => {
                a.vars(out);
                b.vars(out);
                c.vars(out);
            }
        }
    }
}

enum Lowered {
    Scalar(CExpr),
    Ptr(String),
    /// Cells of an aggregate, keyed by the suffix below the aggregate.
    Agg(Vec<(Vec<LocStep>, CExpr)>),
}

pub struct Lowerer<'a> {
    layout: &'a MemoryLayout,
    cfg: &'a DomainConfig,
    pub slots: Vec<Slot>,
    index: HashMap<Slot, usize>,
    binders: Vec<String>,
}

impl<'a> Lowerer<'a> {
    pub fn new(layout: &'a MemoryLayout, cfg: &'a DomainConfig) -> Lowerer<'a> {
        Lowerer {
            layout,
            cfg,
            slots: Vec::new(),
            index: HashMap::new(),
            binders: Vec::new(),
        }
    }

    pub fn slot(&mut self, s: Slot) -> usize {
        if let Some(i) = self.index.get(&s) {
            return *i;
        }
        let i = self.slots.len();
        self.slots.push(s.clone());
        self.index.insert(s, i);
        i
    }

    pub fn lower(&mut self, a: &Assertion) -> Result<CExpr, LowerError> {
        match self.lower_any(a)? {
            Lowered::Scalar(e) => Ok(e),
            _ => Err(LowerError::IllTyped(a.to_string())),
        }
    }

    fn lower_any(&mut self, a: &Assertion) -> Result<Lowered, LowerError> {
        use Lowered::Scalar;
        Ok(match a {
            Assertion::Int(n) => Scalar(CExpr::Int(*n)),
            Assertion::Bool(b) => Scalar(CExpr::Bool(*b)),
            Assertion::Lval(lv) => self.lower_lval(lv)?,
            Assertion::Sym(s) => Scalar(CExpr::Var(self.slot(Slot::Sym(s.clone())))),
            Assertion::Result => Scalar(CExpr::Var(self.slot(Slot::Result))),
            Assertion::Placeholder(n) => return Err(LowerError::Placeholder(n.clone())),
            Assertion::Neg(x) => Scalar(CExpr::Neg(Box::new(self.lower(x)?))),
            Assertion::Arith(op, x, y) => {
                Scalar(CExpr::Arith(*op, Box::new(self.lower(x)?), Box::new(self.lower(y)?)))
            }
            Assertion::Cmp(op, x, y) => Scalar(self.lower_cmp(*op, x, y)?),
            Assertion::Not(x) => Scalar(CExpr::Not(Box::new(self.lower(x)?))),
            Assertion::And(v) => Scalar(CExpr::And(
                v.iter().map(|x| self.lower(x)).collect::<Result<_, _>>()?,
            )),
            Assertion::Or(v) => Scalar(CExpr::Or(
                v.iter().map(|x| self.lower(x)).collect::<Result<_, _>>()?,
            )),
            Assertion::Implies(x, y) => {
                Scalar(CExpr::Implies(Box::new(self.lower(x)?), Box::new(self.lower(y)?)))
            }
            Assertion::Ite(c, x, y) => Scalar(CExpr::Ite(
                Box::new(self.lower(c)?),
                Box::new(self.lower(x)?),
                Box::new(self.lower(y)?),
            )),
            Assertion::Forall(v, body) | Assertion::Exists(v, body) => {
                let is_forall = matches!(a, Assertion::Forall(..));
                let (lo, hi) = quant_bounds(v, body, is_forall);
                let lo = match lo {
                    Some(e) => self.lower(&e)?,
                    None => CExpr::Int(self.cfg.int_range.0),
                };
                let hi = match hi {
                    Some(e) => self.lower(&e)?,
                    None => CExpr::Int(self.cfg.int_range.1),
                };
                self.binders.push(v.clone());
                let b = self.lower(body);
                self.binders.pop();
                let b = Box::new(b?);
                if is_forall {
                    Scalar(CExpr::Forall(Box::new(lo), Box::new(hi), b))
                } else {
                    Scalar(CExpr::Exists(Box::new(lo), Box::new(hi), b))
                }
            }
            Assertion::Sum { lo, hi, var, body } => {
                let lo = self.lower(lo)?;
                let hi = self.lower(hi)?;
                self.binders.push(var.clone());
                let b = self.lower(body);
                self.binders.pop();
                Scalar(CExpr::Sum(Box::new(lo), Box::new(hi), Box::new(b?)))
            }
            Assertion::Valid(lv) => {
                self.check_root(lv)?;
                Scalar(CExpr::Bool(true))
            }
            Assertion::Separated(x, y) => {
                self.check_root(x)?;
                self.check_root(y)?;
                Scalar(CExpr::Bool(x.root() != y.root()))
            }
        })
    }

    fn check_root(&self, lv: &Lval) -> Result<(), LowerError> {
        if self.layout.root(lv.root()).is_none() {
            return Err(LowerError::UnknownIdentifier(lv.root().to_string()));
        }
        Ok(())
    }

    fn lower_cmp(&mut self, op: CmpOp, x: &Assertion, y: &Assertion) -> Result<CExpr, LowerError> {
        let lx = self.lower_any(x)?;
        let ly = self.lower_any(y)?;
        let eq = match op {
            CmpOp::Eq => true,
            CmpOp::Ne => false,
            _ => {
                return match (lx, ly) {
                    (Lowered::Scalar(a), Lowered::Scalar(b)) => {
                        Ok(CExpr::Cmp(op, Box::new(a), Box::new(b)))
                    }
                    _ => Err(LowerError::IllTyped(format!("{x} {} {y}", op.symbol()))),
                }
            }
        };
        let r = match (lx, ly) {
            (Lowered::Scalar(a), Lowered::Scalar(b)) => {
                return Ok(CExpr::Cmp(op, Box::new(a), Box::new(b)))
            }
            (Lowered::Ptr(a), Lowered::Ptr(b)) => CExpr::Bool(a == b),
            (Lowered::Agg(a), Lowered::Agg(b)) => {
                if a.len() != b.len() || a.iter().zip(&b).any(|(p, q)| p.0 != q.0) {
                    return Err(LowerError::IllTyped(format!("{x} == {y}")));
                }
                CExpr::And(
                    a.into_iter()
                        .zip(b)
                        .map(|((_, p), (_, q))| CExpr::Cmp(CmpOp::Eq, Box::new(p), Box::new(q)))
                        .collect(),
                )
            }
            _ => return Err(LowerError::IllTyped(format!("{x} == {y}"))),
        };
        Ok(if eq { r } else { CExpr::Not(Box::new(r)) })
    }

    fn lower_lval(&mut self, lv: &Lval) -> Result<Lowered, LowerError> {
        // Flatten `\at(inner, L)` plus the outer path into one walk.
        let (region, root, inner_path, outer_path) = match &lv.base {
            LvBase::Var(v) => (Region::Cur, v.clone(), Vec::new(), lv.path.clone()),
            LvBase::At(inner, label) => {
                let LvBase::Var(v) = &inner.base else {
                    return Err(LowerError::IllTyped(lv.to_string()));
                };
                let region = match label {
                    Label::Pre => Region::Pre,
                    Label::LoopEntry => Region::LoopEntry,
                };
                // A pointer value never changes, so `\at(p, L)->f` reads the
                // current `p->f`.
                let region = if inner.path.is_empty() && self.layout.is_pointer(v) {
                    Region::Cur
                } else {
                    region
                };
                (region, v.clone(), inner.path.clone(), lv.path.clone())
            }
        };
        if let Some(pos) = self.binders.iter().rposition(|b| *b == root) {
            if !inner_path.is_empty() || !outer_path.is_empty() {
                return Err(LowerError::IllTyped(lv.to_string()));
            }
            return Ok(Lowered::Scalar(CExpr::Bound(pos)));
        }
        let info = self
            .layout
            .root(&root)
            .ok_or_else(|| LowerError::UnknownIdentifier(root.clone()))?;
        let ty = info.ty.clone();
        let label = match region {
            Region::Pre => Some(Label::Pre),
            Region::LoopEntry => Some(Label::LoopEntry),
            Region::Cur => None,
        };
        // Index expressions inside `\at(.., L)` are read at L as well.
        let mut steps: Vec<PathStep> = Vec::new();
        for a in &inner_path {
            steps.push(self.path_step(a, label)?);
        }
        for a in &outer_path {
            steps.push(self.path_step(a, None)?);
        }
        if steps.is_empty() && matches!(ty, CType::PtrToStruct(_)) {
            return Ok(Lowered::Ptr(root));
        }
        self.walk(region, Location::root(root), &ty, &steps, lv)
    }

    fn path_step(&mut self, a: &Access, label: Option<Label>) -> Result<PathStep, LowerError> {
        Ok(match a {
            Access::Dot(f) => PathStep::Field(f.clone(), false),
            Access::Arrow(f) => PathStep::Field(f.clone(), true),
            Access::Index(i) => {
                let i = match label {
                    Some(l) => i.at_label(l, &self.binders.iter().cloned().collect()),
                    None => (**i).clone(),
                };
                match super::poly::poly_of(&i).and_then(|p| p.as_const()) {
                    Some(k) => PathStep::Const(k),
                    None => PathStep::Dyn(self.lower(&i)?),
                }
            }
        })
    }

    fn walk(
        &mut self,
        region: Region,
        at: Location,
        ty: &CType,
        rest: &[PathStep],
        lv: &Lval,
    ) -> Result<Lowered, LowerError> {
        let Some((first, rest)) = rest.split_first() else {
            return Ok(match ty {
                CType::Int => Lowered::Scalar(self.cell(region, &at)),
                CType::PtrToStruct(_) => Lowered::Ptr(at.root.clone()),
                _ => {
                    let cells = self.layout.cells_under(&at);
                    let n = at.steps.len();
                    Lowered::Agg(
                        cells
                            .iter()
                            .map(|c| (c.steps[n..].to_vec(), self.cell(region, c)))
                            .collect(),
                    )
                }
            });
        };
        let bad = || LowerError::IllTyped(lv.to_string());
        match (first, ty) {
            (PathStep::Field(f, arrow), _) => {
                let step = if *arrow {
                    LocStep::Arrow(f.clone())
                } else {
                    LocStep::Dot(f.clone())
                };
                let fty = self.layout.step_type(ty, &step).map_err(|_| bad())?;
                self.walk(region, at.push(step), &fty, rest, lv)
            }
            (PathStep::Const(k), CType::Array(elem, n)) => {
                if *k < 0 || *k as usize >= *n {
                    return Ok(Lowered::Scalar(CExpr::Fault));
                }
                self.walk(region, at.push(LocStep::Index(*k as usize)), elem, rest, lv)
            }
            (PathStep::Dyn(idx), CType::Array(elem, n)) => {
                let mut opts = Vec::new();
                for k in 0..*n {
                    match self.walk(region, at.push(LocStep::Index(k)), elem, rest, lv)? {
                        Lowered::Scalar(e) => opts.push(e),
                        _ => return Err(bad()),
                    }
                }
                Ok(Lowered::Scalar(CExpr::Select(Box::new(idx.clone()), opts)))
            }
            _ => Err(bad()),
        }
    }

    fn cell(&mut self, region: Region, loc: &Location) -> CExpr {
        let tied = self.cfg.tie(loc);
        CExpr::Var(self.slot(Slot::Cell(region, tied)))
    }
}

enum PathStep {
    Field(String, bool),
    Const(i64),
    Dyn(CExpr),
}

/// Iteration bounds for a quantifier, read off its guard.
fn quant_bounds(v: &str, body: &Assertion, forall: bool) -> (Option<Assertion>, Option<Assertion>) {
    let guard: Vec<&Assertion> = match (forall, body) {
        (true, Assertion::Implies(ante, _)) => ante.conjuncts(),
        (false, b) => b.conjuncts(),
        _ => Vec::new(),
    };
    let mut lo = None;
    let mut hi = None;
    let is_v = |a: &Assertion| matches!(a, Assertion::Lval(l) if l.as_var() == Some(v));
    let free_of_v = |a: &Assertion| !a.lvals().iter().any(|l| l.root() == v);
    for g in guard {
        let Assertion::Cmp(op, a, b) = g else { continue };
        let (op, other) = if is_v(a) && free_of_v(b) {
            (*op, (**b).clone())
        } else if is_v(b) && free_of_v(a) {
            (op.flip(), (**a).clone())
        } else {
            continue;
        };
        let one = Assertion::Int(1);
        match op {
            CmpOp::Ge if lo.is_none() => lo = Some(other),
            CmpOp::Gt if lo.is_none() => lo = Some(Assertion::add(other, one)),
            CmpOp::Le if hi.is_none() => hi = Some(other),
            CmpOp::Lt if hi.is_none() => hi = Some(Assertion::sub(other, one)),
            CmpOp::Eq if lo.is_none() && hi.is_none() => {
                lo = Some(other.clone());
                hi = Some(other);
            }
            _ => {}
        }
    }
    (lo, hi)
}
