//! Specification IR shared by every module: clauses, templates, path conditions
//! and symbolic values are all `Assertion`s.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Pre,
    LoopEntry,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Pre => "Pre",
            Label::LoopEntry => "LoopEntry",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LvBase {
    Var(String),
    At(Box<Lval>, Label),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Access {
    Index(Box<Assertion>),
    Dot(String),
    Arrow(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lval {
    pub base: LvBase,
    pub path: Vec<Access>,
}

impl Lval {
    pub fn var(name: impl Into<String>) -> Lval {
        Lval {
            base: LvBase::Var(name.into()),
            path: Vec::new(),
        }
    }

    pub fn at(inner: Lval, label: Label) -> Lval {
        Lval {
            base: LvBase::At(Box::new(inner), label),
            path: Vec::new(),
        }
    }

    pub fn index(mut self, idx: Assertion) -> Lval {
        self.path.push(Access::Index(Box::new(idx)));
        self
    }

    pub fn dot(mut self, f: impl Into<String>) -> Lval {
        self.path.push(Access::Dot(f.into()));
        self
    }

    pub fn arrow(mut self, f: impl Into<String>) -> Lval {
        self.path.push(Access::Arrow(f.into()));
        self
    }

    /// Root variable name, looking through snapshot labels.
    pub fn root(&self) -> &str {
        match &self.base {
            LvBase::Var(v) => v,
            LvBase::At(inner, _) => inner.root(),
        }
    }

    pub fn is_plain_var(&self) -> bool {
        matches!(self.base, LvBase::Var(_)) && self.path.is_empty()
    }

    pub fn as_var(&self) -> Option<&str> {
        match (&self.base, self.path.is_empty()) {
            (LvBase::Var(v), true) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
        }
    }

    /// The operator obtained by swapping operands.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assertion {
    Int(i64),
    Bool(bool),
    Lval(Lval),
    /// Logical symbol introduced by the analysis (havoc values, iteration symbols).
    Sym(String),
    Result,
    Neg(Box<Assertion>),
    Arith(ArithOp, Box<Assertion>, Box<Assertion>),
    Cmp(CmpOp, Box<Assertion>, Box<Assertion>),
    Not(Box<Assertion>),
    And(Vec<Assertion>),
    Or(Vec<Assertion>),
    Implies(Box<Assertion>, Box<Assertion>),
    Ite(Box<Assertion>, Box<Assertion>, Box<Assertion>),
    Forall(String, Box<Assertion>),
    Exists(String, Box<Assertion>),
    /// `\sum(lo, hi, var |-> body)`, both bounds inclusive.
    Sum {
        lo: Box<Assertion>,
        hi: Box<Assertion>,
        var: String,
        body: Box<Assertion>,
    },
    Valid(Lval),
    Separated(Lval, Lval),
    Placeholder(String),
}

pub const PLACEHOLDER_PREFIX: &str = "PLACE_HOLDER_for_";

#[allow(clippy::should_implement_trait)]
impl Assertion {
    pub fn tt() -> Assertion {
        Assertion::Bool(true)
    }

    pub fn var(name: impl Into<String>) -> Assertion {
        Assertion::Lval(Lval::var(name))
    }

    pub fn lv(lv: Lval) -> Assertion {
        Assertion::Lval(lv)
    }

    pub fn cmp(op: CmpOp, a: Assertion, b: Assertion) -> Assertion {
        Assertion::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Assertion, b: Assertion) -> Assertion {
        Assertion::cmp(CmpOp::Eq, a, b)
    }

    pub fn arith(op: ArithOp, a: Assertion, b: Assertion) -> Assertion {
        Assertion::Arith(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Assertion, b: Assertion) -> Assertion {
        Assertion::arith(ArithOp::Add, a, b)
    }

    pub fn sub(a: Assertion, b: Assertion) -> Assertion {
        Assertion::arith(ArithOp::Sub, a, b)
    }

    pub fn mul(a: Assertion, b: Assertion) -> Assertion {
        Assertion::arith(ArithOp::Mul, a, b)
    }

    /// Conjunction with flattening; `true` conjuncts vanish.
    pub fn and(parts: impl IntoIterator<Item = Assertion>) -> Assertion {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Assertion::Bool(true) => {}
                Assertion::Bool(false) => return Assertion::Bool(false),
                Assertion::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Assertion::Bool(true),
            1 => out.pop().unwrap(),
            _ => Assertion::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Assertion>) -> Assertion {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Assertion::Bool(false) => {}
                Assertion::Bool(true) => return Assertion::Bool(true),
                Assertion::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Assertion::Bool(false),
            1 => out.pop().unwrap(),
            _ => Assertion::Or(out),
        }
    }

    pub fn implies(a: Assertion, b: Assertion) -> Assertion {
        match (&a, &b) {
            (Assertion::Bool(true), _) => b,
            (Assertion::Bool(false), _) | (_, Assertion::Bool(true)) => Assertion::Bool(true),
            _ => Assertion::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn not(a: Assertion) -> Assertion {
        match a {
            Assertion::Bool(b) => Assertion::Bool(!b),
            Assertion::Not(inner) => *inner,
            other => Assertion::Not(Box::new(other)),
        }
    }

    pub fn conjuncts(&self) -> Vec<&Assertion> {
        match self {
            Assertion::And(v) => v.iter().flat_map(|a| a.conjuncts()).collect(),
            Assertion::Bool(true) => Vec::new(),
            other => vec![other],
        }
    }

    pub fn disjuncts(&self) -> Vec<&Assertion> {
        match self {
            Assertion::Or(v) => v.iter().flat_map(|a| a.disjuncts()).collect(),
            other => vec![other],
        }
    }

    /// Bottom-up rewrite. `f` sees each node after its children were rewritten.
    pub fn rewrite(&self, f: &mut dyn FnMut(Assertion) -> Assertion) -> Assertion {
        let node = match self {
            Assertion::Int(_)
            | Assertion::Bool(_)
            | Assertion::Sym(_)
            | Assertion::Result
            | Assertion::Placeholder(_) => self.clone(),
            Assertion::Lval(lv) => Assertion::Lval(lv.rewrite_indices(f)),
            Assertion::Neg(a) => Assertion::Neg(Box::new(a.rewrite(f))),
            Assertion::Arith(op, a, b) => {
                Assertion::Arith(*op, Box::new(a.rewrite(f)), Box::new(b.rewrite(f)))
            }
            Assertion::Cmp(op, a, b) => {
                Assertion::Cmp(*op, Box::new(a.rewrite(f)), Box::new(b.rewrite(f)))
            }
            Assertion::Not(a) => Assertion::Not(Box::new(a.rewrite(f))),
            Assertion::And(v) => Assertion::And(v.iter().map(|a| a.rewrite(f)).collect()),
            Assertion::Or(v) => Assertion::Or(v.iter().map(|a| a.rewrite(f)).collect()),
            Assertion::Implies(a, b) => {
                Assertion::Implies(Box::new(a.rewrite(f)), Box::new(b.rewrite(f)))
            }
            Assertion::Ite(c, a, b) => Assertion::Ite(
                Box::new(c.rewrite(f)),
                Box::new(a.rewrite(f)),
                Box::new(b.rewrite(f)),
            ),
            Assertion::Forall(v, b) => Assertion::Forall(v.clone(), Box::new(b.rewrite(f))),
            Assertion::Exists(v, b) => Assertion::Exists(v.clone(), Box::new(b.rewrite(f))),
            Assertion::Sum { lo, hi, var, body } => Assertion::Sum {
                lo: Box::new(lo.rewrite(f)),
                hi: Box::new(hi.rewrite(f)),
                var: var.clone(),
                body: Box::new(body.rewrite(f)),
            },
            Assertion::Valid(lv) => Assertion::Valid(lv.rewrite_indices(f)),
            Assertion::Separated(a, b) => {
                Assertion::Separated(a.rewrite_indices(f), b.rewrite_indices(f))
            }
        };
        f(node)
    }

    /// Pre-order visit of every node, including index expressions inside l-values.
    pub fn visit(&self, f: &mut dyn FnMut(&Assertion)) {
        f(self);
        match self {
            Assertion::Int(_)
            | Assertion::Bool(_)
            | Assertion::Sym(_)
            | Assertion::Result
            | Assertion::Placeholder(_) => {}
            Assertion::Lval(lv) | Assertion::Valid(lv) => lv.visit_indices(f),
            Assertion::Separated(a, b) => {
                a.visit_indices(f);
                b.visit_indices(f);
            }
            Assertion::Neg(a) | Assertion::Not(a) => a.visit(f),
            Assertion::Arith(_, a, b) | Assertion::Cmp(_, a, b) | Assertion::Implies(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Assertion::And(v) | Assertion::Or(v) => v.iter().for_each(|a| a.visit(f)),
            Assertion::Ite(c, a, b) => {
                c.visit(f);
                a.visit(f);
                b.visit(f);
            }
            Assertion::Forall(_, b) | Assertion::Exists(_, b) => b.visit(f),
            Assertion::Sum { lo, hi, body, .. } => {
                lo.visit(f);
                hi.visit(f);
                body.visit(f);
            }
        }
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |a| {
            if let Assertion::Placeholder(n) = a {
                out.push(n.clone());
            }
        });
        out
    }

    pub fn is_closed(&self) -> bool {
        self.placeholders().is_empty()
    }

    pub fn fill_placeholder(&self, name: &str, filling: &Assertion) -> Assertion {
        self.rewrite(&mut |a| match a {
            Assertion::Placeholder(ref n) if n == name => filling.clone(),
            other => other,
        })
    }

    pub fn syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |a| {
            if let Assertion::Sym(s) = a {
                out.insert(s.clone());
            }
        });
        out
    }

    pub fn mentions_sym(&self, name: &str) -> bool {
        let mut hit = false;
        self.visit(&mut |a| {
            if matches!(a, Assertion::Sym(s) if s == name) {
                hit = true;
            }
        });
        hit
    }

    pub fn mentions_result(&self) -> bool {
        let mut hit = false;
        self.visit(&mut |a| {
            if matches!(a, Assertion::Result) {
                hit = true;
            }
        });
        hit
    }

    /// Every l-value occurrence (outermost ones; index sub-terms are visited too).
    pub fn lvals(&self) -> Vec<Lval> {
        let mut out = Vec::new();
        self.visit(&mut |a| {
            if let Assertion::Lval(lv) = a {
                out.push(lv.clone());
            }
        });
        out
    }

    /// Names bound by quantifiers or sums anywhere in the formula.
    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |a| match a {
            Assertion::Forall(v, _) | Assertion::Exists(v, _) | Assertion::Sum { var: v, .. } => {
                out.insert(v.clone());
            }
            _ => {}
        });
        out
    }

    /// Reads every unlabelled l-value at `label`; used to move `requires` clauses
    /// and entry conditions into the entry snapshot.
    pub fn at_label(&self, label: Label, bound: &BTreeSet<String>) -> Assertion {
        self.rewrite(&mut |a| match a {
            Assertion::Lval(lv) => Assertion::Lval(lv.at_label(label, bound)),
            other => other,
        })
    }

    pub fn contains_quantifier(&self) -> bool {
        let mut hit = false;
        self.visit(&mut |a| {
            if matches!(
                a,
                Assertion::Forall(..) | Assertion::Exists(..) | Assertion::Sum { .. }
            ) {
                hit = true;
            }
        });
        hit
    }
}

impl Lval {
    fn rewrite_indices(&self, f: &mut dyn FnMut(Assertion) -> Assertion) -> Lval {
        let base = match &self.base {
            LvBase::Var(v) => LvBase::Var(v.clone()),
            LvBase::At(inner, l) => LvBase::At(Box::new(inner.rewrite_indices(f)), *l),
        };
        let path = self
            .path
            .iter()
            .map(|a| match a {
                Access::Index(i) => Access::Index(Box::new(i.rewrite(f))),
                other => other.clone(),
            })
            .collect();
        Lval { base, path }
    }

    fn visit_indices(&self, f: &mut dyn FnMut(&Assertion)) {
        if let LvBase::At(inner, _) = &self.base {
            inner.visit_indices(f);
        }
        for a in &self.path {
            if let Access::Index(i) = a {
                i.visit(f);
            }
        }
    }

    /// Wraps a label-free l-value in `\at(.., label)`; bound names stay as they are.
    pub fn at_label(&self, label: Label, bound: &BTreeSet<String>) -> Lval {
        match &self.base {
            LvBase::At(..) => self.clone(),
            LvBase::Var(v) if bound.contains(v) => self.clone(),
            LvBase::Var(_) => Lval::at(self.clone(), label),
        }
    }

    pub fn label(&self) -> Option<Label> {
        match &self.base {
            LvBase::Var(_) => None,
            LvBase::At(_, l) => Some(*l),
        }
    }
}

/// Turns an access path into an identifier fragment: `pIp->pkv[3]` becomes `pIp_pkv_3`.
pub fn sanitize_path(text: &str) -> String {
    let mut out = String::new();
    let mut last_us = false;
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
            last_us = false;
        } else if c == '_' || (!last_us && !out.is_empty()) {
            out.push('_');
            last_us = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_flattens_and_drops_true() {
        let a = Assertion::and([
            Assertion::tt(),
            Assertion::and([Assertion::var("x"), Assertion::var("y")]),
            Assertion::var("z"),
        ]);
        assert_eq!(a.conjuncts().len(), 3);
        assert_eq!(Assertion::and([]), Assertion::tt());
    }

    #[test]
    fn fill_closes_template() {
        let t = Assertion::implies(Assertion::var("c"), Assertion::Placeholder("i".into()));
        assert!(!t.is_closed());
        let f = t.fill_placeholder("i", &Assertion::var("i"));
        assert!(f.is_closed());
    }

    #[test]
    fn sanitize() {
        assert_eq!(sanitize_path("pIp->pkv[3]"), "pIp_pkv_3");
        assert_eq!(sanitize_path("s.a"), "s_a");
    }
}
