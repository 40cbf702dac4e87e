//! AST for the analyzable C subset.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::assertion::Assertion;
use super::lexer::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoopId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoalId(pub u32);

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CType {
    Int,
    Array(Box<CType>, usize),
    Struct(String),
    PtrToStruct(String),
}

impl CType {
    pub fn is_scalar(&self) -> bool {
        matches!(self, CType::Int)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<(String, CType)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetType {
    Void,
    Int,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: CType,
}

/// User-written (or generated) function contract.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Contract {
    pub requires: Vec<Assertion>,
    pub ensures: Vec<Assertion>,
}

impl Contract {
    pub fn is_empty(&self) -> bool {
        self.requires.is_empty() && self.ensures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub ret: RetType,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub spec: Option<Contract>,
    pub loop_annotations: BTreeMap<LoopId, Vec<Assertion>>,
    pub span: Span,
}

impl FunctionDef {
    /// Every loop of the body in pre-order.
    pub fn loops(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if matches!(s, Stmt::While { .. }) {
                out.push(s);
            }
        });
        out
    }

    pub fn find_loop(&self, id: LoopId) -> Option<&Stmt> {
        self.loops()
            .into_iter()
            .find(|s| matches!(s, Stmt::While { id: l, .. } if *l == id))
    }

    /// Names of every function called anywhere in the body.
    pub fn callees(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if let Stmt::Call { callee, .. } = s {
                if !out.contains(callee) {
                    out.push(callee.clone());
                }
            }
        });
        out
    }

    pub fn goals(&self) -> Vec<(GoalId, &Assertion)> {
        let mut out = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if let Stmt::Assert { id, cond, .. } = s {
                out.push((*id, cond));
            }
        });
        out
    }

    pub fn local_decls(&self) -> Vec<(String, CType)> {
        let mut out = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if let Stmt::Decl { name, ty, .. } = s {
                out.push((name.clone(), ty.clone()));
            }
        });
        out
    }

    /// The same function with every `assert` removed.
    pub fn without_goals(&self) -> FunctionDef {
        let mut f = self.clone();
        f.body = strip_asserts(&f.body);
        f
    }
}

fn strip_asserts(stmts: &[Stmt]) -> Vec<Stmt> {
    stmts
        .iter()
        .filter(|s| !matches!(s, Stmt::Assert { .. }))
        .map(|s| match s {
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => Stmt::If {
                cond: cond.clone(),
                then_branch: strip_asserts(then_branch),
                else_branch: strip_asserts(else_branch),
            },
            Stmt::While {
                id,
                cond,
                body,
                span,
            } => Stmt::While {
                id: *id,
                cond: cond.clone(),
                body: strip_asserts(body),
                span: *span,
            },
            Stmt::Block(b) => Stmt::Block(strip_asserts(b)),
            other => other.clone(),
        })
        .collect()
}

/// Pre-order walk over a statement list, descending into compound statements.
pub fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match s {
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                visit_stmts(then_branch, f);
                visit_stmts(else_branch, f);
            }
            Stmt::While { body, .. } => visit_stmts(body, f),
            Stmt::Block(b) => visit_stmts(b, f),
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Decl {
        name: String,
        ty: CType,
        init: Option<Expr>,
    },
    Assign {
        target: Expr,
        value: Expr,
    },
    Call {
        id: CallId,
        target: Option<Expr>,
        callee: String,
        args: Vec<Expr>,
        span: Span,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    While {
        id: LoopId,
        cond: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    Return(Option<Expr>),
    Block(Vec<Stmt>),
    Assert {
        id: GoalId,
        cond: Assertion,
        span: Span,
    },
    Break,
    Continue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Var(String),
    Index(Box<Expr>, Box<Expr>),
    Field(Box<Expr>, String),
    Arrow(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn is_lvalue(&self) -> bool {
        match self {
            Expr::Var(_) => true,
            Expr::Index(b, _) | Expr::Field(b, _) | Expr::Arrow(b, _) => b.is_lvalue(),
            _ => false,
        }
    }

    pub fn root_var(&self) -> Option<&str> {
        match self {
            Expr::Var(v) => Some(v),
            Expr::Index(b, _) | Expr::Field(b, _) | Expr::Arrow(b, _) => b.root_var(),
            _ => None,
        }
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub struct_defs: Vec<StructDef>,
    pub functions: Vec<FunctionDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDef> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.struct_defs.iter().find(|s| s.name == name)
    }

    /// Verification goals keyed by (function, goal id).
    pub fn goals(&self) -> BTreeMap<(String, GoalId), Assertion> {
        let mut out = BTreeMap::new();
        for f in &self.functions {
            for (id, a) in f.goals() {
                out.insert((f.name.clone(), id), a.clone());
            }
        }
        out
    }

    pub fn without_goals(&self) -> Program {
        Program {
            struct_defs: self.struct_defs.clone(),
            functions: self.functions.iter().map(|f| f.without_goals()).collect(),
        }
    }

    /// Functions ordered so that every callee precedes its callers.
    pub fn bottom_up_order(&self) -> Vec<String> {
        fn visit(p: &Program, name: &str, seen: &mut Vec<String>, out: &mut Vec<String>) {
            if seen.iter().any(|s| s == name) {
                return;
            }
            seen.push(name.to_string());
            if let Some(f) = p.function(name) {
                for c in f.callees() {
                    visit(p, &c, seen, out);
                }
            }
            out.push(name.to_string());
        }
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for f in &self.functions {
            visit(self, &f.name, &mut seen, &mut out);
        }
        out
    }
}
