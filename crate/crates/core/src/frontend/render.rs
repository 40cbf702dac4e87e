//! Text rendering for assertions, expressions and annotated programs.
//!
//! Output is deterministic; parsing rendered text gives back the same AST.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use super::assertion::{Access, ArithOp, Assertion, CmpOp, Lval, LvBase, PLACEHOLDER_PREFIX};
use super::ast::*;
use super::FrontendError;

const P_BINDER: u8 = 0;
const P_IMPLIES: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_UNARY: u8 = 7;
const P_ATOM: u8 = 8;

fn prec(a: &Assertion) -> u8 {
    match a {
        Assertion::Ite(..) | Assertion::Forall(..) | Assertion::Exists(..) => P_BINDER,
        Assertion::Implies(..) => P_IMPLIES,
        Assertion::Or(v) if v.len() > 1 => P_OR,
        Assertion::And(v) if v.len() > 1 => P_AND,
        Assertion::Or(v) | Assertion::And(v) => v.first().map(prec).unwrap_or(P_ATOM),
        Assertion::Cmp(..) => P_CMP,
        Assertion::Arith(ArithOp::Add | ArithOp::Sub, ..) => P_ADD,
        Assertion::Arith(..) => P_MUL,
        Assertion::Neg(_) | Assertion::Not(_) => P_UNARY,
        Assertion::Int(n) if *n < 0 => P_UNARY,
        _ => P_ATOM,
    }
}

fn is_negative_operand(a: &Assertion) -> bool {
    matches!(a, Assertion::Neg(_)) || matches!(a, Assertion::Int(n) if *n < 0)
}

fn write_prec(out: &mut String, a: &Assertion, ctx: u8) {
    if prec(a) < ctx {
        out.push('(');
        write_assertion(out, a);
        out.push(')');
    } else {
        write_assertion(out, a);
    }
}

fn write_arith_operand(out: &mut String, a: &Assertion, ctx: u8) {
    if is_negative_operand(a) {
        out.push('(');
        write_assertion(out, a);
        out.push(')');
    } else {
        write_prec(out, a, ctx);
    }
}

fn chain_dir(op: CmpOp) -> Option<bool> {
    match op {
        CmpOp::Lt | CmpOp::Le => Some(true),
        CmpOp::Gt | CmpOp::Ge => Some(false),
        _ => None,
    }
}

fn write_conjunction(out: &mut String, parts: &[Assertion]) {
    let mut k = 0;
    let mut first = true;
    while k < parts.len() {
        if !first {
            out.push_str(" && ");
        }
        first = false;
        // Gather a run `a op b`, `b op c`, ... into `a op b op c`.
        let mut end = k + 1;
        if let Assertion::Cmp(op0, _, _) = &parts[k] {
            if let Some(dir) = chain_dir(*op0) {
                while end < parts.len() {
                    let (Assertion::Cmp(_, _, prev_rhs), Assertion::Cmp(op, lhs, _)) =
                        (&parts[end - 1], &parts[end])
                    else {
                        break;
                    };
                    if chain_dir(*op) != Some(dir) || prev_rhs != lhs {
                        break;
                    }
                    end += 1;
                }
            }
        }
        if end - k > 1 {
            for (j, p) in parts[k..end].iter().enumerate() {
                let Assertion::Cmp(op, l, r) = p else { unreachable!() };
                if j == 0 {
                    write_prec(out, l, P_ADD);
                }
                write!(out, " {} ", op.symbol()).unwrap();
                write_prec(out, r, P_ADD);
            }
        } else {
            write_prec(out, &parts[k], P_CMP);
        }
        k = end;
    }
}

pub fn write_assertion(out: &mut String, a: &Assertion) {
    match a {
        Assertion::Int(n) => write!(out, "{n}").unwrap(),
        Assertion::Bool(true) => out.push_str("\\true"),
        Assertion::Bool(false) => out.push_str("\\false"),
        Assertion::Lval(lv) => write_lval(out, lv),
        Assertion::Sym(s) => out.push_str(s),
        Assertion::Result => out.push_str("\\result"),
        Assertion::Neg(x) => {
            out.push('-');
            if matches!(**x, Assertion::Int(_)) || is_negative_operand(x) {
                out.push('(');
                write_assertion(out, x);
                out.push(')');
            } else {
                write_prec(out, x, P_UNARY);
            }
        }
        Assertion::Not(x) => {
            out.push('!');
            write_prec(out, x, P_UNARY);
        }
        Assertion::Arith(op, l, r) => {
            let (lp, rp) = match op {
                ArithOp::Add | ArithOp::Sub => (P_ADD, P_MUL),
                _ => (P_MUL, P_UNARY),
            };
            write_arith_operand(out, l, lp);
            write!(out, " {} ", op.symbol()).unwrap();
            write_arith_operand(out, r, rp);
        }
        Assertion::Cmp(op, l, r) => {
            write_prec(out, l, P_ADD);
            write!(out, " {} ", op.symbol()).unwrap();
            write_prec(out, r, P_ADD);
        }
        Assertion::And(v) => {
            if v.is_empty() {
                out.push_str("\\true");
            } else {
                write_conjunction(out, v);
            }
        }
        Assertion::Or(v) => {
            if v.is_empty() {
                out.push_str("\\false");
            }
            for (k, p) in v.iter().enumerate() {
                if k > 0 {
                    out.push_str(" || ");
                }
                write_prec(out, p, P_AND);
            }
        }
        Assertion::Implies(l, r) => {
            // Guards are always parenthesized, as in `(0 < n) ==> ...`.
            write_prec(out, l, P_UNARY);
            out.push_str(" ==> ");
            write_prec(out, r, P_IMPLIES);
        }
        Assertion::Ite(c, a, b) => {
            write_prec(out, c, P_IMPLIES);
            out.push_str(" ? ");
            write_prec(out, a, P_BINDER);
            out.push_str(" : ");
            write_prec(out, b, P_BINDER);
        }
        Assertion::Forall(v, b) | Assertion::Exists(v, b) => {
            let q = if matches!(a, Assertion::Forall(..)) {
                "\\forall"
            } else {
                "\\exists"
            };
            write!(out, "{q} integer {v}; ").unwrap();
            write_prec(out, b, P_BINDER);
        }
        Assertion::Sum { lo, hi, var, body } => {
            out.push_str("\\sum(");
            write_assertion(out, lo);
            out.push_str(", ");
            write_assertion(out, hi);
            write!(out, ", {var} |-> ").unwrap();
            write_assertion(out, body);
            out.push(')');
        }
        Assertion::Valid(lv) => {
            out.push_str("\\valid(");
            write_lval(out, lv);
            out.push(')');
        }
        Assertion::Separated(x, y) => {
            out.push_str("\\separated(");
            write_lval(out, x);
            out.push_str(", ");
            write_lval(out, y);
            out.push(')');
        }
        Assertion::Placeholder(n) => write!(out, "{PLACEHOLDER_PREFIX}{n}").unwrap(),
    }
}

pub fn write_lval(out: &mut String, lv: &Lval) {
    match &lv.base {
        LvBase::Var(v) => out.push_str(v),
        LvBase::At(inner, l) => {
            out.push_str("\\at(");
            write_lval(out, inner);
            write!(out, ", {})", l.name()).unwrap();
        }
    }
    for a in &lv.path {
        match a {
            Access::Index(i) => {
                out.push('[');
                write_assertion(out, i);
                out.push(']');
            }
            Access::Dot(f) => write!(out, ".{f}").unwrap(),
            Access::Arrow(f) => write!(out, "->{f}").unwrap(),
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_assertion(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for Lval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_lval(&mut s, self);
        f.write_str(&s)
    }
}

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => 7,
        Expr::Int(n) if *n < 0 => 7,
        _ => 8,
    }
}

fn write_expr_prec(out: &mut String, e: &Expr, ctx: u8) {
    let neg = matches!(e, Expr::Unary(UnOp::Neg, _)) || matches!(e, Expr::Int(n) if *n < 0);
    if expr_prec(e) < ctx || (neg && ctx > 1 && ctx < 7) {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Int(n) => write!(out, "{n}").unwrap(),
        Expr::Var(v) => out.push_str(v),
        Expr::Index(b, i) => {
            write_expr_prec(out, b, 8);
            out.push('[');
            write_expr(out, i);
            out.push(']');
        }
        Expr::Field(b, f) => {
            write_expr_prec(out, b, 8);
            write!(out, ".{f}").unwrap();
        }
        Expr::Arrow(b, f) => {
            write_expr_prec(out, b, 8);
            write!(out, "->{f}").unwrap();
        }
        Expr::Unary(op, x) => {
            out.push(if *op == UnOp::Neg { '-' } else { '!' });
            if *op == UnOp::Neg && matches!(**x, Expr::Int(_) | Expr::Unary(UnOp::Neg, _)) {
                out.push('(');
                write_expr(out, x);
                out.push(')');
            } else {
                write_expr_prec(out, x, 7);
            }
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            write_expr_prec(out, l, p);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr_prec(out, r, p + 1);
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self);
        f.write_str(&s)
    }
}

/// Annotations to print for one function; overrides what the function carries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FnAnnotations {
    pub contract: Contract,
    pub loop_invariants: BTreeMap<LoopId, Vec<Assertion>>,
}

impl FnAnnotations {
    pub fn from_function(f: &FunctionDef) -> FnAnnotations {
        FnAnnotations {
            contract: f.spec.clone().unwrap_or_default(),
            loop_invariants: f.loop_annotations.clone(),
        }
    }
}

fn type_prefix(ty: &CType) -> (String, String) {
    match ty {
        CType::Int => ("int".into(), String::new()),
        CType::Struct(s) => (format!("struct {s}"), String::new()),
        CType::PtrToStruct(s) => (format!("struct {s} *"), String::new()),
        CType::Array(elem, n) => {
            let (b, suffix) = type_prefix(elem);
            (b, format!("[{n}]{suffix}"))
        }
    }
}

fn decl_text(name: &str, ty: &CType) -> String {
    let (b, suffix) = type_prefix(ty);
    if b.ends_with('*') {
        format!("{b}{name}{suffix}")
    } else {
        format!("{b} {name}{suffix}")
    }
}

fn check_closed(a: &Assertion) -> Result<(), FrontendError> {
    match a.placeholders().into_iter().next() {
        Some(n) => Err(FrontendError::OpenPlaceholder(n)),
        None => Ok(()),
    }
}

fn write_clause_block(
    out: &mut String,
    indent: usize,
    clauses: &[(&str, &Assertion)],
) -> Result<(), FrontendError> {
    if clauses.is_empty() {
        return Ok(());
    }
    let pad = " ".repeat(indent);
    writeln!(out, "{pad}/*@").unwrap();
    for (kw, a) in clauses {
        check_closed(a)?;
        writeln!(out, "{pad}  {kw} {a};").unwrap();
    }
    writeln!(out, "{pad}*/").unwrap();
    Ok(())
}

struct StmtWriter<'a> {
    out: String,
    invariants: &'a BTreeMap<LoopId, Vec<Assertion>>,
    allow_open: bool,
}

impl StmtWriter<'_> {
    fn line(&mut self, indent: usize, text: &str) {
        writeln!(self.out, "{}{}", " ".repeat(indent), text).unwrap();
    }

    fn stmts(&mut self, stmts: &[Stmt], indent: usize) -> Result<(), FrontendError> {
        for s in stmts {
            self.stmt(s, indent)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, indent: usize) -> Result<(), FrontendError> {
        match s {
            Stmt::Decl { name, ty, init } => {
                let mut t = decl_text(name, ty);
                if let Some(e) = init {
                    write!(t, " = {e}").unwrap();
                }
                t.push(';');
                self.line(indent, &t);
            }
            Stmt::Assign { target, value } => self.line(indent, &format!("{target} = {value};")),
            Stmt::Call {
                target,
                callee,
                args,
                ..
            } => {
                let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                let call = format!("{callee}({});", args.join(", "));
                match target {
                    Some(t) => self.line(indent, &format!("{t} = {call}")),
                    None => self.line(indent, &call),
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.line(indent, &format!("if ({cond}) {{"));
                self.stmts(then_branch, indent + 4)?;
                if else_branch.is_empty() {
                    self.line(indent, "}");
                } else {
                    self.line(indent, "} else {");
                    self.stmts(else_branch, indent + 4)?;
                    self.line(indent, "}");
                }
            }
            Stmt::While { id, cond, body, .. } => {
                if let Some(inv) = self.invariants.get(id) {
                    let clauses: Vec<(&str, &Assertion)> =
                        inv.iter().map(|a| ("loop invariant", a)).collect();
                    if self.allow_open {
                        let pad = " ".repeat(indent);
                        if !clauses.is_empty() {
                            writeln!(self.out, "{pad}/*@").unwrap();
                            for (kw, a) in &clauses {
                                writeln!(self.out, "{pad}  {kw} {a};").unwrap();
                            }
                            writeln!(self.out, "{pad}*/").unwrap();
                        }
                    } else {
                        write_clause_block(&mut self.out, indent, &clauses)?;
                    }
                }
                self.line(indent, &format!("while ({cond}) {{"));
                self.stmts(body, indent + 4)?;
                self.line(indent, "}");
            }
            Stmt::Return(None) => self.line(indent, "return;"),
            Stmt::Return(Some(e)) => self.line(indent, &format!("return {e};")),
            Stmt::Block(b) => {
                self.line(indent, "{");
                self.stmts(b, indent + 4)?;
                self.line(indent, "}");
            }
            Stmt::Assert { cond, .. } => {
                if !self.allow_open {
                    check_closed(cond)?;
                }
                self.line(indent, &format!("/*@ assert {cond}; */"));
            }
            Stmt::Break => self.line(indent, "break;"),
            Stmt::Continue => self.line(indent, "continue;"),
        }
        Ok(())
    }
}

fn header(f: &FunctionDef) -> String {
    let ret = match f.ret {
        RetType::Void => "void",
        RetType::Int => "int",
    };
    let params: Vec<String> = f.params.iter().map(|p| decl_text(&p.name, &p.ty)).collect();
    let params = if params.is_empty() {
        "void".to_string()
    } else {
        params.join(", ")
    };
    format!("{ret} {}({params})", f.name)
}

fn render_function_inner(
    f: &FunctionDef,
    ann: &FnAnnotations,
    allow_open: bool,
) -> Result<String, FrontendError> {
    let mut out = String::new();
    let mut clauses: Vec<(&str, &Assertion)> = Vec::new();
    clauses.extend(ann.contract.requires.iter().map(|a| ("requires", a)));
    clauses.extend(ann.contract.ensures.iter().map(|a| ("ensures", a)));
    write_clause_block(&mut out, 0, &clauses)?;
    writeln!(out, "{} {{", header(f)).unwrap();
    let mut w = StmtWriter {
        out: String::new(),
        invariants: &ann.loop_invariants,
        allow_open,
    };
    w.stmts(&f.body, 4)?;
    out.push_str(&w.out);
    out.push_str("}\n");
    Ok(out)
}

/// One function with the given annotations. Fails on open placeholders.
pub fn render_function(f: &FunctionDef, ann: &FnAnnotations) -> Result<String, FrontendError> {
    render_function_inner(f, ann, false)
}

/// Function source for prompts: loop annotations may still hold placeholders.
pub fn render_function_for_prompt(f: &FunctionDef, ann: &FnAnnotations) -> String {
    let mut ann = ann.clone();
    ann.contract.requires.retain(|a| a.is_closed());
    ann.contract.ensures.retain(|a| a.is_closed());
    render_function_inner(f, &ann, true).unwrap_or_default()
}

/// Source text of a single loop statement (without annotations).
pub fn render_loop(stmt: &Stmt) -> String {
    let empty = BTreeMap::new();
    let mut w = StmtWriter {
        out: String::new(),
        invariants: &empty,
        allow_open: true,
    };
    let _ = w.stmt(stmt, 0);
    w.out
}

pub fn render_struct(s: &StructDef) -> String {
    let mut out = format!("struct {} {{\n", s.name);
    for (n, t) in &s.fields {
        writeln!(out, "    {};", decl_text(n, t)).unwrap();
    }
    out.push_str("};\n");
    out
}

/// Renders the whole program. Functions missing from `specs` keep their own annotations.
pub fn render_annotated(
    program: &Program,
    specs: &BTreeMap<String, FnAnnotations>,
) -> Result<String, FrontendError> {
    let mut out = String::new();
    for s in &program.struct_defs {
        out.push_str(&render_struct(s));
        out.push('\n');
    }
    for (k, f) in program.functions.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let ann = specs
            .get(&f.name)
            .cloned()
            .unwrap_or_else(|| FnAnnotations::from_function(f));
        out.push_str(&render_function(f, &ann)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::parse_assertion;

    fn rt(s: &str) -> String {
        parse_assertion(s).unwrap().to_string()
    }

    #[test]
    fn chains_render_as_chains() {
        assert_eq!(rt("0 <= i && i <= n"), "0 <= i <= n");
        assert_eq!(rt("0 <= i <= n && x == 1"), "0 <= i <= n && x == 1");
    }

    #[test]
    fn negative_literals_parenthesized_in_arithmetic() {
        assert_eq!(rt("x - -3 >= -1"), "x - (-3) >= -1");
        assert_eq!(rt("-(3) == x"), "-(3) == x");
    }

    #[test]
    fn nested_quantifier_is_parenthesized() {
        assert_eq!(
            rt(r"c ==> (\forall integer k; 0 <= k < n ==> a[k] == 0)"),
            r"c ==> (\forall integer k; (0 <= k < n) ==> a[k] == 0)"
        );
    }

    #[test]
    fn implication_right_assoc() {
        assert_eq!(rt("(a ==> b) ==> c"), "(a ==> b) ==> c");
        assert_eq!(rt("a ==> b ==> c"), "a ==> b ==> c");
    }

    #[test]
    fn acsl_surface_forms() {
        assert_eq!(
            rt(r"0 < \at(pIp, Pre)->len ==> PLACE_HOLDER_for_i"),
            r"(0 < \at(pIp, Pre)->len) ==> PLACE_HOLDER_for_i"
        );
        assert_eq!(
            rt(r"chksum == \sum(0, i - 1, k |-> \at(pIp->pkv[k], Pre))"),
            r"chksum == \sum(0, i - 1, k |-> \at(pIp->pkv[k], Pre))"
        );
    }
}
