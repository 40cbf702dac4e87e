//! Parser for the C subset. `for` loops are rewritten into `while` form here.

use std::collections::BTreeMap;

use super::aparse::{parse_annotation_block, ClauseKind};
use super::assertion::Assertion;
use super::ast::*;
use super::lexer::{Lexer, Span, Tok, Token};
use super::FrontendError;

pub fn parse_program(source: &str) -> Result<Program, FrontendError> {
    let toks = Lexer::new(source).tokenize().map_err(|e| FrontendError::Syntax {
        line: e.span.line,
        col: e.span.col,
        expected: e.message,
    })?;
    let mut p = CParser {
        toks,
        pos: 0,
        next_loop: 0,
        next_call: 0,
        next_goal: 0,
        loop_annots: BTreeMap::new(),
        pending_invariants: None,
    };
    let prog = p.program()?;
    super::validate(&prog)?;
    Ok(prog)
}

struct CParser {
    toks: Vec<Token>,
    pos: usize,
    next_loop: u32,
    next_call: u32,
    next_goal: u32,
    loop_annots: BTreeMap<LoopId, Vec<Assertion>>,
    pending_invariants: Option<(Vec<Assertion>, Span)>,
}

const TYPE_WORDS_UNSUPPORTED: &[&str] = &[
    "char", "long", "short", "unsigned", "signed", "float", "double", "union", "enum",
    "typedef", "const", "static", "extern", "bool", "_Bool",
];

impl CParser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.peek().span
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_ident(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == w)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_ident(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, expected: impl Into<String>) -> FrontendError {
        let t = self.peek();
        FrontendError::Syntax {
            line: t.span.line,
            col: t.span.col,
            expected: format!("{} (found {})", expected.into(), t.tok),
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), FrontendError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.syntax(format!("`{p}`")))
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.syntax("identifier")),
        }
    }

    fn int_lit(&mut self) -> Result<i64, FrontendError> {
        match self.peek().tok {
            Tok::Int(n) => {
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.syntax("integer constant")),
        }
    }

    fn check_unsupported_word(&self) -> Result<(), FrontendError> {
        if let Tok::Ident(w) = &self.peek().tok {
            if TYPE_WORDS_UNSUPPORTED.contains(&w.as_str()) {
                return Err(FrontendError::Unsupported(format!("`{w}`")));
            }
            if matches!(w.as_str(), "goto" | "do" | "switch" | "case" | "default") {
                return Err(FrontendError::Unsupported(format!("`{w}` statement")));
            }
        }
        if self.is_punct("#") {
            return Err(FrontendError::Unsupported("preprocessor directive".into()));
        }
        Ok(())
    }

    fn program(&mut self) -> Result<Program, FrontendError> {
        let mut structs = Vec::new();
        let mut functions = Vec::new();
        loop {
            self.check_unsupported_word()?;
            let mut contract: Option<(Contract, Span)> = None;
            while let Tok::Annot(text) = &self.peek().tok {
                let text = text.clone();
                let span = self.span();
                self.pos += 1;
                let clauses = parse_annotation_block(&text, span)
                    .map_err(|e| annotation_error(span, &text, e))?;
                let c = contract.get_or_insert_with(|| (Contract::default(), span));
                for cl in clauses {
                    match cl.kind {
                        ClauseKind::Requires => c.0.requires.push(cl.body),
                        ClauseKind::Ensures => c.0.ensures.push(cl.body),
                        _ => {
                            return Err(FrontendError::Syntax {
                                line: cl.span.line,
                                col: cl.span.col,
                                expected: "`requires` or `ensures` before a function".into(),
                            })
                        }
                    }
                }
            }
            if matches!(self.peek().tok, Tok::Eof) {
                if let Some((_, span)) = contract {
                    return Err(FrontendError::Syntax {
                        line: span.line,
                        col: span.col,
                        expected: "function after contract".into(),
                    });
                }
                break;
            }
            if self.is_ident("struct")
                && matches!(self.peek_at(1), Tok::Ident(_))
                && matches!(self.peek_at(2), Tok::Punct("{"))
            {
                if contract.is_some() {
                    return Err(self.syntax("function after contract"));
                }
                structs.push(self.struct_def()?);
                continue;
            }
            functions.push(self.function(contract.map(|c| c.0))?);
        }
        Ok(Program {
            struct_defs: structs,
            functions,
        })
    }

    fn struct_def(&mut self) -> Result<StructDef, FrontendError> {
        self.eat_word("struct");
        let name = self.ident()?;
        self.expect("{")?;
        let mut fields = Vec::new();
        while !self.eat("}") {
            self.check_unsupported_word()?;
            let base = self.base_type()?;
            if self.is_punct("*") {
                return Err(FrontendError::Unsupported(format!(
                    "pointer field in struct `{name}`"
                )));
            }
            let fname = self.ident()?;
            let ty = self.array_suffix(base)?;
            self.expect(";")?;
            fields.push((fname, ty));
        }
        self.expect(";")?;
        Ok(StructDef { name, fields })
    }

    fn base_type(&mut self) -> Result<CType, FrontendError> {
        if self.eat_word("int") {
            return Ok(CType::Int);
        }
        if self.eat_word("struct") {
            let n = self.ident()?;
            return Ok(CType::Struct(n));
        }
        self.check_unsupported_word()?;
        Err(self.syntax("type"))
    }

    fn array_suffix(&mut self, base: CType) -> Result<CType, FrontendError> {
        let mut dims = Vec::new();
        while self.eat("[") {
            let n = self.int_lit()?;
            if n <= 0 {
                return Err(self.syntax("positive array length"));
            }
            self.expect("]")?;
            dims.push(n as usize);
        }
        let mut ty = base;
        for d in dims.into_iter().rev() {
            ty = CType::Array(Box::new(ty), d);
        }
        Ok(ty)
    }

    fn function(&mut self, spec: Option<Contract>) -> Result<FunctionDef, FrontendError> {
        let span = self.span();
        let ret = if self.eat_word("void") {
            RetType::Void
        } else if self.eat_word("int") {
            RetType::Int
        } else {
            self.check_unsupported_word()?;
            return Err(self.syntax("`void` or `int` return type"));
        };
        let name = self.ident()?;
        if !self.is_punct("(") {
            if self.is_punct(";") || self.is_punct("=") || self.is_punct("[") {
                return Err(FrontendError::Unsupported(format!("global variable `{name}`")));
            }
            return Err(self.syntax("`(`"));
        }
        self.expect("(")?;
        let mut params = Vec::new();
        if self.is_ident("void") && matches!(self.peek_at(1), Tok::Punct(")")) {
            self.pos += 1;
        }
        if !self.is_punct(")") {
            loop {
                self.check_unsupported_word()?;
                let base = self.base_type()?;
                let ty = if self.eat("*") {
                    match base {
                        CType::Struct(s) => CType::PtrToStruct(s),
                        _ => {
                            return Err(FrontendError::Unsupported(
                                "pointer to non-struct type".into(),
                            ))
                        }
                    }
                } else {
                    base
                };
                let pname = self.ident()?;
                if self.is_punct("[") {
                    return Err(FrontendError::Unsupported(format!(
                        "array parameter `{pname}` (wrap it in a struct)"
                    )));
                }
                params.push(Param { name: pname, ty });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        if self.eat(";") {
            return Err(FrontendError::Unsupported(format!(
                "function declaration without body `{name}`"
            )));
        }
        self.next_loop = 0;
        self.next_call = 0;
        self.next_goal = 0;
        self.loop_annots = BTreeMap::new();
        self.pending_invariants = None;
        self.expect("{")?;
        let body = self.block_rest()?;
        if let Some((_, sp)) = self.pending_invariants.take() {
            return Err(FrontendError::Syntax {
                line: sp.line,
                col: sp.col,
                expected: "loop after `loop invariant`".into(),
            });
        }
        Ok(FunctionDef {
            name,
            ret,
            params,
            body,
            spec,
            loop_annotations: std::mem::take(&mut self.loop_annots),
            span,
        })
    }

    /// Statements up to and including the closing brace.
    fn block_rest(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        let mut out = Vec::new();
        while !self.eat("}") {
            if matches!(self.peek().tok, Tok::Eof) {
                return Err(self.syntax("`}`"));
            }
            self.statement(&mut out)?;
        }
        Ok(out)
    }

    fn statement_as_vec(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        let mut out = Vec::new();
        if self.eat("{") {
            return self.block_rest();
        }
        self.statement(&mut out)?;
        Ok(out)
    }

    fn statement(&mut self, out: &mut Vec<Stmt>) -> Result<(), FrontendError> {
        self.check_unsupported_word()?;
        let is_loop = self.is_ident("while") || self.is_ident("for");
        if self.pending_invariants.is_some() && !is_loop && !matches!(self.peek().tok, Tok::Annot(_))
        {
            let (_, sp) = self.pending_invariants.take().unwrap();
            return Err(FrontendError::Syntax {
                line: sp.line,
                col: sp.col,
                expected: "loop after `loop invariant`".into(),
            });
        }
        let span = self.span();
        match self.peek().tok.clone() {
            Tok::Annot(text) => {
                self.pos += 1;
                let clauses = parse_annotation_block(&text, span)
                    .map_err(|e| annotation_error(span, &text, e))?;
                for cl in clauses {
                    match cl.kind {
                        ClauseKind::Assert => {
                            let id = GoalId(self.next_goal);
                            self.next_goal += 1;
                            out.push(Stmt::Assert {
                                id,
                                cond: cl.body,
                                span: cl.span,
                            });
                        }
                        ClauseKind::LoopInvariant => {
                            let p = self.pending_invariants.get_or_insert((Vec::new(), cl.span));
                            p.0.push(cl.body);
                        }
                        _ => {
                            return Err(FrontendError::Syntax {
                                line: cl.span.line,
                                col: cl.span.col,
                                expected: "`assert` or `loop invariant` inside a body".into(),
                            })
                        }
                    }
                }
                Ok(())
            }
            Tok::Punct("{") => {
                self.pos += 1;
                let b = self.block_rest()?;
                out.push(Stmt::Block(b));
                Ok(())
            }
            Tok::Punct(";") => {
                self.pos += 1;
                Ok(())
            }
            Tok::Ident(w) => match w.as_str() {
                "int" | "struct" => self.declaration(out),
                "if" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let then_branch = self.statement_as_vec()?;
                    let else_branch = if self.eat_word("else") {
                        self.statement_as_vec()?
                    } else {
                        Vec::new()
                    };
                    out.push(Stmt::If {
                        cond,
                        then_branch,
                        else_branch,
                    });
                    Ok(())
                }
                "while" => {
                    self.pos += 1;
                    let id = self.fresh_loop();
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let body = self.statement_as_vec()?;
                    out.push(Stmt::While {
                        id,
                        cond,
                        body,
                        span,
                    });
                    Ok(())
                }
                "for" => self.for_loop(out, span),
                "return" => {
                    self.pos += 1;
                    if self.eat(";") {
                        out.push(Stmt::Return(None));
                    } else {
                        let e = self.expr()?;
                        self.expect(";")?;
                        out.push(Stmt::Return(Some(e)));
                    }
                    Ok(())
                }
                "break" => {
                    self.pos += 1;
                    self.expect(";")?;
                    out.push(Stmt::Break);
                    Ok(())
                }
                "continue" => {
                    self.pos += 1;
                    self.expect(";")?;
                    out.push(Stmt::Continue);
                    Ok(())
                }
                "else" => Err(self.syntax("statement")),
                _ => {
                    let s = self.simple_statement()?;
                    self.expect(";")?;
                    out.push(s);
                    Ok(())
                }
            },
            Tok::Punct("++") | Tok::Punct("--") => {
                let s = self.simple_statement()?;
                self.expect(";")?;
                out.push(s);
                Ok(())
            }
            Tok::Punct("*") | Tok::Punct("&") => {
                Err(FrontendError::Unsupported("pointer dereference or address-of".into()))
            }
            _ => Err(self.syntax("statement")),
        }
    }

    fn fresh_loop(&mut self) -> LoopId {
        let id = LoopId(self.next_loop);
        self.next_loop += 1;
        if let Some((inv, _)) = self.pending_invariants.take() {
            self.loop_annots.insert(id, inv);
        }
        id
    }

    fn fresh_call(&mut self) -> CallId {
        let id = CallId(self.next_call);
        self.next_call += 1;
        id
    }

    fn declaration(&mut self, out: &mut Vec<Stmt>) -> Result<(), FrontendError> {
        let base = self.base_type()?;
        if self.is_punct("*") {
            return Err(FrontendError::Unsupported("pointer-typed local variable".into()));
        }
        loop {
            let name = self.ident()?;
            let ty = self.array_suffix(base.clone())?;
            let init = if self.eat("=") {
                if self.is_punct("{") {
                    return Err(FrontendError::Unsupported("aggregate initializer".into()));
                }
                if let (Tok::Ident(callee), Tok::Punct("(")) = (self.peek_at(0).clone(), self.peek_at(1)) {
                    let span = self.span();
                    self.pos += 1;
                    let args = self.call_args()?;
                    out.push(Stmt::Decl {
                        name: name.clone(),
                        ty,
                        init: None,
                    });
                    let id = self.fresh_call();
                    out.push(Stmt::Call {
                        id,
                        target: Some(Expr::Var(name)),
                        callee,
                        args,
                        span,
                    });
                    if !self.eat(",") {
                        break;
                    }
                    continue;
                }
                Some(self.expr()?)
            } else {
                None
            };
            out.push(Stmt::Decl { name, ty, init });
            if !self.eat(",") {
                break;
            }
        }
        self.expect(";")
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.eat(")") {
            loop {
                if self.is_punct("&") {
                    return Err(FrontendError::Unsupported("address-of".into()));
                }
                args.push(self.expr()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(args)
    }

    /// Assignment, compound assignment, increment or call, without the `;`.
    fn simple_statement(&mut self) -> Result<Stmt, FrontendError> {
        let span = self.span();
        if self.eat("++") || self.eat("--") {
            let op = if matches!(self.toks[self.pos - 1].tok, Tok::Punct("++")) {
                BinOp::Add
            } else {
                BinOp::Sub
            };
            let target = self.postfix()?;
            return self.incr(target, op);
        }
        if let (Tok::Ident(callee), Tok::Punct("(")) = (self.peek_at(0).clone(), self.peek_at(1)) {
            self.pos += 1;
            let args = self.call_args()?;
            let id = self.fresh_call();
            return Ok(Stmt::Call {
                id,
                target: None,
                callee,
                args,
                span,
            });
        }
        let target = self.postfix()?;
        if !target.is_lvalue() {
            return Err(self.syntax("assignable expression"));
        }
        if self.eat("++") {
            return self.incr(target, BinOp::Add);
        }
        if self.eat("--") {
            return self.incr(target, BinOp::Sub);
        }
        let compound = [
            ("+=", BinOp::Add),
            ("-=", BinOp::Sub),
            ("*=", BinOp::Mul),
            ("/=", BinOp::Div),
            ("%=", BinOp::Mod),
        ];
        for (p, op) in compound {
            if self.eat(p) {
                let rhs = self.expr()?;
                return Ok(Stmt::Assign {
                    value: Expr::binary(op, target.clone(), rhs),
                    target,
                });
            }
        }
        self.expect("=")?;
        if let (Tok::Ident(callee), Tok::Punct("(")) = (self.peek_at(0).clone(), self.peek_at(1)) {
            let span = self.span();
            self.pos += 1;
            let args = self.call_args()?;
            let id = self.fresh_call();
            return Ok(Stmt::Call {
                id,
                target: Some(target),
                callee,
                args,
                span,
            });
        }
        let value = self.expr()?;
        Ok(Stmt::Assign { target, value })
    }

    fn incr(&self, target: Expr, op: BinOp) -> Result<Stmt, FrontendError> {
        if !target.is_lvalue() {
            return Err(self.syntax("assignable expression"));
        }
        Ok(Stmt::Assign {
            value: Expr::binary(op, target.clone(), Expr::Int(1)),
            target,
        })
    }

    fn for_loop(&mut self, out: &mut Vec<Stmt>, span: Span) -> Result<(), FrontendError> {
        self.pos += 1;
        // Invariants written before the `for` belong to the generated while.
        let pending = self.pending_invariants.take();
        self.expect("(")?;
        let mut init = Vec::new();
        if !self.eat(";") {
            if self.is_ident("int") {
                self.declaration(&mut init)?;
            } else {
                loop {
                    init.push(self.simple_statement()?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(";")?;
            }
        }
        let cond = if self.is_punct(";") {
            Expr::Int(1)
        } else {
            self.expr()?
        };
        self.expect(";")?;
        let mut step = Vec::new();
        if !self.is_punct(")") {
            loop {
                step.push(self.simple_statement()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.pending_invariants = pending;
        let id = self.fresh_loop();
        let body = self.statement_as_vec()?;
        let mut body = rewrite_continue(body, &step);
        body.extend(step);
        out.extend(init);
        out.push(Stmt::While {
            id,
            cond,
            body,
            span,
        });
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        self.binary(1)
    }

    fn bin_op(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek().tok else {
            return None;
        };
        Some(match p {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Mod,
            _ => return None,
        })
    }

    /// Precedence climbing; every binary operator is left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.bin_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        if self.is_punct("?") {
            return Err(FrontendError::Unsupported("conditional expression".into()));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        if self.eat("-") {
            if let Tok::Int(n) = self.peek().tok {
                self.pos += 1;
                return Ok(Expr::Int(-n));
            }
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat("+") {
            return self.unary();
        }
        if self.is_punct("*") || self.is_punct("&") {
            return Err(FrontendError::Unsupported("pointer dereference or address-of".into()));
        }
        if self.is_punct("++") || self.is_punct("--") {
            return Err(FrontendError::Unsupported("increment inside expression".into()));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.pos += 1;
                Expr::Int(n)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.is_punct("(") {
                    return Err(FrontendError::Unsupported(format!(
                        "call to `{name}` inside an expression"
                    )));
                }
                Expr::Var(name)
            }
            Tok::Punct("(") => {
                self.pos += 1;
                if self.is_ident("int") || self.is_ident("struct") {
                    return Err(FrontendError::Unsupported("cast".into()));
                }
                let e = self.expr()?;
                self.expect(")")?;
                e
            }
            _ => return Err(self.syntax("expression")),
        };
        loop {
            if self.eat("[") {
                let i = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(i));
            } else if self.eat(".") {
                e = Expr::Field(Box::new(e), self.ident()?);
            } else if self.eat("->") {
                e = Expr::Arrow(Box::new(e), self.ident()?);
            } else {
                return Ok(e);
            }
        }
    }
}

/// Inside a desugared `for` body, `continue` must still run the step.
fn rewrite_continue(body: Vec<Stmt>, step: &[Stmt]) -> Vec<Stmt> {
    if step.is_empty() {
        return body;
    }
    body.into_iter()
        .map(|s| match s {
            Stmt::Continue => {
                let mut b = step.to_vec();
                b.push(Stmt::Continue);
                Stmt::Block(b)
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => Stmt::If {
                cond,
                then_branch: rewrite_continue(then_branch, step),
                else_branch: rewrite_continue(else_branch, step),
            },
            Stmt::Block(b) => Stmt::Block(rewrite_continue(b, step)),
            // continue inside a nested loop belongs to that loop
            other => other,
        })
        .collect()
}

fn annotation_error(start: Span, text: &str, e: super::AssertionError) -> FrontendError {
    // Recover line/column of the offending token inside the comment.
    let prefix = &text[..e.offset.min(text.len())];
    let nl = prefix.matches('\n').count() as u32;
    let (line, col) = if nl == 0 {
        (start.line, start.col + 3 + prefix.chars().count() as u32)
    } else {
        let last = prefix.rsplit('\n').next().unwrap_or("");
        (start.line + nl, 1 + last.chars().count() as u32)
    };
    FrontendError::Syntax {
        line,
        col,
        expected: e.message,
    }
}
