//! Recursive-descent parser for annotation clauses.

use super::assertion::{Access, ArithOp, Assertion, CmpOp, Label, Lval, LvBase, PLACEHOLDER_PREFIX};
use super::lexer::{Lexer, Span, Tok, Token};
use super::AssertionError;

/// Kind of clause inside a `/*@ ... */` block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClauseKind {
    Requires,
    Ensures,
    LoopInvariant,
    Assert,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub kind: ClauseKind,
    pub body: Assertion,
    pub span: Span,
}

/// Parses one clause body. A single trailing `;` is tolerated.
pub fn parse_assertion(text: &str) -> Result<Assertion, AssertionError> {
    let toks = lex(text, Span::default())?;
    let mut p = AParser { toks, pos: 0 };
    let a = p.expr()?;
    p.eat(";");
    p.expect_eof()?;
    Ok(a)
}

/// Parses the contents of an annotation comment into clauses.
pub fn parse_annotation_block(text: &str, start: Span) -> Result<Vec<Clause>, AssertionError> {
    let toks = lex(text, start)?;
    let mut p = AParser { toks, pos: 0 };
    let mut out = Vec::new();
    while !p.at_eof() {
        let span = p.peek().span;
        let kind = match p.ident_text() {
            Some("requires") => {
                p.pos += 1;
                ClauseKind::Requires
            }
            Some("ensures") => {
                p.pos += 1;
                ClauseKind::Ensures
            }
            Some("assert") => {
                p.pos += 1;
                ClauseKind::Assert
            }
            Some("loop") => {
                p.pos += 1;
                match p.ident_text() {
                    Some("invariant") => {
                        p.pos += 1;
                        ClauseKind::LoopInvariant
                    }
                    Some(other) => {
                        return Err(p.err_here(format!("unsupported clause `loop {other}`")))
                    }
                    None => return Err(p.err_here("expected `invariant` after `loop`")),
                }
            }
            _ => return Err(p.err_here("expected clause keyword")),
        };
        let body = p.expr()?;
        p.expect(";")?;
        out.push(Clause { kind, body, span });
    }
    Ok(out)
}

fn lex(text: &str, start: Span) -> Result<Vec<Token>, AssertionError> {
    Lexer::for_annotation(text, start)
        .tokenize()
        .map_err(|e| AssertionError {
            offset: e.offset,
            message: e.message,
        })
}

struct AParser {
    toks: Vec<Token>,
    pos: usize,
}

const CMP_OPS: &[(&str, CmpOp)] = &[
    ("<=", CmpOp::Le),
    (">=", CmpOp::Ge),
    ("<", CmpOp::Lt),
    (">", CmpOp::Gt),
    ("==", CmpOp::Eq),
    ("!=", CmpOp::Ne),
];

impl AParser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().tok, Tok::Eof)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident_text(&self) -> Option<&str> {
        match &self.peek().tok {
            Tok::Ident(s) => Some(s),
            _ => None,
        }
    }

    fn err_here(&self, message: impl Into<String>) -> AssertionError {
        let t = self.peek();
        AssertionError {
            offset: t.offset,
            message: format!("{} (found {})", message.into(), t.tok),
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), AssertionError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.err_here(format!("expected `{p}`")))
        }
    }

    fn expect_eof(&self) -> Result<(), AssertionError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.err_here("unexpected trailing input"))
        }
    }

    fn expect_ident(&mut self) -> Result<String, AssertionError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err_here("expected identifier")),
        }
    }

    fn expr(&mut self) -> Result<Assertion, AssertionError> {
        let c = self.implication()?;
        if self.eat("?") {
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.expr()?;
            return Ok(Assertion::Ite(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn implication(&mut self) -> Result<Assertion, AssertionError> {
        let lhs = self.disjunction()?;
        if self.eat("==>") {
            let rhs = self.implication()?;
            return Ok(Assertion::Implies(Box::new(lhs), Box::new(rhs)));
        }
        if self.eat("<==>") {
            let rhs = self.implication()?;
            return Ok(Assertion::And(vec![
                Assertion::Implies(Box::new(lhs.clone()), Box::new(rhs.clone())),
                Assertion::Implies(Box::new(rhs), Box::new(lhs)),
            ]));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Assertion, AssertionError> {
        let mut parts = vec![self.conjunction()?];
        while self.eat("||") {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            flatten_or(parts)
        })
    }

    fn conjunction(&mut self) -> Result<Assertion, AssertionError> {
        let mut parts = vec![self.comparison()?];
        while self.eat("&&") {
            parts.push(self.comparison()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            flatten_and(parts)
        })
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        CMP_OPS
            .iter()
            .find(|(s, _)| self.is_punct(s))
            .map(|(_, op)| *op)
    }

    fn comparison(&mut self) -> Result<Assertion, AssertionError> {
        let first = self.additive()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(op) = self.cmp_op() {
            self.pos += 1;
            ops.push(op);
            operands.push(self.additive()?);
        }
        if ops.is_empty() {
            return Ok(operands.pop().unwrap());
        }
        let mut atoms = Vec::new();
        for (k, op) in ops.iter().enumerate() {
            atoms.push(Assertion::cmp(*op, operands[k].clone(), operands[k + 1].clone()));
        }
        Ok(if atoms.len() == 1 {
            atoms.pop().unwrap()
        } else {
            Assertion::And(atoms)
        })
    }

    fn additive(&mut self) -> Result<Assertion, AssertionError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat("+") {
                ArithOp::Add
            } else if self.eat("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.multiplicative()?;
            lhs = Assertion::arith(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Assertion, AssertionError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                ArithOp::Mul
            } else if self.eat("/") {
                ArithOp::Div
            } else if self.eat("%") {
                ArithOp::Mod
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Assertion::arith(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Assertion, AssertionError> {
        if self.eat("!") {
            return Ok(Assertion::Not(Box::new(self.unary()?)));
        }
        if self.eat("-") {
            if let Tok::Int(n) = self.peek().tok {
                self.pos += 1;
                return Ok(Assertion::Int(-n));
            }
            return Ok(Assertion::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Assertion, AssertionError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(n) => {
                self.pos += 1;
                Ok(Assertion::Int(*n))
            }
            Tok::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(rest) = name.strip_prefix(PLACEHOLDER_PREFIX) {
                    if rest.is_empty() {
                        return Err(self.err_here("placeholder without a name"));
                    }
                    self.pos += 1;
                    return Ok(Assertion::Placeholder(rest.to_string()));
                }
                if matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Punct("(")))
                {
                    return Err(self.err_here(format!("unknown function `{name}`")));
                }
                let lv = self.lval()?;
                Ok(Assertion::Lval(lv))
            }
            Tok::Builtin(b) => match b.as_str() {
                "true" => {
                    self.pos += 1;
                    Ok(Assertion::Bool(true))
                }
                "false" => {
                    self.pos += 1;
                    Ok(Assertion::Bool(false))
                }
                "result" => {
                    self.pos += 1;
                    Ok(Assertion::Result)
                }
                "at" | "old" => Ok(Assertion::Lval(self.lval()?)),
                "valid" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let lv = self.lval()?;
                    self.expect(")")?;
                    Ok(Assertion::Valid(lv))
                }
                "separated" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let a = self.lval()?;
                    self.expect(",")?;
                    let b = self.lval()?;
                    self.expect(")")?;
                    Ok(Assertion::Separated(a, b))
                }
                "sum" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let lo = self.expr()?;
                    self.expect(",")?;
                    let hi = self.expr()?;
                    self.expect(",")?;
                    let var = self.expect_ident()?;
                    self.expect("|->")?;
                    let body = self.expr()?;
                    self.expect(")")?;
                    Ok(Assertion::Sum {
                        lo: Box::new(lo),
                        hi: Box::new(hi),
                        var,
                        body: Box::new(body),
                    })
                }
                "forall" | "exists" => {
                    let universal = b == "forall";
                    self.pos += 1;
                    match self.ident_text() {
                        Some("integer") | Some("int") => self.pos += 1,
                        _ => return Err(self.err_here("expected `integer`")),
                    }
                    let mut names = vec![self.expect_ident()?];
                    while self.eat(",") {
                        names.push(self.expect_ident()?);
                    }
                    self.expect(";")?;
                    let mut body = self.expr()?;
                    for n in names.into_iter().rev() {
                        body = if universal {
                            Assertion::Forall(n, Box::new(body))
                        } else {
                            Assertion::Exists(n, Box::new(body))
                        };
                    }
                    Ok(body)
                }
                other => Err(self.err_here(format!("unsupported builtin `\\{other}`"))),
            },
            _ => Err(self.err_here("expected expression")),
        }
    }

    fn label(&mut self) -> Result<Label, AssertionError> {
        match self.ident_text() {
            Some("Pre") => {
                self.pos += 1;
                Ok(Label::Pre)
            }
            Some("LoopEntry") => {
                self.pos += 1;
                Ok(Label::LoopEntry)
            }
            _ => Err(self.err_here("expected label `Pre` or `LoopEntry`")),
        }
    }

    fn lval(&mut self) -> Result<Lval, AssertionError> {
        let base = match self.peek().tok.clone() {
            Tok::Ident(name) => {
                self.pos += 1;
                LvBase::Var(name)
            }
            Tok::Builtin(b) if b == "at" => {
                self.pos += 1;
                self.expect("(")?;
                let inner = self.lval()?;
                self.expect(",")?;
                let l = self.label()?;
                self.expect(")")?;
                LvBase::At(Box::new(inner), l)
            }
            Tok::Builtin(b) if b == "old" => {
                self.pos += 1;
                self.expect("(")?;
                let inner = self.lval()?;
                self.expect(")")?;
                LvBase::At(Box::new(inner), Label::Pre)
            }
            _ => return Err(self.err_here("expected l-value")),
        };
        let mut lv = Lval {
            base,
            path: Vec::new(),
        };
        loop {
            if self.eat("[") {
                let idx = self.expr()?;
                self.expect("]")?;
                lv.path.push(Access::Index(Box::new(idx)));
            } else if self.eat(".") {
                lv.path.push(Access::Dot(self.expect_ident()?));
            } else if self.eat("->") {
                lv.path.push(Access::Arrow(self.expect_ident()?));
            } else {
                return Ok(lv);
            }
        }
    }
}

fn flatten_and(parts: Vec<Assertion>) -> Assertion {
    let mut out = Vec::new();
    for p in parts {
        match p {
            Assertion::And(v) => out.extend(v),
            other => out.push(other),
        }
    }
    Assertion::And(out)
}

fn flatten_or(parts: Vec<Assertion>) -> Assertion {
    let mut out = Vec::new();
    for p in parts {
        match p {
            Assertion::Or(v) => out.extend(v),
            other => out.push(other),
        }
    }
    Assertion::Or(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chained_comparison_is_conjunction() {
        let a = parse_assertion("0 <= i <= pIp->len").unwrap();
        match a {
            Assertion::And(v) => {
                assert_eq!(v.len(), 2);
                assert!(matches!(v[0], Assertion::Cmp(CmpOp::Le, ..)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn placeholder_consequent() {
        let a = parse_assertion(r"\at(pIp, Pre)->len > 0 ==> PLACE_HOLDER_for_i").unwrap();
        match a {
            Assertion::Implies(_, rhs) => assert_eq!(*rhs, Assertion::Placeholder("i".into())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sum_atom() {
        let a = parse_assertion(r"\sum(0, n-1, k |-> a[k]) == s").unwrap();
        assert!(matches!(a, Assertion::Cmp(CmpOp::Eq, ref l, _) if matches!(**l, Assertion::Sum{..})));
    }

    #[test]
    fn unknown_function_is_error() {
        let e = parse_assertion("chksum == sum(0, i-1, pkv)").unwrap_err();
        assert!(e.message.contains("unknown function"));
        assert_eq!(e.offset, 10);
    }

    #[test]
    fn lambda_sum_rejected() {
        assert!(parse_assertion(r"c == \sum(0, i-1, \lambda integer k; a[k])").is_err());
    }

    #[test]
    fn block_with_clauses() {
        let cs = parse_annotation_block(
            "\n  loop invariant 0 <= i;\n  @ loop invariant i <= n;\n",
            Span::default(),
        )
        .unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| c.kind == ClauseKind::LoopInvariant));
    }

    #[test]
    fn quantifier_binds_to_the_right() {
        let a = parse_assertion(r"\forall integer k; 0 <= k < n ==> a[k] == 0").unwrap();
        assert!(matches!(a, Assertion::Forall(ref v, ref b) if v == "k" && matches!(**b, Assertion::Implies(..))));
    }
}
