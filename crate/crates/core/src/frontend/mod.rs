//! Mini-C and annotation front end.

pub mod aparse;
pub mod assertion;
pub mod ast;
pub mod cparse;
pub mod lexer;
pub mod render;

use std::collections::BTreeSet;

use thiserror::Error;

pub use aparse::{parse_annotation_block, parse_assertion, Clause, ClauseKind};
pub use assertion::{Access, ArithOp, Assertion, CmpOp, Label, Lval, LvBase};
pub use ast::*;
pub use cparse::parse_program;
pub use render::{render_annotated, render_function, FnAnnotations};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("assertion syntax error at offset {offset}: {message}")]
pub struct AssertionError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax { line: u32, col: u32, expected: String },
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("open placeholder `{0}` cannot be rendered")]
    OpenPlaceholder(String),
    #[error("{0}")]
    Semantic(String),
}

/// Whole-program checks run after parsing.
pub(crate) fn validate(p: &Program) -> Result<(), FrontendError> {
    let mut seen = BTreeSet::new();
    for s in &p.struct_defs {
        if !seen.insert(format!("struct {}", s.name)) {
            return Err(FrontendError::Semantic(format!("duplicate struct `{}`", s.name)));
        }
    }
    for s in &p.struct_defs {
        for (_, t) in &s.fields {
            check_type(p, t)?;
        }
        check_struct_acyclic(p, &s.name, &mut Vec::new())?;
    }
    for f in &p.functions {
        if !seen.insert(f.name.clone()) {
            return Err(FrontendError::Semantic(format!("duplicate function `{}`", f.name)));
        }
        let mut names = BTreeSet::new();
        for prm in &f.params {
            check_type(p, &prm.ty)?;
            if !names.insert(prm.name.clone()) {
                return Err(FrontendError::Semantic(format!(
                    "duplicate parameter `{}` in `{}`",
                    prm.name, f.name
                )));
            }
        }
        for (_, t) in f.local_decls() {
            check_type(p, &t)?;
        }
        for c in f.callees() {
            if p.function(&c).is_none() {
                return Err(FrontendError::Unsupported(format!(
                    "call to undefined function `{c}`"
                )));
            }
        }
    }
    check_no_recursion(p)?;
    Ok(())
}

fn check_type(p: &Program, t: &CType) -> Result<(), FrontendError> {
    match t {
        CType::Int => Ok(()),
        CType::Array(e, _) => check_type(p, e),
        CType::Struct(s) | CType::PtrToStruct(s) => {
            if p.struct_def(s).is_some() {
                Ok(())
            } else {
                Err(FrontendError::Semantic(format!("unknown struct `{s}`")))
            }
        }
    }
}

fn check_struct_acyclic(p: &Program, name: &str, stack: &mut Vec<String>) -> Result<(), FrontendError> {
    if stack.iter().any(|s| s == name) {
        return Err(FrontendError::Semantic(format!("recursive struct `{name}`")));
    }
    stack.push(name.to_string());
    if let Some(s) = p.struct_def(name) {
        for (_, t) in &s.fields {
            let mut t = t;
            while let CType::Array(e, _) = t {
                t = e;
            }
            if let CType::Struct(inner) = t {
                check_struct_acyclic(p, inner, stack)?;
            }
        }
    }
    stack.pop();
    Ok(())
}

fn check_no_recursion(p: &Program) -> Result<(), FrontendError> {
    fn dfs(p: &Program, f: &str, stack: &mut Vec<String>) -> Result<(), FrontendError> {
        if let Some(pos) = stack.iter().position(|s| s == f) {
            let mut cycle = stack[pos..].to_vec();
            cycle.push(f.to_string());
            return Err(FrontendError::Unsupported(format!(
                "recursion ({})",
                cycle.join(" -> ")
            )));
        }
        stack.push(f.to_string());
        if let Some(def) = p.function(f) {
            for c in def.callees() {
                dfs(p, &c, stack)?;
            }
        }
        stack.pop();
        Ok(())
    }
    for f in &p.functions {
        dfs(p, &f.name, &mut Vec::new())?;
    }
    Ok(())
}
