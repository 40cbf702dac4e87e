//! Flattened memory model: every scalar cell reachable from a root variable
//! is one `Location`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{
    assertion::sanitize_path, Access, Assertion, CType, Expr, FunctionDef, Label, Lval, LvBase,
    Program, StructDef,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("unknown struct `{0}`")]
    UnknownStruct(String),
    #[error("recursive struct `{0}`")]
    RecursiveStruct(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("index of `{0}` is not a constant")]
    SymbolicIndex(String),
    #[error("index {idx} out of bounds in `{lv}`")]
    OutOfBounds { lv: String, idx: i64 },
    #[error("`{0}` is not a scalar location")]
    NotScalar(String),
    #[error("invalid access `{0}`")]
    BadAccess(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocStep {
    Dot(String),
    Arrow(String),
    Index(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub root: String,
    pub steps: Vec<LocStep>,
}

impl Location {
    pub fn root(name: impl Into<String>) -> Location {
        Location {
            root: name.into(),
            steps: Vec::new(),
        }
    }

    pub fn push(&self, step: LocStep) -> Location {
        let mut l = self.clone();
        l.steps.push(step);
        l
    }

    pub fn to_lval(&self) -> Lval {
        let mut lv = Lval::var(self.root.clone());
        for s in &self.steps {
            lv = match s {
                LocStep::Dot(f) => lv.dot(f.clone()),
                LocStep::Arrow(f) => lv.arrow(f.clone()),
                LocStep::Index(k) => lv.index(Assertion::Int(*k as i64)),
            };
        }
        lv
    }

    pub fn term(&self) -> Assertion {
        Assertion::Lval(self.to_lval())
    }

    /// `\at(loc, label)` as a term.
    pub fn at(&self, label: Label) -> Assertion {
        Assertion::Lval(Lval::at(self.to_lval(), label))
    }

    /// Name of the logical variable holding the entry value.
    pub fn fresh_symbol(&self) -> String {
        format!("{}_0", sanitize_path(&self.to_string()))
    }

    pub fn is_prefix_of(&self, other: &Location) -> bool {
        self.root == other.root
            && self.steps.len() <= other.steps.len()
            && other.steps[..self.steps.len()] == self.steps[..]
    }

    /// Converts a label-free l-value with constant indices.
    pub fn from_lval(lv: &Lval) -> Option<Location> {
        let LvBase::Var(root) = &lv.base else {
            return None;
        };
        let mut steps = Vec::new();
        for a in &lv.path {
            steps.push(match a {
                Access::Dot(f) => LocStep::Dot(f.clone()),
                Access::Arrow(f) => LocStep::Arrow(f.clone()),
                Access::Index(i) => match **i {
                    Assertion::Int(k) if k >= 0 => LocStep::Index(k as usize),
                    _ => return None,
                },
            });
        }
        Some(Location {
            root: root.clone(),
            steps,
        })
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.root)?;
        for s in &self.steps {
            match s {
                LocStep::Dot(n) => write!(f, ".{n}")?,
                LocStep::Arrow(n) => write!(f, "->{n}")?,
                LocStep::Index(k) => write!(f, "[{k}]")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootInfo {
    pub name: String,
    pub ty: CType,
    pub is_param: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryLayout {
    pub roots: Vec<RootInfo>,
    /// Every scalar cell, parameters first, in declaration order.
    pub locations: Vec<Location>,
    pub separation_facts: Vec<Assertion>,
    structs: Vec<StructDef>,
}

/// Flattens parameters into scalar cells plus `\valid`/`\separated` atoms.
pub fn flatten(params: &[(String, CType)], structs: &[StructDef]) -> Result<MemoryLayout, MemError> {
    let mut layout = MemoryLayout {
        roots: Vec::new(),
        locations: Vec::new(),
        separation_facts: Vec::new(),
        structs: structs.to_vec(),
    };
    let mut ptrs = Vec::new();
    for (name, ty) in params {
        layout.add_root(name, ty, true)?;
        if matches!(ty, CType::PtrToStruct(_)) {
            layout
                .separation_facts
                .push(Assertion::Valid(Lval::var(name.clone())));
            ptrs.push(name.clone());
        }
    }
    for i in 0..ptrs.len() {
        for j in i + 1..ptrs.len() {
            layout.separation_facts.push(Assertion::Separated(
                Lval::var(ptrs[i].clone()),
                Lval::var(ptrs[j].clone()),
            ));
        }
    }
    Ok(layout)
}

impl MemoryLayout {
    /// Parameters and every local of `f`.
    pub fn for_function(f: &FunctionDef, prog: &Program) -> Result<MemoryLayout, MemError> {
        let params: Vec<(String, CType)> =
            f.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
        let mut layout = flatten(&params, &prog.struct_defs)?;
        for (name, ty) in f.local_decls() {
            if layout.root(&name).is_some() {
                continue;
            }
            layout.add_root(&name, &ty, false)?;
        }
        Ok(layout)
    }

    fn add_root(&mut self, name: &str, ty: &CType, is_param: bool) -> Result<(), MemError> {
        let start = match ty {
            CType::PtrToStruct(s) => {
                let mut cells = Vec::new();
                let st = self.struct_def(s)?.clone();
                for (f, fty) in &st.fields {
                    self.cells(
                        &Location::root(name).push(LocStep::Arrow(f.clone())),
                        fty,
                        &mut cells,
                        &mut vec![s.clone()],
                    )?;
                }
                cells
            }
            _ => {
                let mut cells = Vec::new();
                self.cells(&Location::root(name), ty, &mut cells, &mut Vec::new())?;
                cells
            }
        };
        self.locations.extend(start);
        self.roots.push(RootInfo {
            name: name.to_string(),
            ty: ty.clone(),
            is_param,
        });
        Ok(())
    }

    fn struct_def(&self, name: &str) -> Result<&StructDef, MemError> {
        self.structs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| MemError::UnknownStruct(name.to_string()))
    }

    fn cells(
        &self,
        at: &Location,
        ty: &CType,
        out: &mut Vec<Location>,
        stack: &mut Vec<String>,
    ) -> Result<(), MemError> {
        match ty {
            CType::Int => out.push(at.clone()),
            CType::Array(e, n) => {
                for k in 0..*n {
                    self.cells(&at.push(LocStep::Index(k)), e, out, stack)?;
                }
            }
            CType::Struct(s) => {
                if stack.contains(s) {
                    return Err(MemError::RecursiveStruct(s.clone()));
                }
                stack.push(s.clone());
                let st = self.struct_def(s)?.clone();
                for (f, fty) in &st.fields {
                    self.cells(&at.push(LocStep::Dot(f.clone())), fty, out, stack)?;
                }
                stack.pop();
            }
            CType::PtrToStruct(_) => {
                return Err(MemError::BadAccess(format!("nested pointer at `{at}`")))
            }
        }
        Ok(())
    }

    pub fn root(&self, name: &str) -> Option<&RootInfo> {
        self.roots.iter().find(|r| r.name == name)
    }

    pub fn is_pointer(&self, name: &str) -> bool {
        matches!(self.root(name), Some(RootInfo { ty: CType::PtrToStruct(_), .. }))
    }

    pub fn param_locations(&self) -> Vec<&Location> {
        let params: BTreeSet<&str> = self
            .roots
            .iter()
            .filter(|r| r.is_param)
            .map(|r| r.name.as_str())
            .collect();
        self.locations
            .iter()
            .filter(|l| params.contains(l.root.as_str()))
            .collect()
    }

    pub fn local_cells(&self, name: &str) -> Vec<Location> {
        self.cells_under(&Location::root(name))
    }

    /// Scalar cells at or below `prefix`.
    pub fn cells_under(&self, prefix: &Location) -> Vec<Location> {
        self.locations
            .iter()
            .filter(|l| prefix.is_prefix_of(l))
            .cloned()
            .collect()
    }

    /// Type of the object named by `loc`, which may be an aggregate prefix.
    pub fn type_of(&self, loc: &Location) -> Result<CType, MemError> {
        let root = self
            .root(&loc.root)
            .ok_or_else(|| MemError::UnknownVariable(loc.root.clone()))?;
        let mut ty = root.ty.clone();
        for s in &loc.steps {
            ty = self.step_type(&ty, s).map_err(|_| MemError::BadAccess(loc.to_string()))?;
        }
        Ok(ty)
    }

    pub fn step_type(&self, ty: &CType, step: &LocStep) -> Result<CType, MemError> {
        match (ty, step) {
            (CType::PtrToStruct(s), LocStep::Arrow(f)) | (CType::Struct(s), LocStep::Dot(f)) => {
                let st = self.struct_def(s)?;
                st.fields
                    .iter()
                    .find(|(n, _)| n == f)
                    .map(|(_, t)| t.clone())
                    .ok_or_else(|| MemError::BadAccess(format!("no field `{f}` in `{s}`")))
            }
            (CType::Array(e, n), LocStep::Index(k)) => {
                if *k < *n {
                    Ok((**e).clone())
                } else {
                    Err(MemError::OutOfBounds {
                        lv: String::new(),
                        idx: *k as i64,
                    })
                }
            }
            _ => Err(MemError::BadAccess(format!("{step:?}"))),
        }
    }

    pub fn is_scalar(&self, loc: &Location) -> bool {
        matches!(self.type_of(loc), Ok(CType::Int))
    }

    /// Resolves an l-value expression; indices go through `index`, which
    /// returns `None` when the index is not a known constant.
    pub fn resolve_lvalue(
        &self,
        lv: &Expr,
        index: &mut dyn FnMut(&Expr) -> Option<i64>,
    ) -> Result<Location, MemError> {
        let loc = self.resolve_prefix(lv, index)?;
        if self.is_scalar(&loc) {
            Ok(loc)
        } else {
            Err(MemError::NotScalar(lv.to_string()))
        }
    }

    /// Like `resolve_lvalue` but aggregates are allowed.
    pub fn resolve_prefix(
        &self,
        lv: &Expr,
        index: &mut dyn FnMut(&Expr) -> Option<i64>,
    ) -> Result<Location, MemError> {
        match lv {
            Expr::Var(v) => {
                if self.root(v).is_none() {
                    return Err(MemError::UnknownVariable(v.clone()));
                }
                Ok(Location::root(v.clone()))
            }
            Expr::Field(b, f) => {
                let base = self.resolve_prefix(b, index)?;
                let l = base.push(LocStep::Dot(f.clone()));
                self.type_of(&l)?;
                Ok(l)
            }
            Expr::Arrow(b, f) => {
                let base = self.resolve_prefix(b, index)?;
                let l = base.push(LocStep::Arrow(f.clone()));
                self.type_of(&l)?;
                Ok(l)
            }
            Expr::Index(b, i) => {
                let base = self.resolve_prefix(b, index)?;
                let Some(k) = index(i) else {
                    return Err(MemError::SymbolicIndex(lv.to_string()));
                };
                let len = match self.type_of(&base)? {
                    CType::Array(_, n) => n,
                    _ => return Err(MemError::BadAccess(lv.to_string())),
                };
                if k < 0 || k as usize >= len {
                    return Err(MemError::OutOfBounds {
                        lv: lv.to_string(),
                        idx: k,
                    });
                }
                Ok(base.push(LocStep::Index(k as usize)))
            }
            _ => Err(MemError::BadAccess(lv.to_string())),
        }
    }
}

/// Default precondition: memory atoms, `loc == fresh` for every parameter
/// cell, then the user's `requires` clauses.
pub fn default_precondition(f: &FunctionDef, prog: &Program) -> Result<Assertion, MemError> {
    let layout = MemoryLayout::for_function(f, prog)?;
    let mut parts = layout.separation_facts.clone();
    for l in layout.param_locations() {
        parts.push(Assertion::eq(l.term(), Assertion::Sym(l.fresh_symbol())));
    }
    if let Some(c) = &f.spec {
        parts.extend(c.requires.iter().cloned());
    }
    Ok(Assertion::and(parts))
}

/// The closed part of the default precondition that is printed as `requires`.
pub fn surface_requires(f: &FunctionDef, layout: &MemoryLayout) -> Vec<Assertion> {
    let mut out = layout.separation_facts.clone();
    if let Some(c) = &f.spec {
        for r in &c.requires {
            if !out.contains(r) {
                out.push(r.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    const CHECKCAL: &str = "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
        void f(struct CheckCal *pIp) { }";

    #[test]
    fn scalar_param() {
        let l = flatten(&[("x".into(), CType::Int)], &[]).unwrap();
        assert_eq!(l.locations, vec![Location::root("x")]);
        assert!(l.separation_facts.is_empty());
    }

    #[test]
    fn checkcal_has_twelve_cells() {
        let p = parse_program(CHECKCAL).unwrap();
        let l = MemoryLayout::for_function(&p.functions[0], &p).unwrap();
        assert_eq!(l.locations.len(), 12);
        assert_eq!(l.locations[3].to_string(), "pIp->pkv[3]");
        assert_eq!(l.separation_facts, vec![Assertion::Valid(Lval::var("pIp"))]);
    }

    #[test]
    fn two_pointers_are_separated() {
        let p = parse_program("struct S { int a; };\nvoid f(struct S *a, struct S *b) {}").unwrap();
        let l = MemoryLayout::for_function(&p.functions[0], &p).unwrap();
        assert_eq!(l.separation_facts.len(), 3);
        assert!(matches!(l.separation_facts[2], Assertion::Separated(..)));
    }

    #[test]
    fn resolve_with_concrete_index() {
        let p = parse_program(CHECKCAL).unwrap();
        let l = MemoryLayout::for_function(&p.functions[0], &p).unwrap();
        let e = Expr::Index(
            Box::new(Expr::Arrow(Box::new(Expr::Var("pIp".into())), "pkv".into())),
            Box::new(Expr::Var("i".into())),
        );
        let loc = l.resolve_lvalue(&e, &mut |_| Some(3)).unwrap();
        assert_eq!(loc.to_string(), "pIp->pkv[3]");
        assert!(matches!(
            l.resolve_lvalue(&e, &mut |_| Some(10)),
            Err(MemError::OutOfBounds { idx: 10, .. })
        ));
        assert!(matches!(
            l.resolve_lvalue(&e, &mut |_| None),
            Err(MemError::SymbolicIndex(_))
        ));
    }

    #[test]
    fn default_pre_shapes() {
        let p = parse_program("void f(int x) {}\nvoid g() {}").unwrap();
        let a = default_precondition(&p.functions[0], &p).unwrap();
        assert_eq!(a.to_string(), "x == x_0");
        let b = default_precondition(&p.functions[1], &p).unwrap();
        assert_eq!(b, Assertion::tt());
    }
}
