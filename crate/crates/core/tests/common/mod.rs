//! Test support: a concrete evaluator for assertions and a concrete
//! interpreter for scalar C functions. Both are written against the AST
//! only and share no code with the symbolic engine or the verifier.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use rand::Rng;

use sespec::frontend::{
    Access, ArithOp, Assertion, BinOp, CmpOp, Expr, Label, LvBase, Lval, Stmt, UnOp,
};

pub fn crate_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn corpus_dir() -> PathBuf {
    crate_root().join("../../corpus")
}

pub fn faults_dir() -> PathBuf {
    crate_root().join("tests/fixtures/faults")
}

pub fn c_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .collect();
    v.sort();
    v
}

// ---- assertion evaluation ------------------------------------------

/// Values for memory slots, keyed the way counterexample models print them:
/// `x`, `p->a[2]`, `\at(x, Pre)`, havoc symbols by name.
pub struct Valuation<'a> {
    pub values: &'a BTreeMap<String, i64>,
    /// Indices at or past this share the cell at this index.
    pub max_array_len: usize,
    /// Range for quantified variables.
    pub quant: (i64, i64),
}

type Env = BTreeMap<String, i64>;

fn pointer_token(root: &str) -> i64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    root.hash(&mut h);
    (1 << 40) + (h.finish() % (1 << 20)) as i64
}

fn slot_key(lv: &Lval, v: &Valuation, env: &Env) -> Option<String> {
    let (label, mut s) = match &lv.base {
        LvBase::Var(n) => (None, n.clone()),
        LvBase::At(inner, l) => {
            let k = slot_key(inner, v, env)?;
            if k.starts_with("\\at(") {
                return None;
            }
            // `\at(p, L)->f` only reads the pointer at `L`; the field is
            // read in the current state.
            if inner.path.is_empty() && matches!(lv.path.first(), Some(Access::Arrow(_))) {
                (None, k)
            } else {
                (Some(*l), k)
            }
        }
    };
    for step in &lv.path {
        match step {
            Access::Dot(f) => {
                s.push('.');
                s.push_str(f);
            }
            Access::Arrow(f) => {
                s.push_str("->");
                s.push_str(f);
            }
            Access::Index(e) => {
                let k = value_in(e, v, env)?;
                if k < 0 {
                    return None;
                }
                s.push_str(&format!("[{}]", (k as usize).min(v.max_array_len)));
            }
        }
    }
    Some(match label {
        None => s,
        Some(Label::Pre) => format!("\\at({s}, Pre)"),
        Some(Label::LoopEntry) => format!("\\at({s}, LoopEntry)"),
    })
}

/// A variable, possibly under a label, with no access path.
fn is_bare(lv: &Lval) -> bool {
    lv.path.is_empty()
        && match &lv.base {
            LvBase::Var(_) => true,
            LvBase::At(inner, _) => is_bare(inner),
        }
}

fn lval_value(lv: &Lval, v: &Valuation, env: &Env) -> Option<i64> {
    if let LvBase::Var(n) = &lv.base {
        if lv.path.is_empty() {
            if let Some(x) = env.get(n) {
                return Some(*x);
            }
        }
    }
    let key = slot_key(lv, v, env)?;
    match v.values.get(&key) {
        Some(x) => Some(*x),
        // Bare names missing from the model are pointers; a pointer equals
        // its own snapshot.
        None if is_bare(lv) => Some(pointer_token(lv.root())),
        None => None,
    }
}

pub fn value(a: &Assertion, v: &Valuation) -> Option<i64> {
    value_in(a, v, &Env::new())
}

pub fn holds(a: &Assertion, v: &Valuation) -> Option<bool> {
    holds_in(a, v, &Env::new())
}

fn value_in(a: &Assertion, v: &Valuation, env: &Env) -> Option<i64> {
    Some(match a {
        Assertion::Int(k) => *k,
        Assertion::Lval(lv) => lval_value(lv, v, env)?,
        Assertion::Sym(s) => *env.get(s).or_else(|| v.values.get(s))?,
        Assertion::Result => *v.values.get("\\result")?,
        Assertion::Neg(x) => value_in(x, v, env)?.checked_neg()?,
        Assertion::Arith(op, x, y) => {
            let (x, y) = (value_in(x, v, env)?, value_in(y, v, env)?);
            match op {
                ArithOp::Add => x.checked_add(y)?,
                ArithOp::Sub => x.checked_sub(y)?,
                ArithOp::Mul => x.checked_mul(y)?,
                ArithOp::Div => x.checked_div(y)?,
                ArithOp::Mod => x.checked_rem(y)?,
            }
        }
        Assertion::Ite(c, x, y) => {
            if holds_in(c, v, env)? {
                value_in(x, v, env)?
            } else {
                value_in(y, v, env)?
            }
        }
        Assertion::Sum { lo, hi, var, body } => {
            let (lo, hi) = (value_in(lo, v, env)?, value_in(hi, v, env)?);
            let mut env = env.clone();
            let mut acc: i64 = 0;
            for k in lo..=hi {
                env.insert(var.clone(), k);
                acc = acc.checked_add(value_in(body, v, &env)?)?;
            }
            acc
        }
        Assertion::Bool(b) => *b as i64,
        _ => return holds_in(a, v, env).map(|b| b as i64),
    })
}

/// Cells under an aggregate slot, keyed by the path below it.
fn aggregate(lv: &Lval, v: &Valuation, env: &Env) -> Option<BTreeMap<String, i64>> {
    let key = slot_key(lv, v, env)?;
    let (inner, wrap) = match key.strip_prefix("\\at(").and_then(|k| k.rsplit_once(", ")) {
        Some((inner, label)) => (inner.to_string(), Some(label.trim_end_matches(')').to_string())),
        None => (key.clone(), None),
    };
    let mut out = BTreeMap::new();
    for (k, val) in v.values {
        let cell = match (&wrap, k.strip_prefix("\\at(").and_then(|k| k.rsplit_once(", "))) {
            (Some(l), Some((c, l2))) if l2.trim_end_matches(')') == l => c,
            (None, None) => k.as_str(),
            _ => continue,
        };
        if let Some(rest) = cell.strip_prefix(inner.as_str()) {
            if rest.starts_with('[') || rest.starts_with('.') || rest.starts_with("->") {
                out.insert(rest.to_string(), *val);
            }
        }
    }
    (!out.is_empty()).then_some(out)
}

fn holds_in(a: &Assertion, v: &Valuation, env: &Env) -> Option<bool> {
    Some(match a {
        Assertion::Bool(b) => *b,
        Assertion::Cmp(op @ (CmpOp::Eq | CmpOp::Ne), x, y)
            if matches!((&**x, &**y), (Assertion::Lval(l), Assertion::Lval(r))
                if !is_bare(l) && !is_bare(r) && lval_value(l, v, env).is_none() && lval_value(r, v, env).is_none()) =>
        {
            let (Assertion::Lval(l), Assertion::Lval(r)) = (&**x, &**y) else { unreachable!() };
            let (l, r) = (aggregate(l, v, env)?, aggregate(r, v, env)?);
            (l == r) == (*op == CmpOp::Eq)
        }
        Assertion::Cmp(op, x, y) => {
            let (x, y) = (value_in(x, v, env)?, value_in(y, v, env)?);
            match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
            }
        }
        Assertion::Not(x) => !holds_in(x, v, env)?,
        Assertion::And(xs) => {
            for x in xs {
                if !holds_in(x, v, env)? {
                    return Some(false);
                }
            }
            true
        }
        Assertion::Or(xs) => {
            for x in xs {
                if holds_in(x, v, env)? {
                    return Some(true);
                }
            }
            false
        }
        Assertion::Implies(x, y) => !holds_in(x, v, env)? || holds_in(y, v, env)?,
        Assertion::Ite(c, x, y) => {
            if holds_in(c, v, env)? {
                holds_in(x, v, env)?
            } else {
                holds_in(y, v, env)?
            }
        }
        Assertion::Forall(x, body) | Assertion::Exists(x, body) => {
            let want = matches!(a, Assertion::Exists(..));
            let mut env = env.clone();
            for k in v.quant.0..=v.quant.1 {
                env.insert(x.clone(), k);
                if holds_in(body, v, &env)? == want {
                    return Some(want);
                }
            }
            !want
        }
        Assertion::Valid(_) => true,
        Assertion::Separated(a, b) => a.root() != b.root(),
        Assertion::Placeholder(_) => return None,
        other => value_in(other, v, env)? != 0,
    })
}

// ---- concrete interpreter ------------------------------------------

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done(BTreeMap<String, i64>),
    /// Division by zero, overflow or running out of fuel.
    Stuck,
}

enum Flow {
    Next,
    Return,
    Break,
    Continue,
}

fn eval_expr(e: &Expr, st: &BTreeMap<String, i64>) -> Option<i64> {
    Some(match e {
        Expr::Int(k) => *k,
        Expr::Var(n) => *st.get(n)?,
        Expr::Unary(UnOp::Neg, x) => eval_expr(x, st)?.checked_neg()?,
        Expr::Unary(UnOp::Not, x) => (eval_expr(x, st)? == 0) as i64,
        Expr::Binary(op, x, y) => {
            let l = eval_expr(x, st)?;
            match op {
                BinOp::And => return Some((l != 0 && eval_expr(y, st)? != 0) as i64),
                BinOp::Or => return Some((l != 0 || eval_expr(y, st)? != 0) as i64),
                _ => {}
            }
            let r = eval_expr(y, st)?;
            match op {
                BinOp::Add => l.checked_add(r)?,
                BinOp::Sub => l.checked_sub(r)?,
                BinOp::Mul => l.checked_mul(r)?,
                BinOp::Div => l.checked_div(r)?,
                BinOp::Mod => l.checked_rem(r)?,
                BinOp::Lt => (l < r) as i64,
                BinOp::Le => (l <= r) as i64,
                BinOp::Gt => (l > r) as i64,
                BinOp::Ge => (l >= r) as i64,
                BinOp::Eq => (l == r) as i64,
                BinOp::Ne => (l != r) as i64,
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
        _ => return None,
    })
}

fn exec_block(stmts: &[Stmt], st: &mut BTreeMap<String, i64>, fuel: &mut usize) -> Option<Flow> {
    for s in stmts {
        match exec_stmt(s, st, fuel)? {
            Flow::Next => {}
            other => return Some(other),
        }
    }
    Some(Flow::Next)
}

fn exec_stmt(s: &Stmt, st: &mut BTreeMap<String, i64>, fuel: &mut usize) -> Option<Flow> {
    *fuel = fuel.checked_sub(1)?;
    match s {
        Stmt::Decl { name, init, .. } => {
            let v = match init {
                Some(e) => eval_expr(e, st)?,
                None => 0,
            };
            st.insert(name.clone(), v);
        }
        Stmt::Assign { target: Expr::Var(n), value } => {
            let v = eval_expr(value, st)?;
            st.insert(n.clone(), v);
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let b = if eval_expr(cond, st)? != 0 { then_branch } else { else_branch };
            return exec_block(b, st, fuel);
        }
        Stmt::While { cond, body, .. } => {
            while eval_expr(cond, st)? != 0 {
                match exec_block(body, st, fuel)? {
                    Flow::Break => break,
                    Flow::Return => return Some(Flow::Return),
                    Flow::Next | Flow::Continue => {}
                }
            }
        }
        Stmt::Block(b) => return exec_block(b, st, fuel),
        Stmt::Return(e) => {
            if let Some(e) = e {
                let v = eval_expr(e, st)?;
                st.insert("\\result".into(), v);
            }
            return Some(Flow::Return);
        }
        Stmt::Assert { .. } => {}
        Stmt::Break => return Some(Flow::Break),
        Stmt::Continue => return Some(Flow::Continue),
        _ => return None,
    }
    Some(Flow::Next)
}

/// Runs scalar statements from `st`.
pub fn run(body: &[Stmt], st: &BTreeMap<String, i64>) -> Outcome {
    let mut st = st.clone();
    let mut fuel = 100_000;
    match exec_block(body, &mut st, &mut fuel) {
        Some(_) => Outcome::Done(st),
        None => Outcome::Stuck,
    }
}

// ---- random loop-free segments -------------------------------------

const VARS: [&str; 3] = ["x", "y", "z"];

fn gen_term(rng: &mut impl Rng, n: usize, depth: u32) -> String {
    let v = VARS[rng.gen_range(0..n)];
    if depth == 0 {
        return if rng.gen_bool(0.7) {
            v.to_string()
        } else {
            rng.gen_range(-3..=3i64).to_string()
        };
    }
    match rng.gen_range(0..7) {
        0 => format!("{} + {}", gen_term(rng, n, depth - 1), gen_term(rng, n, depth - 1)),
        1 => format!("{} - {}", gen_term(rng, n, depth - 1), gen_term(rng, n, depth - 1)),
        2 => format!("{} * {v}", rng.gen_range(-2..=3)),
        3 => format!("{v} / 2"),
        4 => format!("{v} % 3"),
        5 => format!("-{v}"),
        _ => gen_term(rng, n, 0),
    }
}

fn gen_cond(rng: &mut impl Rng, n: usize) -> String {
    let op = ["<", "<=", ">", ">=", "==", "!="][rng.gen_range(0..6)];
    let c = format!("{} {op} {}", gen_term(rng, n, 1), gen_term(rng, n, 0));
    match rng.gen_range(0..6) {
        0 => format!("{c} && {} > {}", VARS[rng.gen_range(0..n)], rng.gen_range(-3..=3)),
        1 => format!("{c} || {} == {}", VARS[rng.gen_range(0..n)], rng.gen_range(-3..=3)),
        2 => format!("!({c})"),
        _ => c,
    }
}

fn gen_block(rng: &mut impl Rng, n: usize, branches: &mut usize, depth: u32, indent: &str) -> String {
    let mut out = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        if *branches > 0 && depth < 2 && rng.gen_bool(0.4) {
            *branches -= 1;
            let inner = format!("{indent}    ");
            out.push_str(&format!("{indent}if ({}) {{\n", gen_cond(rng, n)));
            out.push_str(&gen_block(rng, n, branches, depth + 1, &inner));
            if rng.gen_bool(0.5) {
                out.push_str(&format!("{indent}}} else {{\n"));
                out.push_str(&gen_block(rng, n, branches, depth + 1, &inner));
            }
            out.push_str(&format!("{indent}}}\n"));
        } else {
            let v = VARS[rng.gen_range(0..n)];
            out.push_str(&format!("{indent}{v} = {};\n", gen_term(rng, n, 2)));
        }
    }
    out
}

/// A loop-free `void` function over up to three `int` parameters with at
/// most three `if` statements.
pub fn random_segment(rng: &mut impl Rng) -> (String, usize) {
    let n = rng.gen_range(1..=3);
    let mut branches = rng.gen_range(0..=3);
    let params = VARS[..n].iter().map(|v| format!("int {v}")).collect::<Vec<_>>().join(", ");
    let body = gen_block(rng, n, &mut branches, 0, "    ");
    (format!("void seg({params}) {{\n{body}}}\n"), n)
}

pub fn var_names(n: usize) -> &'static [&'static str] {
    &VARS[..n]
}

// ---- mutation ------------------------------------------------------

/// `a` with its first integer literal increased by one, or negated when it
/// has none.
pub fn mutate(a: &Assertion) -> Assertion {
    fn bump(a: &Assertion, done: &mut bool) -> Assertion {
        if *done {
            return a.clone();
        }
        let b = |x: &Assertion, d: &mut bool| Box::new(bump(x, d));
        match a {
            Assertion::Int(k) => {
                *done = true;
                Assertion::Int(k + 1)
            }
            Assertion::Neg(x) => Assertion::Neg(b(x, done)),
            Assertion::Arith(op, x, y) => {
                let x = b(x, done);
                Assertion::Arith(*op, x, b(y, done))
            }
            Assertion::Cmp(op, x, y) => {
                let x = b(x, done);
                Assertion::Cmp(*op, x, b(y, done))
            }
            Assertion::Not(x) => Assertion::Not(b(x, done)),
            Assertion::And(xs) => Assertion::And(xs.iter().map(|x| bump(x, done)).collect()),
            Assertion::Or(xs) => Assertion::Or(xs.iter().map(|x| bump(x, done)).collect()),
            // Keep guards intact so the mutation lands in the conclusion.
            Assertion::Implies(x, y) => Assertion::Implies(x.clone(), b(y, done)),
            other => other.clone(),
        }
    }
    let mut done = false;
    let out = bump(a, &mut done);
    if done {
        out
    } else {
        Assertion::Not(Box::new(a.clone()))
    }
}
