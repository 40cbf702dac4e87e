//! Linear/polynomial normal form for integer terms plus a light
//! boolean simplifier built on it.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{Access, ArithOp, Assertion, CmpOp, Lval, LvBase};

/// A monomial: sorted atoms, repeated for powers. Empty means the constant.
pub type Mono = Vec<Assertion>;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    pub terms: BTreeMap<Mono, i64>,
}

impl Poly {
    pub fn constant(c: i64) -> Poly {
        let mut p = Poly::default();
        if c != 0 {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    pub fn atom(a: Assertion) -> Poly {
        let mut p = Poly::default();
        p.terms.insert(vec![a], 1);
        p
    }

    pub fn as_const(&self) -> Option<i64> {
        match self.terms.len() {
            0 => Some(0),
            1 => self.terms.get(&Vec::new()).copied(),
            _ => None,
        }
    }

    pub fn constant_part(&self) -> i64 {
        self.terms.get(&Vec::new()).copied().unwrap_or(0)
    }

    pub fn add(&self, o: &Poly) -> Option<Poly> {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            let e = out.terms.entry(m.clone()).or_insert(0);
            *e = e.checked_add(*c)?;
            if *e == 0 {
                out.terms.remove(m);
            }
        }
        Some(out)
    }

    pub fn scale(&self, k: i64) -> Option<Poly> {
        let mut out = Poly::default();
        if k == 0 {
            return Some(out);
        }
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), c.checked_mul(k)?);
        }
        Some(out)
    }

    pub fn neg(&self) -> Option<Poly> {
        self.scale(-1)
    }

    pub fn sub(&self, o: &Poly) -> Option<Poly> {
        self.add(&o.neg()?)
    }

    pub fn mul(&self, o: &Poly) -> Option<Poly> {
        let mut out = Poly::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let mut m = m1.clone();
                m.extend(m2.iter().cloned());
                m.sort();
                let t = Poly {
                    terms: BTreeMap::from([(m, c1.checked_mul(*c2)?)]),
                };
                out = out.add(&t)?;
            }
        }
        Some(out)
    }

    pub fn atoms(&self) -> BTreeSet<&Assertion> {
        self.terms.keys().flatten().collect()
    }

    /// Coefficient of `a` when it occurs only linearly.
    pub fn linear_coeff(&self, a: &Assertion) -> Option<i64> {
        let mut coeff = None;
        for (m, c) in &self.terms {
            if m.len() == 1 && &m[0] == a {
                coeff = Some(*c);
            } else if m.iter().any(|x| x == a || mentions(x, a)) {
                return None;
            }
        }
        coeff
    }

    /// Solves `self == 0` for `a`, when its coefficient is ±1.
    pub fn solve_for(&self, a: &Assertion) -> Option<Assertion> {
        let c = self.linear_coeff(a)?;
        if c != 1 && c != -1 {
            return None;
        }
        let mut rest = self.clone();
        rest.terms.remove(&vec![a.clone()]);
        // a*c + rest == 0  =>  a == -rest / c
        let v = rest.scale(-c)?;
        Some(v.to_assertion())
    }

    pub fn to_assertion(&self) -> Assertion {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (m, c) in &self.terms {
            if m.is_empty() {
                continue;
            }
            if *c > 0 {
                pos.push((m, *c));
            } else {
                neg.push((m, -*c));
            }
        }
        let mut k = self.constant_part();
        let mut acc: Option<Assertion> = None;
        if pos.is_empty() && k != 0 && !neg.is_empty() {
            // `3 - y` reads better than `-y + 3`
            acc = Some(Assertion::Int(k));
            k = 0;
        }
        for (m, c) in pos {
            let t = mono_term(m, c);
            acc = Some(match acc {
                None => t,
                Some(a) => Assertion::add(a, t),
            });
        }
        for (m, c) in neg {
            let t = mono_term(m, c);
            acc = Some(match acc {
                None => Assertion::Neg(Box::new(t)),
                Some(a) => Assertion::sub(a, t),
            });
        }
        match acc {
            None => Assertion::Int(k),
            Some(a) if k > 0 => Assertion::add(a, Assertion::Int(k)),
            Some(a) if k < 0 => match k.checked_neg() {
                Some(n) => Assertion::sub(a, Assertion::Int(n)),
                None => Assertion::add(a, Assertion::Int(k)),
            },
            Some(a) => a,
        }
    }

    fn gcd_nonconst(&self) -> i64 {
        let mut g = 0i64;
        for (m, c) in &self.terms {
            if !m.is_empty() {
                g = gcd(g, c.abs());
            }
        }
        g
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn mentions(hay: &Assertion, needle: &Assertion) -> bool {
    let mut hit = false;
    hay.visit(&mut |x| {
        if x == needle {
            hit = true;
        }
    });
    hit
}

fn mono_term(m: &Mono, c: i64) -> Assertion {
    let mut it = m.iter().cloned();
    let mut t = it.next().expect("nonempty monomial");
    for a in it {
        t = Assertion::mul(t, a);
    }
    if c == 1 {
        t
    } else {
        Assertion::mul(Assertion::Int(c), t)
    }
}

/// Polynomial view of an integer term; `None` for boolean formulas.
pub fn poly_of(a: &Assertion) -> Option<Poly> {
    Some(match a {
        Assertion::Int(n) => Poly::constant(*n),
        Assertion::Neg(x) => poly_of(x)?.neg()?,
        Assertion::Arith(op, x, y) => {
            let px = poly_of(x)?;
            let py = poly_of(y)?;
            match op {
                ArithOp::Add => px.add(&py)?,
                ArithOp::Sub => px.sub(&py)?,
                ArithOp::Mul => px.mul(&py)?,
                ArithOp::Div | ArithOp::Mod => match (px.as_const(), py.as_const()) {
                    (Some(u), Some(v)) if v != 0 => Poly::constant(if *op == ArithOp::Div {
                        u.checked_div(v)?
                    } else {
                        u.checked_rem(v)?
                    }),
                    (_, Some(1)) if *op == ArithOp::Div => px,
                    (_, Some(-1)) if *op == ArithOp::Div => px.neg()?,
                    (_, Some(1)) | (_, Some(-1)) => Poly::constant(0),
                    _ => Poly::atom(Assertion::Arith(
                        *op,
                        Box::new(px.to_assertion()),
                        Box::new(py.to_assertion()),
                    )),
                },
            }
        }
        Assertion::Lval(lv) => Poly::atom(Assertion::Lval(simplify_lval(lv))),
        Assertion::Sym(_) | Assertion::Result => Poly::atom(a.clone()),
        Assertion::Ite(c, x, y) => {
            let c = simplify(c);
            match c {
                Assertion::Bool(true) => poly_of(x)?,
                Assertion::Bool(false) => poly_of(y)?,
                c => {
                    let x = simplify_term(x);
                    let y = simplify_term(y);
                    if x == y {
                        poly_of(&x)?
                    } else {
                        Poly::atom(Assertion::Ite(Box::new(c), Box::new(x), Box::new(y)))
                    }
                }
            }
        }
        Assertion::Sum { lo, hi, var, body } => {
            let lo = simplify_term(lo);
            let hi = simplify_term(hi);
            if let (Some(l), Some(h)) = (poly_of(&lo)?.as_const(), poly_of(&hi)?.as_const()) {
                if h < l {
                    return Some(Poly::constant(0));
                }
            }
            Poly::atom(Assertion::Sum {
                lo: Box::new(lo),
                hi: Box::new(hi),
                var: var.clone(),
                body: Box::new(simplify_term(body)),
            })
        }
        Assertion::Placeholder(_) => Poly::atom(a.clone()),
        _ => return None,
    })
}

pub fn simplify_term(a: &Assertion) -> Assertion {
    match poly_of(a) {
        Some(p) => p.to_assertion(),
        None => simplify(a),
    }
}

fn simplify_lval(lv: &Lval) -> Lval {
    let base = match &lv.base {
        LvBase::Var(v) => LvBase::Var(v.clone()),
        LvBase::At(inner, l) => LvBase::At(Box::new(simplify_lval(inner)), *l),
    };
    Lval {
        base,
        path: lv
            .path
            .iter()
            .map(|a| match a {
                Access::Index(i) => Access::Index(Box::new(simplify_term(i))),
                other => other.clone(),
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormOp {
    /// `P <= 0`
    Le,
    /// `P == 0`
    Eq,
    /// `P != 0`
    Ne,
}

/// Normal form `P op 0` of an integer comparison.
pub fn norm_cmp(op: CmpOp, a: &Assertion, b: &Assertion) -> Option<(NormOp, Poly)> {
    let d = poly_of(a)?.sub(&poly_of(b)?)?;
    let one = Poly::constant(1);
    let (nop, p) = match op {
        CmpOp::Le => (NormOp::Le, d),
        CmpOp::Lt => (NormOp::Le, d.add(&one)?),
        CmpOp::Ge => (NormOp::Le, d.neg()?),
        CmpOp::Gt => (NormOp::Le, d.neg()?.add(&one)?),
        CmpOp::Eq => (NormOp::Eq, d),
        CmpOp::Ne => (NormOp::Ne, d),
    };
    let g = p.gcd_nonconst();
    let p = if g > 1 {
        let k = p.constant_part();
        let mut q = Poly::default();
        for (m, c) in &p.terms {
            if !m.is_empty() {
                q.terms.insert(m.clone(), c / g);
            }
        }
        match nop {
            NormOp::Le => q.add(&Poly::constant(div_ceil(k, g)))?,
            _ if k % g == 0 => q.add(&Poly::constant(k / g))?,
            _ => p,
        }
    } else {
        p
    };
    let p = if nop != NormOp::Le && leading_negative(&p) {
        p.neg()?
    } else {
        p
    };
    Some((nop, p))
}

fn div_ceil(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a > 0) == (b > 0)) {
        q + 1
    } else {
        q
    }
}

fn leading_negative(p: &Poly) -> bool {
    p.terms
        .iter()
        .find(|(m, _)| !m.is_empty())
        .map(|(_, c)| *c < 0)
        .unwrap_or(false)
}

/// Semantic key of an atomic formula; equal keys mean equivalent atoms.
pub fn atom_key(a: &Assertion) -> Option<(NormOp, Poly)> {
    match a {
        Assertion::Cmp(op, x, y) => norm_cmp(*op, x, y),
        _ => None,
    }
}

/// Renders a comparison with positive terms on the left.
fn render_cmp(op: CmpOp, a: &Assertion, b: &Assertion) -> Assertion {
    let (Some(pa), Some(pb)) = (poly_of(a), poly_of(b)) else {
        return Assertion::cmp(op, simplify(a), simplify(b));
    };
    let Some(d) = pa.sub(&pb) else {
        return Assertion::cmp(op, pa.to_assertion(), pb.to_assertion());
    };
    if let Some(c) = d.as_const() {
        return Assertion::Bool(op.holds(c, 0));
    }
    let mut lhs = Poly::default();
    let mut rhs = Poly::default();
    for (m, c) in &d.terms {
        if m.is_empty() {
            rhs.terms.insert(m.clone(), -c);
        } else if *c > 0 {
            lhs.terms.insert(m.clone(), *c);
        } else {
            rhs.terms.insert(m.clone(), -c);
        }
    }
    Assertion::cmp(op, lhs.to_assertion(), rhs.to_assertion())
}

/// Bottom-up simplification: arithmetic normal forms, constant folding,
/// flattening, duplicate and contradiction removal.
pub fn simplify(a: &Assertion) -> Assertion {
    match a {
        Assertion::Int(_)
        | Assertion::Neg(_)
        | Assertion::Arith(..)
        | Assertion::Lval(_)
        | Assertion::Sym(_)
        | Assertion::Result
        | Assertion::Ite(..)
        | Assertion::Sum { .. } => match poly_of(a) {
            Some(p) => p.to_assertion(),
            None => match a {
                Assertion::Ite(c, x, y) => match simplify(c) {
                    Assertion::Bool(true) => simplify(x),
                    Assertion::Bool(false) => simplify(y),
                    c => {
                        let (x, y) = (simplify(x), simplify(y));
                        if x == y {
                            x
                        } else {
                            Assertion::Ite(Box::new(c), Box::new(x), Box::new(y))
                        }
                    }
                },
                _ => a.clone(),
            },
        },
        Assertion::Bool(_) | Assertion::Placeholder(_) => a.clone(),
        Assertion::Valid(lv) => Assertion::Valid(simplify_lval(lv)),
        Assertion::Separated(x, y) => Assertion::Separated(simplify_lval(x), simplify_lval(y)),
        Assertion::Cmp(op, x, y) => render_cmp(*op, x, y),
        Assertion::Not(x) => negate(&simplify(x)),
        Assertion::And(v) => simplify_and(v.iter().map(simplify).collect()),
        Assertion::Or(v) => simplify_or(v.iter().map(simplify).collect()),
        Assertion::Implies(x, y) => {
            let x = simplify(x);
            let y = simplify(y);
            if x == y {
                return Assertion::tt();
            }
            Assertion::implies(x, y)
        }
        Assertion::Forall(v, b) => match simplify(b) {
            Assertion::Bool(t) => Assertion::Bool(t),
            b => Assertion::Forall(v.clone(), Box::new(b)),
        },
        Assertion::Exists(v, b) => match simplify(b) {
            Assertion::Bool(t) => Assertion::Bool(t),
            b if !b.lvals().iter().any(|l| l.as_var() == Some(v.as_str())) => b,
            b => Assertion::Exists(v.clone(), Box::new(b)),
        },
    }
}

/// Logical negation pushed through comparisons and connectives one level.
pub fn negate(a: &Assertion) -> Assertion {
    match a {
        Assertion::Bool(b) => Assertion::Bool(!b),
        Assertion::Cmp(op, x, y) => Assertion::Cmp(op.negate(), x.clone(), y.clone()),
        Assertion::Not(x) => (**x).clone(),
        other => Assertion::Not(Box::new(other.clone())),
    }
}

fn simplify_and(parts: Vec<Assertion>) -> Assertion {
    let mut out: Vec<Assertion> = Vec::new();
    let mut keys: Vec<Option<(NormOp, Poly)>> = Vec::new();
    for p in parts {
        let flat: Vec<Assertion> = match p {
            Assertion::And(v) => v,
            other => vec![other],
        };
        for q in flat {
            match q {
                Assertion::Bool(true) => continue,
                Assertion::Bool(false) => return Assertion::Bool(false),
                _ => {}
            }
            if out.contains(&q) {
                continue;
            }
            let nq = negate(&q);
            if out.contains(&nq) {
                return Assertion::Bool(false);
            }
            let k = atom_key(&q);
            if let Some(k) = &k {
                if keys.iter().flatten().any(|x| x == k) {
                    continue;
                }
                if keys.iter().flatten().any(|x| contradicts(x, k)) {
                    return Assertion::Bool(false);
                }
            }
            keys.push(k);
            out.push(q);
        }
    }
    // `P <= 0` together with `-P <= 0` becomes `P == 0`.
    let mut i = 0;
    while i < out.len() {
        let merged = match &keys[i] {
            Some((NormOp::Le, p)) => {
                let np = p.neg();
                keys.iter()
                    .position(|k| matches!((k, &np), (Some((NormOp::Le, q)), Some(n)) if q == n))
                    .map(|j| (j, p.clone()))
            }
            _ => None,
        };
        if let Some((j, p)) = merged {
            // Keep the written sides unless normalizing tightened the bound.
            let eq = match &out[i] {
                Assertion::Cmp(_, x, y)
                    if matches!(norm_cmp(CmpOp::Eq, x, y), Some((_, q)) if q == p || q.neg().as_ref() == Some(&p)) =>
                {
                    render_cmp(CmpOp::Eq, x, y)
                }
                _ => render_cmp(CmpOp::Eq, &p.to_assertion(), &Assertion::Int(0)),
            };
            let key = atom_key(&eq);
            out[i] = eq;
            keys[i] = key;
            out.remove(j);
            keys.remove(j);
            if j < i {
                i -= 1;
            }
        }
        i += 1;
    }
    Assertion::and(out)
}

fn contradicts(a: &(NormOp, Poly), b: &(NormOp, Poly)) -> bool {
    let diff_const = |p: &Poly, q: &Poly| p.sub(q).and_then(|d| d.as_const());
    match (a, b) {
        ((NormOp::Le, p), (NormOp::Le, q)) => {
            // p <= 0 and q <= 0 with p + q a positive constant
            matches!(p.add(q).and_then(|s| s.as_const()), Some(c) if c > 0)
        }
        ((NormOp::Eq, p), (NormOp::Ne, q)) | ((NormOp::Ne, q), (NormOp::Eq, p)) => p == q,
        ((NormOp::Eq, p), (NormOp::Eq, q)) => matches!(diff_const(p, q), Some(c) if c != 0),
        ((NormOp::Eq, p), (NormOp::Le, q)) | ((NormOp::Le, q), (NormOp::Eq, p)) => {
            // p == 0 fixes q to q - p or q + p
            matches!(diff_const(q, p), Some(c) if c > 0)
                || matches!(p.add(q).and_then(|s| s.as_const()), Some(c) if c > 0)
        }
        _ => false,
    }
}

fn simplify_or(parts: Vec<Assertion>) -> Assertion {
    let mut out: Vec<Assertion> = Vec::new();
    for p in parts {
        let flat: Vec<Assertion> = match p {
            Assertion::Or(v) => v,
            other => vec![other],
        };
        for q in flat {
            match q {
                Assertion::Bool(false) => continue,
                Assertion::Bool(true) => return Assertion::Bool(true),
                _ => {}
            }
            if out.contains(&q) {
                continue;
            }
            if out.contains(&negate(&q)) {
                return Assertion::Bool(true);
            }
            out.push(q);
        }
    }
    Assertion::or(out)
}

/// True when the two terms normalize to the same polynomial.
pub fn terms_equal(a: &Assertion, b: &Assertion) -> bool {
    match (poly_of(a), poly_of(b)) {
        (Some(p), Some(q)) => p == q,
        _ => simplify(a) == simplify(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_assertion;

    fn s(t: &str) -> String {
        simplify(&parse_assertion(t).unwrap()).to_string()
    }

    #[test]
    fn tightened_bounds_merge_to_the_tight_equality() {
        assert_eq!(s("4 * a <= -3 && 2 * a > -3"), "a == -1");
        assert_eq!(s("i <= n && i >= n"), "i == n");
    }

    #[test]
    fn arithmetic_normalizes() {
        assert_eq!(s("x + 0 == x"), "\\true");
        assert_eq!(s("i + 1 - 1 < n"), "i < n");
        assert_eq!(s("0 + 1 <= 3"), "\\true");
        assert_eq!(s("2 * x - x == y"), "x == y");
    }

    #[test]
    fn contradictions_and_merges() {
        assert_eq!(s("x < 3 && x > 5"), "\\false");
        assert_eq!(s("x <= 3 && x >= 3"), "x == 3");
        assert_eq!(s("x == 1 && x != 1"), "\\false");
        assert_eq!(s("x == 1 && x == 2"), "\\false");
    }

    #[test]
    fn solve_linear() {
        let p = poly_of(&parse_assertion("x + y - 3").unwrap()).unwrap();
        let x = parse_assertion("x").unwrap();
        assert_eq!(p.solve_for(&x).unwrap().to_string(), "3 - y");
    }

    #[test]
    fn strict_to_nonstrict() {
        let a = parse_assertion("i < n").unwrap();
        let b = parse_assertion("i + 1 <= n").unwrap();
        assert_eq!(atom_key(&a), atom_key(&b));
        let c = parse_assertion("2 * i < 5").unwrap();
        let d = parse_assertion("i <= 2").unwrap();
        assert_eq!(atom_key(&c), atom_key(&d));
    }
}
