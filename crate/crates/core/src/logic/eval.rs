//! Three-valued evaluation of `CExpr` under a partial assignment.

use super::lower::CExpr;
use crate::frontend::ArithOp;

/// Largest range a quantifier or sum is expanded over.
pub const MAX_EXPANSION: i64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum V {
    I(i64),
    B(bool),
    /// Depends on an unassigned slot.
    Unk,
    /// Runtime fault: out-of-bounds read, division by zero, overflow.
    Err,
}

impl V {
    fn truth(self) -> V {
        match self {
            V::I(n) => V::B(n != 0),
            other => other,
        }
    }

    fn int(self) -> V {
        match self {
            V::B(b) => V::I(b as i64),
            other => other,
        }
    }

    pub fn is_true(self) -> bool {
        self.truth() == V::B(true)
    }
}

pub fn eval(e: &CExpr, asg: &[Option<i64>], binders: &mut Vec<i64>) -> V {
    match e {
        CExpr::Int(n) => V::I(*n),
        CExpr::Bool(b) => V::B(*b),
        CExpr::Var(i) => match asg[*i] {
            Some(v) => V::I(v),
            None => V::Unk,
        },
        CExpr::Bound(i) => V::I(binders[*i]),
        CExpr::Fault => V::Err,
        CExpr::Select(idx, opts) => match eval(idx, asg, binders).int() {
            V::I(k) if k >= 0 && (k as usize) < opts.len() => eval(&opts[k as usize], asg, binders),
            V::I(_) => V::Err,
            other => other,
        },
        CExpr::Neg(a) => match eval(a, asg, binders).int() {
            V::I(n) => n.checked_neg().map(V::I).unwrap_or(V::Err),
            other => other,
        },
        CExpr::Arith(op, a, b) => {
            let x = eval(a, asg, binders).int();
            let y = eval(b, asg, binders).int();
            match (x, y) {
                (V::I(x), V::I(y)) => arith(*op, x, y),
                (V::Err, _) | (_, V::Err) => V::Err,
                (_, V::I(0)) if matches!(op, ArithOp::Div | ArithOp::Mod) => V::Err,
                (V::I(0), _) | (_, V::I(0)) if *op == ArithOp::Mul => V::I(0),
                _ => V::Unk,
            }
        }
        CExpr::Cmp(op, a, b) => {
            let x = eval(a, asg, binders).int();
            let y = eval(b, asg, binders).int();
            match (x, y) {
                (V::I(x), V::I(y)) => V::B(op.holds(x, y)),
                (V::Err, _) | (_, V::Err) => V::Err,
                _ => V::Unk,
            }
        }
        CExpr::Not(a) => match eval(a, asg, binders).truth() {
            V::B(b) => V::B(!b),
            other => other,
        },
        CExpr::And(v) => {
            let mut acc = V::B(true);
            for a in v {
                match eval(a, asg, binders).truth() {
                    V::B(false) => return V::B(false),
                    V::B(true) => {}
                    V::Err => acc = V::Err,
                    _ => {
                        if acc != V::Err {
                            acc = V::Unk
                        }
                    }
                }
            }
            acc
        }
        CExpr::Or(v) => {
            let mut acc = V::B(false);
            for a in v {
                match eval(a, asg, binders).truth() {
                    V::B(true) => return V::B(true),
                    V::B(false) => {}
                    V::Err => acc = V::Err,
                    _ => {
                        if acc != V::Err {
                            acc = V::Unk
                        }
                    }
                }
            }
            acc
        }
        CExpr::Implies(a, b) => match eval(a, asg, binders).truth() {
            V::B(false) => V::B(true),
            V::B(true) => eval(b, asg, binders).truth(),
            V::Err => V::Err,
            _ => match eval(b, asg, binders).truth() {
                V::B(true) => V::B(true),
                _ => V::Unk,
            },
        },
        CExpr::Ite(c, a, b) => match eval(c, asg, binders).truth() {
            V::B(true) => eval(a, asg, binders),
            V::B(false) => eval(b, asg, binders),
            other => other,
        },
        CExpr::Forall(lo, hi, body) | CExpr::Exists(lo, hi, body) => {
            let forall = matches!(e, CExpr::Forall(..));
            let (lo, hi) = match range(lo, hi, asg, binders) {
                Ok(r) => r,
                Err(v) => return v,
            };
            let mut acc = V::B(forall);
            for k in lo..=hi {
                binders.push(k);
                let r = eval(body, asg, binders).truth();
                binders.pop();
                match r {
                    V::B(b) if b != forall => return V::B(b),
                    V::B(_) => {}
                    V::Err => acc = V::Err,
                    _ => {
                        if acc != V::Err {
                            acc = V::Unk
                        }
                    }
                }
            }
            acc
        }
        CExpr::Sum(lo, hi, body) => {
            let (lo, hi) = match range(lo, hi, asg, binders) {
                Ok(r) => r,
                Err(v) => return v,
            };
            let mut total: i64 = 0;
            let mut unk = false;
            for k in lo..=hi {
                binders.push(k);
                let r = eval(body, asg, binders).int();
                binders.pop();
                match r {
                    V::I(n) => match total.checked_add(n) {
                        Some(t) => total = t,
                        None => return V::Err,
                    },
                    V::Err => return V::Err,
                    _ => unk = true,
                }
            }
            if unk {
                V::Unk
            } else {
                V::I(total)
            }
        }
    }
}

fn range(lo: &CExpr, hi: &CExpr, asg: &[Option<i64>], binders: &mut Vec<i64>) -> Result<(i64, i64), V> {
    let lo = eval(lo, asg, binders).int();
    let hi = eval(hi, asg, binders).int();
    match (lo, hi) {
        (V::I(l), V::I(h)) => {
            if h.saturating_sub(l) > MAX_EXPANSION {
                Err(V::Err)
            } else {
                Ok((l, h))
            }
        }
        (V::Err, _) | (_, V::Err) => Err(V::Err),
        _ => Err(V::Unk),
    }
}

pub fn arith(op: ArithOp, x: i64, y: i64) -> V {
    let r = match op {
        ArithOp::Add => x.checked_add(y),
        ArithOp::Sub => x.checked_sub(y),
        ArithOp::Mul => x.checked_mul(y),
        ArithOp::Div => x.checked_div(y),
        ArithOp::Mod => x.checked_rem(y),
    };
    r.map(V::I).unwrap_or(V::Err)
}
