//! Bounded model search: depth-first enumeration with equality
//! propagation, then seeded random probes when the budget runs out.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{eval, V};
use super::lower::{CExpr, LowerError, Lowerer};
use super::{DomainConfig, Slot};
use crate::frontend::{ArithOp, Assertion, CmpOp};
use crate::memstore::MemoryLayout;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<Slot, i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchOutcome {
    /// Assignment under which every hypothesis holds and the goal does not.
    pub model: Option<Model>,
    /// The whole domain was covered (no sampling was needed).
    pub exhaustive: bool,
    pub states: usize,
}

/// Searches for a state satisfying `hyps` where `goal` is false or faults.
pub fn find_counterexample(
    layout: &MemoryLayout,
    cfg: &DomainConfig,
    hyps: &[Assertion],
    goal: &Assertion,
) -> Result<SearchOutcome, LowerError> {
    let mut lw = Lowerer::new(layout, cfg);
    let mut hs = Vec::new();
    for h in hyps {
        split_and(lw.lower(h)?, &mut hs);
    }
    let g = lw.lower(goal)?;
    let problem = Problem::new(lw.slots.len(), hs, g);
    let (asg, exhaustive, states) = problem.run(cfg);
    Ok(SearchOutcome {
        model: asg.map(|a| Model {
            values: lw
                .slots
                .iter()
                .cloned()
                .zip(a)
                .map(|(s, v)| (s, v.unwrap_or(0)))
                .collect(),
        }),
        exhaustive,
        states,
    })
}

/// Searches for any state satisfying `hyps`.
pub fn find_model(
    layout: &MemoryLayout,
    cfg: &DomainConfig,
    hyps: &[Assertion],
) -> Result<SearchOutcome, LowerError> {
    find_counterexample(layout, cfg, hyps, &Assertion::Bool(false))
}

/// Bounded entailment: no counterexample was found.
pub fn entails(
    layout: &MemoryLayout,
    cfg: &DomainConfig,
    hyps: &[Assertion],
    goal: &Assertion,
) -> Result<bool, LowerError> {
    Ok(find_counterexample(layout, cfg, hyps, goal)?.model.is_none())
}

fn split_and(e: CExpr, out: &mut Vec<CExpr>) {
    match e {
        CExpr::And(v) => v.into_iter().for_each(|x| split_and(x, out)),
        CExpr::Bool(true) => {}
        other => out.push(other),
    }
}

struct Problem {
    n: usize,
    hyps: Vec<CExpr>,
    goal: CExpr,
    watch: Vec<Vec<usize>>,
    in_goal: Vec<bool>,
    order: Vec<usize>,
}

enum Dfs {
    Found,
    Done,
    OutOfBudget,
}

impl Problem {
    fn new(n: usize, hyps: Vec<CExpr>, goal: CExpr) -> Problem {
        let mut watch = vec![Vec::new(); n];
        let mut hv: Vec<Vec<usize>> = Vec::new();
        for (i, h) in hyps.iter().enumerate() {
            let mut vs = Vec::new();
            h.vars(&mut vs);
            for v in &vs {
                watch[*v].push(i);
            }
            hv.push(vs);
        }
        let mut gv = Vec::new();
        goal.vars(&mut gv);
        let mut in_goal = vec![false; n];
        for v in &gv {
            in_goal[*v] = true;
        }
        let mut by_size: Vec<usize> = (0..hyps.len()).collect();
        by_size.sort_by_key(|i| hv[*i].len());
        let mut order = Vec::new();
        let mut seen = vec![false; n];
        for i in by_size {
            for v in &hv[i] {
                if !seen[*v] {
                    seen[*v] = true;
                    order.push(*v);
                }
            }
        }
        for v in gv.into_iter().chain(0..n) {
            if !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
        Problem {
            n,
            hyps,
            goal,
            watch,
            in_goal,
            order,
        }
    }

    fn run(&self, cfg: &DomainConfig) -> (Option<Vec<Option<i64>>>, bool, usize) {
        let mut b = Vec::new();
        let empty = vec![None; self.n];
        for h in &self.hyps {
            if matches!(eval(h, &empty, &mut b), V::B(false) | V::I(0) | V::Err) {
                return (None, true, 0);
            }
        }
        if eval(&self.goal, &empty, &mut b).is_true() {
            return (None, true, 0);
        }
        let (lo, hi) = cfg.int_range;
        let budget_total = cfg.max_states.max(1);
        let mut used = 0;
        let small = values(lo.max(-2), hi.min(2));
        let full = values(lo, hi);
        let stages: Vec<(&[i64], usize)> = if small.len() == full.len() {
            vec![(&full[..], budget_total / 2)]
        } else {
            vec![(&small[..], budget_total / 4), (&full[..], budget_total / 4)]
        };
        for (i, (vals, budget)) in stages.iter().enumerate() {
            let mut asg = vec![None; self.n];
            let mut left = *budget;
            let r = self.dfs(&mut asg, vals, &mut left);
            used += budget - left;
            match r {
                Dfs::Found => return (Some(asg), false, used),
                Dfs::Done if i + 1 == stages.len() => return (None, true, used),
                _ => {}
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        while used < budget_total {
            let mut asg = vec![None; self.n];
            match self.probe(&mut asg, &mut rng, lo, hi, &mut used) {
                Some(true) => return (Some(asg), false, used),
                _ => continue,
            }
        }
        (None, false, used)
    }

    /// Checks the constraints touched by `v`; false means prune.
    fn consistent(&self, v: usize, asg: &[Option<i64>]) -> bool {
        let mut b = Vec::new();
        for h in &self.watch[v] {
            match eval(&self.hyps[*h], asg, &mut b) {
                V::B(false) | V::I(0) | V::Err => return false,
                _ => {}
            }
        }
        if self.in_goal[v] && eval(&self.goal, asg, &mut b).is_true() {
            return false;
        }
        true
    }

    fn goal_violated(&self, asg: &[Option<i64>]) -> bool {
        matches!(eval(&self.goal, asg, &mut Vec::new()), V::B(false) | V::I(0) | V::Err)
    }

    fn dfs(&self, asg: &mut Vec<Option<i64>>, vals: &[i64], budget: &mut usize) -> Dfs {
        if let Some((v, val)) = self.propagate(asg) {
            if *budget == 0 {
                return Dfs::OutOfBudget;
            }
            *budget -= 1;
            asg[v] = Some(val);
            if self.consistent(v, asg) {
                match self.dfs(asg, vals, budget) {
                    Dfs::Done => {}
                    other => return other,
                }
            }
            asg[v] = None;
            return Dfs::Done;
        }
        let Some(v) = self.order.iter().copied().find(|v| asg[*v].is_none()) else {
            return if self.goal_violated(asg) {
                Dfs::Found
            } else {
                Dfs::Done
            };
        };
        for val in vals {
            if *budget == 0 {
                asg[v] = None;
                return Dfs::OutOfBudget;
            }
            *budget -= 1;
            asg[v] = Some(*val);
            if self.consistent(v, asg) {
                match self.dfs(asg, vals, budget) {
                    Dfs::Done => {}
                    other => return other,
                }
            }
        }
        asg[v] = None;
        Dfs::Done
    }

    fn probe(
        &self,
        asg: &mut [Option<i64>],
        rng: &mut ChaCha8Rng,
        lo: i64,
        hi: i64,
        used: &mut usize,
    ) -> Option<bool> {
        loop {
            *used += 1;
            let (v, val) = match self.propagate(asg) {
                Some(f) => f,
                None => match self.order.iter().copied().find(|v| asg[*v].is_none()) {
                    Some(v) => (v, rng.gen_range(lo..=hi)),
                    None => return Some(self.goal_violated(asg)),
                },
            };
            asg[v] = Some(val);
            if !self.consistent(v, asg) {
                return None;
            }
        }
    }

    fn propagate(&self, asg: &[Option<i64>]) -> Option<(usize, i64)> {
        let mut b = Vec::new();
        self.hyps.iter().find_map(|h| force(h, asg, &mut b))
    }
}

fn values(lo: i64, hi: i64) -> Vec<i64> {
    let mut out = Vec::new();
    if lo <= 0 && 0 <= hi {
        out.push(0);
    }
    let mut k = 1i64;
    while -k >= lo || k <= hi {
        if -k >= lo && -k <= hi {
            out.push(-k);
        }
        if k <= hi && k >= lo {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn force(e: &CExpr, asg: &[Option<i64>], b: &mut Vec<i64>) -> Option<(usize, i64)> {
    match e {
        CExpr::And(v) => v.iter().find_map(|x| force(x, asg, b)),
        CExpr::Implies(x, y) if eval(x, asg, b).is_true() => force(y, asg, b),
        CExpr::Cmp(CmpOp::Eq, x, y) => {
            if let V::I(t) = eval(y, asg, b) {
                if let Some(f) = solve(x, t, asg, b) {
                    return Some(f);
                }
            }
            if let V::I(t) = eval(x, asg, b) {
                return solve(y, t, asg, b);
            }
            None
        }
        _ => None,
    }
}

fn known(e: &CExpr, asg: &[Option<i64>], b: &mut Vec<i64>) -> Option<i64> {
    match eval(e, asg, b) {
        V::I(n) => Some(n),
        _ => None,
    }
}

fn solve(e: &CExpr, t: i64, asg: &[Option<i64>], b: &mut Vec<i64>) -> Option<(usize, i64)> {
    match e {
        CExpr::Var(i) if asg[*i].is_none() => Some((*i, t)),
        CExpr::Neg(x) => solve(x, t.checked_neg()?, asg, b),
        CExpr::Arith(ArithOp::Add, x, y) => {
            if let Some(c) = known(y, asg, b) {
                solve(x, t.checked_sub(c)?, asg, b)
            } else if let Some(c) = known(x, asg, b) {
                solve(y, t.checked_sub(c)?, asg, b)
            } else {
                None
            }
        }
        CExpr::Arith(ArithOp::Sub, x, y) => {
            if let Some(c) = known(y, asg, b) {
                solve(x, t.checked_add(c)?, asg, b)
            } else if let Some(c) = known(x, asg, b) {
                solve(y, c.checked_sub(t)?, asg, b)
            } else {
                None
            }
        }
        CExpr::Arith(ArithOp::Mul, x, y) => {
            let (c, rest) = match known(x, asg, b) {
                Some(c) => (c, y),
                None => (known(y, asg, b)?, x),
            };
            if c != 0 && t % c == 0 {
                solve(rest, t / c, asg, b)
            } else {
                None
            }
        }
        CExpr::Select(idx, opts) => match known(idx, asg, b) {
            Some(k) if k >= 0 && (k as usize) < opts.len() => solve(&opts[k as usize], t, asg, b),
            _ => None,
        },
        CExpr::Ite(c, x, y) => match eval(c, asg, b) {
            V::B(true) => solve(x, t, asg, b),
            V::B(false) => solve(y, t, asg, b),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_assertion;
    use crate::memstore::flatten;
    use crate::frontend::CType;

    fn layout() -> MemoryLayout {
        flatten(
            &[
                ("x".into(), CType::Int),
                ("y".into(), CType::Int),
                ("a".into(), CType::Array(Box::new(CType::Int), 6)),
            ],
            &[],
        )
        .unwrap()
    }

    fn cex(h: &[&str], g: &str) -> SearchOutcome {
        let hs: Vec<Assertion> = h.iter().map(|t| parse_assertion(t).unwrap()).collect();
        find_counterexample(&layout(), &DomainConfig::default(), &hs, &parse_assertion(g).unwrap())
            .unwrap()
    }

    #[test]
    fn finds_small_counterexample() {
        let r = cex(&["x <= 10"], "0 <= x");
        let m = r.model.unwrap();
        assert_eq!(m.values.values().copied().collect::<Vec<_>>(), vec![-1]);
    }

    #[test]
    fn valid_entailment_is_exhaustive() {
        let r = cex(&["x > 0", "y == x + 1"], "y > 1");
        assert!(r.model.is_none());
        assert!(r.exhaustive);
    }

    #[test]
    fn propagation_leaves_the_range() {
        let r = cex(&["x == 7", "y == x * 3"], "y != 21");
        assert!(r.model.is_some());
    }

    #[test]
    fn out_of_bounds_read_is_a_violation() {
        let r = cex(&["0 <= x", "x <= 6"], "a[x] == a[x]");
        let m = r.model.unwrap();
        assert_eq!(m.values.get(&Slot::Cell(super::super::Region::Cur, crate::memstore::Location::root("x"))), Some(&6));
    }

    #[test]
    fn sums_and_quantifiers() {
        let r = cex(
            &["\\forall integer k; 0 <= k < 3 ==> a[k] == 1"],
            "\\sum(0, 2, k |-> a[k]) == 3",
        );
        assert!(r.model.is_none());
    }
}
