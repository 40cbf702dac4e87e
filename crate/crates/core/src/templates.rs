//! Invariant templates built from loop-analysis facts.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::frontend::assertion::sanitize_path;
use crate::frontend::{Assertion, GoalId, Label, Lval};
use crate::loopanalysis::LoopInfo;
use crate::memstore::{Location, MemoryLayout};
use crate::symexec::group_equalities;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("filling contains placeholder `{0}`")]
    OpenFilling(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Unchanged,
    LoopSkip,
    NonInductive,
    Inductive,
    Goal,
}

impl Family {
    pub fn is_closed(self) -> bool {
        matches!(self, Family::Unchanged | Family::LoopSkip)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantTemplate {
    pub family: Family,
    pub path_index: usize,
    pub fixed_part: Assertion,
    pub placeholder: Option<String>,
    /// Printed form of the location, aggregate or goal the clause is about.
    pub subject: String,
}

impl InvariantTemplate {
    pub fn is_closed(&self) -> bool {
        self.placeholder.is_none()
    }
}

impl fmt::Display for InvariantTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "loop invariant {};", self.fixed_part)
    }
}

fn placeholder_name(base: &str, j: usize, multi: bool) -> String {
    let base = sanitize_path(base);
    if multi {
        format!("{base}_p{j}")
    } else {
        base
    }
}

fn subject_of(clause: &Assertion) -> String {
    match clause {
        Assertion::Cmp(_, l, _) => l.to_string(),
        other => other.to_string(),
    }
}

/// Templates for one loop. `goals` are the verification goals the loop
/// should help establish (empty when goals are masked).
pub fn generate_templates(
    info: &LoopInfo,
    layout: &MemoryLayout,
    goals: &[(GoalId, Assertion)],
) -> Vec<InvariantTemplate> {
    let multi = info.paths.len() > 1;
    let mut out = Vec::new();

    for p in &info.pointer_roots {
        let v = Assertion::var(p.clone());
        out.push(InvariantTemplate {
            family: Family::Unchanged,
            path_index: 0,
            fixed_part: Assertion::eq(v.clone(), Assertion::Lval(Lval::at(Lval::var(p.clone()), Label::Pre))),
            placeholder: None,
            subject: p.clone(),
        });
    }

    for (j, path) in info.paths.iter().enumerate() {
        let eqs = |set: &dyn Fn(&Location) -> bool| -> Vec<Assertion> {
            let pairs: Vec<(Location, Assertion)> = info
                .scope
                .iter()
                .filter(|l| set(l))
                .map(|l| (l.clone(), path.values[l].clone()))
                .collect();
            group_equalities(layout, &pairs)
        };
        let guard_false = path.guard == Assertion::Bool(false);
        let guard_true = path.guard == Assertion::Bool(true);

        for c in eqs(&|l| info.unchanged.contains(l)) {
            let fixed = if multi {
                Assertion::implies(path.pc.clone(), c.clone())
            } else {
                c.clone()
            };
            out.push(InvariantTemplate {
                family: Family::Unchanged,
                path_index: j,
                fixed_part: fixed,
                placeholder: None,
                subject: subject_of(&c),
            });
        }

        // Skip clauses for unchanged cells repeat the Unchanged clauses and
        // are left out.
        if !guard_true {
            let skip = if multi {
                Assertion::and([path.pc.clone(), Assertion::not(path.guard.clone())])
            } else {
                Assertion::not(path.guard.clone())
            };
            for c in eqs(&|l| !info.unchanged.contains(l)) {
                out.push(InvariantTemplate {
                    family: Family::LoopSkip,
                    path_index: j,
                    fixed_part: Assertion::implies(skip.clone(), c.clone()),
                    placeholder: None,
                    subject: subject_of(&c),
                });
            }
        }

        if guard_false {
            continue;
        }
        let ec = if multi {
            path.entry_condition()
        } else {
            path.guard.clone()
        };
        for l in info.scope.iter().filter(|l| info.noninductive.contains(*l)) {
            let name = placeholder_name(&l.to_string(), j, multi);
            let keep = Assertion::eq(l.term(), path.values[l].clone());
            out.push(InvariantTemplate {
                family: Family::NonInductive,
                path_index: j,
                fixed_part: Assertion::implies(
                    ec.clone(),
                    Assertion::Or(vec![keep, Assertion::Placeholder(name.clone())]),
                ),
                placeholder: Some(name),
                subject: l.to_string(),
            });
        }
        for l in info.scope.iter().filter(|l| info.inductive.contains(*l)) {
            let name = placeholder_name(&l.to_string(), j, multi);
            out.push(InvariantTemplate {
                family: Family::Inductive,
                path_index: j,
                fixed_part: Assertion::implies(ec.clone(), Assertion::Placeholder(name.clone())),
                placeholder: Some(name),
                subject: l.to_string(),
            });
        }
        for (g, _) in goals {
            let name = placeholder_name(&format!("goal_{}", g.0), j, multi);
            out.push(InvariantTemplate {
                family: Family::Goal,
                path_index: j,
                fixed_part: Assertion::implies(ec.clone(), Assertion::Placeholder(name.clone())),
                placeholder: Some(name),
                subject: format!("goal {}", g.0),
            });
        }
    }
    out
}

/// First identifier in `a` that is neither a memory root nor bound.
pub fn unknown_identifier(a: &Assertion, layout: &MemoryLayout) -> Option<String> {
    let bound = a.bound_vars();
    a.lvals()
        .into_iter()
        .map(|lv| lv.root().to_string())
        .find(|r| layout.root(r).is_none() && !bound.contains(r))
}

/// Fills the template's placeholder. Closed templates are returned as is.
pub fn instantiate(
    t: &InvariantTemplate,
    filling: &Assertion,
    layout: &MemoryLayout,
) -> Result<Assertion, TemplateError> {
    let Some(name) = &t.placeholder else {
        return Ok(t.fixed_part.clone());
    };
    if let Some(p) = filling.placeholders().into_iter().next() {
        return Err(TemplateError::OpenFilling(p));
    }
    if let Some(id) = unknown_identifier(filling, layout) {
        return Err(TemplateError::UnknownIdentifier(id));
    }
    Ok(t.fixed_part.fill_placeholder(name, filling))
}

/// Placeholder names of a template set, in order.
pub fn placeholder_names(ts: &[InvariantTemplate]) -> Vec<String> {
    ts.iter().filter_map(|t| t.placeholder.clone()).collect()
}

/// Closed clauses of a template set.
pub fn closed_clauses(ts: &[InvariantTemplate]) -> Vec<Assertion> {
    let mut seen = BTreeSet::new();
    ts.iter()
        .filter(|t| t.is_closed())
        .map(|t| t.fixed_part.clone())
        .filter(|c| seen.insert(c.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_assertion, parse_program};
    use crate::logic::DomainConfig;
    use crate::loopanalysis::analyze_loop;
    use crate::symexec::{se_start, AnnotatedHooks, Executor, Suspension};

    fn templates(src: &str) -> (MemoryLayout, Vec<InvariantTemplate>) {
        let p = parse_program(src).unwrap();
        let f = &p.functions[0];
        let layout = MemoryLayout::for_function(f, &p).unwrap();
        let cfg = DomainConfig::default();
        let r = se_start(&layout, &p, f, &cfg, &[]).unwrap();
        let Suspension::LoopEntry(id) = r.reason else { panic!() };
        let stmt = f.find_loop(id).unwrap();
        let mut ex = Executor::new(&layout, &p, f, &cfg);
        let li = analyze_loop(&mut ex, &r.states, stmt, &[], &mut AnnotatedHooks).unwrap();
        let goals: Vec<(GoalId, Assertion)> = f.goals().into_iter().map(|(g, a)| (g, a.clone())).collect();
        let ts = generate_templates(&li, &layout, &goals);
        (layout, ts)
    }

    const CHECKCAL: &str = "struct CheckCal { int pkv[10]; int len; int chksum; };\n\
        void f(struct CheckCal *pIp) { int chksum = 0; int i = 0; \
        for (; i < pIp->len; i++) chksum += pIp->pkv[i]; pIp->chksum = chksum; }";

    #[test]
    fn checkcal_surface_forms() {
        let (_, ts) = templates(CHECKCAL);
        let lines: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
        assert!(lines.contains(&"loop invariant (0 < \\at(pIp, Pre)->len) ==> PLACE_HOLDER_for_i;".to_string()));
        assert!(lines.contains(&"loop invariant (0 < \\at(pIp, Pre)->len) ==> PLACE_HOLDER_for_chksum;".to_string()));
        assert!(lines.contains(&"loop invariant pIp == \\at(pIp, Pre);".to_string()));
        assert!(lines.contains(&"loop invariant pIp->pkv == \\at(pIp->pkv, Pre);".to_string()));
    }

    #[test]
    fn empty_body_is_all_closed() {
        let (_, ts) = templates("void f(int n) { int i = 0; while (i < n) { } }");
        assert!(!ts.is_empty());
        assert!(ts.iter().all(|t| t.is_closed()));
    }

    #[test]
    fn placeholders_distinct_and_counted() {
        let (_, ts) = templates(
            "void f(int n) { int i = 0; int s = 0; if (n > 3) s = 1; while (i < n) { i = i + 1; s = s + i; } /*@ assert s >= 0; */ }",
        );
        let names = placeholder_names(&ts);
        let set: BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert_eq!(ts.iter().filter(|t| t.family == Family::Inductive).count(), 2 * 2);
        assert_eq!(ts.iter().filter(|t| t.family == Family::Goal).count(), 2);
    }

    #[test]
    fn instantiate_fills_and_rejects() {
        let (layout, ts) = templates(CHECKCAL);
        let t = ts.iter().find(|t| t.placeholder.as_deref() == Some("i")).unwrap();
        let fill = parse_assertion("0 <= i <= \\at(pIp, Pre)->len").unwrap();
        let inst = instantiate(t, &fill, &layout).unwrap();
        assert!(inst.is_closed());
        let bad = parse_assertion("foo(i) == 0");
        if let Ok(bad) = bad {
            assert!(matches!(instantiate(t, &bad, &layout), Err(TemplateError::UnknownIdentifier(_))));
        }
        let unknown = parse_assertion("k == 0").unwrap();
        assert_eq!(
            instantiate(t, &unknown, &layout),
            Err(TemplateError::UnknownIdentifier("k".into()))
        );
        let closed = ts.iter().find(|t| t.is_closed()).unwrap();
        assert_eq!(instantiate(closed, &fill, &layout).unwrap(), closed.fixed_part);
    }
}
