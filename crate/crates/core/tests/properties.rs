mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sespec::frontend::{parse_assertion, parse_program, ArithOp, Assertion, CmpOp};
use sespec::logic::{simplify, DomainConfig};
use sespec::memstore::MemoryLayout;
use sespec::metrics::{metrics, ProgramRun, RoundOutcome};
use sespec::symexec::{se_start, Executor, Status};

use common::*;

fn term() -> impl Strategy<Value = Assertion> {
    let leaf = prop_oneof![
        (-5i64..=5).prop_map(Assertion::Int),
        prop::sample::select(vec!["x", "y", "z"]).prop_map(Assertion::var),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Assertion::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Assertion::sub(a, b)),
            (-3i64..=3, inner.clone()).prop_map(|(k, a)| Assertion::mul(Assertion::Int(k), a)),
            (inner.clone(), prop::sample::select(vec![2i64, 3, -2])).prop_map(|(a, k)| Assertion::arith(ArithOp::Div, a, Assertion::Int(k))),
            (inner.clone(), prop::sample::select(vec![2i64, 3])).prop_map(|(a, k)| Assertion::arith(ArithOp::Mod, a, Assertion::Int(k))),
            inner.prop_map(|a| Assertion::Neg(Box::new(a))),
        ]
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne])
}

fn formula() -> impl Strategy<Value = Assertion> {
    let atom = (cmp_op(), term(), term()).prop_map(|(op, a, b)| Assertion::cmp(op, a, b));
    atom.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Assertion::Not(Box::new(a))),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Assertion::And),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Assertion::Or),
            (inner.clone(), inner).prop_map(|(a, b)| Assertion::Implies(Box::new(a), Box::new(b))),
        ]
    })
}

fn valuation() -> impl Strategy<Value = BTreeMap<String, i64>> {
    (-6i64..=6, -6i64..=6, -6i64..=6)
        .prop_map(|(x, y, z)| BTreeMap::from([("x".to_string(), x), ("y".to_string(), y), ("z".to_string(), z)]))
}

fn val(m: &BTreeMap<String, i64>) -> Valuation<'_> {
    Valuation {
        values: m,
        max_array_len: 4,
        quant: (-8, 8),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_round_trips(a in formula(), m in valuation()) {
        // Parsing flattens nested `&&`/`||`, so the text settles after one round.
        let back = parse_assertion(&a.to_string()).unwrap();
        let text = back.to_string();
        prop_assert_eq!(parse_assertion(&text).unwrap(), back.clone());
        prop_assert_eq!(holds(&back, &val(&m)), holds(&a, &val(&m)));
    }

    #[test]
    fn simplify_keeps_meaning(a in formula(), m in valuation()) {
        let s = simplify(&a);
        prop_assert_eq!(holds(&s, &val(&m)), holds(&a, &val(&m)), "simplified to {}", s);
    }

    #[test]
    fn simplified_terms_evaluate_alike(t in term(), m in valuation()) {
        let s = sespec::logic::poly::simplify_term(&t);
        prop_assert_eq!(value(&s, &val(&m)), value(&t, &val(&m)), "simplified to {}", s);
    }

    #[test]
    fn post_condition_matches_execution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (src, n) = random_segment(&mut rng);
        let prog = parse_program(&src).unwrap();
        let f = &prog.functions[0];
        let cfg = DomainConfig::default();
        let layout = MemoryLayout::for_function(f, &prog).unwrap();
        let states: Vec<_> = se_start(&layout, &prog, f, &cfg, &[]).unwrap().states
            .into_iter().filter(|s| s.status == Status::Running).collect();
        let ex = Executor::new(&layout, &prog, f, &cfg);
        let locs: Vec<_> = layout.param_locations().into_iter().cloned().collect();
        let sp = ex.strongest_post(&states, &locs, false).unwrap();
        let names = var_names(n);
        for _ in 0..32 {
            let pre: Vec<i64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -4..=4)).collect();
            let st: BTreeMap<String, i64> = names.iter().map(|v| v.to_string()).zip(pre.iter().copied()).collect();
            let Outcome::Done(post) = run(&f.body, &st) else { panic!("stuck") };
            let mut m = BTreeMap::new();
            for (i, v) in names.iter().enumerate() {
                m.insert(format!("\\at({v}, Pre)"), pre[i]);
                m.insert(v.to_string(), post[*v]);
            }
            prop_assert_eq!(holds(&sp, &val(&m)), Some(true), "{}\nsp = {}", src, sp);
            // Moving one variable off the reached value falsifies it.
            let v0 = names[0].to_string();
            *m.get_mut(&v0).unwrap() += 1;
            prop_assert_eq!(holds(&sp, &val(&m)), Some(false), "{}\nsp = {}", src, sp);
        }
    }

    #[test]
    fn pass_at_k_never_decreases(table in prop::collection::vec(prop::collection::vec(any::<(bool, bool, bool)>(), 5), 1..12)) {
        let runs: Vec<ProgramRun> = table.iter().enumerate().map(|(i, rounds)| ProgramRun {
            name: format!("p{i}"),
            rounds: rounds.iter().map(|&(syn, val, acc)| RoundOutcome { syn, val, acc, error: None }).collect(),
        }).collect();
        let rows = metrics(&runs, 5);
        for w in rows.windows(2) {
            prop_assert!(w[1].syn >= w[0].syn && w[1].val >= w[0].val && w[1].acc >= w[0].acc);
        }
        for r in &rows {
            for x in [r.syn, r.val, r.acc] {
                prop_assert!((0.0..=100.0).contains(&x));
            }
        }
    }
}
