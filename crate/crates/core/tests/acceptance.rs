//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sespec::frontend::{parse_assertion, parse_program, LoopId, Program};
use sespec::logic::DomainConfig;
use sespec::memstore::MemoryLayout;
use sespec::metrics::{metrics, run_corpus, MetricsRow};
use sespec::pipeline::{generate, PipelineOptions, SpecResult};
use sespec::symexec::{se_start, Status};
use sespec::synth::MockBackend;
use sespec::verifier::report::{classify_errors, Counterexample, ErrorClass};
use sespec::verifier::{AnnotationMap, Overall, Verifier};

use common::*;

/// Segments checked by the post-condition oracle.
const SP_SEGMENTS: usize = 200;
/// Wall-clock limit for the oracle.
const SP_TIME_LIMIT: Duration = Duration::from_secs(60);
/// Concrete range for the oracle's pre- and post-states.
const SP_RANGE: (i64, i64) = (-4, 4);
const SP_SEED: u64 = 7;
/// Refinement budget for fault repair.
const REPAIR_BUDGET: usize = 3;
/// Fewest counterexamples the replay criterion must see.
const MIN_COUNTEREXAMPLES: usize = 20;
const METRIC_EPS: f64 = 1e-9;

type Verdict = Result<String, String>;

fn cfg() -> DomainConfig {
    DomainConfig::default()
}

fn load(path: &std::path::Path) -> Program {
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn corpus() -> Vec<(String, Program)> {
    c_files(&corpus_dir())
        .into_iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), load(&p)))
        .collect()
}

fn grid(n: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

// ---- 1 -------------------------------------------------------------

fn sp_oracle() -> Verdict {
    let start = Instant::now();
    let cfg = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(SP_SEED);
    let mut mismatches = Vec::new();
    let mut pairs = 0usize;
    let mut checked = 0usize;
    while checked < SP_SEGMENTS {
        let (src, n) = random_segment(&mut rng);
        let prog = parse_program(&src).map_err(|e| format!("generated segment does not parse: {e}\n{src}"))?;
        let f = &prog.functions[0];
        let layout = MemoryLayout::for_function(f, &prog).map_err(|e| e.to_string())?;
        let res = se_start(&layout, &prog, f, &cfg, &[]).map_err(|e| format!("{e}\n{src}"))?;
        let live: Vec<_> = res.states.into_iter().filter(|s| s.status == Status::Running).collect();
        let ex = sespec::symexec::Executor::new(&layout, &prog, f, &cfg);
        let locs: Vec<_> = layout.param_locations().into_iter().cloned().collect();
        let sp = ex.strongest_post(&live, &locs, false).map_err(|e| e.to_string())?;
        let names = var_names(n);
        let posts = grid(n, SP_RANGE.0, SP_RANGE.1);
        for pre in grid(n, SP_RANGE.0, SP_RANGE.1) {
            let st: BTreeMap<String, i64> = names.iter().map(|v| v.to_string()).zip(pre.iter().copied()).collect();
            let reached = match run(&f.body, &st) {
                Outcome::Done(s) => names.iter().map(|v| s[*v]).collect::<Vec<_>>(),
                Outcome::Stuck => return Err(format!("concrete run stuck\n{src}")),
            };
            let mut candidates: Vec<Vec<i64>> = vec![reached.clone()];
            if n <= 2 {
                candidates.extend(posts.iter().cloned());
            } else {
                // Every post differing from the reached one in one variable.
                for i in 0..n {
                    for d in SP_RANGE.0..=SP_RANGE.1 {
                        let mut c = reached.clone();
                        c[i] = d;
                        candidates.push(c);
                    }
                }
                candidates.extend(posts.iter().step_by(37).cloned());
            }
            for post in candidates {
                let mut values = BTreeMap::new();
                for (i, v) in names.iter().enumerate() {
                    values.insert(format!("\\at({v}, Pre)"), pre[i]);
                    values.insert(v.to_string(), post[i]);
                }
                let val = Valuation {
                    values: &values,
                    max_array_len: cfg.max_array_len,
                    quant: (-64, 64),
                };
                let sym = holds(&sp, &val);
                pairs += 1;
                if sym != Some(post == reached) {
                    mismatches.push(format!("{src}pre {pre:?} post {post:?}: sp says {sym:?}\nsp = {sp}"));
                }
            }
        }
        checked += 1;
    }
    let took = start.elapsed();
    if !mismatches.is_empty() {
        return Err(format!("{} mismatches, first:\n{}", mismatches.len(), mismatches[0]));
    }
    if took > SP_TIME_LIMIT {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("{checked} segments, {pairs} state pairs, 0 mismatches in {:.1}s", took.as_secs_f64()))
}

// ---- 2 -------------------------------------------------------------

fn closed_templates(runs: &[(String, SpecResult)]) -> Verdict {
    let mut loops = 0;
    let mut clauses = 0;
    for (name, r) in runs {
        for l in r.loops.iter().filter(|l| !l.nested) {
            loops += 1;
            clauses += l.closed.len();
            if l.closed.is_empty() {
                return Err(format!("{name} loop {}: no closed templates", l.loop_id));
            }
            if !l.closed_failed.is_empty() {
                return Err(format!("{name} loop {}: {:?} failed before refinement", l.loop_id, l.closed_failed));
            }
        }
    }
    Ok(format!("{clauses} closed clauses over {loops} loops passed on first verification"))
}

// ---- 3 -------------------------------------------------------------

fn checkcal(runs: &[(String, SpecResult)]) -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_sespec"))
        .arg("gen")
        .arg(corpus_dir().join("checkcal.c"))
        .env("SESPEC_BACKEND", "mock")
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        return Err(format!("exit {:?}", out.status.code()));
    }
    if !text.contains("(0 < \\at(pIp, Pre)->len) ==> ") {
        return Err(format!("guarded invariant missing from output:\n{text}"));
    }
    let (_, r) = runs.iter().find(|(n, _)| n == "checkcal").ok_or("checkcal not in corpus")?;
    if r.reports["CheckCalFun"].overall != Overall::Verified {
        return Err("CheckCalFun not verified".into());
    }
    if r.reports["foo"].overall != Overall::Verified {
        return Err("foo's goal not proven".into());
    }
    match r.generations.get("CheckCalFun") {
        Some(1) => Ok("CheckCalFun verified, foo proven, one generation".into()),
        g => Err(format!("CheckCalFun generated {g:?} times")),
    }
}

// ---- 4 -------------------------------------------------------------

fn faults() -> Verdict {
    let mut classified = 0;
    let mut repaired = 0;
    let files = c_files(&faults_dir());
    for path in &files {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let prog = load(path);
        let fname = prog.functions[0].name.clone();
        let expected = match stem.split('_').next().unwrap() {
            "base" => ErrorClass::Weaken,
            "pres" => ErrorClass::Adjust,
            "term" => ErrorClass::Strengthen,
            "both" => ErrorClass::Regenerate,
            other => return Err(format!("unknown fixture class {other}")),
        };
        let mut v = Verifier::new(&prog, cfg());
        let report = v.verify_function(&fname, &AnnotationMap::new()).map_err(|e| e.to_string())?;
        let got: BTreeSet<ErrorClass> = classify_errors(&report, LoopId(0)).into_iter().map(|(c, _)| c).collect();
        if got != BTreeSet::from([expected]) {
            return Err(format!("{stem}: classified as {got:?}, expected {expected:?}"));
        }
        classified += 1;
        if matches!(expected, ErrorClass::Weaken | ErrorClass::Strengthen) {
            let opts = PipelineOptions {
                repair: true,
                budget: REPAIR_BUDGET,
                ..Default::default()
            };
            let r = generate(&prog, &MockBackend::new(), &cfg(), &opts).map_err(|e| e.to_string())?;
            let l = r.loops.iter().find(|l| l.loop_id == 0).ok_or("no loop record")?;
            if !(l.valid && l.eliminated.is_empty() && l.refine_calls <= REPAIR_BUDGET && r.accurate()) {
                return Err(format!(
                    "{stem}: not repaired (valid {}, calls {}, eliminated {:?})",
                    l.valid, l.refine_calls, l.eliminated
                ));
            }
            repaired += 1;
        }
    }
    if files.len() != 12 {
        return Err(format!("expected 12 fixtures, found {}", files.len()));
    }
    Ok(format!("{classified}/12 classified, {repaired}/6 repaired within budget {REPAIR_BUDGET}"))
}

// ---- 5 -------------------------------------------------------------

fn collect_counterexamples(corpus: &[(String, Program)], runs: &[(String, SpecResult)]) -> Vec<Counterexample> {
    let mut out: Vec<Counterexample> = Vec::new();
    for (_, r) in runs {
        for l in &r.loops {
            out.extend(l.counterexamples.iter().cloned());
        }
        for rep in r.reports.values() {
            out.extend(rep.counterexamples().into_iter().cloned());
        }
    }
    // Perturb every final invariant clause once and keep what the verifier
    // reports against it.
    for ((_, prog), (_, r)) in corpus.iter().zip(runs) {
        let mut v = Verifier::new(prog, cfg());
        for (fname, fa) in &r.annotations {
            for (id, inv) in &fa.loop_invariants {
                for k in 0..inv.len() {
                    let mut anns: AnnotationMap = r.annotations.clone();
                    let slot = &mut anns.get_mut(fname).unwrap().loop_invariants.get_mut(id).unwrap()[k];
                    *slot = mutate(slot);
                    if let Ok(rep) = v.verify_function(fname, &anns) {
                        out.extend(rep.counterexamples().into_iter().cloned());
                    }
                }
            }
        }
    }
    out
}

fn replay(cexs: &[Counterexample]) -> Verdict {
    let cfg = cfg();
    if cexs.len() < MIN_COUNTEREXAMPLES {
        return Err(format!("only {} counterexamples", cexs.len()));
    }
    let mut bad = Vec::new();
    for c in cexs {
        let val = Valuation {
            values: &c.model,
            max_array_len: cfg.max_array_len,
            quant: cfg.int_range,
        };
        let hyps_hold = c
            .hyps
            .iter()
            .map(|h| parse_assertion(h).ok().and_then(|a| holds(&a, &val)))
            .collect::<Option<Vec<bool>>>()
            .map(|v| v.into_iter().all(|b| b));
        let goal = parse_assertion(&c.goal).ok().and_then(|a| holds(&a, &val));
        if !(hyps_hold == Some(true) && goal == Some(false)) {
            bad.push(format!("{:?} hyps {:?} goal `{}` model {:?}: hyps {hyps_hold:?} goal {goal:?}", c.check, c.hyps, c.goal, c.model));
        }
    }
    if bad.is_empty() {
        let kinds: BTreeSet<_> = cexs.iter().map(|c| format!("{:?}", c.check)).collect();
        Ok(format!("{}/{} replayed counterexamples violate their check ({kinds:?})", cexs.len(), cexs.len()))
    } else {
        Err(format!("{}/{} do not replay, first: {}", bad.len(), cexs.len(), bad[0]))
    }
}

// ---- 6, 8 ----------------------------------------------------------

fn corpus_metrics(k: usize, mask_goals: bool) -> Vec<MetricsRow> {
    let opts = PipelineOptions {
        mask_goals,
        ..Default::default()
    };
    let runs = run_corpus(&c_files(&corpus_dir()), &MockBackend::new(), &cfg(), &opts, k).unwrap();
    metrics(&runs, k)
}

fn masked(plain: &MetricsRow) -> Verdict {
    let m = &corpus_metrics(1, true)[0];
    if (m.val - plain.val).abs() > METRIC_EPS {
        return Err(format!("Val masked {} vs unmasked {}", m.val, plain.val));
    }
    if (m.syn - 100.0).abs() > METRIC_EPS {
        return Err(format!("Syn masked {}", m.syn));
    }
    Ok(format!("Val {:.2} both ways, Syn {:.2}", m.val, m.syn))
}

fn monotone(rows: &[MetricsRow]) -> Verdict {
    let pick: Vec<&MetricsRow> = [1, 3, 5].iter().map(|k| &rows[k - 1]).collect();
    for w in pick.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.syn + METRIC_EPS < a.syn || b.val + METRIC_EPS < a.val || b.acc + METRIC_EPS < a.acc {
            return Err(format!("k={} {:?} > k={} {:?}", a.k, a, b.k, b));
        }
    }
    Ok(pick
        .iter()
        .map(|r| format!("k={}: {:.1}/{:.1}/{:.1}", r.k, r.syn, r.val, r.acc))
        .collect::<Vec<_>>()
        .join(", "))
}

// ---- 7 -------------------------------------------------------------

fn bench_twice() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.csv"));
        let st = Command::new(env!("CARGO_BIN_EXE_sespec"))
            .args(["bench", "--k", "3", "--out"])
            .arg(&out)
            .arg(corpus_dir())
            .env("SESPEC_BACKEND", "mock")
            .status()
            .map_err(|e| e.to_string())?;
        if !st.success() {
            return Err(format!("bench exit {:?}", st.code()));
        }
        csvs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    if csvs[0] == csvs[1] {
        Ok(format!("{} bytes, identical", csvs[0].len()))
    } else {
        Err("CSVs differ".into())
    }
}

fn main() {
    std::env::set_var("SESPEC_BACKEND", "mock");
    let corpus = corpus();
    let runs: Vec<(String, SpecResult)> = corpus
        .iter()
        .map(|(n, p)| (n.clone(), generate(p, &MockBackend::new(), &cfg(), &PipelineOptions::default()).unwrap()))
        .collect();
    let rows = corpus_metrics(5, false);
    let cexs = collect_counterexamples(&corpus, &runs);

    let results: Vec<(&str, Verdict)> = vec![
        ("1 strongest post matches concrete execution", sp_oracle()),
        ("2 closed templates hold without refinement", closed_templates(&runs)),
        ("3 checkcal end to end", checkcal(&runs)),
        ("4 fault classification and repair", faults()),
        ("5 counterexamples replay", replay(&cexs)),
        ("6 goal masking keeps Val", masked(&rows[0])),
        ("7 bench output is reproducible", bench_twice()),
        ("8 metrics grow with k", monotone(&rows)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("PASS  criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name}: {msg}");
            }
        }
    }
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
