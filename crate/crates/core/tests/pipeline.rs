mod common;

use std::process::Command;

use sespec::cli::{EXIT_ANALYSIS, EXIT_OK, EXIT_USAGE};
use sespec::frontend::parse_program;
use sespec::logic::DomainConfig;
use sespec::pipeline::{generate, PipelineOptions};
use sespec::synth::MockBackend;
use sespec::verifier::{verify_program, Overall};

use common::*;

fn sespec(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sespec"))
        .args(args)
        .env("SESPEC_BACKEND", "mock")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn src(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap()
}

#[test]
fn rendered_output_verifies_on_its_own() {
    let cfg = DomainConfig::default();
    for path in c_files(&corpus_dir()) {
        let prog = parse_program(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let r = generate(&prog, &MockBackend::new(), &cfg, &PipelineOptions::default()).unwrap();
        let text = r.render(&prog).unwrap();
        let again = parse_program(&text).unwrap_or_else(|e| panic!("{}: {e}\n{text}", path.display()));
        let reports = verify_program(&again, &cfg).unwrap();
        for rep in &reports {
            assert_eq!(
                rep.overall,
                r.reports[&rep.function].overall,
                "{} {}:\n{text}",
                path.display(),
                rep.function
            );
            assert_ne!(rep.overall, Overall::InvalidInvariants, "{}", path.display());
        }
    }
}

#[test]
fn masked_run_keeps_the_asserts_in_output() {
    let prog = parse_program(&src("count_up.c")).unwrap();
    let opts = PipelineOptions {
        mask_goals: true,
        ..Default::default()
    };
    let r = generate(&prog, &MockBackend::new(), &DomainConfig::default(), &opts).unwrap();
    assert!(r.render(&prog).unwrap().contains("assert i == n;"));
    assert!(r.valid());
}

#[test]
fn unparsable_filling_is_reported_and_recovered() {
    let prog = parse_program(&src("count_up.c")).unwrap();
    let backend = MockBackend::new().with_fill_override("i", "0 <= i <=");
    let r = generate(&prog, &backend, &DomainConfig::default(), &PipelineOptions::default()).unwrap();
    let l = &r.loops[0];
    assert_eq!(l.syntax_issues, 1);
    assert!(l.refine_calls >= 1);
    assert!(l.valid);
    assert!(r.syntactic());
}

#[test]
fn repair_mode_keeps_valid_written_invariants() {
    let text = "/*@ requires 0 <= n <= 4; */\nint f(int n) {\n    int i = 0;\n    /*@ loop invariant 0 <= i <= n; loop invariant n == \\at(n, Pre); */\n    while (i < n) {\n        i = i + 1;\n    }\n    /*@ assert i == n; */\n    return i;\n}\n";
    let prog = parse_program(text).unwrap();
    let opts = PipelineOptions {
        repair: true,
        ..Default::default()
    };
    let r = generate(&prog, &MockBackend::new(), &DomainConfig::default(), &opts).unwrap();
    assert_eq!(r.loops[0].refine_calls, 0);
    assert_eq!(r.loops[0].invariants, vec!["0 <= i <= n", "n == \\at(n, Pre)"]);
    assert!(r.accurate());
}

#[test]
fn zero_budget_falls_back_to_elimination() {
    let prog = parse_program(&std::fs::read_to_string(faults_dir().join("both_count_up.c")).unwrap()).unwrap();
    let opts = PipelineOptions {
        repair: true,
        budget: 0,
        ..Default::default()
    };
    let r = generate(&prog, &MockBackend::new(), &DomainConfig::default(), &opts).unwrap();
    assert_eq!(r.loops[0].refine_calls, 0);
    assert_eq!(r.loops[0].eliminated, vec!["i == 1"]);
    assert!(r.valid());
    assert!(!r.accurate());
}

#[test]
fn cli_exit_codes() {
    let corpus = corpus_dir();
    let count_up = corpus.join("count_up.c");
    let count_up = count_up.to_str().unwrap();
    assert_eq!(sespec(&["gen", count_up]).0, EXIT_OK);
    assert_eq!(sespec(&["gen", "/no/such/file.c"]).0, EXIT_USAGE);
    assert_eq!(sespec(&["gen", count_up, "--fn", "nope"]).0, EXIT_USAGE);
    assert_eq!(sespec(&["frobnicate"]).0, EXIT_USAGE);
    let fault = faults_dir().join("pres_sum.c");
    assert_eq!(sespec(&["verify", fault.to_str().unwrap()]).0, EXIT_ANALYSIS);
    let nested = corpus.join("nested_count.c");
    assert_eq!(sespec(&["gen", nested.to_str().unwrap()]).0, EXIT_ANALYSIS);
}

#[test]
fn cli_gen_json_and_fn_filter() {
    let checkcal = corpus_dir().join("checkcal.c");
    let (code, out) = sespec(&["gen", checkcal.to_str().unwrap(), "--fn", "CheckCalFun", "--json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["generations"]["CheckCalFun"], 1);
    assert!(v["generations"].get("foo").is_none());
    assert_eq!(v["reports"]["CheckCalFun"]["overall"], "Verified");
}

#[test]
fn cli_bench_csv_layout() {
    let (code, out) = sespec(&["bench", corpus_dir().to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("backend,k,programs,syn,val,acc"));
    assert!(lines.next().unwrap().starts_with("mock,1,20,"));
    assert!(lines.next().unwrap().starts_with("mock,2,20,"));
    let per_program = out.lines().skip_while(|l| !l.starts_with("program,")).skip(1).count();
    assert_eq!(per_program, 40);
}

#[test]
fn domain_flags_reach_the_verifier() {
    let fault = faults_dir().join("term_count_up.c");
    let (_, out) = sespec(&["verify", fault.to_str().unwrap(), "--json", "--max-int", "5", "--min-int", "-5"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["domain"]["int_range"], serde_json::json!([-5, 5]));
}
