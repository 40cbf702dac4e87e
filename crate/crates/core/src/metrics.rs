//! Corpus runs and Syn/Val/Acc metrics.
//!
//! A program counts as syntactically correct, valid or accurate at `k` when
//! at least one of its first `k` rounds is.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::frontend::parse_program;
use crate::logic::DomainConfig;
use crate::pipeline::{generate, PipelineOptions};
use crate::synth::Backend;

/// Result of one generation round on one program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundOutcome {
    pub syn: bool,
    pub val: bool,
    pub acc: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgramRun {
    pub name: String,
    pub rounds: Vec<RoundOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub k: usize,
    pub programs: usize,
    pub syn: f64,
    pub val: f64,
    pub acc: f64,
}

/// `.c` files of `dir`, sorted by name.
pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .collect();
    out.sort();
    Ok(out)
}

fn run_round(src: &str, backend: &dyn Backend, cfg: &DomainConfig, opts: &PipelineOptions) -> RoundOutcome {
    let failed = |e: String| RoundOutcome {
        syn: false,
        val: false,
        acc: false,
        error: Some(e),
    };
    let prog = match parse_program(src) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    match generate(&prog, backend, cfg, opts) {
        Ok(r) => RoundOutcome {
            syn: r.syntactic(),
            val: r.valid(),
            acc: r.accurate(),
            error: None,
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Runs `k` rounds on every program. Programs run in parallel; the output
/// order follows `files`.
pub fn run_corpus(
    files: &[PathBuf],
    backend: &dyn Backend,
    cfg: &DomainConfig,
    opts: &PipelineOptions,
    k: usize,
) -> std::io::Result<Vec<ProgramRun>> {
    let sources: Vec<(String, String)> = files
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            std::fs::read_to_string(p).map(|s| (name, s))
        })
        .collect::<Result<_, _>>()?;
    Ok(sources
        .par_iter()
        .map(|(name, src)| ProgramRun {
            name: name.clone(),
            rounds: (0..k as u64)
                .map(|round| {
                    let opts = PipelineOptions { round, ..opts.clone() };
                    run_round(src, backend, cfg, &opts)
                })
                .collect(),
        })
        .collect())
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

/// Pass@j metrics for j = 1..=k.
pub fn metrics(runs: &[ProgramRun], k: usize) -> Vec<MetricsRow> {
    (1..=k)
        .map(|j| {
            let any = |f: fn(&RoundOutcome) -> bool| runs.iter().filter(|r| r.rounds.iter().take(j).any(f)).count();
            MetricsRow {
                k: j,
                programs: runs.len(),
                syn: percent(any(|o| o.syn), runs.len()),
                val: percent(any(|o| o.val), runs.len()),
                acc: percent(any(|o| o.acc), runs.len()),
            }
        })
        .collect()
}

/// Metrics rows followed by one line per program and round.
pub fn to_csv(backend: &str, rows: &[MetricsRow], runs: &[ProgramRun]) -> String {
    let mut out = String::from("backend,k,programs,syn,val,acc\n");
    for r in rows {
        writeln!(out, "{backend},{},{},{:.2},{:.2},{:.2}", r.k, r.programs, r.syn, r.val, r.acc).unwrap();
    }
    out.push_str("\nprogram,round,syn,val,acc,error\n");
    for p in runs {
        for (i, o) in p.rounds.iter().enumerate() {
            let err = o.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
            writeln!(out, "{},{},{},{},{},{}", p.name, i + 1, o.syn, o.val, o.acc, err).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str, rounds: &[(bool, bool, bool)]) -> ProgramRun {
        ProgramRun {
            name: name.into(),
            rounds: rounds
                .iter()
                .map(|&(syn, val, acc)| RoundOutcome {
                    syn,
                    val,
                    acc,
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn pass_at_k_is_union_of_rounds() {
        let runs = vec![
            run("a", &[(true, false, false), (true, true, false), (true, true, true)]),
            run("b", &[(true, true, true), (false, false, false), (false, false, false)]),
        ];
        let m = metrics(&runs, 3);
        assert_eq!((m[0].val, m[1].val, m[2].val), (50.0, 100.0, 100.0));
        assert_eq!((m[0].acc, m[1].acc, m[2].acc), (50.0, 50.0, 100.0));
    }
}
