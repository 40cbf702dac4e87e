//! Prompt text for text-based backends and parsing of their answers.

use std::collections::BTreeMap;

use crate::frontend::assertion::PLACEHOLDER_PREFIX;

use super::{Candidate, SynthesisRequest};

const CALIBRATION_ARRAYS: &str = include_str!("assets/calibration_arrays.txt");
const CALIBRATION_STRUCTS: &str = include_str!("assets/calibration_structs.txt");

const SYSTEM: &str = "You write ACSL loop invariants for C functions. \
Answer with annotations only, one per line, and no explanations unless asked.";

pub fn system_prompt() -> &'static str {
    SYSTEM
}

fn header(req: &SynthesisRequest, out: &mut String) {
    out.push_str("Function:\n```c\n");
    out.push_str(&req.function_source);
    out.push_str("\n```\n");
    if !req.precondition.is_empty() {
        out.push_str(&format!("Precondition: {}\n", req.precondition));
    }
    if !req.loop_source.is_empty() {
        out.push_str("Loop:\n```c\n");
        out.push_str(&req.loop_source);
        out.push_str("\n```\n");
    }
    if let Some(a) = &req.analysis {
        out.push_str("Earlier analysis:\n");
        out.push_str(a);
        out.push('\n');
    }
    if req.calibration {
        let src = format!("{}{}", req.function_source, req.loop_source);
        if src.contains('[') {
            out.push_str(CALIBRATION_ARRAYS);
        }
        if src.contains("->") {
            out.push_str(CALIBRATION_STRUCTS);
        }
    }
}

pub fn think_prompt(req: &SynthesisRequest) -> String {
    let mut out = String::new();
    header(req, &mut out);
    out.push_str(
        "Describe in a few lines how each variable changes across one iteration of every loop: \
         which are counters, which accumulate, which are only read.\n",
    );
    out
}

pub fn fill_prompt(req: &SynthesisRequest) -> String {
    let mut out = String::new();
    header(req, &mut out);
    out.push_str("Templates:\n");
    for t in &req.templates {
        out.push_str(t);
        out.push('\n');
    }
    out.push_str(&format!(
        "Replace every `{PLACEHOLDER_PREFIX}X` by an assertion so that all templates together are an \
         inductive invariant. Answer one line per placeholder in the form\n\
         {PLACEHOLDER_PREFIX}X := <assertion>\n"
    ));
    out
}

pub fn nested_prompt(req: &SynthesisRequest) -> String {
    let mut out = String::new();
    header(req, &mut out);
    if !req.templates.is_empty() {
        out.push_str("Facts that already hold:\n");
        for t in &req.templates {
            out.push_str(t);
            out.push('\n');
        }
    }
    out.push_str("Give loop invariants for the loop above, one `loop invariant <assertion>;` per line.\n");
    out
}

pub fn refine_prompt(req: &SynthesisRequest) -> String {
    let mut out = String::new();
    header(req, &mut out);
    out.push_str("Current invariants:\n");
    for c in &req.current {
        out.push_str(&format!("loop invariant {c};\n"));
    }
    out.push_str("Problems:\n");
    for g in &req.guidance {
        out.push_str(&format!("- {:?}: {}", g.class, g.message));
        if let Some(c) = &g.clause {
            out.push_str(&format!(" (clause `{c}`)"));
        }
        out.push('\n');
        if let Some(cex) = &g.counterexample {
            for line in cex.lines() {
                out.push_str(&format!("    {line}\n"));
            }
        }
    }
    out.push_str("Give the corrected full list, one `loop invariant <assertion>;` per line.\n");
    out
}

/// Reads `PLACE_HOLDER_for_X := a` lines (`:` and `=` are accepted too).
pub fn parse_fillings(answer: &str) -> BTreeMap<String, Candidate> {
    let mut out = BTreeMap::new();
    for line in answer.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '`']).trim();
        let Some(rest) = line.strip_prefix(PLACEHOLDER_PREFIX) else { continue };
        let Some(split) = rest.find([':', '=']) else { continue };
        let name = rest[..split].trim().to_string();
        let text = rest[split..].trim_start_matches([':', '=']).trim().trim_end_matches('`');
        if !name.is_empty() {
            out.insert(name, Candidate::from_text(text));
        }
    }
    out
}

/// Reads `loop invariant a;` lines.
pub fn parse_invariants(answer: &str) -> Vec<Candidate> {
    answer
        .lines()
        .filter_map(|l| l.trim().strip_prefix("loop invariant"))
        .map(Candidate::from_text)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fillings_and_invariants_parse() {
        let f = parse_fillings("PLACE_HOLDER_for_i := 0 <= i <= n\n- PLACE_HOLDER_for_s: s == 0\nnoise");
        assert_eq!(f.len(), 2);
        assert!(matches!(f["i"], Candidate::Parsed(_)));
        let v = parse_invariants("loop invariant i >= 0;\nloop invariant s == sum(0, i);\n");
        assert!(matches!(v[0], Candidate::Parsed(_)));
        assert!(matches!(v[1], Candidate::Raw { .. }));
    }

    #[test]
    fn calibration_only_when_relevant() {
        let req = SynthesisRequest {
            function_source: "int f(int x) { return x; }".into(),
            calibration: true,
            ..Default::default()
        };
        assert!(!fill_prompt(&req).contains("\\sum"));
    }
}
