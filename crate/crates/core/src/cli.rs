//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::frontend::{parse_program, FrontendError, Program};
use crate::logic::DomainConfig;
use crate::metrics::{corpus_files, metrics, run_corpus, to_csv};
use crate::pipeline::{generate, generate_for, PipelineError, PipelineOptions};
use crate::refine::DEFAULT_BUDGET;
use crate::synth::{backend_from_env, SynthError};
use crate::verifier::{Overall, Verifier, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sespec", version, about = "Generate and check ACSL specifications for small C programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    /// Smallest integer value the verifier tries.
    #[arg(long, global = true, default_value_t = -8, allow_negative_numbers = true)]
    pub min_int: i64,
    /// Largest integer value the verifier tries.
    #[arg(long, global = true, default_value_t = 8)]
    pub max_int: i64,
    /// Array cells from this index on share one value.
    #[arg(long, global = true, default_value_t = 4)]
    pub max_array_len: usize,
    /// Enumeration cap per check.
    #[arg(long, global = true, default_value_t = 20_000)]
    pub max_states: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

impl DomainArgs {
    pub fn config(&self) -> DomainConfig {
        DomainConfig {
            int_range: (self.min_int, self.max_int),
            max_array_len: self.max_array_len,
            max_states: self.max_states,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Hide `assert` goals from generation.
    #[arg(long)]
    pub mask_goals: bool,
    /// Refinement calls allowed per loop.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    /// Skip the free-text analysis request.
    #[arg(long)]
    pub no_think: bool,
    /// Leave worked examples out of prompts.
    #[arg(long)]
    pub no_calibration: bool,
    /// Refine the loop invariants already in the file instead of generating new ones.
    #[arg(long)]
    pub repair: bool,
}

impl GenArgs {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            budget: self.budget,
            mask_goals: self.mask_goals,
            calibration: !self.no_calibration,
            think: !self.no_think,
            round: 0,
            repair: self.repair,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate annotations and print the annotated program.
    Gen {
        file: PathBuf,
        /// Only this function and its callees.
        #[arg(long = "fn")]
        function: Option<String>,
        /// Print verification reports as JSON instead of the program.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Check the annotations already in a file.
    Verify {
        file: PathBuf,
        #[arg(long = "fn")]
        function: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run generation over a directory of programs and print a metrics CSV.
    Bench {
        dir: PathBuf,
        /// Rounds per program.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gen: GenArgs,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] FrontendError),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Backend(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) | CliError::UnknownFunction(_) | CliError::Backend(_) => EXIT_USAGE,
            CliError::Pipeline(_) | CliError::Verify(_) => EXIT_ANALYSIS,
        }
    }
}

fn load(path: &PathBuf) -> Result<Program, CliError> {
    let src = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(parse_program(&src)?)
}

fn check_function(prog: &Program, f: &Option<String>) -> Result<(), CliError> {
    match f {
        Some(name) if prog.function(name).is_none() => Err(CliError::UnknownFunction(name.clone())),
        _ => Ok(()),
    }
}

/// Runs a parsed command; returns the exit code and what to print.
pub fn run(cli: &Cli) -> Result<(i32, String), CliError> {
    let cfg = cli.domain.config();
    match &cli.command {
        Command::Gen {
            file,
            function,
            json,
            gen,
        } => {
            let prog = load(file)?;
            check_function(&prog, function)?;
            let backend = backend_from_env()?;
            let opts = gen.options();
            let result = match function {
                Some(f) => generate_for(&prog, backend.as_ref(), &cfg, &opts, std::slice::from_ref(f))?,
                None => generate(&prog, backend.as_ref(), &cfg, &opts)?,
            };
            let ok = result.reports.values().all(|r| r.overall == Overall::Verified);
            let text = if *json {
                serde_json::to_string_pretty(&serde_json::json!({
                    "reports": result.reports,
                    "loops": result.loops,
                    "generations": result.generations,
                }))
                .expect("reports serialize")
            } else {
                result.render(&prog)?
            };
            Ok((if ok { EXIT_OK } else { EXIT_ANALYSIS }, text))
        }
        Command::Verify { file, function, json } => {
            let prog = load(file)?;
            check_function(&prog, function)?;
            let mut v = Verifier::new(&prog, cfg);
            let names: Vec<String> = match function {
                Some(f) => vec![f.clone()],
                None => prog.functions.iter().map(|f| f.name.clone()).collect(),
            };
            let mut reports = Vec::new();
            for n in &names {
                reports.push(v.verify_function(n, &Default::default())?);
            }
            let ok = reports.iter().all(|r| r.overall == Overall::Verified);
            let text = if *json {
                serde_json::to_string_pretty(&reports).expect("reports serialize")
            } else {
                reports
                    .iter()
                    .map(|r| {
                        let mut s = format!("{}: {:?}", r.function, r.overall);
                        for c in r.clauses.iter().filter(|c| !c.passed()) {
                            s.push_str(&format!("\n  loop {} clause `{}` fails", c.loop_id, c.text));
                        }
                        for g in r.goals.iter().filter(|g| !g.verdict.passed()) {
                            s.push_str(&format!("\n  {:?} `{}` fails", g.check, g.text));
                        }
                        s
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            Ok((if ok { EXIT_OK } else { EXIT_ANALYSIS }, text))
        }
        Command::Bench { dir, k, out, gen } => {
            let files = corpus_files(dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            let backend = backend_from_env()?;
            let runs = run_corpus(&files, backend.as_ref(), &cfg, &gen.options(), *k).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            let csv = to_csv(backend.name(), &metrics(&runs, *k), &runs);
            match out {
                Some(p) => {
                    std::fs::write(p, &csv).map_err(|source| CliError::Io {
                        path: p.clone(),
                        source,
                    })?;
                    Ok((EXIT_OK, String::new()))
                }
                None => Ok((EXIT_OK, csv)),
            }
        }
    }
}
