//! Command-line front end.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value as Json};

use crate::engine::{annotate_program, loop_location, EngineConfig, LoopOutcome, LoopReport};
use crate::eval::{eval_bool, Arith};
use crate::parser::parse_program;
use crate::pretty::pretty_stmt;
use crate::simplify::{Rule, SimpConfig};
use crate::solver::{input_stores, SolverConfig, SolverFailure};
use crate::term::Triple;
use crate::wlp::{wlp_with, LoopRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_ENGINE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Find, instantiate and check an invariant for every loop.
    Discover,
    /// Check a fully annotated program.
    Verify,
    /// Like discover, also printing every approximation.
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RowArg {
    Fig5,
    Substitute,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "loopinv", version, about = "Loop invariant discovery for a small imperative language")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub mode: Mode,
    pub input: PathBuf,
    /// Largest value tried for every input and checked variable.
    #[arg(long = "bound", default_value_t = 6)]
    pub domain_bound: u64,
    /// Candidate expressions the solver may try per loop.
    #[arg(long, default_value_t = 2_000_000)]
    pub max_candidates: usize,
    #[arg(long = "max-iter", default_value_t = 64)]
    pub max_iterations: usize,
    /// Largest value tried when refuting a path condition.
    #[arg(long, default_value_t = 8)]
    pub refutation_bound: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long = "wlp-loop-row", value_enum, default_value_t = RowArg::Fig5)]
    pub loop_row: RowArg,
    /// Disable a simplifier rule (R1..R6, absorb); repeatable.
    #[arg(long = "no-rule", value_parser = parse_rule)]
    pub disabled_rules: Vec<Rule>,
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    Rule::parse(s).ok_or_else(|| format!("unknown rule `{s}`"))
}

impl RunConfig {
    pub fn engine(&self) -> EngineConfig {
        let mut simp = SimpConfig { refutation_bound: self.refutation_bound, ..SimpConfig::default() };
        simp.disabled.extend(self.disabled_rules.iter().copied());
        EngineConfig {
            max_iterations: self.max_iterations,
            simp,
            loop_row: match self.loop_row {
                RowArg::Fig5 => LoopRow::Fig5,
                RowArg::Substitute => LoopRow::Substitute,
            },
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { domain_bound: self.domain_bound, max_candidates: self.max_candidates, ..SolverConfig::default() }
    }
}

/// Exit code and report text for one run.
pub fn run(cfg: &RunConfig) -> (i32, String) {
    let source = match std::fs::read_to_string(&cfg.input) {
        Ok(s) => s,
        Err(e) => return (EXIT_PARSE, format!("error: cannot read {}: {e}\n", cfg.input.display())),
    };
    run_source(cfg, &source)
}

pub fn run_source(cfg: &RunConfig, source: &str) -> (i32, String) {
    let triple = match parse_program(source) {
        Ok(t) => t,
        Err(e) => return (EXIT_PARSE, format!("error: {}: {e}\n", cfg.input.display())),
    };
    match cfg.mode {
        Mode::Discover | Mode::Trace => discover(cfg, &triple),
        Mode::Verify => verify(cfg, &triple),
    }
}

fn exit_code(reports: &[LoopReport]) -> i32 {
    if reports.iter().any(|r| matches!(r.outcome, LoopOutcome::Engine(_) | LoopOutcome::Solver(_))) {
        EXIT_ENGINE
    } else if reports.iter().all(LoopReport::verified) {
        EXIT_OK
    } else {
        EXIT_VERIFICATION
    }
}

fn lost_warning(v: &str) -> String {
    format!(
        "variable {v} updated in loop body but absent from invariant; \
         writing it as the left operand of binary operations may keep it"
    )
}

fn verdict_json(outcome: &LoopOutcome) -> Json {
    match outcome {
        LoopOutcome::Solved(r) => serde_json::to_value(&r.verdict).unwrap_or(Json::Null),
        LoopOutcome::Engine(e) => json!({"status": "EngineFailure", "message": e.to_string()}),
        LoopOutcome::Solver(e) => {
            let mut v = json!({"status": "SolverFailure", "message": e.to_string()});
            if let SolverFailure::NoCandidate { requirement, .. } | SolverFailure::BudgetExhausted { requirement, .. } = e {
                v["requirement"] = json!(requirement);
            }
            v
        }
    }
}

fn verdict_text(outcome: &LoopOutcome) -> String {
    match outcome {
        LoopOutcome::Solved(r) => r.verdict.to_string(),
        LoopOutcome::Engine(e) => format!("engine failure: {e}"),
        LoopOutcome::Solver(e) => format!("solver failure: {e}"),
    }
}

fn trace_of(r: &LoopReport) -> Option<&crate::engine::DerivationTrace> {
    match (&r.discovery, &r.outcome) {
        (Some(d), _) => Some(&d.trace),
        (None, LoopOutcome::Engine(e)) => e.trace(),
        _ => None,
    }
}

fn discover(cfg: &RunConfig, triple: &Triple) -> (i32, String) {
    let (annotated, reports) = annotate_program(triple, &cfg.engine(), &cfg.solver());
    let code = exit_code(&reports);
    let with_trace = cfg.mode == Mode::Trace;
    let out = match cfg.format {
        Format::Json => {
            let loops: Vec<Json> = reports
                .iter()
                .map(|r| {
                    let assignment = match &r.outcome {
                        LoopOutcome::Solved(s) => serde_json::to_value(&s.assignment).unwrap_or(Json::Null),
                        _ => Json::Null,
                    };
                    json!({
                        "location": r.location,
                        "invariant": r.invariant().map(|e| e.to_string()),
                        "genvars": r.discovery.as_ref().map(|d| d.genvars.iter().cloned().collect::<Vec<_>>()).unwrap_or_default(),
                        "assignment": assignment,
                        "verdict": verdict_json(&r.outcome),
                        "trace": if with_trace { trace_of(r).map(|t| serde_json::to_value(&t.steps).unwrap_or(Json::Null)) } else { None },
                        "warnings": r.lost_variables.iter().map(|v| lost_warning(v)).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let doc = json!({"loops": loops, "exit_code": code});
            serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"
        }
        Format::Text => {
            let mut out = String::new();
            for r in &reports {
                let _ = writeln!(out, "{}", r.location);
                if let Some(post) = &r.post {
                    let _ = writeln!(out, "  postcondition: {post}");
                }
                if with_trace {
                    if let Some(t) = trace_of(r) {
                        let _ = writeln!(out, "  approximations:");
                        for line in t.to_string().lines() {
                            let _ = writeln!(out, "    {line}");
                        }
                    }
                }
                if let Some(inv) = r.invariant() {
                    let _ = writeln!(out, "  invariant: {inv}");
                }
                if let Some(d) = &r.discovery {
                    if !d.genvars.is_empty() {
                        let names: Vec<&str> = d.genvars.iter().map(String::as_str).collect();
                        let _ = writeln!(out, "  generalisation variables: {}", names.join(", "));
                    }
                }
                for v in &r.lost_variables {
                    let _ = writeln!(out, "  warning: {}", lost_warning(v));
                }
                if let LoopOutcome::Solved(s) = &r.outcome {
                    if let Some(a) = &s.assignment {
                        let _ = writeln!(out, "  assignment: {a}");
                    }
                }
                let _ = writeln!(out, "  verdict: {}", verdict_text(&r.outcome));
            }
            if reports.is_empty() {
                out.push_str("no loops\n");
            }
            if code == EXIT_OK && !reports.is_empty() {
                let _ = writeln!(out, "\nannotated program:\n{}", pretty_stmt(&annotated.program));
            }
            out
        }
    };
    (code, out)
}

fn verify(cfg: &RunConfig, triple: &Triple) -> (i32, String) {
    let row = cfg.engine().loop_row;
    let mut out = String::new();
    let mut loops = Vec::new();
    for (i, lp) in triple.program.loops().into_iter().enumerate() {
        if lp.invariant.is_none() {
            let msg = format!("{} has no invariant annotation", loop_location(i, lp));
            return (EXIT_ENGINE, render_error(cfg, &msg));
        }
    }

    // the triple itself: P ⇒ WLP(S, Q) on every bounded input store
    let pre = match wlp_with(&triple.program, &triple.post, row) {
        Ok(p) => p,
        Err(e) => return (EXIT_ENGINE, render_error(cfg, &e.to_string())),
    };
    let mut triple_ok = true;
    let mut witness = None;
    for s in input_stores(triple, cfg.domain_bound) {
        if matches!(eval_bool(&pre, &s, Arith::Strict), Ok(false)) {
            triple_ok = false;
            witness = Some(s);
            break;
        }
    }

    let (_, reports) = annotate_program(triple, &cfg.engine(), &cfg.solver());
    let mut code = exit_code(&reports);
    if !triple_ok && code == EXIT_OK {
        code = EXIT_VERIFICATION;
    }
    for r in &reports {
        loops.push(json!({
            "location": r.location,
            "invariant": r.invariant().map(|e| e.to_string()),
            "genvars": Vec::<String>::new(),
            "assignment": Json::Null,
            "verdict": verdict_json(&r.outcome),
            "trace": Json::Null,
        }));
    }
    match cfg.format {
        Format::Json => {
            let doc = json!({
                "loops": loops,
                "triple": {"holds": triple_ok, "counterexample": witness},
                "exit_code": code,
            });
            out = serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n";
        }
        Format::Text => {
            for r in &reports {
                let _ = writeln!(out, "{}", r.location);
                if let Some(inv) = r.invariant() {
                    let _ = writeln!(out, "  invariant: {inv}");
                }
                let _ = writeln!(out, "  verdict: {}", verdict_text(&r.outcome));
            }
            match witness {
                None => out.push_str("triple: verified up to bound\n"),
                Some(s) => {
                    let _ = writeln!(out, "triple: precondition does not imply the weakest precondition at {s}");
                }
            }
        }
    }
    (code, out)
}

fn render_error(cfg: &RunConfig, msg: &str) -> String {
    match cfg.format {
        Format::Json => serde_json::to_string_pretty(&json!({"loops": [], "error": msg})).unwrap_or_default() + "\n",
        Format::Text => format!("error: {msg}\n"),
    }
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if std::env::var_os("LOOPINV_SEED").is_some() {
        eprintln!("error: LOOPINV_SEED is set, but loopinv is deterministic and takes no seed");
        return EXIT_ENGINE;
    }
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ENGINE } else { EXIT_OK };
        }
    };
    let (code, report) = run(&cfg);
    print!("{report}");
    code
}

