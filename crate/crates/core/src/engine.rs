//! Backward approximation of a loop invariant: iterate WLP through the loop
//! body, generalise when an approximation embeds an earlier one, stop when
//! an approximation repeats up to renaming.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::embed::{coupled, msg, msg_list, FreshSupply};
use crate::simplify::{simplify, SimpConfig, SimpError};
use crate::solver::{check_requirements, diagnose_lost_variables, solve, Assignment, InvariantReport, SolverConfig, SolverFailure};
use crate::term::{Expr, Loop, Stmt, Triple};
use crate::wlp::{loop_sites, paths, wlp_with, LoopRow, WlpError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub max_iterations: usize,
    pub simp: SimpConfig,
    pub loop_row: LoopRow,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { max_iterations: 64, simp: SimpConfig::default(), loop_row: LoopRow::Fig5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepKind {
    Init,
    WLPStep,
    GeneraliseStep,
    RenamingFound,
    Budget,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub kind: StepKind,
    #[serde(serialize_with = "as_text")]
    pub formula: Expr,
    pub note: String,
}

fn as_text<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DerivationTrace {
    pub steps: Vec<TraceStep>,
}

impl DerivationTrace {
    fn push(&mut self, kind: StepKind, formula: &Expr, note: impl Into<String>) {
        self.steps.push(TraceStep { kind, formula: formula.clone(), note: note.into() });
    }

    /// The successive approximations, without the closing step.
    pub fn approximations(&self) -> Vec<&Expr> {
        self.steps
            .iter()
            .filter(|s| matches!(s.kind, StepKind::Init | StepKind::WLPStep | StepKind::GeneraliseStep))
            .map(|s| &s.formula)
            .collect()
    }
}

impl fmt::Display for DerivationTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut n = 0;
        for s in &self.steps {
            match s.kind {
                StepKind::RenamingFound | StepKind::Budget => write!(f, "    {:<15} {}", s.kind, s.formula)?,
                _ => {
                    n += 1;
                    write!(f, "({n:>2}) {:<15} {}", s.kind, s.formula)?;
                }
            }
            if !s.note.is_empty() {
                write!(f, "   -- {}", s.note)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineFailure {
    #[error("no fixed point after {iterations} iterations")]
    IterationBudget { iterations: usize, trace: DerivationTrace },
    #[error("every path through the loop body simplified to True")]
    AllBranchesTrue { trace: DerivationTrace },
    #[error("inner loop invariant `{invariant}` still has generalisation variables; try --wlp-loop-row substitute")]
    OpenInnerInvariant { invariant: String, trace: DerivationTrace },
    #[error("no postcondition for an inner loop; annotate it with {{assertion}} after its body")]
    MissingPostcondition,
    #[error(transparent)]
    Wlp(#[from] WlpError),
    #[error(transparent)]
    Simplifier(#[from] SimpError),
}

impl EngineFailure {
    pub fn trace(&self) -> Option<&DerivationTrace> {
        match self {
            EngineFailure::IterationBudget { trace, .. }
            | EngineFailure::AllBranchesTrue { trace }
            | EngineFailure::OpenInnerInvariant { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// A putative invariant together with its unknowns and derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discovery {
    pub putative: Expr,
    pub genvars: BTreeSet<String>,
    pub trace: DerivationTrace,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EngineState {
    pub current: Expr,
    pub history: Vec<Expr>,
    pub fresh: FreshSupply,
    pub iteration: usize,
    pub max_iterations: usize,
}

/// Runs the search with a private name supply that avoids the loop's and
/// the postcondition's variables.
pub fn find_invariant(lp: &Loop, post: &Expr, cfg: &EngineConfig) -> Result<Discovery, EngineFailure> {
    let mut avoid = post.free_vars();
    avoid.extend(lp.cond.free_vars());
    avoid.extend(lp.body.vars());
    let mut fresh = FreshSupply::new(avoid);
    find_invariant_with(lp, post, cfg, &mut fresh)
}

pub fn find_invariant_with(
    lp: &Loop,
    post: &Expr,
    cfg: &EngineConfig,
    fresh: &mut FreshSupply,
) -> Result<Discovery, EngineFailure> {
    let mut trace = DerivationTrace::default();
    let init = simplify(&Expr::tt(), &Expr::and(Expr::not(lp.cond.clone()), post.clone()), &cfg.simp)?;
    trace.push(StepKind::Init, &init, "");
    let mut st = EngineState {
        current: init,
        history: Vec::new(),
        fresh: fresh.clone(),
        iteration: 0,
        max_iterations: cfg.max_iterations,
    };
    let result = run(&mut st, lp, cfg, &mut trace);
    *fresh = st.fresh;
    let putative = result?;
    let genvars = putative.free_vars().into_iter().filter(|v| fresh.is_generalisation_var(v)).collect();
    Ok(Discovery { putative, genvars, trace, iterations: st.iteration })
}

fn run(st: &mut EngineState, lp: &Loop, cfg: &EngineConfig, trace: &mut DerivationTrace) -> Result<Expr, EngineFailure> {
    loop {
        if st.iteration >= st.max_iterations {
            trace.push(StepKind::Budget, &st.current, format!("stopped after {} iterations", st.iteration));
            return Err(EngineFailure::IterationBudget { iterations: st.iteration, trace: trace.clone() });
        }
        st.iteration += 1;
        let p = st.current.clone();
        if p.is_true() {
            trace.push(StepKind::RenamingFound, &p, "True is preserved by every body");
            return Ok(p);
        }

        let genvars = st.fresh.issued().clone();
        if let Some(i) = st.history.iter().position(|q| p.renaming_of(q, &genvars).is_some()) {
            trace.push(StepKind::RenamingFound, &st.history[i], format!("`{p}` is a renaming of it"));
            return Ok(st.history[i].clone());
        }

        if let Some(q) = st.history.iter().rev().find(|q| coupled(q, &p)).cloned() {
            let g = msg(&p, &q, &mut st.fresh).generalised;
            let genvars = st.fresh.issued().clone();
            if g.renaming_of(&p, &genvars).is_some() {
                trace.push(StepKind::RenamingFound, &p, format!("generalising against `{q}` changes nothing"));
                return Ok(p);
            }
            trace.push(StepKind::GeneraliseStep, &g, format!("embeds `{q}`"));
            st.current = g;
            continue;
        }

        let pre = wlp_with(&lp.body, &p, cfg.loop_row)?;
        let pre_vars = pre.free_vars();
        let own = p.free_vars();
        if let Some(stray) = pre_vars.iter().find(|v| st.fresh.is_generalisation_var(v) && !own.contains(*v)) {
            let invariant = lp
                .body
                .loops()
                .into_iter()
                .filter_map(|l| l.invariant.as_ref())
                .find(|inv| inv.mentions(stray))
                .map_or_else(|| stray.clone(), |inv| inv.to_string());
            return Err(EngineFailure::OpenInnerInvariant { invariant, trace: trace.clone() });
        }

        let mut simplified = Vec::new();
        for path in paths(&pre) {
            simplified.push(simplify(&lp.cond, &path, &cfg.simp)?);
        }
        let dropped = simplified.iter().filter(|s| s.is_true()).count();
        if dropped == simplified.len() {
            return Err(EngineFailure::AllBranchesTrue { trace: trace.clone() });
        }
        let next = msg_list(&simplified, &mut st.fresh);
        let note = match (simplified.len(), dropped) {
            (1, _) => String::new(),
            (n, 0) => format!("{n} paths generalised"),
            (n, d) => format!("{n} paths, {d} simplified to True"),
        };
        trace.push(StepKind::WLPStep, &next, note);
        st.history.push(p);
        st.current = next;
    }
}

/// What happened to one loop of a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopOutcome {
    Solved(InvariantReport),
    Engine(EngineFailure),
    Solver(SolverFailure),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopReport {
    /// Pre-order position of the loop in the program.
    pub index: usize,
    pub location: String,
    pub post: Option<Expr>,
    /// `None` when the program already carried an invariant for this loop.
    pub discovery: Option<Discovery>,
    pub lost_variables: Vec<String>,
    pub outcome: LoopOutcome,
}

impl LoopReport {
    pub fn invariant(&self) -> Option<&Expr> {
        match &self.outcome {
            LoopOutcome::Solved(r) => Some(&r.invariant),
            _ => self.discovery.as_ref().map(|d| &d.putative),
        }
    }

    pub fn verified(&self) -> bool {
        matches!(&self.outcome, LoopOutcome::Solved(r) if r.verdict.is_verified())
    }
}

pub fn loop_location(index: usize, lp: &Loop) -> String {
    format!("loop {index} (WHILE {})", lp.cond)
}

/// The assertion that must hold when the loop at `index` exits.
fn loop_post(t: &Triple, index: usize, row: LoopRow) -> Result<Expr, EngineFailure> {
    let sites = loop_sites(&t.program);
    let site = &sites[index];
    if let Some(p) = &site.lp.post {
        return Ok(p.clone());
    }
    let rest = Stmt::seq(site.suffix.iter().map(|s| (*s).clone()).collect());
    let target = match site.enclosing.last() {
        None => t.post.clone(),
        Some(outer) => outer.invariant.clone().ok_or(EngineFailure::MissingPostcondition)?,
    };
    Ok(wlp_with(&rest, &target, row)?)
}

/// Discovers and instantiates an invariant for every loop, innermost and
/// last first, annotating a copy of the program as it goes. Loops that
/// already carry an invariant are only checked.
pub fn annotate_program(t: &Triple, engine: &EngineConfig, solver: &SolverConfig) -> (Triple, Vec<LoopReport>) {
    let mut work = t.clone();
    let mut fresh = FreshSupply::new(t.vars());
    let count = t.program.loops().len();
    let mut reports = Vec::new();
    for index in (0..count).rev() {
        let lp = work.program.loops()[index].clone();
        let location = loop_location(index, &lp);
        let mut report = LoopReport {
            index,
            location,
            post: None,
            discovery: None,
            lost_variables: Vec::new(),
            outcome: LoopOutcome::Engine(EngineFailure::MissingPostcondition),
        };
        let post = match loop_post(&work, index, engine.loop_row) {
            Ok(p) => p,
            Err(e) => {
                report.outcome = LoopOutcome::Engine(e);
                reports.push(report);
                continue;
            }
        };
        report.post = Some(post.clone());

        if let Some(inv) = &lp.invariant {
            report.outcome = match check_requirements(&work, index, inv, &Assignment::default(), &post, solver) {
                Ok((verdict, stats)) => LoopOutcome::Solved(InvariantReport {
                    invariant: inv.clone(),
                    assignment: None,
                    verdict,
                    stats,
                }),
                Err(e) => LoopOutcome::Solver(e),
            };
            reports.push(report);
            continue;
        }

        let found = match find_invariant_with(&lp, &post, engine, &mut fresh) {
            Ok(d) => d,
            Err(e) => {
                report.outcome = LoopOutcome::Engine(e);
                reports.push(report);
                continue;
            }
        };
        report.lost_variables = diagnose_lost_variables(&found.putative, &lp.body);
        if let Some(l) = work.program.loop_mut(index) {
            l.invariant = Some(found.putative.clone());
        }
        report.outcome = match solve(&work, index, &found.putative, &found.genvars, &post, solver) {
            Ok(r) => LoopOutcome::Solved(r),
            Err(e) => LoopOutcome::Solver(e),
        };
        report.discovery = Some(found);
        reports.push(report);
    }
    reports.reverse();
    (work, reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_program, parse_stmt};

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn the_loop(src: &str) -> Loop {
        match parse_stmt(src).unwrap() {
            Stmt::While(l) => l,
            other => panic!("not a loop: {other}"),
        }
    }

    fn same_modulo_genvars(a: &Expr, b: &Expr) -> bool {
        let names: BTreeSet<String> = a
            .free_vars()
            .into_iter()
            .chain(b.free_vars())
            .filter(|v| v.starts_with('g'))
            .collect();
        a.renaming_of(b, &names).is_some()
    }

    fn assert_trace(d: &Discovery, expected: &[&str]) {
        let got = d.trace.approximations();
        assert_eq!(got.len(), expected.len(), "{}", d.trace);
        for (g, x) in got.iter().zip(expected) {
            assert!(same_modulo_genvars(g, &e(x)), "got {g}, expected {x}\n{}", d.trace);
        }
    }

    #[test]
    fn power_loop() {
        let lp = the_loop("WHILE x<n DO BEGIN x:=x+1; y:=y*k END");
        let d = find_invariant(&lp, &e("y=k^n"), &EngineConfig::default()).unwrap();
        assert_trace(
            &d,
            &[
                "x≥n ∧ y=k^n",
                "x+1=n ∧ y*k=k^n",
                "x+(1+1)=n ∧ y*(k*k)=k^n",
                "x+g1=n ∧ y*g2=k^n",
                "x+(1+g1)=n ∧ y*(k*g2)=k^n",
                "x+g3=n ∧ y*g4=k^n",
            ],
        );
        assert_eq!(d.putative, e("x+g1=n ∧ y*g2=k^n"));
        assert_eq!(d.genvars.len(), 2);
        assert_eq!(d.trace.steps.last().unwrap().kind, StepKind::RenamingFound);
    }

    #[test]
    fn binary_power_loop() {
        let lp = the_loop("WHILE x>0 DO BEGIN IF x%2=1 THEN y:=y*z ELSE SKIP; x:=x/2; z:=z*z END");
        let d = find_invariant(&lp, &e("y=k^n"), &EngineConfig::default()).unwrap();
        assert_trace(
            &d,
            &[
                "x≤0 ∧ y=k^n",
                "x=1 ∧ y*z=k^n",
                "x=g1 ∧ y*(z*g2)=k^n",
                "x=g3 ∧ y*(z*(z*g4))=k^n",
                "x=g5 ∧ y*(z*g6)=k^n",
            ],
        );
        assert!(d.trace.steps[1].note.contains("simplified to True"));
    }

    #[test]
    fn multiplication_loop() {
        let lp = the_loop("WHILE z<k DO BEGIN v:=v+y; z:=z+1 END");
        let d = find_invariant(&lp, &e("v=y*k"), &EngineConfig::default()).unwrap();
        assert_trace(
            &d,
            &[
                "z≥k ∧ v=y*k",
                "z+1=k ∧ v+y=y*k",
                "z+(1+1)=k ∧ v+(y+y)=y*k",
                "z+g1=k ∧ v+g2=y*k",
                "z+(1+g1)=k ∧ v+(y+g2)=y*k",
                "z+g3=k ∧ v+g4=y*k",
            ],
        );
    }

    #[test]
    fn swapped_operands_lose_a_variable() {
        let lp = the_loop("WHILE x<n DO BEGIN x:=x+1; y:=k*y END");
        let d = find_invariant(&lp, &e("y=k^n"), &EngineConfig::default()).unwrap();
        assert!(!d.putative.mentions("y"), "{}", d.putative);
        assert!(same_modulo_genvars(&d.putative, &e("x+g1=n ∧ k*g2=k^n")), "{}", d.trace);
    }

    #[test]
    fn trivial_loop() {
        let lp = the_loop("WHILE False DO SKIP");
        let d = find_invariant(&lp, &Expr::tt(), &EngineConfig::default()).unwrap();
        assert_eq!(d.putative, Expr::tt());
    }

    #[test]
    fn budget_guard() {
        let lp = the_loop("WHILE x<n DO BEGIN x:=x+1; y:=y*k END");
        let cfg = EngineConfig { max_iterations: 2, ..EngineConfig::default() };
        let err = find_invariant(&lp, &e("y=k^n"), &cfg).unwrap_err();
        assert!(matches!(err, EngineFailure::IterationBudget { iterations: 2, .. }));
        assert_eq!(err.trace().unwrap().steps.last().unwrap().kind, StepKind::Budget);
    }

    #[test]
    fn open_inner_invariant_is_reported() {
        let lp = the_loop(
            "WHILE x<n DO BEGIN x:=x+1; z:=0; v:=0; \
             WHILE z<k DO {z+g1=k ∧ v+g2=y*k} BEGIN v:=v+y; z:=z+1 END {v=y*k}; y:=v END",
        );
        let mut fresh = FreshSupply::default();
        fresh.next_name();
        fresh.next_name();
        let err = find_invariant_with(&lp, &e("y=k^n"), &EngineConfig::default(), &mut fresh).unwrap_err();
        assert!(matches!(err, EngineFailure::OpenInnerInvariant { .. }), "{err}");

        let cfg = EngineConfig { loop_row: LoopRow::Substitute, ..EngineConfig::default() };
        let d = find_invariant_with(&lp, &e("y=k^n"), &cfg, &mut fresh).unwrap();
        assert!(same_modulo_genvars(&d.putative, &e("x+g1=n ∧ y*g2=k^n")), "{}", d.trace);
        assert_eq!(d.trace.approximations().len(), 6);
    }

    const NESTED: &str = "{n≥0} x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; z:=0; v:=0; \
        WHILE z<k DO BEGIN v:=v+y; z:=z+1 END {v=y*k}; y:=v END {y=k^n}";

    #[test]
    fn annotate_power_program() {
        let t = parse_program("{n≥0} x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; y:=y*k END {y=k^n}").unwrap();
        let (annotated, reports) = annotate_program(&t, &EngineConfig::default(), &SolverConfig::default());
        assert_eq!(reports.len(), 1);
        assert!(reports[0].verified(), "{:?}", reports[0].outcome);
        assert!(annotated.program.loops()[0].invariant.is_some());
    }

    #[test]
    fn annotate_without_loops() {
        let t = parse_program("{True} x:=1 {x=1}").unwrap();
        let (annotated, reports) = annotate_program(&t, &EngineConfig::default(), &SolverConfig::default());
        assert!(reports.is_empty());
        assert_eq!(annotated, t);
    }

    #[test]
    fn annotate_nested_program() {
        let t = parse_program(NESTED).unwrap();
        let (_, reports) = annotate_program(&t, &EngineConfig::default(), &SolverConfig::default());
        assert!(reports[1].verified(), "{:?}", reports[1].outcome);
        assert!(matches!(reports[0].outcome, LoopOutcome::Engine(EngineFailure::OpenInnerInvariant { .. })));

        let cfg = EngineConfig { loop_row: LoopRow::Substitute, ..EngineConfig::default() };
        let (_, reports) = annotate_program(&t, &cfg, &SolverConfig::default());
        assert!(reports.iter().all(LoopReport::verified), "{:?}", reports);
        assert!(reports[0].lost_variables.is_empty());
    }
}
