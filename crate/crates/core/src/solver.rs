//! Instantiation of generalisation variables and bounded checking of the
//! three invariant requirements.
//!
//! A generalisation variable `g` is read as a ghost sequence `g_0, g_1, ...`
//! indexed by loop iteration. The solver looks for an initial value `g_0`
//! over the loop-entry state, a step `g_{i+1}` over the state at iteration
//! `i` and `g_i`, and a final value over the exit state. Candidates come from
//! a small expression grammar and are judged on executions of the program
//! from every input store up to a bound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::eval::{eval_bool, eval_nat, exec, exec_observing, Arith, EvalError, ExecOutcome, LoopVisit, Overlay, Store};
use crate::term::{Expr, Loop, Op, Sort, Stmt, Triple};
use crate::wlp::top_conjuncts;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    /// Inputs and checked variables range over `0..=domain_bound`.
    pub domain_bound: u64,
    /// Nesting depth of candidate expressions, at most 2.
    pub template_depth: usize,
    pub literal_pool: Vec<u64>,
    pub operator_pool: Vec<Op>,
    /// Loop iterations allowed per program run.
    pub fuel: u64,
    /// Total candidate expressions examined before giving up.
    pub max_candidates: usize,
    /// Initial candidates to backtrack over when no step fits.
    pub max_initial_backtrack: usize,
    /// Passing final candidates kept per component for the joint check.
    pub final_pool: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            domain_bound: 6,
            template_depth: 2,
            literal_pool: vec![0, 1, 2],
            operator_pool: Op::ARITHMETIC.to_vec(),
            fuel: 10_000,
            max_candidates: 2_000_000,
            max_initial_backtrack: 4,
            final_pool: 16,
        }
    }
}

/// How a generalisation variable moves from one iteration to the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Uniform(Expr),
    /// `cond` is evaluated in the state before the iteration.
    Cases { cond: Expr, then: Expr, otherwise: Expr },
}

impl Step {
    fn select(&self, s: &Store) -> &Expr {
        match self {
            Step::Uniform(e) => e,
            Step::Cases { cond, then, otherwise } => {
                if matches!(eval_bool(cond, s, Arith::Strict), Ok(true)) {
                    then
                } else {
                    otherwise
                }
            }
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Uniform(e) => write!(f, "{e}"),
            Step::Cases { cond, then, otherwise } => write!(f, "if {cond} then {then} else {otherwise}"),
        }
    }
}

impl Serialize for Step {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Assignment {
    #[serde(serialize_with = "text_map")]
    pub initial: BTreeMap<String, Expr>,
    pub step: BTreeMap<String, Step>,
    #[serde(rename = "final", serialize_with = "text_map")]
    pub final_: BTreeMap<String, Expr>,
}

fn text_map<S: serde::Serializer>(m: &BTreeMap<String, Expr>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k, v.to_string())))
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn block<T: fmt::Display>(f: &mut fmt::Formatter<'_>, m: &BTreeMap<String, T>) -> fmt::Result {
            f.write_str("{")?;
            for (i, (k, v)) in m.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k} ↦ {v}")?;
            }
            f.write_str("}")
        }
        f.write_str("initial ")?;
        block(f, &self.initial)?;
        f.write_str("; step ")?;
        block(f, &self.step)?;
        f.write_str("; final ")?;
        block(f, &self.final_)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status")]
pub enum Verdict {
    VerifiedUpToBound,
    Failed { requirement: u8, counterexample: Store },
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::VerifiedUpToBound)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::VerifiedUpToBound => f.write_str("verified up to bound"),
            Verdict::Failed { requirement, counterexample } => {
                write!(f, "requirement {requirement} fails at {counterexample}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub candidates_tried: usize,
    pub stores_tested: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantReport {
    #[serde(serialize_with = "text")]
    pub invariant: Expr,
    pub assignment: Option<Assignment>,
    pub verdict: Verdict,
    pub stats: Stats,
}

fn text<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverFailure {
    #[error("no candidate satisfies requirement {requirement} for {}{}", genvars.join(", "), witness_note(.witness))]
    NoCandidate {
        requirement: u8,
        genvars: Vec<String>,
        /// A state at which no value of the variables satisfies their conjuncts, if one was found.
        witness: Option<Store>,
        stats: Stats,
    },
    #[error("gave up on requirement {requirement} for {} after {} candidates; raise the candidate budget", genvars.join(", "), stats.candidates_tried)]
    BudgetExhausted { requirement: u8, genvars: Vec<String>, stats: Stats },
    #[error("every candidate failed to evaluate: {0}")]
    EvalError(EvalError),
    #[error("`{0}` is not a well-sorted assertion once its generalisation variables are numbers")]
    IllSorted(String),
    #[error("no loop with index {0}")]
    NoSuchLoop(usize),
}

fn witness_note(w: &Option<Store>) -> String {
    match w {
        Some(s) => format!(" (no value fits at {s})"),
        None => String::new(),
    }
}

/// Variables written by the body that the putative invariant no longer
/// mentions, restricted to those whose value flows into the next iteration.
pub fn diagnose_lost_variables(putative: &Expr, body: &Stmt) -> Vec<String> {
    let mentioned = putative.free_vars();
    let live = body.live_in(&BTreeSet::new());
    body.assigned_vars()
        .into_iter()
        .filter(|v| !mentioned.contains(v) && live.contains(v))
        .collect()
}

/// Loop-head states of every run of the program from every input store.
struct Observations {
    visits: Vec<LoopVisit>,
}

impl Observations {
    fn collect(triple: &Triple, lp: &Loop, cfg: &SolverConfig) -> Observations {
        let mut visits = Vec::new();
        for start in input_stores(triple, cfg.domain_bound) {
            let (outcome, vs) = exec_observing(&triple.program, &start, cfg.fuel, lp);
            if matches!(outcome, ExecOutcome::EvalError(_)) {
                continue;
            }
            visits.extend(vs.into_iter().filter(|v| !v.states.is_empty()));
        }
        Observations { visits }
    }

    fn entries(&self) -> impl Iterator<Item = &Store> {
        self.visits.iter().map(LoopVisit::entry)
    }

    fn exits(&self) -> impl Iterator<Item = &Store> {
        self.visits.iter().filter_map(LoopVisit::exit)
    }
}

/// Stores over the triple's inputs, all other variables zero, satisfying the precondition.
pub fn input_stores(triple: &Triple, bound: u64) -> Vec<Store> {
    let inputs: Vec<String> = triple.input_vars().into_iter().collect();
    let base: Store = triple.program_vars().into_iter().map(|v| (v, 0)).collect();
    all_stores(&inputs, bound, &base)
        .into_iter()
        .filter(|s| matches!(eval_bool(&triple.pre, s, Arith::Strict), Ok(true)))
        .collect()
}

fn all_stores(vars: &[String], bound: u64, base: &Store) -> Vec<Store> {
    let mut out = vec![base.clone()];
    for v in vars {
        let mut next = Vec::with_capacity(out.len() * (bound as usize + 1));
        for s in &out {
            for value in 0..=bound {
                next.push(s.clone().with(v, value));
            }
        }
        out = next;
    }
    out
}

fn truth(e: &Expr, s: &Store, ghosts: &[(String, u64)]) -> Result<bool, EvalError> {
    eval_bool(e, &Overlay { base: s, extra: ghosts }, Arith::Strict)
}

fn ghost_values(names: &[String], exprs: &[&Expr], s: &Store, prev: &[(String, u64)]) -> Option<Vec<(String, u64)>> {
    let env = Overlay { base: s, extra: prev };
    names
        .iter()
        .zip(exprs)
        .map(|(n, e)| eval_nat(e, &env, Arith::Total).ok().map(|v| (n.clone(), v)))
        .collect()
}

/// Candidate expressions in size order, then operator, left and right operand.
struct Templates {
    leaves: Vec<Expr>,
    ops: Vec<Op>,
    depth: usize,
    literals: Vec<u64>,
}

impl Templates {
    fn new(cfg: &SolverConfig, own: Option<&str>, program_vars: &BTreeSet<String>) -> Templates {
        let mut leaves: Vec<Expr> = cfg.literal_pool.iter().map(|&n| Expr::nat(n)).collect();
        leaves.extend(own.map(Expr::var));
        leaves.extend(program_vars.iter().map(|v| Expr::var(v.clone())));
        Templates { leaves, ops: cfg.operator_pool.clone(), depth: cfg.template_depth.min(2), literals: cfg.literal_pool.clone() }
    }

    fn keep(&self, op: Op, l: &Expr, r: &Expr, li: usize, ri: usize, same_size: bool) -> bool {
        let is = |e: &Expr, n: u64| *e == Expr::nat(n);
        let commutative = matches!(op, Op::Add | Op::Mul);
        if commutative && same_size && li > ri {
            return false;
        }
        let ground = l.free_vars().is_empty() && r.free_vars().is_empty();
        if ground {
            let value = eval_nat(&Expr::bin(op, l.clone(), r.clone()), &Store::new(), Arith::Strict);
            match value {
                Ok(v) if self.literals.contains(&v) || !same_size || l.size() > 1 => return false,
                Err(_) => return false,
                _ => {}
            }
        }
        match op {
            Op::Add => !is(l, 0) && !is(r, 0),
            Op::Sub => !is(r, 0) && !is(l, 0) && l != r,
            Op::Mul => !is(l, 0) && !is(r, 0) && !is(l, 1) && !is(r, 1),
            Op::Div | Op::Mod => !is(r, 0) && !is(r, 1) && !is(l, 0) && l != r,
            Op::Pow => !is(r, 0) && !is(r, 1) && !is(l, 0) && !is(l, 1),
            _ => false,
        }
    }

    /// Expressions of size at most three.
    fn small(&self) -> Vec<Expr> {
        let mut out = Vec::new();
        let _ = self.walk(1, &mut |e| {
            out.push(e.clone());
            ControlFlow::Continue(())
        });
        out
    }

    fn for_each(&self, f: &mut impl FnMut(&Expr) -> ControlFlow<()>) -> ControlFlow<()> {
        self.walk(self.depth, f)
    }

    fn walk(&self, depth: usize, f: &mut impl FnMut(&Expr) -> ControlFlow<()>) -> ControlFlow<()> {
        for l in &self.leaves {
            f(l)?;
        }
        if depth == 0 {
            return ControlFlow::Continue(());
        }
        let mut level1 = Vec::new();
        for &op in &self.ops {
            for (i, l) in self.leaves.iter().enumerate() {
                for (j, r) in self.leaves.iter().enumerate() {
                    if self.keep(op, l, r, i, j, true) {
                        let e = Expr::bin(op, l.clone(), r.clone());
                        f(&e)?;
                        level1.push(e);
                    }
                }
            }
        }
        if depth == 1 {
            return ControlFlow::Continue(());
        }
        let commutative = |op: Op| matches!(op, Op::Add | Op::Mul);
        for &op in &self.ops {
            for (i, l) in self.leaves.iter().enumerate() {
                for (j, r) in level1.iter().enumerate() {
                    if self.keep(op, l, r, i, j, false) {
                        f(&Expr::bin(op, l.clone(), r.clone()))?;
                    }
                }
            }
            if commutative(op) {
                continue;
            }
            for (i, l) in level1.iter().enumerate() {
                for (j, r) in self.leaves.iter().enumerate() {
                    if self.keep(op, l, r, i, j, false) {
                        f(&Expr::bin(op, l.clone(), r.clone()))?;
                    }
                }
            }
        }
        for &op in &self.ops {
            for (i, l) in level1.iter().enumerate() {
                for (j, r) in level1.iter().enumerate() {
                    if self.keep(op, l, r, i, j, true) {
                        f(&Expr::bin(op, l.clone(), r.clone()))?;
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }
}

/// Conjuncts of the invariant grouped by the generalisation variables they share.
#[derive(Debug, Clone)]
struct Component {
    conjuncts: Vec<Expr>,
    genvars: Vec<String>,
}

fn components(inv: &Expr, genvars: &BTreeSet<String>) -> Vec<Component> {
    let mut comps: Vec<Component> = Vec::new();
    for c in top_conjuncts(inv) {
        let mine: BTreeSet<String> = c.free_vars().intersection(genvars).cloned().collect();
        let (joined, rest): (Vec<Component>, Vec<Component>) = comps
            .into_iter()
            .partition(|k| !mine.is_empty() && k.genvars.iter().any(|g| mine.contains(g)));
        comps = rest;
        let mut merged = Component { conjuncts: Vec::new(), genvars: Vec::new() };
        for k in joined {
            merged.conjuncts.extend(k.conjuncts);
            merged.genvars.extend(k.genvars);
        }
        merged.conjuncts.push(c);
        for g in mine {
            if !merged.genvars.contains(&g) {
                merged.genvars.push(g);
            }
        }
        comps.push(merged);
    }
    comps.sort_by_key(|k| k.genvars.first().cloned());
    comps
}

/// Moves the store that rejected a candidate to the front of the queue.
fn promote(order: &mut [usize], pos: usize) {
    if pos > 0 {
        order[..=pos].rotate_right(1);
    }
}

struct Search<'a> {
    cfg: &'a SolverConfig,
    obs: &'a Observations,
    program_vars: BTreeSet<String>,
    conditions: Vec<Expr>,
    stats: Stats,
}

type Tuple = Vec<Expr>;

impl Search<'_> {
    fn budget_left(&self) -> bool {
        self.stats.candidates_tried < self.cfg.max_candidates
    }

    fn failure(&self, requirement: u8, genvars: Vec<String>, witness: Option<Store>) -> SolverFailure {
        let stats = self.stats.clone();
        if self.budget_left() {
            SolverFailure::NoCandidate { requirement, genvars, witness, stats }
        } else {
            SolverFailure::BudgetExhausted { requirement, genvars, stats }
        }
    }

    /// Candidate tuples for `names`, passing `accept`, in enumeration order.
    fn enumerate(
        &mut self,
        names: &[String],
        own: bool,
        mut accept: impl FnMut(&mut Self, &[&Expr]) -> ControlFlow<()>,
    ) {
        if names.len() == 1 {
            let t = Templates::new(self.cfg, own.then_some(names[0].as_str()), &self.program_vars);
            let _ = t.for_each(&mut |e| {
                if !self.budget_left() {
                    return ControlFlow::Break(());
                }
                self.stats.candidates_tried += 1;
                accept(self, &[e])
            });
            return;
        }
        let lists: Vec<Vec<Expr>> = names
            .iter()
            .map(|n| Templates::new(self.cfg, own.then_some(n.as_str()), &self.program_vars).small())
            .collect();
        let mut idx = vec![0usize; lists.len()];
        loop {
            if !self.budget_left() {
                return;
            }
            self.stats.candidates_tried += 1;
            let tuple: Vec<&Expr> = idx.iter().zip(&lists).map(|(&i, l)| &l[i]).collect();
            if accept(self, &tuple).is_break() {
                return;
            }
            let mut k = lists.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn initial_candidates(&mut self, comp: &Component, limit: usize) -> Vec<Tuple> {
        let entries: Vec<&Store> = self.obs.entries().collect();
        let mut order: Vec<usize> = (0..entries.len()).collect();
        let mut found = Vec::new();
        self.enumerate(&comp.genvars, false, |me, tuple| {
            for pos in 0..order.len() {
                let s = entries[order[pos]];
                me.stats.stores_tested += 1;
                let ok = ghost_values(&comp.genvars, tuple, s, &[])
                    .is_some_and(|g| comp.conjuncts.iter().all(|c| matches!(truth(c, s, &g), Ok(true))));
                if !ok {
                    promote(&mut order, pos);
                    return ControlFlow::Continue(());
                }
            }
            found.push(tuple.iter().map(|e| (*e).clone()).collect());
            if found.len() >= limit {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }

    /// Follows every observed trajectory; `pick` chooses the step tuple for a state.
    fn trajectory_ok<'t>(
        &mut self,
        comp: &Component,
        init: &[Expr],
        pick: impl Fn(&Store) -> &'t [&'t Expr],
        order: &mut [usize],
    ) -> bool {
        let init_refs: Vec<&Expr> = init.iter().collect();
        for pos in 0..order.len() {
            let visit = &self.obs.visits[order[pos]];
            let Some(mut g) = ghost_values(&comp.genvars, &init_refs, visit.entry(), &[]) else {
                promote(order, pos);
                return false;
            };
            for w in visit.states.windows(2) {
                self.stats.stores_tested += 1;
                let next = ghost_values(&comp.genvars, pick(&w[0]), &w[0], &g);
                let ok = next.as_ref().is_some_and(|n| {
                    comp.conjuncts.iter().all(|c| matches!(truth(c, &w[1], n), Ok(true)))
                });
                if !ok {
                    promote(order, pos);
                    return false;
                }
                g = next.expect("checked");
            }
        }
        true
    }

    fn step_for(&mut self, comp: &Component, init: &[Expr]) -> Option<Vec<Step>> {
        let mut order: Vec<usize> = (0..self.obs.visits.len()).collect();
        let mut found: Option<Vec<Step>> = None;
        self.enumerate(&comp.genvars, true, |me, tuple| {
            let owned: Vec<&Expr> = tuple.to_vec();
            if me.trajectory_ok(comp, init, |_| &owned, &mut order) {
                found = Some(owned.iter().map(|e| Step::Uniform((*e).clone())).collect());
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        if found.is_some() {
            return found;
        }
        for cond in self.conditions.clone() {
            let lists: Vec<Vec<Expr>> = comp
                .genvars
                .iter()
                .map(|n| Templates::new(self.cfg, Some(n), &self.program_vars).small())
                .collect();
            let tuples = cartesian(&lists);
            for then in &tuples {
                for otherwise in &tuples {
                    if then == otherwise || !self.budget_left() {
                        continue;
                    }
                    self.stats.candidates_tried += 1;
                    let t: Vec<&Expr> = then.iter().collect();
                    let o: Vec<&Expr> = otherwise.iter().collect();
                    let pick = |s: &Store| -> &[&Expr] {
                        if matches!(eval_bool(&cond, s, Arith::Strict), Ok(true)) {
                            &t
                        } else {
                            &o
                        }
                    };
                    if self.trajectory_ok(comp, init, pick, &mut order) {
                        return Some(
                            then.iter()
                                .zip(otherwise)
                                .map(|(a, b)| Step::Cases { cond: cond.clone(), then: a.clone(), otherwise: b.clone() })
                                .collect(),
                        );
                    }
                }
            }
        }
        None
    }

    fn final_candidates(&mut self, comp: &Component) -> Vec<Tuple> {
        let exits: Vec<&Store> = self.obs.exits().collect();
        let mut order: Vec<usize> = (0..exits.len()).collect();
        let limit = self.cfg.final_pool;
        let mut found = Vec::new();
        self.enumerate(&comp.genvars, false, |me, tuple| {
            for pos in 0..order.len() {
                let s = exits[order[pos]];
                me.stats.stores_tested += 1;
                let ok = ghost_values(&comp.genvars, tuple, s, &[])
                    .is_some_and(|g| comp.conjuncts.iter().all(|c| matches!(truth(c, s, &g), Ok(true))));
                if !ok {
                    promote(&mut order, pos);
                    return ControlFlow::Continue(());
                }
            }
            found.push(tuple.iter().map(|e| (*e).clone()).collect());
            if found.len() >= limit {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }

    /// An entry state at which no small value satisfies the component.
    fn unsatisfiable_entry(&self, comp: &Component) -> Option<Store> {
        const PROBE: u64 = 4096;
        if comp.genvars.len() != 1 {
            return None;
        }
        let g = &comp.genvars[0];
        self.obs
            .entries()
            .find(|s| {
                !(0..=PROBE).any(|v| {
                    let ghosts = [(g.clone(), v)];
                    comp.conjuncts.iter().all(|c| matches!(truth(c, s, &ghosts), Ok(true)))
                })
            })
            .cloned()
    }
}

fn cartesian(lists: &[Vec<Expr>]) -> Vec<Tuple> {
    let mut out: Vec<Tuple> = vec![Vec::new()];
    for l in lists {
        out = out
            .into_iter()
            .flat_map(|t| {
                l.iter().map(move |e| {
                    let mut t = t.clone();
                    t.push(e.clone());
                    t
                })
            })
            .collect();
    }
    out
}

fn top_level_conditions(body: &Stmt) -> Vec<Expr> {
    let mut out: Vec<Expr> = Vec::new();
    for s in body.flatten_seq() {
        if let Stmt::If(c, ..) = s {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
    }
    out
}

fn nth_loop(triple: &Triple, index: usize) -> Result<&Loop, SolverFailure> {
    triple.program.loops().get(index).copied().ok_or(SolverFailure::NoSuchLoop(index))
}

// a generalised sub-assertion cannot be filled by a numeric template
fn well_sorted(e: &Expr) -> Result<(), SolverFailure> {
    match e.sort() {
        Ok(Sort::Bool) => Ok(()),
        _ => Err(SolverFailure::IllSorted(e.to_string())),
    }
}

/// Instantiates the generalisation variables of `putative` for the loop with
/// pre-order index `loop_index` and checks the result.
pub fn solve(
    triple: &Triple,
    loop_index: usize,
    putative: &Expr,
    genvars: &BTreeSet<String>,
    post: &Expr,
    cfg: &SolverConfig,
) -> Result<InvariantReport, SolverFailure> {
    let lp = nth_loop(triple, loop_index)?;
    well_sorted(putative)?;
    let obs = Observations::collect(triple, lp, cfg);
    let mut program_vars = triple.program_vars();
    program_vars.retain(|v| !genvars.contains(v));
    let mut search = Search {
        cfg,
        obs: &obs,
        program_vars,
        conditions: top_level_conditions(&lp.body),
        stats: Stats::default(),
    };

    let comps: Vec<Component> = components(putative, genvars).into_iter().filter(|c| !c.genvars.is_empty()).collect();
    let mut assignment = Assignment::default();
    let mut finals: Vec<Vec<Tuple>> = Vec::new();

    for comp in &comps {
        let inits = search.initial_candidates(comp, cfg.max_initial_backtrack);
        if inits.is_empty() {
            let witness = search.unsatisfiable_entry(comp);
            return Err(search.failure(1, comp.genvars.clone(), witness));
        }
        let mut chosen = None;
        for init in inits {
            if let Some(steps) = search.step_for(comp, &init) {
                chosen = Some((init, steps));
                break;
            }
        }
        let Some((init, steps)) = chosen else {
            return Err(search.failure(2, comp.genvars.clone(), None));
        };
        for ((g, i), s) in comp.genvars.iter().zip(init).zip(steps) {
            assignment.initial.insert(g.clone(), i);
            assignment.step.insert(g.clone(), s);
        }
        let fin = search.final_candidates(comp);
        if fin.is_empty() {
            return Err(search.failure(3, comp.genvars.clone(), None));
        }
        finals.push(fin);
    }

    let checker = Checker { genvars: genvars.clone(), lp, obs: &obs, cfg };
    let sufficient = first_sufficient(&checker, putative, &comps, &finals, post, &mut search.stats);
    let Some(choice) = sufficient else {
        return Err(search.failure(3, comps.iter().flat_map(|c| c.genvars.clone()).collect(), None));
    };
    for (comp, tuple) in comps.iter().zip(choice) {
        for (g, e) in comp.genvars.iter().zip(tuple) {
            assignment.final_.insert(g.clone(), e);
        }
    }

    let verdict = checker.check(putative, &assignment, post, &mut search.stats);
    Ok(InvariantReport { invariant: putative.clone(), assignment: Some(assignment), verdict, stats: search.stats })
}

/// First combination of per-component final values meeting requirement 3.
fn first_sufficient(
    checker: &Checker<'_>,
    inv: &Expr,
    comps: &[Component],
    finals: &[Vec<Tuple>],
    post: &Expr,
    stats: &mut Stats,
) -> Option<Vec<Tuple>> {
    let mut idx = vec![0usize; finals.len()];
    let store_vars = checker.sufficiency_vars(inv, post, finals.iter().flatten().flatten());
    let stores = all_stores(&store_vars, checker.cfg.domain_bound, &Store::new());
    let mut order: Vec<usize> = (0..stores.len()).collect();
    loop {
        stats.candidates_tried += 1;
        let mut fin = BTreeMap::new();
        for ((comp, list), &i) in comps.iter().zip(finals).zip(&idx) {
            for (g, e) in comp.genvars.iter().zip(&list[i]) {
                fin.insert(g.clone(), e.clone());
            }
        }
        if checker.sufficiency_counterexample(inv, &fin, post, &stores, &mut order, stats).is_none() {
            return Some(idx.iter().zip(finals).map(|(&i, l)| l[i].clone()).collect());
        }
        let mut k = finals.len();
        loop {
            if k == 0 {
                return None;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < finals[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

struct Checker<'a> {
    genvars: BTreeSet<String>,
    lp: &'a Loop,
    obs: &'a Observations,
    cfg: &'a SolverConfig,
}

fn with_ghosts(s: &Store, ghosts: &[(String, u64)]) -> Store {
    let mut out = s.clone();
    for (g, v) in ghosts {
        out.set(g.clone(), *v);
    }
    out
}

impl Checker<'_> {
    /// Variables of a requirement-3 store; `finals` are the final-value
    /// expressions that will be evaluated in it.
    fn sufficiency_vars<'e>(&self, inv: &Expr, post: &Expr, finals: impl IntoIterator<Item = &'e Expr>) -> Vec<String> {
        let mut vars = inv.free_vars();
        for e in finals {
            vars.extend(e.free_vars());
        }
        vars.extend(self.lp.cond.free_vars());
        vars.extend(post.free_vars());
        vars.into_iter().filter(|v| !self.genvars.contains(v)).collect()
    }

    fn sufficiency_counterexample(
        &self,
        inv: &Expr,
        fin: &BTreeMap<String, Expr>,
        post: &Expr,
        stores: &[Store],
        order: &mut [usize],
        stats: &mut Stats,
    ) -> Option<Store> {
        let names: Vec<String> = fin.keys().cloned().collect();
        let exprs: Vec<&Expr> = fin.values().collect();
        let exit_cond = Expr::not(self.lp.cond.clone());
        for pos in 0..order.len() {
            let s = &stores[order[pos]];
            stats.stores_tested += 1;
            let Some(g) = ghost_values(&names, &exprs, s, &[]) else { continue };
            let premise = truth(inv, s, &g).and_then(|a| Ok(a && truth(&exit_cond, s, &g)?));
            if !matches!(premise, Ok(true)) {
                continue;
            }
            if !matches!(truth(post, s, &g), Ok(true)) {
                promote(order, pos);
                return Some(with_ghosts(s, &g));
            }
        }
        // the final values must describe the states the loop really exits in
        for s in self.obs.exits() {
            stats.stores_tested += 1;
            let Some(g) = ghost_values(&names, &exprs, s, &[]) else {
                return Some(s.clone());
            };
            if !matches!(truth(inv, s, &g), Ok(true)) {
                return Some(with_ghosts(s, &g));
            }
        }
        None
    }

    fn check(&self, inv: &Expr, a: &Assignment, post: &Expr, stats: &mut Stats) -> Verdict {
        let names: Vec<String> = a.initial.keys().cloned().collect();
        let inits: Vec<&Expr> = a.initial.values().collect();

        for s in self.obs.entries() {
            stats.stores_tested += 1;
            let ok = ghost_values(&names, &inits, s, &[]);
            let holds = ok.as_ref().map(|g| truth(inv, s, g));
            if !matches!(holds, Some(Ok(true))) {
                let shown = ok.map_or_else(|| s.clone(), |g| with_ghosts(s, &g));
                return Verdict::Failed { requirement: 1, counterexample: shown };
            }
        }

        for visit in &self.obs.visits {
            let Some(mut g) = ghost_values(&names, &inits, visit.entry(), &[]) else { continue };
            for w in visit.states.windows(2) {
                stats.stores_tested += 1;
                let steps: Vec<&Expr> = names.iter().map(|n| a.step[n].select(&w[0])).collect();
                let Some(next) = ghost_values(&names, &steps, &w[0], &g) else {
                    return Verdict::Failed { requirement: 2, counterexample: with_ghosts(&w[0], &g) };
                };
                if !matches!(truth(inv, &w[1], &next), Ok(true)) {
                    return Verdict::Failed { requirement: 2, counterexample: with_ghosts(&w[0], &g) };
                }
                g = next;
            }
        }
        if names.is_empty() {
            if let Some(cex) = self.preservation_counterexample(inv, stats) {
                return Verdict::Failed { requirement: 2, counterexample: cex };
            }
        }

        let stores = all_stores(&self.sufficiency_vars(inv, post, a.final_.values()), self.cfg.domain_bound, &Store::new());
        let mut order: Vec<usize> = (0..stores.len()).collect();
        if let Some(cex) = self.sufficiency_counterexample(inv, &a.final_, post, &stores, &mut order, stats) {
            return Verdict::Failed { requirement: 3, counterexample: cex };
        }
        Verdict::VerifiedUpToBound
    }

    /// `{I ∧ B} body {I}` from every bounded store, for invariants without unknowns.
    fn preservation_counterexample(&self, inv: &Expr, stats: &mut Stats) -> Option<Store> {
        let mut vars = inv.free_vars();
        vars.extend(self.lp.cond.free_vars());
        vars.extend(self.lp.body.vars());
        let vars: Vec<String> = vars.into_iter().collect();
        for s in all_stores(&vars, self.cfg.domain_bound, &Store::new()) {
            stats.stores_tested += 1;
            let before = truth(inv, &s, &[]).and_then(|a| Ok(a && truth(&self.lp.cond, &s, &[])?));
            if !matches!(before, Ok(true)) {
                continue;
            }
            if let ExecOutcome::Finished(after) = exec(&self.lp.body, &s, self.cfg.fuel) {
                if matches!(truth(inv, &after, &[]), Ok(false)) {
                    return Some(s);
                }
            }
        }
        None
    }
}

/// Checks an invariant, with its assignment when it has unknowns, against
/// the loop with pre-order index `loop_index`.
pub fn check_requirements(
    triple: &Triple,
    loop_index: usize,
    invariant: &Expr,
    assignment: &Assignment,
    post: &Expr,
    cfg: &SolverConfig,
) -> Result<(Verdict, Stats), SolverFailure> {
    let lp = nth_loop(triple, loop_index)?;
    well_sorted(invariant)?;
    let obs = Observations::collect(triple, lp, cfg);
    let checker = Checker { genvars: assignment.initial.keys().cloned().collect(), lp, obs: &obs, cfg };
    let mut stats = Stats::default();
    let verdict = checker.check(invariant, assignment, post, &mut stats);
    Ok((verdict, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_program, parse_stmt};

    const POWER: &str = "{n≥0} x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; y:=y*k END {y=k^n}";

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn gv(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn power_assignment() {
        let t = parse_program(POWER).unwrap();
        let report = solve(&t, 0, &e("x+g1=n ∧ y*g2=k^n"), &gv(&["g1", "g2"]), &t.post, &SolverConfig::default()).unwrap();
        let a = report.assignment.unwrap();
        assert_eq!(a.initial["g1"], e("n"));
        assert_eq!(a.initial["g2"], e("k^n"));
        assert_eq!(a.step["g1"], Step::Uniform(e("g1-1")));
        assert_eq!(a.step["g2"], Step::Uniform(e("g2/k")));
        assert_eq!(a.final_["g1"], e("0"));
        assert_eq!(a.final_["g2"], e("1"));
        assert_eq!(report.verdict, Verdict::VerifiedUpToBound);
    }

    #[test]
    fn wrong_step_direction_fails_preservation() {
        let t = parse_program(POWER).unwrap();
        let a = Assignment {
            initial: [("g1".into(), e("n")), ("g2".into(), e("k^n"))].into(),
            step: [("g1".into(), Step::Uniform(e("g1-1"))), ("g2".into(), Step::Uniform(e("g2*k")))].into(),
            final_: [("g1".into(), e("0")), ("g2".into(), e("1"))].into(),
        };
        let (v, _) = check_requirements(&t, 0, &e("x+g1=n ∧ y*g2=k^n"), &a, &t.post, &SolverConfig::default()).unwrap();
        assert!(matches!(v, Verdict::Failed { requirement: 2, .. }), "{v}");
    }

    #[test]
    fn trivial_invariant() {
        let t = parse_program("{True} WHILE False DO SKIP {True}").unwrap();
        let (v, _) = check_requirements(&t, 0, &Expr::tt(), &Assignment::default(), &t.post, &SolverConfig::default()).unwrap();
        assert_eq!(v, Verdict::VerifiedUpToBound);
    }

    #[test]
    fn closed_invariant_checked_by_execution() {
        let t = parse_program(POWER).unwrap();
        let good = e("x≤n ∧ y*k^(n-x)=k^n");
        let (v, _) = check_requirements(&t, 0, &good, &Assignment::default(), &t.post, &SolverConfig::default()).unwrap();
        assert_eq!(v, Verdict::VerifiedUpToBound);
        let weak = e("x≤n");
        let (v, _) = check_requirements(&t, 0, &weak, &Assignment::default(), &t.post, &SolverConfig::default()).unwrap();
        assert!(matches!(v, Verdict::Failed { requirement: 3, .. }), "{v}");
    }

    #[test]
    fn lost_variable_has_no_initial_value() {
        let t = parse_program("{n≥0} x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; y:=k*y END {y=k^n}").unwrap();
        let err = solve(&t, 0, &e("x+g1=n ∧ k*g2=k^n"), &gv(&["g1", "g2"]), &t.post, &SolverConfig::default()).unwrap_err();
        match err {
            SolverFailure::NoCandidate { requirement, genvars, witness, .. } => {
                assert_eq!(requirement, 1);
                assert_eq!(genvars, vec!["g2".to_string()]);
                assert!(witness.is_some());
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn conditional_step() {
        // s grows by 2 on even c and doubles on odd c
        let t = parse_program(
            "{True} c:=0; s:=1; WHILE c<m DO BEGIN IF c%2=0 THEN s:=s+2 ELSE s:=s*2; c:=c+1 END {c=m}",
        )
        .unwrap();
        let report = solve(&t, 0, &e("c≤m ∧ s=g1"), &gv(&["g1"]), &t.post, &SolverConfig::default()).unwrap();
        let a = report.assignment.unwrap();
        assert_eq!(a.initial["g1"], e("1"));
        assert!(matches!(a.step["g1"], Step::Cases { .. }), "{a}");
        assert_eq!(report.verdict, Verdict::VerifiedUpToBound);
    }

    #[test]
    fn lost_variables() {
        let body = parse_stmt("x:=x+1; y:=k*y").unwrap();
        assert_eq!(diagnose_lost_variables(&e("x+g1=n ∧ k*g2=k^n"), &body), vec!["y".to_string()]);
        let body = parse_stmt("x:=x+1; y:=y*k").unwrap();
        assert!(diagnose_lost_variables(&e("x+g1=n ∧ y*g2=k^n"), &body).is_empty());
        assert!(diagnose_lost_variables(&e("x=0"), &Stmt::Skip).is_empty());
    }

    #[test]
    fn templates_are_in_size_order() {
        let cfg = SolverConfig::default();
        let t = Templates::new(&cfg, Some("g"), &gv(&["k"]));
        let mut seen = Vec::new();
        let _ = t.for_each(&mut |e| {
            seen.push(e.size());
            ControlFlow::Continue(())
        });
        assert!(seen.windows(2).all(|w| w[0] <= w[1]));
        assert!(seen.len() > 1000);
        let small = t.small();
        assert!(small.contains(&e("g-1")));
        assert!(small.contains(&e("g/k")));
        assert!(!small.contains(&e("g+0")));
    }
}
