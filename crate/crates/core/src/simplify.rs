//! Predicate simplification under a context assumption.
//!
//! `simplify(ctx, p)` rewrites `p` into a right-nested conjunction that is
//! equivalent to `p` on every store satisfying `ctx` (stores on which either
//! side fails to evaluate are ignored). The context is never copied into the
//! result.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::eval::{eval_bool, Arith, Store};
use crate::term::{Expr, Op};
use crate::wlp::top_conjuncts;

/// The individually switchable rewrite rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Rule {
    /// Negation pushing and parity normalisation.
    R1,
    /// Right re-association of `+ * ∧ ∨`.
    R2,
    /// `a+1≥b` to `a+1=b` under `a<b`.
    R3,
    /// Halving under a known parity.
    R4,
    /// A top-level implication becomes its path formula, or `True` when refuted.
    R5,
    /// Unit laws, duplicates and ground atoms.
    R6,
    /// Substitution of a defining equation `v=e` into the other conjuncts.
    Absorb,
}

impl Rule {
    pub const ALL: [Rule; 7] = [Rule::R1, Rule::R2, Rule::R3, Rule::R4, Rule::R5, Rule::R6, Rule::Absorb];

    pub fn parse(name: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.to_string().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::R6 => "R6",
            Rule::Absorb => "absorb",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpConfig {
    pub refutation_bound: u64,
    pub max_rewrite_steps: usize,
    pub disabled: BTreeSet<Rule>,
}

impl Default for SimpConfig {
    fn default() -> Self {
        SimpConfig { refutation_bound: 8, max_rewrite_steps: 10_000, disabled: BTreeSet::new() }
    }
}

impl SimpConfig {
    pub fn without(mut self, rule: Rule) -> Self {
        self.disabled.insert(rule);
        self
    }

    fn on(&self, rule: Rule) -> bool {
        !self.disabled.contains(&rule)
    }
}

/// One rewrite: under `assumptions`, `before` and `after` agree, unless
/// `equivalence` is false (the implication-to-path step).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rewrite {
    pub rule: Rule,
    #[serde(serialize_with = "as_text")]
    pub assumptions: Expr,
    #[serde(serialize_with = "as_text")]
    pub before: Expr,
    #[serde(serialize_with = "as_text")]
    pub after: Expr,
    pub equivalence: bool,
}

fn as_text<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpOutcome {
    pub result: Expr,
    pub log: Vec<Rewrite>,
    pub budget_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimpError {
    #[error("rewrite budget exhausted; best effort: {best_effort}")]
    StepBudgetExceeded { best_effort: Expr },
}

pub fn simplify(ctx: &Expr, p: &Expr, cfg: &SimpConfig) -> Result<Expr, SimpError> {
    let out = simplify_logged(ctx, p, cfg);
    if out.budget_exceeded {
        Err(SimpError::StepBudgetExceeded { best_effort: out.result })
    } else {
        Ok(out.result)
    }
}

pub fn simplify_logged(ctx: &Expr, p: &Expr, cfg: &SimpConfig) -> SimpOutcome {
    let mut s = Simplifier { cfg, log: Vec::new(), exhausted: false };
    let result = s.run(ctx, p);
    SimpOutcome { result, log: s.log, budget_exceeded: s.exhausted }
}

struct Simplifier<'a> {
    cfg: &'a SimpConfig,
    log: Vec<Rewrite>,
    exhausted: bool,
}

fn is_ground(e: &Expr) -> bool {
    e.free_vars().is_empty()
}

fn flatten(op: Op, e: &Expr, out: &mut Vec<Expr>) {
    match e.as_op() {
        Some((o, [a, b])) if o == op => {
            flatten(op, a, out);
            flatten(op, b, out);
        }
        _ => out.push(e.clone()),
    }
}

fn rebuild_right(op: Op, mut parts: Vec<Expr>) -> Expr {
    let mut acc = parts.pop().expect("nonempty operand list");
    while let Some(p) = parts.pop() {
        acc = Expr::bin(op, p, acc);
    }
    acc
}

fn is_left_nested(op: Op, e: &Expr) -> bool {
    matches!(e.as_op(), Some((o, [l, _])) if o == op && matches!(l.as_op(), Some((lo, _)) if lo == op))
}

impl Simplifier<'_> {
    fn record(&mut self, rule: Rule, assumptions: &Expr, before: &Expr, after: &Expr, equivalence: bool) -> bool {
        if self.log.len() >= self.cfg.max_rewrite_steps {
            self.exhausted = true;
            return false;
        }
        self.log.push(Rewrite {
            rule,
            assumptions: assumptions.clone(),
            before: before.clone(),
            after: after.clone(),
            equivalence,
        });
        true
    }

    fn run(&mut self, ctx: &Expr, p: &Expr) -> Expr {
        let facts: Vec<Expr> = top_conjuncts(&self.norm(ctx))
            .into_iter()
            .filter(|c| !c.is_true())
            .collect();
        let np = self.norm(p);
        if np.is_true() {
            return np;
        }
        let body = match np.as_op() {
            Some((Op::Implies, [a, c])) if self.cfg.on(Rule::R5) => {
                let mut path = top_conjuncts(a);
                path.extend(top_conjuncts(c));
                let mut all = facts.clone();
                all.extend(path.iter().cloned());
                let ctx_conj = Expr::conj(facts.clone());
                if refuted(&all, self.cfg.refutation_bound) {
                    self.record(Rule::R5, &ctx_conj, &np, &Expr::tt(), false);
                    return Expr::tt();
                }
                let path_formula = Expr::conj(path.clone());
                self.record(Rule::R5, &ctx_conj, &np, &path_formula, false);
                path
            }
            _ => top_conjuncts(&np),
        };
        self.conjunction(&facts, body)
    }

    fn conjunction(&mut self, facts: &[Expr], mut body: Vec<Expr>) -> Expr {
        loop {
            if self.exhausted {
                return Expr::conj(body);
            }
            let mut changed = false;

            for i in 0..body.len() {
                let assumptions: Vec<Expr> = facts
                    .iter()
                    .chain(body.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c))
                    .cloned()
                    .collect();
                if let Some((rule, new)) = self.contextual(&body[i], &assumptions) {
                    let new = self.norm(&new);
                    if self.record(rule, &Expr::conj(assumptions), &body[i], &new, true) {
                        body[i] = new;
                        changed = true;
                    }
                }
            }

            // unit laws, duplicates, facts restated
            if self.cfg.on(Rule::R6) {
                let mut kept: Vec<Expr> = Vec::new();
                for c in body.iter().flat_map(top_conjuncts) {
                    if c.is_false() {
                        return Expr::ff();
                    }
                    if c.is_true() || kept.contains(&c) || facts.contains(&c) {
                        changed = true;
                        continue;
                    }
                    kept.push(c);
                }
                body = kept;
            }

            if self.cfg.on(Rule::Absorb) {
                if let Some(i) = self.absorb(&body) {
                    body.remove(i);
                    changed = true;
                }
            }

            if !changed {
                break;
            }
        }
        if body.is_empty() {
            Expr::tt()
        } else {
            Expr::conj(body)
        }
    }

    /// Index of a conjunct made trivially true by some defining equation.
    fn absorb(&mut self, body: &[Expr]) -> Option<usize> {
        for (d, def) in body.iter().enumerate() {
            let Some((Op::Eq, [Expr::Var(v), rhs])) = def.as_op() else { continue };
            if rhs.mentions(v) {
                continue;
            }
            for (i, c) in body.iter().enumerate() {
                if i == d || !c.mentions(v) {
                    continue;
                }
                let substituted = self.quiet_norm(&c.replace(v, rhs));
                if substituted.is_true() && self.record(Rule::Absorb, def, c, &Expr::tt(), true) {
                    return Some(i);
                }
            }
        }
        None
    }

    fn quiet_norm(&mut self, e: &Expr) -> Expr {
        let mark = self.log.len();
        let out = self.norm(e);
        self.log.truncate(mark);
        out
    }

    /// R3 and R4 applied to a whole conjunct.
    fn contextual(&self, c: &Expr, assumptions: &[Expr]) -> Option<(Rule, Expr)> {
        let Some((op, [lhs, rhs])) = c.as_op() else { return None };
        if self.cfg.on(Rule::R3) && op == Op::Ge {
            if let Some((Op::Add, [a, one])) = lhs.as_op() {
                let below = |f: &Expr| match f.as_op() {
                    Some((Op::Lt, [x, y])) => x == a && y == rhs,
                    Some((Op::Gt, [y, x])) => x == a && y == rhs,
                    _ => false,
                };
                if *one == Expr::nat(1) && assumptions.iter().any(below) {
                    return Some((Rule::R3, Expr::bin(Op::Eq, lhs.clone(), rhs.clone())));
                }
            }
        }
        if self.cfg.on(Rule::R4) {
            if let Some((Op::Div, [a, two])) = lhs.as_op() {
                if *two != Expr::nat(2) {
                    return None;
                }
                let parity = |bit: u64| {
                    let fact = Expr::bin(Op::Eq, Expr::bin(Op::Mod, a.clone(), Expr::nat(2)), Expr::nat(bit));
                    assumptions.contains(&fact)
                };
                let odd = parity(1);
                let even = parity(0);
                if !odd && !even {
                    return None;
                }
                let bit = if odd { 1 } else { 0 };
                match op {
                    Op::Le if *rhs == Expr::nat(0) => {
                        return Some((Rule::R4, Expr::bin(Op::Eq, a.clone(), Expr::nat(bit))));
                    }
                    Op::Eq => {
                        let doubled = Expr::bin(Op::Mul, Expr::nat(2), rhs.clone());
                        let value = if odd { Expr::bin(Op::Add, doubled, Expr::nat(1)) } else { doubled };
                        return Some((Rule::R4, Expr::bin(Op::Eq, a.clone(), value)));
                    }
                    _ => {}
                }
            }
        }
        None
    }

    /// Bottom-up normalisation with the context-free rules.
    fn norm(&mut self, e: &Expr) -> Expr {
        let Expr::Op(op, args) = e else { return e.clone() };
        let args: Vec<Expr> = args.iter().map(|a| self.norm(a)).collect();
        let mut cur = Expr::Op(*op, args);
        while let Some((rule, next)) = self.root_step(&cur) {
            if !self.record(rule, &Expr::tt(), &cur, &next, true) {
                break;
            }
            cur = next;
        }
        cur
    }

    fn root_step(&self, e: &Expr) -> Option<(Rule, Expr)> {
        let Expr::Op(op, args) = e else { return None };
        let op = *op;
        if self.cfg.on(Rule::R1) {
            if let Some(next) = self.negation_step(op, args) {
                return Some((Rule::R1, next));
            }
        }
        if self.cfg.on(Rule::R2) && matches!(op, Op::Add | Op::Mul | Op::And | Op::Or) && is_left_nested(op, e) {
            let mut parts = Vec::new();
            flatten(op, e, &mut parts);
            return Some((Rule::R2, rebuild_right(op, parts)));
        }
        if self.cfg.on(Rule::R6) {
            if let Some(next) = unit_step(op, args) {
                return Some((Rule::R6, next));
            }
        }
        None
    }

    fn negation_step(&self, op: Op, args: &[Expr]) -> Option<Expr> {
        match (op, args) {
            (Op::Not, [inner]) => match inner {
                Expr::Op(Op::Not, a) => Some(a[0].clone()),
                Expr::Op(rel, a) if rel.is_relational() => {
                    Some(Expr::bin(rel.negated_relation()?, a[0].clone(), a[1].clone()))
                }
                _ if inner.is_true() => Some(Expr::ff()),
                _ if inner.is_false() => Some(Expr::tt()),
                _ => None,
            },
            // a%2≠1 is a%2=0 and vice versa
            (Op::Ne, [m, bit]) => {
                let (Op::Mod, [_, two]) = m.as_op()? else { return None };
                if *two != Expr::nat(2) {
                    return None;
                }
                match bit {
                    Expr::Nat(b @ (0 | 1)) => Some(Expr::bin(Op::Eq, m.clone(), Expr::nat(1 - b))),
                    _ => None,
                }
            }
            (Op::Mod, [a, two]) if *two == Expr::nat(2) => match a.as_op() {
                Some((Op::Add, [d, one])) if *one == Expr::nat(1) && is_doubling(d) => Some(Expr::nat(1)),
                _ if is_doubling(a) => Some(Expr::nat(0)),
                _ => None,
            },
            _ => None,
        }
    }
}

fn is_doubling(e: &Expr) -> bool {
    matches!(e.as_op(), Some((Op::Mul, [two, _])) if *two == Expr::nat(2))
}

fn unit_step(op: Op, args: &[Expr]) -> Option<Expr> {
    match (op, args) {
        (Op::And, [a, b]) => {
            if a.is_true() {
                Some(b.clone())
            } else if b.is_true() || a == b {
                Some(a.clone())
            } else if a.is_false() || b.is_false() {
                Some(Expr::ff())
            } else {
                None
            }
        }
        (Op::Or, [a, b]) => {
            if a.is_false() {
                Some(b.clone())
            } else if b.is_false() || a == b {
                Some(a.clone())
            } else if a.is_true() || b.is_true() {
                Some(Expr::tt())
            } else {
                None
            }
        }
        (Op::Implies, [a, b]) => {
            if a.is_true() {
                Some(b.clone())
            } else if a.is_false() || b.is_true() {
                Some(Expr::tt())
            } else {
                None
            }
        }
        (rel, [a, b]) if rel.is_relational() && is_ground(a) && is_ground(b) => {
            let atom = Expr::bin(rel, a.clone(), b.clone());
            eval_bool(&atom, &Store::new(), Arith::Strict).ok().map(Expr::bool)
        }
        _ => None,
    }
}

/// Searches stores with every variable in `0..=bound` for one satisfying all
/// of `conjuncts`. Stores on which a conjunct fails to evaluate do not count.
pub fn find_model(conjuncts: &[Expr], bound: u64) -> Option<Store> {
    // assign variables in the order conjuncts become decidable
    let mut order: Vec<String> = Vec::new();
    let mut sorted: Vec<&Expr> = conjuncts.iter().collect();
    sorted.sort_by_key(|c| c.free_vars().len());
    for c in &sorted {
        for v in c.free_vars() {
            if !order.contains(&v) {
                order.push(v);
            }
        }
    }
    let position = |v: &String| order.iter().position(|o| o == v).map_or(0, |p| p + 1);
    let mut by_depth: Vec<Vec<&Expr>> = vec![Vec::new(); order.len() + 1];
    for c in conjuncts {
        let depth = c.free_vars().iter().map(position).max().unwrap_or(0);
        by_depth[depth].push(c);
    }
    let mut store = Store::new();
    search(&order, &by_depth, 0, bound, &mut store).then_some(store)
}

fn search(order: &[String], by_depth: &[Vec<&Expr>], depth: usize, bound: u64, store: &mut Store) -> bool {
    if !by_depth[depth]
        .iter()
        .all(|c| matches!(eval_bool(c, store, Arith::Strict), Ok(true)))
    {
        return false;
    }
    if depth == order.len() {
        return true;
    }
    for value in 0..=bound {
        store.set(order[depth].clone(), value);
        if search(order, by_depth, depth + 1, bound, store) {
            return true;
        }
    }
    store.remove(&order[depth]);
    false
}

pub fn refuted(conjuncts: &[Expr], bound: u64) -> bool {
    find_model(conjuncts, bound).is_none()
}
