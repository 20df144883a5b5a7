//! Weakest liberal preconditions and the three verification conditions of an
//! annotated loop.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::term::{Expr, Loop, Op, Stmt, Subst, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WlpError {
    #[error("loop `WHILE {0}` has no invariant annotation")]
    UnannotatedLoop(String),
}

/// How a nested `WHILE` contributes to the precondition of its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopRow {
    /// `I ∧ ((B ∧ I) ⇒ WLP(S, I)) ∧ ((¬B ∧ I) ⇒ Q)`; needs an invariant.
    #[default]
    Fig5,
    /// Uses the loop's postcondition annotation: equations `v = e` for
    /// variables written by the body are substituted into `Q`. Falls back to
    /// [`LoopRow::Fig5`] when the annotation does not determine every written
    /// variable that `Q` mentions.
    Substitute,
}

/// Weakest liberal precondition with the default loop row.
pub fn wlp(st: &Stmt, q: &Expr) -> Result<Expr, WlpError> {
    wlp_with(st, q, LoopRow::Fig5)
}

pub fn wlp_with(st: &Stmt, q: &Expr, row: LoopRow) -> Result<Expr, WlpError> {
    Ok(match st {
        Stmt::Skip => q.clone(),
        Stmt::Assign(v, e) => q.replace(v, e),
        Stmt::Seq(a, b) => wlp_with(a, &wlp_with(b, q, row)?, row)?,
        Stmt::If(c, a, b) => Expr::and(
            Expr::implies(c.clone(), wlp_with(a, q, row)?),
            Expr::implies(Expr::not(c.clone()), wlp_with(b, q, row)?),
        ),
        // locals are assumed fresh with respect to q
        Stmt::Block(_, body) => wlp_with(body, q, row)?,
        Stmt::While(l) => {
            if row == LoopRow::Substitute {
                if let Some(pre) = substitute_through_post(l, q) {
                    return Ok(pre);
                }
            }
            loop_row(l, q, row)?
        }
    })
}

fn loop_row(l: &Loop, q: &Expr, row: LoopRow) -> Result<Expr, WlpError> {
    let inv = l
        .invariant
        .as_ref()
        .ok_or_else(|| WlpError::UnannotatedLoop(l.cond.to_string()))?;
    let preserved = Expr::implies(
        Expr::and(l.cond.clone(), inv.clone()),
        wlp_with(&l.body, inv, row)?,
    );
    let exits = Expr::implies(Expr::and(Expr::not(l.cond.clone()), inv.clone()), q.clone());
    Ok(Expr::and(inv.clone(), Expr::and(preserved, exits)))
}

/// `v = e` conjuncts of the loop's postcondition, for variables written by the body.
pub fn post_equations(l: &Loop) -> Vec<(String, Expr)> {
    let Some(post) = &l.post else {
        return Vec::new();
    };
    let written = l.body.assigned_vars();
    top_conjuncts(post)
        .into_iter()
        .filter_map(|c| match c.as_op() {
            Some((Op::Eq, [Expr::Var(v), rhs])) if written.contains(v) && !rhs.mentions(v) => {
                Some((v.clone(), rhs.clone()))
            }
            _ => None,
        })
        .collect()
}

fn substitute_through_post(l: &Loop, q: &Expr) -> Option<Expr> {
    let eqs = post_equations(l);
    if eqs.is_empty() {
        return None;
    }
    let written = l.body.assigned_vars();
    let defined: BTreeSet<&String> = eqs.iter().map(|(v, _)| v).collect();
    let undetermined = q
        .free_vars()
        .into_iter()
        .any(|v| written.contains(&v) && !defined.contains(&v));
    if undetermined {
        return None;
    }
    let theta: Subst = eqs.into_iter().collect();
    Some(q.substitute(&theta))
}

/// Splits top-level conjunctions; implications and other formulas are atomic.
pub fn top_conjuncts(p: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    fn go(p: &Expr, out: &mut Vec<Expr>) {
        match p.as_op() {
            Some((Op::And, [a, b])) => {
                go(a, out);
                go(b, out);
            }
            _ => out.push(p.clone()),
        }
    }
    go(p, &mut out);
    out
}

/// Groups the conjuncts of a precondition by path through the loop body.
///
/// Each implication conjunct is a guarded path; unguarded conjuncts hold on
/// every path and are conjoined to each guarded consequent. With no guarded
/// conjunct the whole formula is a single path.
pub fn paths(p: &Expr) -> Vec<Expr> {
    let conjuncts = top_conjuncts(p);
    let (guarded, common): (Vec<Expr>, Vec<Expr>) = conjuncts
        .into_iter()
        .partition(|c| matches!(c.as_op(), Some((Op::Implies, _))));
    if guarded.is_empty() {
        return vec![Expr::conj(common)];
    }
    guarded
        .into_iter()
        .map(|g| {
            if common.is_empty() {
                return g;
            }
            let Some((_, [a, c])) = g.as_op() else { unreachable!() };
            let mut consequent = top_conjuncts(c);
            consequent.extend(common.iter().cloned());
            Expr::implies(a.clone(), Expr::conj(consequent))
        })
        .collect()
}

/// The three requirements of a loop invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VcSet {
    /// `pre_ctx ⇒ I`
    pub establishment: Expr,
    /// `(I ∧ B) ⇒ WLP(body, I)`
    pub preservation: Expr,
    /// `(I ∧ ¬B) ⇒ Q`
    pub sufficiency: Expr,
}

impl VcSet {
    pub fn as_array(&self) -> [&Expr; 3] {
        [&self.establishment, &self.preservation, &self.sufficiency]
    }
}

pub fn vcs_for_loop(pre_ctx: &Expr, l: &Loop, post: &Expr) -> Result<VcSet, WlpError> {
    vcs_for_loop_with(pre_ctx, l, post, LoopRow::Fig5)
}

pub fn vcs_for_loop_with(
    pre_ctx: &Expr,
    l: &Loop,
    post: &Expr,
    row: LoopRow,
) -> Result<VcSet, WlpError> {
    let inv = l
        .invariant
        .as_ref()
        .ok_or_else(|| WlpError::UnannotatedLoop(l.cond.to_string()))?;
    Ok(VcSet {
        establishment: Expr::implies(pre_ctx.clone(), inv.clone()),
        preservation: Expr::implies(
            Expr::and(inv.clone(), l.cond.clone()),
            wlp_with(&l.body, inv, row)?,
        ),
        sufficiency: Expr::implies(
            Expr::and(inv.clone(), Expr::not(l.cond.clone())),
            post.clone(),
        ),
    })
}

/// Pushes an assertion forward through straight-line code.
///
/// `v := e` with `v ∉ fv(e)` drops the conjuncts mentioning `v` and adds
/// `v = e`; a self-referential assignment only drops them. Branches and
/// loops forget everything they might write.
pub fn forward_context(p: &Expr, prefix: &[&Stmt]) -> Expr {
    let mut facts: Vec<Expr> = top_conjuncts(p).into_iter().filter(|c| !c.is_true()).collect();
    for st in prefix {
        match st {
            Stmt::Skip => {}
            Stmt::Assign(v, e) => {
                facts.retain(|c| !c.mentions(v));
                if !e.mentions(v) {
                    facts.push(Expr::bin(Op::Eq, Expr::var(v.clone()), e.clone()));
                }
            }
            other => {
                let written = other.assigned_vars();
                facts.retain(|c| c.free_vars().is_disjoint(&written));
            }
        }
    }
    Expr::conj(facts)
}

/// How the establishment condition treats code between the precondition and the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Establishment {
    /// Forward substitution of the prefix into the precondition.
    #[default]
    Forward,
    /// `P ⇒ WLP(prefix, I)`.
    WlpPrefix,
}

/// Location of a loop inside a program: its pre-order index together with
/// the statements that precede it in each enclosing sequence.
#[derive(Debug, Clone)]
pub struct LoopSite<'a> {
    pub index: usize,
    pub lp: &'a Loop,
    /// Enclosing loops, outermost first.
    pub enclosing: Vec<&'a Loop>,
    /// Statements run between the innermost enclosing loop head (or program
    /// start) and this loop, in order.
    pub prefix: Vec<&'a Stmt>,
    /// Statements after this loop up to the end of the innermost enclosing
    /// loop body (or program end).
    pub suffix: Vec<&'a Stmt>,
}

/// Every loop of a program with its syntactic context, in pre-order.
pub fn loop_sites(program: &Stmt) -> Vec<LoopSite<'_>> {
    let mut out = Vec::new();
    let mut counter = 0;
    collect_sites(program, &[], &mut counter, &mut out);
    out
}

fn collect_sites<'a>(
    body: &'a Stmt,
    enclosing: &[&'a Loop],
    counter: &mut usize,
    out: &mut Vec<LoopSite<'a>>,
) {
    let parts = body.flatten_seq();
    for (i, st) in parts.iter().enumerate() {
        let mut stack: Vec<&'a Stmt> = vec![*st];
        // descend through blocks and branches looking for loops at this level
        while let Some(s) = stack.pop() {
            match s {
                Stmt::While(l) => {
                    let index = *counter;
                    *counter += 1;
                    let prefix = if std::ptr::eq(s, *st) { parts[..i].to_vec() } else { Vec::new() };
                    let suffix = if std::ptr::eq(s, *st) { parts[i + 1..].to_vec() } else { Vec::new() };
                    out.push(LoopSite {
                        index,
                        lp: l,
                        enclosing: enclosing.to_vec(),
                        prefix,
                        suffix,
                    });
                    let mut inner = enclosing.to_vec();
                    inner.push(l);
                    collect_sites(&l.body, &inner, counter, out);
                }
                Stmt::If(_, a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
                Stmt::Block(_, b) => collect_sites(b, enclosing, counter, out),
                Stmt::Seq(..) => collect_sites(s, enclosing, counter, out),
                Stmt::Skip | Stmt::Assign(..) => {}
            }
        }
    }
}

/// The assertion known on entry to the loop at `site`.
pub fn entry_context(triple: &Triple, site: &LoopSite<'_>) -> Expr {
    let start = match site.enclosing.last() {
        None => triple.pre.clone(),
        Some(outer) => match &outer.invariant {
            Some(inv) => Expr::and(inv.clone(), outer.cond.clone()),
            None => outer.cond.clone(),
        },
    };
    forward_context(&start, &site.prefix)
}

/// VCs for the loop at `site`, using the triple to build the entry context.
pub fn site_vcs(
    triple: &Triple,
    site: &LoopSite<'_>,
    post: &Expr,
    row: LoopRow,
    establishment: Establishment,
) -> Result<VcSet, WlpError> {
    let mut vcs = vcs_for_loop_with(&entry_context(triple, site), site.lp, post, row)?;
    if establishment == Establishment::WlpPrefix && site.enclosing.is_empty() {
        let inv = site.lp.invariant.clone().expect("checked above");
        let prefix = Stmt::seq(site.prefix.iter().map(|s| (*s).clone()).collect());
        vcs.establishment = Expr::implies(triple.pre.clone(), wlp_with(&prefix, &inv, row)?);
    }
    Ok(vcs)
}
