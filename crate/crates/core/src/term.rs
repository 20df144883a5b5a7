//! Expression and statement syntax shared by every stage of the pipeline.
//!
//! Expressions are first-order functional terms. Program variables are named;
//! variables bound by `Lam` and by `Case` patterns are de Bruijn indices, so
//! substitution of named variables can never capture and alpha-equivalence is
//! plain structural equality on the canonical form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Built-in operators. Arithmetic operators are over naturals; `-` is monus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    And,
    Or,
    Not,
    Implies,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl Op {
    pub const ARITHMETIC: [Op; 6] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Mod, Op::Pow];

    pub fn arity(self) -> usize {
        match self {
            Op::Not => 1,
            _ => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Mod => "%",
            Op::Pow => "^",
            Op::And => "∧",
            Op::Or => "∨",
            Op::Not => "¬",
            Op::Implies => "⇒",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Le => "≤",
            Op::Ge => "≥",
            Op::Eq => "=",
            Op::Ne => "≠",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Pow)
    }

    pub fn is_relational(self) -> bool {
        matches!(self, Op::Lt | Op::Gt | Op::Le | Op::Ge | Op::Eq | Op::Ne)
    }

    pub fn is_connective(self) -> bool {
        matches!(self, Op::And | Op::Or | Op::Not | Op::Implies)
    }

    /// Operators that are re-associated to the right by the simplifier.
    pub fn is_associative(self) -> bool {
        matches!(self, Op::Add | Op::Mul | Op::And | Op::Or)
    }

    /// The relation `r'` with `¬(a r b) ⇔ a r' b`.
    pub fn negated_relation(self) -> Option<Op> {
        Some(match self {
            Op::Lt => Op::Ge,
            Op::Gt => Op::Le,
            Op::Le => Op::Gt,
            Op::Ge => Op::Lt,
            Op::Eq => Op::Ne,
            Op::Ne => Op::Eq,
            _ => return None,
        })
    }
}

/// The four data constructors of `Nat` and `Bool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ctor {
    Zero,
    Succ,
    True,
    False,
}

impl Ctor {
    pub fn arity(self) -> usize {
        match self {
            Ctor::Succ => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ctor::Zero => "Zero",
            Ctor::Succ => "Succ",
            Ctor::True => "True",
            Ctor::False => "False",
        }
    }
}

/// A `Case` alternative. A `Succ` pattern binds one de Bruijn slot in `body`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Branch {
    pub pattern: Ctor,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    /// Numeral shorthand for `Succ^n(Zero)`.
    Nat(u64),
    Ctor(Ctor, Vec<Expr>),
    Op(Op, Vec<Expr>),
    Lam(Box<Expr>),
    BoundVar(usize),
    Call(String),
    App(Box<Expr>, Box<Expr>),
    Case(Box<Expr>, Vec<Branch>),
    Where(Box<Expr>, Vec<(String, Expr)>),
}

/// Top-level functor of an expression, as seen by embedding and generalisation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Functor {
    Var(String),
    Bound(usize),
    Ctor(Ctor),
    Op(Op),
    Lam,
    Call(String),
    App,
    Case(Vec<Ctor>),
    Where(Vec<String>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn nat(n: u64) -> Expr {
        Expr::Nat(n)
    }

    pub fn tt() -> Expr {
        Expr::Ctor(Ctor::True, Vec::new())
    }

    pub fn ff() -> Expr {
        Expr::Ctor(Ctor::False, Vec::new())
    }

    pub fn bool(b: bool) -> Expr {
        if b {
            Expr::tt()
        } else {
            Expr::ff()
        }
    }

    pub fn bin(op: Op, lhs: Expr, rhs: Expr) -> Expr {
        debug_assert_eq!(op.arity(), 2);
        Expr::Op(op, vec![lhs, rhs])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Op(Op::Not, vec![e])
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(Op::And, lhs, rhs)
    }

    pub fn implies(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(Op::Implies, lhs, rhs)
    }

    /// Right-nested conjunction; `True` for an empty list.
    pub fn conj(parts: Vec<Expr>) -> Expr {
        let mut iter = parts.into_iter().rev();
        match iter.next() {
            None => Expr::tt(),
            Some(last) => iter.fold(last, |acc, e| Expr::and(e, acc)),
        }
    }

    /// Smart constructor: `Zero` and `Succ(n)` collapse into numerals.
    pub fn ctor(c: Ctor, args: Vec<Expr>) -> Expr {
        match (c, args.as_slice()) {
            (Ctor::Zero, []) => Expr::Nat(0),
            (Ctor::Succ, [Expr::Nat(n)]) => Expr::Nat(n + 1),
            _ => Expr::Ctor(c, args),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Ctor(Ctor::True, a) if a.is_empty())
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Expr::Ctor(Ctor::False, a) if a.is_empty())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_op(&self) -> Option<(Op, &[Expr])> {
        match self {
            Expr::Op(op, args) => Some((*op, args)),
            _ => None,
        }
    }

    /// Splits the functor from its immediate subterms. Numerals are viewed
    /// through their `Zero`/`Succ` encoding one layer at a time.
    pub fn functor(&self) -> (Functor, Vec<Expr>) {
        match self {
            Expr::Var(v) => (Functor::Var(v.clone()), vec![]),
            Expr::Nat(0) => (Functor::Ctor(Ctor::Zero), vec![]),
            Expr::Nat(n) => (Functor::Ctor(Ctor::Succ), vec![Expr::Nat(n - 1)]),
            Expr::Ctor(c, args) => (Functor::Ctor(*c), args.clone()),
            Expr::Op(op, args) => (Functor::Op(*op), args.clone()),
            Expr::Lam(body) => (Functor::Lam, vec![(**body).clone()]),
            Expr::BoundVar(i) => (Functor::Bound(*i), vec![]),
            Expr::Call(f) => (Functor::Call(f.clone()), vec![]),
            Expr::App(f, a) => (Functor::App, vec![(**f).clone(), (**a).clone()]),
            Expr::Case(scrut, branches) => {
                let mut kids = vec![(**scrut).clone()];
                kids.extend(branches.iter().map(|b| b.body.clone()));
                (
                    Functor::Case(branches.iter().map(|b| b.pattern).collect()),
                    kids,
                )
            }
            Expr::Where(main, defs) => {
                let mut kids = vec![(**main).clone()];
                kids.extend(defs.iter().map(|(_, d)| d.clone()));
                (
                    Functor::Where(defs.iter().map(|(n, _)| n.clone()).collect()),
                    kids,
                )
            }
        }
    }

    /// Inverse of [`Expr::functor`].
    pub fn from_functor(f: Functor, mut args: Vec<Expr>) -> Expr {
        match f {
            Functor::Var(v) => Expr::Var(v),
            Functor::Bound(i) => Expr::BoundVar(i),
            Functor::Ctor(c) => Expr::ctor(c, args),
            Functor::Op(op) => Expr::Op(op, args),
            Functor::Lam => Expr::Lam(Box::new(args.remove(0))),
            Functor::Call(name) => Expr::Call(name),
            Functor::App => {
                let a = args.pop().expect("application argument");
                let f = args.pop().expect("application head");
                Expr::App(Box::new(f), Box::new(a))
            }
            Functor::Case(patterns) => {
                let scrut = args.remove(0);
                let branches = patterns
                    .into_iter()
                    .zip(args)
                    .map(|(pattern, body)| Branch { pattern, body })
                    .collect();
                Expr::Case(Box::new(scrut), branches)
            }
            Functor::Where(names) => {
                let main = args.remove(0);
                Expr::Where(Box::new(main), names.into_iter().zip(args).collect())
            }
        }
    }

    /// Number of nodes, with numerals counted as a single node.
    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => 1,
            Expr::Ctor(_, args) | Expr::Op(_, args) => 1 + args.iter().map(Expr::size).sum::<usize>(),
            Expr::Lam(b) => 1 + b.size(),
            Expr::App(f, a) => 1 + f.size() + a.size(),
            Expr::Case(s, bs) => 1 + s.size() + bs.iter().map(|b| b.body.size()).sum::<usize>(),
            Expr::Where(m, ds) => 1 + m.size() + ds.iter().map(|(_, d)| d.size()).sum::<usize>(),
        }
    }

    /// Canonical form: every `Zero`/`Succ` chain ending in a numeral becomes a numeral.
    pub fn canonical(&self) -> Expr {
        let (f, args) = match self {
            Expr::Nat(_) | Expr::Var(_) | Expr::BoundVar(_) | Expr::Call(_) => return self.clone(),
            other => other.functor(),
        };
        Expr::from_functor(f, args.iter().map(Expr::canonical).collect())
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut out);
        out
    }

    fn collect_free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => {}
            Expr::Ctor(_, args) | Expr::Op(_, args) => {
                args.iter().for_each(|a| a.collect_free_vars(out))
            }
            Expr::Lam(b) => b.collect_free_vars(out),
            Expr::App(f, a) => {
                f.collect_free_vars(out);
                a.collect_free_vars(out);
            }
            Expr::Case(s, bs) => {
                s.collect_free_vars(out);
                bs.iter().for_each(|b| b.body.collect_free_vars(out));
            }
            Expr::Where(m, ds) => {
                m.collect_free_vars(out);
                ds.iter().for_each(|(_, d)| d.collect_free_vars(out));
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Var(v) => v == name,
            Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => false,
            Expr::Ctor(_, args) | Expr::Op(_, args) => args.iter().any(|a| a.mentions(name)),
            Expr::Lam(b) => b.mentions(name),
            Expr::App(f, a) => f.mentions(name) || a.mentions(name),
            Expr::Case(s, bs) => s.mentions(name) || bs.iter().any(|b| b.body.mentions(name)),
            Expr::Where(m, ds) => m.mentions(name) || ds.iter().any(|(_, d)| d.mentions(name)),
        }
    }

    /// True when the term contains only variables, numerals, constructors and operators.
    pub fn is_first_order(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Nat(_) => true,
            Expr::Ctor(_, args) | Expr::Op(_, args) => args.iter().all(Expr::is_first_order),
            _ => false,
        }
    }

    /// Shifts de Bruijn indices `>= cutoff` by `by`.
    fn shift(&self, by: usize, cutoff: usize) -> Expr {
        if by == 0 {
            return self.clone();
        }
        match self {
            Expr::BoundVar(i) if *i >= cutoff => Expr::BoundVar(i + by),
            Expr::Var(_) | Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => self.clone(),
            Expr::Ctor(c, args) => Expr::Ctor(*c, args.iter().map(|a| a.shift(by, cutoff)).collect()),
            Expr::Op(op, args) => Expr::Op(*op, args.iter().map(|a| a.shift(by, cutoff)).collect()),
            Expr::Lam(b) => Expr::Lam(Box::new(b.shift(by, cutoff + 1))),
            Expr::App(f, a) => Expr::App(Box::new(f.shift(by, cutoff)), Box::new(a.shift(by, cutoff))),
            Expr::Case(s, bs) => Expr::Case(
                Box::new(s.shift(by, cutoff)),
                bs.iter()
                    .map(|b| Branch {
                        pattern: b.pattern,
                        body: b.body.shift(by, cutoff + b.pattern.arity()),
                    })
                    .collect(),
            ),
            Expr::Where(m, ds) => Expr::Where(
                Box::new(m.shift(by, cutoff)),
                ds.iter().map(|(n, d)| (n.clone(), d.shift(by, cutoff))).collect(),
            ),
        }
    }

    /// Checks de Bruijn scoping and constructor/operator arities.
    pub fn well_formed(&self) -> Result<(), TermError> {
        self.check_scoped(0)
    }

    fn check_scoped(&self, depth: usize) -> Result<(), TermError> {
        match self {
            Expr::BoundVar(i) if *i >= depth => Err(TermError::UnboundIndex(*i)),
            Expr::Var(_) | Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => Ok(()),
            Expr::Ctor(c, args) => {
                if args.len() != c.arity() {
                    return Err(TermError::CtorArity(c.name(), args.len()));
                }
                args.iter().try_for_each(|a| a.check_scoped(depth))
            }
            Expr::Op(op, args) => {
                if args.len() != op.arity() {
                    return Err(TermError::OpArity(op.symbol(), args.len()));
                }
                args.iter().try_for_each(|a| a.check_scoped(depth))
            }
            Expr::Lam(b) => b.check_scoped(depth + 1),
            Expr::App(f, a) => {
                f.check_scoped(depth)?;
                a.check_scoped(depth)
            }
            Expr::Case(s, bs) => {
                s.check_scoped(depth)?;
                bs.iter()
                    .try_for_each(|b| b.body.check_scoped(depth + b.pattern.arity()))
            }
            Expr::Where(m, ds) => {
                m.check_scoped(depth)?;
                ds.iter().try_for_each(|(_, d)| d.check_scoped(depth))
            }
        }
    }

    pub fn substitute(&self, theta: &Subst) -> Expr {
        if theta.is_empty() {
            return self.clone();
        }
        self.subst_at(theta, 0)
    }

    /// Replaces a single free variable.
    pub fn replace(&self, name: &str, with: &Expr) -> Expr {
        self.substitute(&Subst::single(name, with.clone()))
    }

    fn subst_at(&self, theta: &Subst, depth: usize) -> Expr {
        match self {
            Expr::Var(v) => match theta.get(v) {
                Some(t) => t.shift(depth, 0),
                None => self.clone(),
            },
            Expr::Nat(_) | Expr::BoundVar(_) | Expr::Call(_) => self.clone(),
            Expr::Ctor(c, args) => Expr::ctor(*c, args.iter().map(|a| a.subst_at(theta, depth)).collect()),
            Expr::Op(op, args) => Expr::Op(*op, args.iter().map(|a| a.subst_at(theta, depth)).collect()),
            Expr::Lam(b) => Expr::Lam(Box::new(b.subst_at(theta, depth + 1))),
            Expr::App(f, a) => Expr::App(
                Box::new(f.subst_at(theta, depth)),
                Box::new(a.subst_at(theta, depth)),
            ),
            Expr::Case(s, bs) => Expr::Case(
                Box::new(s.subst_at(theta, depth)),
                bs.iter()
                    .map(|b| Branch {
                        pattern: b.pattern,
                        body: b.body.subst_at(theta, depth + b.pattern.arity()),
                    })
                    .collect(),
            ),
            Expr::Where(m, ds) => Expr::Where(
                Box::new(m.subst_at(theta, depth)),
                ds.iter().map(|(n, d)| (n.clone(), d.subst_at(theta, depth))).collect(),
            ),
        }
    }

    /// Structural identity up to bound-variable names. With de Bruijn binders
    /// this is equality of canonical forms.
    pub fn alpha_eq(&self, other: &Expr) -> bool {
        self == other || self.canonical() == other.canonical()
    }

    /// Finds a bijection `rho` on `renameable` names with `self == other·rho`.
    /// The returned map sends names of `other` to names of `self`. Variables
    /// outside `renameable` must match exactly.
    pub fn renaming_of(
        &self,
        other: &Expr,
        renameable: &BTreeSet<String>,
    ) -> Option<BTreeMap<String, String>> {
        let mut fwd = BTreeMap::new();
        let mut back = BTreeMap::new();
        if match_renaming(&self.canonical(), &other.canonical(), renameable, &mut fwd, &mut back) {
            Some(fwd)
        } else {
            None
        }
    }

    /// Sort of a well-formed program-level expression.
    pub fn sort(&self) -> Result<Sort, SortError> {
        match self {
            Expr::Var(_) | Expr::Nat(_) => Ok(Sort::Nat),
            Expr::Ctor(Ctor::True | Ctor::False, _) => Ok(Sort::Bool),
            Expr::Ctor(Ctor::Zero, _) => Ok(Sort::Nat),
            Expr::Ctor(Ctor::Succ, args) => {
                expect_sort(&args[0], Sort::Nat)?;
                Ok(Sort::Nat)
            }
            Expr::Op(op, args) => {
                let (arg_sort, result) = if op.is_arithmetic() {
                    (Sort::Nat, Sort::Nat)
                } else if op.is_relational() {
                    (Sort::Nat, Sort::Bool)
                } else {
                    (Sort::Bool, Sort::Bool)
                };
                for a in args {
                    expect_sort(a, arg_sort)?;
                }
                Ok(result)
            }
            _ => Err(SortError::NotFirstOrder(self.to_string())),
        }
    }
}

fn expect_sort(e: &Expr, want: Sort) -> Result<(), SortError> {
    let got = e.sort()?;
    if got == want {
        Ok(())
    } else {
        Err(SortError::Mismatch {
            expr: e.to_string(),
            expected: want,
            found: got,
        })
    }
}

fn match_renaming(
    e1: &Expr,
    e2: &Expr,
    renameable: &BTreeSet<String>,
    fwd: &mut BTreeMap<String, String>,
    back: &mut BTreeMap<String, String>,
) -> bool {
    match (e1, e2) {
        (Expr::Var(a), Expr::Var(b)) => {
            let ra = renameable.contains(a);
            let rb = renameable.contains(b);
            if !ra && !rb {
                return a == b;
            }
            if ra != rb {
                return false;
            }
            match (fwd.get(b), back.get(a)) {
                (Some(x), _) if x != a => false,
                (_, Some(y)) if y != b => false,
                _ => {
                    fwd.insert(b.clone(), a.clone());
                    back.insert(a.clone(), b.clone());
                    true
                }
            }
        }
        (Expr::Var(_), _) | (_, Expr::Var(_)) => false,
        (Expr::Nat(a), Expr::Nat(b)) => a == b,
        (Expr::BoundVar(a), Expr::BoundVar(b)) => a == b,
        (Expr::Call(a), Expr::Call(b)) => a == b,
        (Expr::Ctor(c1, a1), Expr::Ctor(c2, a2)) => {
            c1 == c2 && zip_all(a1, a2, |x, y| match_renaming(x, y, renameable, fwd, back))
        }
        (Expr::Op(o1, a1), Expr::Op(o2, a2)) => {
            o1 == o2 && zip_all(a1, a2, |x, y| match_renaming(x, y, renameable, fwd, back))
        }
        _ => {
            let (f1, a1) = e1.functor();
            let (f2, a2) = e2.functor();
            f1 == f2 && zip_all(&a1, &a2, |x, y| match_renaming(x, y, renameable, fwd, back))
        }
    }
}

fn zip_all(a: &[Expr], b: &[Expr], mut f: impl FnMut(&Expr, &Expr) -> bool) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| f(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Nat,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Nat => "Nat",
            Sort::Bool => "Bool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("`{expr}` has sort {found}, expected {expected}")]
    Mismatch {
        expr: String,
        expected: Sort,
        found: Sort,
    },
    #[error("`{0}` is not a program-level expression")]
    NotFirstOrder(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("de Bruijn index {0} escapes its binders")]
    UnboundIndex(usize),
    #[error("constructor {0} applied to {1} arguments")]
    CtorArity(&'static str, usize),
    #[error("operator {0} applied to {1} arguments")]
    OpArity(&'static str, usize),
}

/// Simultaneous substitution of expressions for free variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subst {
    bindings: BTreeMap<String, Expr>,
}

impl Subst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(name: impl Into<String>, e: Expr) -> Self {
        let mut s = Self::new();
        s.insert(name, e);
        s
    }

    pub fn insert(&mut self, name: impl Into<String>, e: Expr) {
        self.bindings.insert(name.into(), e);
    }

    pub fn remove(&mut self, name: &str) -> Option<Expr> {
        self.bindings.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Expr> {
        self.bindings.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Expr)> {
        self.bindings.iter()
    }

    pub fn domain(&self) -> BTreeSet<String> {
        self.bindings.keys().cloned().collect()
    }

    /// `self` followed by `next`: `e.substitute(&a.then(&b)) == e.substitute(&a).substitute(&b)`.
    pub fn then(&self, next: &Subst) -> Subst {
        let mut out = Subst::new();
        for (v, t) in &self.bindings {
            out.insert(v.clone(), t.substitute(next));
        }
        for (v, t) in &next.bindings {
            out.bindings.entry(v.clone()).or_insert_with(|| t.clone());
        }
        out
    }
}

impl FromIterator<(String, Expr)> for Subst {
    fn from_iter<I: IntoIterator<Item = (String, Expr)>>(iter: I) -> Self {
        Subst {
            bindings: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, e)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} ↦ {e}")?;
        }
        f.write_str("}")
    }
}

/// A `WHILE` loop with optional invariant and postcondition annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub cond: Expr,
    pub invariant: Option<Expr>,
    /// Programmer-supplied assertion written directly after the loop.
    pub post: Option<Expr>,
    pub body: Box<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Skip,
    Assign(String, Expr),
    Seq(Box<Stmt>, Box<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    Block(Vec<String>, Box<Stmt>),
    While(Loop),
}

impl Stmt {
    pub fn assign(v: impl Into<String>, e: Expr) -> Stmt {
        Stmt::Assign(v.into(), e)
    }

    /// Right-nested sequence; `Skip` for an empty list.
    pub fn seq(parts: Vec<Stmt>) -> Stmt {
        let mut iter = parts.into_iter().rev();
        match iter.next() {
            None => Stmt::Skip,
            Some(last) => iter.fold(last, |acc, s| Stmt::Seq(Box::new(s), Box::new(acc))),
        }
    }

    pub fn while_loop(cond: Expr, invariant: Option<Expr>, body: Stmt) -> Stmt {
        Stmt::While(Loop {
            cond,
            invariant,
            post: None,
            body: Box::new(body),
        })
    }

    /// Flattens nested `Seq` into a list of non-sequence statements.
    pub fn flatten_seq(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    /// Loops in pre-order (outer before inner, left to right).
    pub fn loops(&self) -> Vec<&Loop> {
        let mut out = Vec::new();
        self.visit_loops(&mut |l| out.push(l));
        out
    }

    fn visit_loops<'a>(&'a self, f: &mut impl FnMut(&'a Loop)) {
        match self {
            Stmt::Skip | Stmt::Assign(..) => {}
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                a.visit_loops(f);
                b.visit_loops(f);
            }
            Stmt::Block(_, s) => s.visit_loops(f),
            Stmt::While(l) => {
                f(l);
                l.body.visit_loops(f);
            }
        }
    }

    /// Mutable access to the loop with pre-order index `idx`.
    pub fn loop_mut(&mut self, idx: usize) -> Option<&mut Loop> {
        let mut counter = 0;
        self.find_loop_mut(idx, &mut counter)
    }

    fn find_loop_mut(&mut self, idx: usize, counter: &mut usize) -> Option<&mut Loop> {
        match self {
            Stmt::Skip | Stmt::Assign(..) => None,
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => match a.find_loop_mut(idx, counter) {
                Some(l) => Some(l),
                None => b.find_loop_mut(idx, counter),
            },
            Stmt::Block(_, s) => s.find_loop_mut(idx, counter),
            Stmt::While(l) => {
                if *counter == idx {
                    return Some(l);
                }
                *counter += 1;
                l.body.find_loop_mut(idx, counter)
            }
        }
    }

    /// Variables that may be written by the statement (block locals excluded).
    pub fn assigned_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_assigned(&mut out);
        out
    }

    fn collect_assigned(&self, out: &mut BTreeSet<String>) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign(v, _) => {
                out.insert(v.clone());
            }
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                a.collect_assigned(out);
                b.collect_assigned(out);
            }
            Stmt::Block(locals, s) => {
                let mut inner = BTreeSet::new();
                s.collect_assigned(&mut inner);
                out.extend(inner.into_iter().filter(|v| !locals.contains(v)));
            }
            Stmt::While(l) => l.body.collect_assigned(out),
        }
    }

    /// Every variable mentioned anywhere, including annotations.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out, true);
        out
    }

    /// Variables of the code itself, ignoring loop annotations.
    pub fn code_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out, false);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>, annotations: bool) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign(v, e) => {
                out.insert(v.clone());
                out.extend(e.free_vars());
            }
            Stmt::Seq(a, b) => {
                a.collect_vars(out, annotations);
                b.collect_vars(out, annotations);
            }
            Stmt::If(c, a, b) => {
                out.extend(c.free_vars());
                a.collect_vars(out, annotations);
                b.collect_vars(out, annotations);
            }
            Stmt::Block(locals, s) => {
                out.extend(locals.iter().cloned());
                s.collect_vars(out, annotations);
            }
            Stmt::While(l) => {
                out.extend(l.cond.free_vars());
                if annotations {
                    for a in l.invariant.iter().chain(&l.post) {
                        out.extend(a.free_vars());
                    }
                }
                l.body.collect_vars(out, annotations);
            }
        }
    }

    /// Variables read before being written, given the set live after the statement.
    pub fn live_in(&self, live_out: &BTreeSet<String>) -> BTreeSet<String> {
        match self {
            Stmt::Skip => live_out.clone(),
            Stmt::Assign(v, e) => {
                let mut live = live_out.clone();
                live.remove(v);
                live.extend(e.free_vars());
                live
            }
            Stmt::Seq(a, b) => a.live_in(&b.live_in(live_out)),
            Stmt::If(c, a, b) => {
                let mut live = a.live_in(live_out);
                live.extend(b.live_in(live_out));
                live.extend(c.free_vars());
                live
            }
            Stmt::Block(locals, s) => {
                let mut after = live_out.clone();
                for v in locals {
                    after.remove(v);
                }
                let mut live = s.live_in(&after);
                for v in locals {
                    live.remove(v);
                }
                // locals shadow outer variables of the same name
                live.extend(locals.iter().filter(|v| live_out.contains(*v)).cloned());
                live
            }
            Stmt::While(l) => {
                let mut head = live_out.clone();
                head.extend(l.cond.free_vars());
                loop {
                    let mut next = head.clone();
                    next.extend(l.body.live_in(&head));
                    if next == head {
                        return head;
                    }
                    head = next;
                }
            }
        }
    }

    /// Checks that conditions are boolean and right-hand sides are natural.
    pub fn check_sorts(&self) -> Result<(), SortError> {
        match self {
            Stmt::Skip => Ok(()),
            Stmt::Assign(_, e) => expect_sort(e, Sort::Nat),
            Stmt::Seq(a, b) => {
                a.check_sorts()?;
                b.check_sorts()
            }
            Stmt::If(c, a, b) => {
                expect_sort(c, Sort::Bool)?;
                a.check_sorts()?;
                b.check_sorts()
            }
            Stmt::Block(_, s) => s.check_sorts(),
            Stmt::While(l) => {
                expect_sort(&l.cond, Sort::Bool)?;
                if let Some(i) = &l.invariant {
                    expect_sort(i, Sort::Bool)?;
                }
                if let Some(p) = &l.post {
                    expect_sort(p, Sort::Bool)?;
                }
                l.body.check_sorts()
            }
        }
    }
}

/// A Hoare triple `{pre} program {post}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub pre: Expr,
    pub program: Stmt,
    pub post: Expr,
}

impl Triple {
    pub fn check_sorts(&self) -> Result<(), SortError> {
        expect_sort(&self.pre, Sort::Bool)?;
        self.program.check_sorts()?;
        expect_sort(&self.post, Sort::Bool)
    }

    /// Variables whose initial values can influence the run: free in the
    /// precondition, or read before being written.
    pub fn input_vars(&self) -> BTreeSet<String> {
        let mut inputs = self.program.live_in(&self.post.free_vars());
        inputs.extend(self.pre.free_vars());
        inputs
    }

    /// All variables of the triple.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = self.program.vars();
        out.extend(self.pre.free_vars());
        out.extend(self.post.free_vars());
        out
    }

    /// Variables of the pre, post and code, ignoring loop annotations.
    pub fn program_vars(&self) -> BTreeSet<String> {
        let mut out = self.program.code_vars();
        out.extend(self.pre.free_vars());
        out.extend(self.post.free_vars());
        out
    }
}
