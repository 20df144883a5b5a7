//! Executable semantics over natural numbers.
//!
//! Subtraction is monus. Division and modulus by zero are errors under
//! [`Arith::Strict`]; [`Arith::Total`] uses the `x/0 = 0`, `x%0 = x`
//! convention and is used for ghost terms in the solver. Overflow of `u64`
//! is always an error.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::term::{Ctor, Expr, Loop, Op, Stmt};

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Store {
    vars: BTreeMap<String, u64>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.vars.get(name).copied()
    }

    pub fn set(&mut self, name: impl Into<String>, value: u64) {
        self.vars.insert(name.into(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<u64> {
        self.vars.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &u64)> {
        self.vars.iter()
    }

    pub fn with(mut self, name: &str, value: u64) -> Self {
        self.set(name, value);
        self
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for Store {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        Store {
            vars: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.vars.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}:{v}")?;
        }
        f.write_str("}")
    }
}

/// Variable lookup used by the evaluator.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<u64>;
}

impl Env for Store {
    fn lookup(&self, name: &str) -> Option<u64> {
        self.get(name)
    }
}

/// A store extended with extra bindings that take priority.
pub struct Overlay<'a> {
    pub base: &'a Store,
    pub extra: &'a [(String, u64)],
}

impl Env for Overlay<'_> {
    fn lookup(&self, name: &str) -> Option<u64> {
        self.extra
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .or_else(|| self.base.get(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Nat(u64),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum EvalError {
    #[error("division by zero")]
    DivByZero,
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("arithmetic overflow")]
    Overflow,
    #[error("cannot evaluate `{0}`")]
    Unsupported(String),
    #[error("sort error in `{0}`")]
    Sort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arith {
    #[default]
    Strict,
    Total,
}

pub fn eval_expr(e: &Expr, s: &impl Env) -> Result<Value, EvalError> {
    eval_with(e, s, Arith::Strict)
}

pub fn eval_with(e: &Expr, s: &impl Env, mode: Arith) -> Result<Value, EvalError> {
    match e {
        Expr::Ctor(Ctor::True, _) => Ok(Value::Bool(true)),
        Expr::Ctor(Ctor::False, _) => Ok(Value::Bool(false)),
        Expr::Op(op, _) if !op.is_arithmetic() => eval_bool(e, s, mode).map(Value::Bool),
        _ => eval_nat(e, s, mode).map(Value::Nat),
    }
}

pub fn eval_nat(e: &Expr, s: &impl Env, mode: Arith) -> Result<u64, EvalError> {
    match e {
        Expr::Nat(n) => Ok(*n),
        Expr::Var(v) => s.lookup(v).ok_or_else(|| EvalError::UnboundVar(v.clone())),
        Expr::Ctor(Ctor::Zero, _) => Ok(0),
        Expr::Ctor(Ctor::Succ, args) => eval_nat(&args[0], s, mode)?
            .checked_add(1)
            .ok_or(EvalError::Overflow),
        Expr::Op(op, args) if op.is_arithmetic() => {
            let a = eval_nat(&args[0], s, mode)?;
            let b = eval_nat(&args[1], s, mode)?;
            arith(*op, a, b, mode)
        }
        Expr::Op(..) | Expr::Ctor(..) => Err(EvalError::Sort(e.to_string())),
        _ => Err(EvalError::Unsupported(e.to_string())),
    }
}

/// Applies an arithmetic operator to two naturals.
pub fn arith(op: Op, a: u64, b: u64, mode: Arith) -> Result<u64, EvalError> {
    match op {
        Op::Add => a.checked_add(b).ok_or(EvalError::Overflow),
        Op::Sub => Ok(a.saturating_sub(b)),
        Op::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
        Op::Div => match (b, mode) {
            (0, Arith::Strict) => Err(EvalError::DivByZero),
            (0, Arith::Total) => Ok(0),
            _ => Ok(a / b),
        },
        Op::Mod => match (b, mode) {
            (0, Arith::Strict) => Err(EvalError::DivByZero),
            (0, Arith::Total) => Ok(a),
            _ => Ok(a % b),
        },
        Op::Pow => {
            let exp = u32::try_from(b).map_err(|_| EvalError::Overflow);
            match a {
                0 | 1 => Ok(if b == 0 { 1 } else { a }),
                _ => a.checked_pow(exp?).ok_or(EvalError::Overflow),
            }
        }
        _ => unreachable!("not an arithmetic operator: {op:?}"),
    }
}

pub fn eval_bool(e: &Expr, s: &impl Env, mode: Arith) -> Result<bool, EvalError> {
    match e {
        Expr::Ctor(Ctor::True, _) => Ok(true),
        Expr::Ctor(Ctor::False, _) => Ok(false),
        Expr::Op(op, args) => match op {
            Op::Not => Ok(!eval_bool(&args[0], s, mode)?),
            Op::And => Ok(eval_bool(&args[0], s, mode)? && eval_bool(&args[1], s, mode)?),
            Op::Or => Ok(eval_bool(&args[0], s, mode)? || eval_bool(&args[1], s, mode)?),
            Op::Implies => Ok(!eval_bool(&args[0], s, mode)? || eval_bool(&args[1], s, mode)?),
            rel if rel.is_relational() => {
                let a = eval_nat(&args[0], s, mode)?;
                let b = eval_nat(&args[1], s, mode)?;
                Ok(match rel {
                    Op::Lt => a < b,
                    Op::Gt => a > b,
                    Op::Le => a <= b,
                    Op::Ge => a >= b,
                    Op::Eq => a == b,
                    _ => a != b,
                })
            }
            _ => Err(EvalError::Sort(e.to_string())),
        },
        Expr::Var(_) | Expr::Nat(_) | Expr::Ctor(..) => Err(EvalError::Sort(e.to_string())),
        _ => Err(EvalError::Unsupported(e.to_string())),
    }
}

/// Truth of an assertion; evaluation errors are reported, not hidden.
pub fn check(e: &Expr, s: &impl Env) -> Result<bool, EvalError> {
    eval_bool(e, s, Arith::Strict)
}

/// Whether an assertion holds. An evaluation error counts as "does not hold";
/// use [`check`] to tell the two apart.
pub fn holds(e: &Expr, s: &impl Env) -> bool {
    check(e, s).unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecOutcome {
    Finished(Store),
    FuelExhausted,
    EvalError(EvalError),
}

impl ExecOutcome {
    pub fn store(&self) -> Option<&Store> {
        match self {
            ExecOutcome::Finished(s) => Some(s),
            _ => None,
        }
    }
}

/// States seen at the head of one loop, for one entry into that loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopVisit {
    /// The entry state followed by the state before every later condition test.
    pub states: Vec<Store>,
    /// True when the loop condition was eventually false.
    pub exited: bool,
}

impl LoopVisit {
    pub fn entry(&self) -> &Store {
        &self.states[0]
    }

    pub fn exit(&self) -> Option<&Store> {
        if self.exited {
            self.states.last()
        } else {
            None
        }
    }
}

enum Stop {
    Fuel,
    Error(EvalError),
}

struct Machine<'a> {
    fuel: u64,
    target: Option<&'a Loop>,
    visits: Vec<LoopVisit>,
}

impl<'a> Machine<'a> {
    fn run(&mut self, st: &'a Stmt, s: &mut Store) -> Result<(), Stop> {
        match st {
            Stmt::Skip => Ok(()),
            Stmt::Assign(v, e) => {
                let val = eval_nat(e, s, Arith::Strict).map_err(Stop::Error)?;
                s.set(v.clone(), val);
                Ok(())
            }
            Stmt::Seq(a, b) => {
                self.run(a, s)?;
                self.run(b, s)
            }
            Stmt::If(c, a, b) => {
                if check(c, s).map_err(Stop::Error)? {
                    self.run(a, s)
                } else {
                    self.run(b, s)
                }
            }
            Stmt::Block(locals, body) => {
                let saved: Vec<(String, Option<u64>)> =
                    locals.iter().map(|v| (v.clone(), s.get(v))).collect();
                for v in locals {
                    s.set(v.clone(), 0);
                }
                let result = self.run(body, s);
                for (v, old) in saved {
                    match old {
                        Some(x) => s.set(v, x),
                        None => {
                            s.remove(&v);
                        }
                    }
                }
                result
            }
            Stmt::While(l) => {
                let observed = self.target.is_some_and(|t| std::ptr::eq(t, l));
                let visit = if observed {
                    self.visits.push(LoopVisit { states: Vec::new(), exited: false });
                    Some(self.visits.len() - 1)
                } else {
                    None
                };
                loop {
                    if let Some(i) = visit {
                        self.visits[i].states.push(s.clone());
                    }
                    if !check(&l.cond, s).map_err(Stop::Error)? {
                        if let Some(i) = visit {
                            self.visits[i].exited = true;
                        }
                        return Ok(());
                    }
                    if self.fuel == 0 {
                        return Err(Stop::Fuel);
                    }
                    self.fuel -= 1;
                    self.run(&l.body, s)?;
                }
            }
        }
    }
}

/// Big-step execution; `fuel` bounds the total number of loop-body iterations.
pub fn exec(st: &Stmt, s: &Store, fuel: u64) -> ExecOutcome {
    let mut m = Machine { fuel, target: None, visits: Vec::new() };
    let mut store = s.clone();
    match m.run(st, &mut store) {
        Ok(()) => ExecOutcome::Finished(store),
        Err(Stop::Fuel) => ExecOutcome::FuelExhausted,
        Err(Stop::Error(e)) => ExecOutcome::EvalError(e),
    }
}

/// Executes `st`, recording every visit to the loop `target` (compared by address).
pub fn exec_observing(
    st: &Stmt,
    s: &Store,
    fuel: u64,
    target: &Loop,
) -> (ExecOutcome, Vec<LoopVisit>) {
    let mut m = Machine { fuel, target: Some(target), visits: Vec::new() };
    let mut store = s.clone();
    let outcome = match m.run(st, &mut store) {
        Ok(()) => ExecOutcome::Finished(store),
        Err(Stop::Fuel) => ExecOutcome::FuelExhausted,
        Err(Stop::Error(e)) => ExecOutcome::EvalError(e),
    };
    (outcome, m.visits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_program, parse_stmt};

    fn store(pairs: &[(&str, u64)]) -> Store {
        pairs.iter().map(|(k, v)| (*k, *v)).collect()
    }

    fn nat(src: &str, s: &Store) -> u64 {
        match eval_expr(&parse_expr(src).unwrap(), s).unwrap() {
            Value::Nat(n) => n,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn arithmetic() {
        assert_eq!(nat("2 - 5", &Store::new()), 0);
        assert_eq!(nat("k^n", &store(&[("k", 2), ("n", 3)])), 8);
        assert_eq!(nat("0^0", &Store::new()), 1);
        assert_eq!(nat("7/2 + 7%2", &Store::new()), 4);
        assert!(holds(&parse_expr("x%2=1").unwrap(), &store(&[("x", 7)])));
    }

    #[test]
    fn division_by_zero() {
        let e = parse_expr("x/0").unwrap();
        assert_eq!(eval_expr(&e, &store(&[("x", 3)])), Err(EvalError::DivByZero));
        assert_eq!(eval_with(&e, &store(&[("x", 3)]), Arith::Total), Ok(Value::Nat(0)));
        let m = parse_expr("x%0").unwrap();
        assert_eq!(eval_with(&m, &store(&[("x", 3)]), Arith::Total), Ok(Value::Nat(3)));
        assert!(!holds(&parse_expr("x/0=0").unwrap(), &store(&[("x", 3)])));
        assert!(check(&parse_expr("x/0=0").unwrap(), &store(&[("x", 3)])).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(
            eval_expr(&parse_expr("2^64").unwrap(), &Store::new()),
            Err(EvalError::Overflow)
        );
    }

    #[test]
    fn holds_assertions() {
        let s = store(&[("x", 3), ("n", 3), ("y", 8), ("k", 2)]);
        assert!(holds(&parse_expr("x ≥ n ∧ y = k^n").unwrap(), &s));
        assert!(holds(&Expr::tt(), &Store::new()));
        assert!(!holds(&parse_expr("y = k^n").unwrap(), &store(&[("y", 7), ("k", 2), ("n", 3)])));
    }

    #[test]
    fn runs_exponent_program() {
        let t = parse_program(
            "{n>=0} x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; y:=y*k END {y=k^n}",
        )
        .unwrap();
        let out = exec(&t.program, &store(&[("n", 3), ("k", 2), ("x", 0), ("y", 0)]), 100);
        let s = out.store().unwrap();
        assert_eq!((s.get("y"), s.get("x")), (Some(8), Some(3)));
    }

    #[test]
    fn runs_binary_exponentiation() {
        let body = parse_stmt(
            "x:=n; y:=1; z:=k; WHILE x>0 DO BEGIN IF x%2=1 THEN y:=y*z ELSE SKIP; x:=x/2; z:=z*z END",
        )
        .unwrap();
        let out = exec(&body, &store(&[("n", 5), ("k", 3)]), 100);
        assert_eq!(out.store().unwrap().get("y"), Some(243));
    }

    #[test]
    fn nontermination_exhausts_fuel() {
        let st = parse_stmt("WHILE True DO SKIP").unwrap();
        assert_eq!(exec(&st, &Store::new(), 10), ExecOutcome::FuelExhausted);
    }

    #[test]
    fn block_locals_are_restored() {
        let st = parse_stmt("BEGIN VAR t; t:=t+x; x:=y; y:=t END").unwrap();
        let out = exec(&st, &store(&[("x", 1), ("y", 2), ("t", 9)]), 10);
        let s = out.store().unwrap();
        assert_eq!((s.get("x"), s.get("y"), s.get("t")), (Some(2), Some(1), Some(9)));
        let out = exec(&st, &store(&[("x", 1), ("y", 2)]), 10);
        assert!(!out.store().unwrap().contains("t"));
    }

    #[test]
    fn errors_propagate() {
        let st = parse_stmt("x := 1/y").unwrap();
        assert_eq!(
            exec(&st, &store(&[("y", 0)]), 10),
            ExecOutcome::EvalError(EvalError::DivByZero)
        );
    }

    #[test]
    fn observes_loop_visits() {
        let st = parse_stmt("x:=0; WHILE x<2 DO x:=x+1").unwrap();
        let target = st.loops()[0];
        let (out, visits) = exec_observing(&st, &Store::new(), 10, target);
        assert!(out.store().is_some());
        assert_eq!(visits.len(), 1);
        let xs: Vec<_> = visits[0].states.iter().map(|s| s.get("x").unwrap()).collect();
        assert_eq!(xs, vec![0, 1, 2]);
        assert_eq!(visits[0].exit().unwrap().get("x"), Some(2));
    }
}
