#![allow(dead_code)]

use loopinv::term::{Ctor, Expr, Op, Stmt};
use loopinv::Store;
use proptest::prelude::*;

pub const VARS: [&str; 4] = ["x", "y", "z", "n"];

pub fn var() -> impl Strategy<Value = Expr> {
    proptest::sample::select(VARS.to_vec()).prop_map(Expr::var)
}

pub fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![var(), (0u64..4).prop_map(Expr::nat)]
}

/// Arithmetic over `ops`, at most `depth` operator levels.
pub fn arith(depth: u32, ops: Vec<Op>) -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(depth, 32, 2, move |inner| {
        (proptest::sample::select(ops.clone()), inner.clone(), inner)
            .prop_map(|(op, a, b)| Expr::bin(op, a, b))
    })
}

pub fn safe_arith(depth: u32) -> BoxedStrategy<Expr> {
    arith(depth, vec![Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Mod]).boxed()
}

pub fn relation() -> impl Strategy<Value = Op> {
    proptest::sample::select(vec![Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::Eq, Op::Ne])
}

pub fn atom(depth: u32) -> impl Strategy<Value = Expr> {
    (relation(), safe_arith(depth), safe_arith(depth)).prop_map(|(op, a, b)| Expr::bin(op, a, b))
}

/// Boolean formulas over ∧ ∨ ¬, optionally with ⇒.
pub fn formula(depth: u32, implications: bool) -> BoxedStrategy<Expr> {
    let mut conns = vec![Op::And, Op::Or];
    if implications {
        conns.push(Op::Implies);
    }
    atom(1)
        .prop_recursive(depth, 24, 2, move |inner| {
            prop_oneof![
                (proptest::sample::select(conns.clone()), inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
                inner.prop_map(Expr::not),
            ]
        })
        .boxed()
}

/// First-order terms over a fixed functor alphabet: + * - Succ, numerals, variables.
pub fn fo_term(depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        proptest::sample::select(vec!["a", "b", "c", "x", "y"]).prop_map(Expr::var),
        (0u64..3).prop_map(Expr::nat),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            (proptest::sample::select(vec![Op::Add, Op::Mul, Op::Sub]), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
            inner.prop_map(|a| Expr::ctor(Ctor::Succ, vec![a])),
        ]
    })
    .boxed()
}

/// Loop-free statements of nesting depth at most `depth`.
pub fn loop_free(depth: u32) -> BoxedStrategy<Stmt> {
    let simple = prop_oneof![
        Just(Stmt::Skip),
        (proptest::sample::select(VARS.to_vec()), safe_arith(2)).prop_map(|(v, e)| Stmt::assign(v, e)),
    ];
    simple
        .prop_recursive(depth, 24, 3, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Stmt::seq),
                (atom(1), inner.clone(), inner).prop_map(|(c, a, b)| Stmt::If(c, Box::new(a), Box::new(b))),
            ]
        })
        .boxed()
}

pub fn store(max: u64) -> impl Strategy<Value = Store> {
    proptest::collection::vec(0..=max, VARS.len()).prop_map(|vals| {
        let mut s = Store::new();
        for (v, x) in VARS.iter().zip(vals) {
            s.set(*v, x);
        }
        s
    })
}

/// Every store over `vars` with values in `0..=max`.
pub fn all_stores(vars: &[String], max: u64) -> Vec<Store> {
    let mut out = vec![Store::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|s| (0..=max).map(move |x| s.clone().with(v, x)))
            .collect();
    }
    out
}
