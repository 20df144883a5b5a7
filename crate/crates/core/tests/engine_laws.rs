mod common;

use std::path::Path;

use loopinv::engine::{EngineFailure, LoopOutcome};
use loopinv::solver::Step;
use loopinv::{
    annotate_program, check_requirements, exec, find_invariant, holds, parse_expr, parse_program, Assignment,
    EngineConfig, Expr, Loop, SolverConfig, Stmt, Subst, Triple,
};
use proptest::prelude::*;

fn corpus(name: &str) -> Triple {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name);
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn only_loop(t: &Triple) -> &Loop {
    t.program.loops()[0]
}

/// `c0*x + c1*y + c2*n + c3`, dropping zero terms.
fn linear() -> impl Strategy<Value = String> {
    (0u64..3, 0u64..3, 0u64..3, 0u64..4).prop_map(|(a, b, c, d)| {
        let mut parts = Vec::new();
        for (coef, v) in [(a, "x"), (b, "y"), (c, "n")] {
            match coef {
                0 => {}
                1 => parts.push(v.to_string()),
                _ => parts.push(format!("{coef}*{v}")),
            }
        }
        if d > 0 || parts.is_empty() {
            parts.push(d.to_string());
        }
        parts.join("+")
    })
}

fn single_loop_program() -> impl Strategy<Value = String> {
    (
        0u64..3,
        linear(),
        1u64..3,
        linear(),
        proptest::sample::select(vec!["=", "≤", "≥", "<"]),
        linear(),
        linear(),
    )
        .prop_map(|(x0, y0, dx, dy, rel, lhs, rhs)| {
            format!(
                "{{True}} x:={x0}; y:={y0}; WHILE x<n DO BEGIN x:=x+{dx}; y:={dy} END {{{lhs}{rel}{rhs}}}"
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn engine_stops_within_budget(src in single_loop_program()) {
        let t = parse_program(&src).unwrap();
        let cfg = EngineConfig::default();
        let result = find_invariant(only_loop(&t), &t.post, &cfg);
        prop_assert!(!matches!(result, Err(EngineFailure::IterationBudget { .. })), "{src}");
        if let Ok(d) = result {
            prop_assert!(d.iterations <= cfg.max_iterations);
            prop_assert!(d.genvars.is_disjoint(&t.program_vars()), "{src}");
        }
    }
}

#[test]
fn corpus_needs_few_iterations() {
    for name in ["exp_simple.imp", "exp_binary.imp", "exp_swapped.imp"] {
        let t = corpus(name);
        let d = find_invariant(only_loop(&t), &t.post, &EngineConfig::default()).unwrap();
        assert!(d.iterations <= 6, "{name}: {}", d.iterations);
        assert!(d.genvars.is_disjoint(&t.program_vars()));
    }
}

fn example_one() -> (Triple, Expr, Assignment) {
    let t = corpus("exp_simple.imp");
    let (_, reports) = annotate_program(&t, &EngineConfig::default(), &SolverConfig::default());
    let LoopOutcome::Solved(report) = &reports[0].outcome else { panic!("{:?}", reports[0].outcome) };
    (t, report.invariant.clone(), report.assignment.clone().unwrap())
}

#[test]
fn solver_is_deterministic() {
    let (_, _, first) = example_one();
    let (_, _, second) = example_one();
    assert_eq!(first, second);
}

/// An independent brute-force pass over the actual runs: the invariant with
/// the tracked genvar values holds at every loop head, and with the final
/// values it implies the postcondition at exit.
#[test]
fn verified_assignment_rechecks_by_brute_force() {
    let (t, inv, a) = example_one();
    let Stmt::Seq(..) = &t.program else { panic!() };
    let parts = t.program.flatten_seq();
    let prefix = Stmt::seq(parts[..parts.len() - 1].iter().map(|s| (*s).clone()).collect());
    let lp = only_loop(&t);
    let post = parse_expr("y=k^n").unwrap();
    for n in 0..=6u64 {
        for k in 0..=6u64 {
            let mut s = exec(&prefix, &loopinv::Store::new().with("n", n).with("k", k), 100).store().unwrap().clone();
            let mut g: Vec<(String, u64)> = a
                .initial
                .iter()
                .map(|(v, e)| (v.clone(), loopinv::eval::eval_nat(e, &s, loopinv::Arith::Total).unwrap()))
                .collect();
            loop {
                let mut here = s.clone();
                for (v, x) in &g {
                    here.set(v.clone(), *x);
                }
                assert!(holds(&inv, &here), "n={n} k={k} at {here}");
                if !holds(&lp.cond, &s) {
                    break;
                }
                for (v, x) in g.iter_mut() {
                    let Step::Uniform(e) = &a.step[v] else { panic!() };
                    *x = loopinv::eval::eval_nat(e, &here, loopinv::Arith::Total).unwrap();
                }
                s = exec(&lp.body, &s, 100).store().unwrap().clone();
            }
            let closed = inv.substitute(&a.final_.iter().map(|(v, e)| (v.clone(), e.clone())).collect::<Subst>());
            assert!(holds(&closed, &s));
            assert!(holds(&post, &s));
        }
    }
}

#[test]
fn rejected_candidates_stay_rejected_at_larger_bounds() {
    let (t, inv, mut a) = example_one();
    a.step.insert("g2".into(), Step::Uniform(parse_expr("g2*k").unwrap()));
    let post = t.post.clone();
    let mut first_failure = None;
    for bound in 1..=6 {
        let cfg = SolverConfig { domain_bound: bound, ..SolverConfig::default() };
        let (verdict, _) = check_requirements(&t, 0, &inv, &a, &post, &cfg).unwrap();
        if !verdict.is_verified() {
            first_failure.get_or_insert(bound);
        } else {
            assert!(first_failure.is_none(), "rejected at {first_failure:?}, accepted at {bound}");
        }
    }
    assert!(first_failure.is_some());
}

#[test]
fn sub_assertion_genvars_are_rejected() {
    let t = corpus("exp_binary.imp");
    let putative = parse_expr("x%2=g4 ⇒ g5").unwrap();
    let genvars = ["g4", "g5"].iter().map(|s| s.to_string()).collect();
    let err = loopinv::solve(&t, 0, &putative, &genvars, &t.post, &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, loopinv::solver::SolverFailure::IllSorted(_)), "{err}");
}

/// Requirement 3 must range over every variable a final value reads, even
/// one absent from the invariant and the postcondition.
#[test]
fn final_values_are_checked_over_their_own_variables() {
    let t = parse_program("{n≥0} x:=0; y:=1; w:=0; WHILE x<n DO BEGIN x:=x+1; y:=y*k; w:=w END {y=k^n}").unwrap();
    let inv = parse_expr("x+g1=n ∧ y*g2=k^n").unwrap();
    let mut a = Assignment::default();
    for (g, init, step, fin) in [("g1", "n", "g1-1", "0"), ("g2", "k^n", "g2/k", "w+1")] {
        a.initial.insert(g.into(), parse_expr(init).unwrap());
        a.step.insert(g.into(), Step::Uniform(parse_expr(step).unwrap()));
        a.final_.insert(g.into(), parse_expr(fin).unwrap());
    }
    let cfg = SolverConfig::default();
    let (verdict, _) = check_requirements(&t, 0, &inv, &a, &t.post, &cfg).unwrap();
    assert!(matches!(verdict, loopinv::Verdict::Failed { requirement: 3, .. }), "{verdict}");
}
