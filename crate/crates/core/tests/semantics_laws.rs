mod common;

use common::*;
use loopinv::eval::check;
use loopinv::{exec, holds, parse_program, parse_stmt, vcs_for_loop, wlp, ExecOutcome, Stmt};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wlp_is_sound_for_loop_free_code(
        st in loop_free(4),
        q in formula(2, false),
        stores in proptest::collection::vec(store(8), 16),
    ) {
        let pre = wlp(&st, &q).unwrap();
        for s in &stores {
            if holds(&pre, s) {
                // aborting runs are outside a liberal precondition's promise
                if let ExecOutcome::Finished(out) = exec(&st, s, 100) {
                    prop_assert!(holds(&q, &out), "{st} from {s} ends in {out}");
                }
            }
        }
    }

    #[test]
    fn exec_is_deterministic(st in loop_free(4), s in store(8)) {
        prop_assert_eq!(exec(&st, &s, 10), exec(&st, &s, 10));
    }

    #[test]
    fn more_fuel_keeps_the_result(n in 0u64..6, k in 0u64..4, f in 0u64..12, extra in 0u64..8) {
        let st = parse_stmt("x:=0; y:=1; WHILE x<n DO BEGIN x:=x+1; y:=y*k END").unwrap();
        let s = loopinv::Store::new().with("n", n).with("k", k);
        if let ExecOutcome::Finished(out) = exec(&st, &s, f) {
            prop_assert_eq!(exec(&st, &s, f + extra), ExecOutcome::Finished(out));
        }
    }
}

/// Where all three VCs hold on every tested store, every run of the loop
/// from an invariant store ends in I ∧ ¬B.
#[test]
fn loop_rule_at_test_scale() {
    let t = parse_program("{n≥0 ∧ x=0 ∧ y=1} WHILE x<n DO {x≤n ∧ y*k^(n-x)=k^n} BEGIN x:=x+1; y:=y*k END {y=k^n}").unwrap();
    let Stmt::While(lp) = &t.program else { panic!() };
    let inv = lp.invariant.clone().unwrap();
    let vcs = vcs_for_loop(&t.pre, lp, &t.post).unwrap();
    let vars: Vec<String> = ["n", "k", "x", "y"].iter().map(|s| s.to_string()).collect();
    let stores = all_stores(&vars, 5);
    for vc in vcs.as_array() {
        assert!(stores.iter().all(|s| check(vc, s) != Ok(false)), "{vc}");
    }
    let exit = loopinv::Expr::and(inv.clone(), loopinv::Expr::not(lp.cond.clone()));
    for s in stores.iter().filter(|s| holds(&inv, *s)) {
        if let ExecOutcome::Finished(out) = exec(&t.program, s, 50) {
            assert!(holds(&exit, &out), "{s} -> {out}");
        }
    }
}
