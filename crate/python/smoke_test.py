"""Smoke test for the loopinv extension module: python python/smoke_test.py"""

from pathlib import Path

import loopinv

CORPUS = Path(__file__).resolve().parent.parent / "crates" / "core" / "corpus"


def main():
    e = loopinv.parse_expr("x+1=n ∧ y*k=k^n")
    assert str(e) == "x+1=n ∧ y*k=k^n"
    assert e.free_vars() == ["k", "n", "x", "y"]
    assert e.holds({"x": 1, "n": 2, "y": 3, "k": 1}) is False

    post = loopinv.Expr("x≥n ∧ y=k^n")
    pre = loopinv.wlp("x:=x+1; y:=y*k", post)
    assert str(pre) == "x+1≥n ∧ y*k=k^n", pre
    assert str(loopinv.simplify(pre, context=loopinv.Expr("x<n"))) == "x+1=n ∧ y*k=k^n"

    a = loopinv.Expr("x+1=n ∧ y*k=k^n")
    b = loopinv.Expr("x+(1+1)=n ∧ y*(k*k)=k^n")
    assert loopinv.embeds(a, b) and loopinv.coupled(a, b)
    g, left, right = loopinv.msg(a, b)
    assert g.substitute(left) == a and g.substitute(right) == b
    assert len(left) == 2

    program = loopinv.parse_program((CORPUS / "exp_simple.imp").read_text())
    assert program.loop_count() == 1
    found = loopinv.find_invariant(program)
    assert found["genvars"] == ["g1", "g2"], found
    assert str(found["invariant"]) == "x+g1=n ∧ y*g2=k^n"

    code, report = loopinv.discover((CORPUS / "exp_simple.imp").read_text())
    assert code == 0, report
    assert report["loops"][0]["verdict"]["status"] == "VerifiedUpToBound"
    assert report["loops"][0]["assignment"]["final"] == {"g1": "0", "g2": "1"}

    code, report = loopinv.discover((CORPUS / "exp_swapped.imp").read_text())
    assert code == 2
    assert any("variable y updated in loop body" in w for w in report["loops"][0]["warnings"])

    try:
        loopinv.parse_program("{True} x:= {True}")
    except ValueError:
        pass
    else:
        raise AssertionError("parse error not raised")

    print("smoke test passed")


if __name__ == "__main__":
    main()
