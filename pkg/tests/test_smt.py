from fractions import Fraction

import numpy as np
import pytest

from symrm import logic, smt
from symrm.logic import BoolVar, Cmp, Not, Num, Var, box, conj, disj


@pytest.fixture
def session():
    with smt.SolverSession() as s:
        yield s


def test_declare_and_duplicate(session):
    session.declare("d_0_1_2", "Bool")
    session.declare("o_0_1", "Real")
    with pytest.raises(smt.DuplicateDeclarationError):
        session.declare("d_0_1_2", "Bool")


def test_assert_accepts_declared(session):
    session.declare("a", "Bool")
    session.declare("b", "Bool")
    session.declare("o_0_1", "Real")
    session.assert_formula(disj(BoolVar("a"), BoolVar("b")))
    session.assert_formula(Cmp("=", Var("o_0_1"), Num(10.0)))
    assert session.check_sat() is smt.Verdict.SAT
    assert session.get_model()["o_0_1"] == 10


def test_assert_undeclared_symbol(session):
    with pytest.raises(smt.UndeclaredSymbolError):
        session.assert_formula(Cmp("<", Var("z"), Num(1.0)))


def test_contradiction_unsat(session):
    session.declare("a", "Bool")
    session.assert_formula(conj(BoolVar("a"), Not(BoolVar("a"))))
    assert session.check_sat() is smt.Verdict.UNSAT


def test_interval_sat_and_model(session):
    session.declare("x", "Real")
    session.assert_many([Cmp(">=", Var("x"), Num(2.0)), Cmp("<", Var("x"), Num(3.0))])
    assert session.check_sat() is smt.Verdict.SAT
    x = session.get_model()["x"]
    assert 2 <= x < 3


def test_empty_assertion_set_is_sat(session):
    assert session.check_sat() is smt.Verdict.SAT


def test_unconstrained_boolean_defaults_false(session):
    session.declare("free", "Bool")
    session.declare("r", "Real")
    assert session.check_sat() is smt.Verdict.SAT
    m = session.get_model()
    assert m["free"] is False
    assert m["r"] == 0


def test_get_model_requires_sat(session):
    session.declare("a", "Bool")
    session.assert_formula(conj(BoolVar("a"), Not(BoolVar("a"))))
    session.check_sat()
    with pytest.raises(smt.SolverError):
        session.get_model()


def test_parse_negative_rational():
    assert smt.parse_value("(- (/ 1 2))") == Fraction(-1, 2)
    assert float(smt.parse_value("(- (/ 1 2))")) == -0.5
    assert smt.parse_value("3.25") == Fraction(13, 4)
    assert smt.parse_value("true") is True


def test_define_macro_is_not_a_model_symbol(session):
    session.declare("b", "Real")
    session.define("g", Cmp(">=", Num(2.5), Var("b")))
    session.assert_formula(BoolVar("g"))
    assert session.check_sat() is smt.Verdict.SAT
    m = session.get_model()
    assert m["b"] <= 2.5
    assert "g" not in m.as_dict()


def test_push_pop(session):
    session.declare("x", "Real")
    session.push()
    session.assert_formula(Cmp("<", Var("x"), Var("x")))
    assert session.check_sat() is smt.Verdict.UNSAT
    session.pop()
    assert session.check_sat() is smt.Verdict.SAT


def test_transcript_replay_reproduces_verdicts():
    for fs, expected in [
        ([box({"x": (0.0, 1.0)}), box({"x": (0.5, 2.0)})], smt.Verdict.SAT),
        ([box({"x": (0.0, 1.0)}), Not(box({"x": (-1.0, 2.0)}))], smt.Verdict.UNSAT),
    ]:
        with smt.SolverSession() as s:
            s.declare("x", "Real")
            for f in fs:
                s.assert_formula(f)
            assert s.check_sat() is expected
            text = s.dump()
        assert smt.replay_transcript(text) is expected


def test_transcript_file(tmp_path):
    path = tmp_path / "t.smt2"
    with smt.SolverSession(transcript_path=str(path)) as s:
        s.declare("x", "Real")
        s.check_sat()
    assert "(declare-const x Real)" in path.read_text()


def test_bad_solver_command():
    with pytest.raises(smt.SolverError):
        smt.SolverSession(["/nonexistent/solver"])


def test_solver_env_override(monkeypatch):
    monkeypatch.setenv(smt.SOLVER_ENV, "z3 -in -smt2")
    assert smt.solver_command() == ["z3", "-in", "-smt2"]


def test_unknown_on_timeout():
    # a hard nonlinear-free but large pigeonhole instance with a 1 ms budget
    with smt.SolverSession(timeout_ms=1) as s:
        n = 9
        names = [[f"p_{i}_{j}" for j in range(n - 1)] for i in range(n)]
        for row in names:
            for v in row:
                s.declare(v, "Bool")
        s.assert_many([disj(*[BoolVar(v) for v in row]) for row in names])
        s.assert_many([Not(conj(BoolVar(names[i][j]), BoolVar(names[k][j])))
                       for j in range(n - 1) for i in range(n) for k in range(i + 1, n)])
        assert s.check_sat() in (smt.Verdict.UNKNOWN, smt.Verdict.UNSAT)


def test_solver_agrees_with_box_check_on_200_random_formulas():
    rng = np.random.default_rng(3)
    with smt.SolverSession() as s:
        s.declare("x", "Real")
        s.declare("y", "Real")
        for _ in range(200):
            parts = []
            for _ in range(int(rng.integers(1, 4))):
                lo = float(rng.integers(-3, 3))
                g = box({"x": (lo, lo + float(rng.integers(0, 3))), "y": (0.0, 2.0)})
                parts.append(Not(g) if rng.random() < 0.4 else g)
            s.push()
            s.assert_many(parts)
            verdict = s.check_sat()
            s.pop()
            assert (verdict is smt.Verdict.SAT) == logic.box_conjunction_satisfiable(parts)


def test_find_model_falls_back_to_solver():
    w = smt.find_model([logic.parse_formula("(and (< (+ x y) 1) (> x 3))")])
    assert w is not None and w["x"] + w["y"] < 1 and w["x"] > 3
    assert smt.find_model([logic.parse_formula("(and (< (+ x y) 1) (> x 3) (> y 0))")]) is None
