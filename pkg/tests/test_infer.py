import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_min_states, planted_instance, random_incomplete_machine, VARS
from symrm import smt, srm
from symrm.infer import (Counterexample, FormulaTemplates, GivenFormulas, PairwiseCache, complete_srm,
                         consistent, dedupe, encode_ft, encode_gf, extract_srm, first_inconsistency,
                         infer_minimal, tighten_boxes)
from symrm.logic import Cmp, Num, Var

X = Var("x")
HI = Cmp(">=", X, Num(5.0))
LO = Cmp("<", X, Num(5.0))


def pts(*xs):
    return [(float(v),) for v in xs]


# reward 1 the first time x >= 5 after being low, needs two states
TOGGLE = [
    Counterexample(pts(0, 7, 7, 1, 8), [1, 0, 0, 1]),
    Counterexample(pts(0, 1, 9, 9), [0, 1, 0]),
]


def test_counterexample_validation_and_dedupe():
    with pytest.raises(ValueError):
        Counterexample(pts(1), [])
    with pytest.raises(ValueError):
        Counterexample(pts(1, 2, 3), [0])
    a = Counterexample(pts(1, 2), [0])
    assert dedupe([a, Counterexample(pts(1.0, 2.0), [0.0]), a]) == [a]


def test_given_formulas_finds_two_states():
    res = infer_minimal(TOGGLE, GivenFormulas([HI, LO]), ("x",))
    assert res.found and res.n_states == 2
    assert [a[0] for a in res.attempts] == [1, 2]
    assert consistent(res.srm, TOGGLE)
    assert srm.validate(res.srm).valid


def test_templates_unsat_with_one_state_one_template():
    res = infer_minimal(TOGGLE, FormulaTemplates(f=1), ("x",), n_max=1)
    assert res.outcome == "unsat" and res.srm is None


def test_templates_find_two_states():
    res = infer_minimal(TOGGLE, FormulaTemplates(f=2), ("x",), n_max=3)
    assert res.found and res.n_states == 2
    assert consistent(res.srm, TOGGLE)
    rep = srm.validate(res.srm)
    assert rep.deterministic and rep.complete


def test_diagonal_schedule_walks_anti_diagonals():
    res = infer_minimal(TOGGLE, FormulaTemplates(f=3, diagonal=True), ("x",), n_max=3)
    assert res.found
    tried = [(n, f) for n, f, *_ in res.attempts]
    assert tried[:3] == [(1, 1), (1, 2), (2, 1)]
    sums = [n + f for n, f in tried]
    assert sums == sorted(sums)


def test_encodings_are_quantifier_free():
    for enc in (encode_gf(TOGGLE, 2, [HI, LO], ("x",)), encode_ft(TOGGLE, 2, 2, ("x",))):
        text = enc.smtlib()
        assert text.startswith("(set-logic QF_LRA)")
        assert "forall" not in text and "exists" not in text


def test_gf_read_off_matches_model():
    enc = encode_gf(TOGGLE, 2, [HI, LO], ("x",))
    with smt.SolverSession() as s:
        for name, sort in enc.declarations:
            s.declare(name, sort)
        s.assert_many(enc.assertions)
        assert s.check_sat() is smt.Verdict.SAT
        model = s.get_model()
    m = extract_srm(model, enc, complete=False)
    for t in m.transitions:
        i = enc.guards.index(t.guard)
        assert model[f"d_{t.source}_{i}_{t.target}"] is True
        assert t.reward == float(model[f"o_{t.source}_{i}"])


def test_unused_outputs_default_to_zero():
    # one example that never visits x >= 5: the output on that guard is unconstrained
    ex = [Counterexample(pts(0, 1, 2), [3, 3])]
    res = infer_minimal(ex, GivenFormulas([HI, LO]), ("x",))
    assert res.n_states == 1
    assert res.srm.step(0, (1.0,))[0] == 3.0
    assert res.srm.step(0, (6.0,))[0] == 0.0


def test_complete_srm_adds_default_loops():
    m = srm.Srm(("x",), (0, 1), 0, (srm.Transition(0, HI, 1, 2.0),))
    c = complete_srm(m)
    assert srm.validate(c).valid
    assert c.step(0, (1.0,)) == (0.0, 0)
    assert c.step(1, (9.0,)) == (0.0, 1)


@pytest.mark.parametrize("seed", range(25))
def test_complete_srm_on_random_machines(seed):
    m = random_incomplete_machine(np.random.default_rng(seed))
    assert srm.validate(complete_srm(m)).valid


@pytest.mark.parametrize("seed", range(12))
def test_minimal_states_match_brute_force(seed):
    planted, guards, examples = planted_instance(np.random.default_rng(seed))
    res = infer_minimal(examples, GivenFormulas(guards), VARS)
    assert res.found
    assert res.n_states == brute_force_min_states(examples, guards, VARS)
    assert res.n_states <= len(planted.states)
    assert first_inconsistency(res.srm, examples) is None


@pytest.mark.parametrize("seed", range(6))
def test_template_guards_within_a_state_are_disjoint(seed):
    _, _, examples = planted_instance(np.random.default_rng(100 + seed), max_states=3,
                                      max_examples=3)
    res = infer_minimal(examples, FormulaTemplates(f=2), VARS, n_max=4)
    assert res.found
    assert consistent(res.srm, examples)
    for p in res.srm.states:
        out = res.srm.outgoing(p)
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                assert not smt.satisfiable([out[i].guard, out[j].guard])


def test_tighten_shrinks_box_to_observed_cells():
    machine = srm.single_state_srm(("x",))
    ex = [Counterexample(pts(0, 3, 4, 8), [0, 0, 0])]
    boxes = {(0, 0): (True, {"x": (2.5, 20.0)}), (0, 1): (False, {"x": (10.0, 12.0)})}
    out = tighten_boxes(boxes, machine, ex, ("x",))
    # observed values 0, 3, 4, 8: smallest gap 1, so half a unit of padding
    assert out[0, 0] == (True, {"x": (2.5, 8.5)})
    assert out[0, 1] == (False, {"x": (0.0, 0.0)})


@given(st.lists(st.integers(0, 20), min_size=2, max_size=12),
       st.integers(0, 20), st.integers(1, 20))
def test_tighten_keeps_membership_and_stays_inside(xs, lo, width):
    machine = srm.single_state_srm(("x",))
    ex = [Counterexample(pts(*xs), [0] * (len(xs) - 1))]
    hi = lo + width
    new = tighten_boxes({(0, 0): (True, {"x": (float(lo), float(hi))})}, machine, ex, ("x",))
    nlo, nhi = new[0, 0][1]["x"]
    assert nhi <= nlo or lo <= nlo <= nhi <= hi
    for v in xs[1:]:
        assert (lo <= v < hi) == (nlo <= v < nhi)


@pytest.mark.parametrize("seed", range(4))
def test_tightened_and_raw_template_machines_both_replay(seed):
    _, _, examples = planted_instance(np.random.default_rng(200 + seed), max_states=3,
                                      max_examples=3)
    for tighten in (True, False):
        res = infer_minimal(examples, FormulaTemplates(f=2), VARS, n_max=4, tighten=tighten)
        assert res.found and consistent(res.srm, examples)
        assert srm.validate(res.srm)


def test_pairwise_cache_is_symmetric_and_memoised():
    cache = PairwiseCache()
    assert cache.sat(HI, HI) and not cache.sat(HI, LO)
    assert not cache.sat(LO, HI)
    assert len(cache.cache) == 2


def test_transcripts_written(tmp_path):
    infer_minimal(TOGGLE, GivenFormulas([HI, LO]), ("x",), transcript_dir=str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["solver_n1.smt2", "solver_n2.smt2"]
    assert smt.replay_transcript((tmp_path / "solver_n2.smt2").read_text()) is smt.Verdict.SAT


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        infer_minimal([], GivenFormulas([HI]), ("x",))
    with pytest.raises(ValueError):
        encode_gf(TOGGLE, 1, [], ("x",))
    with pytest.raises(ValueError):
        encode_ft(TOGGLE, 1, 0, ("x",))


def test_unknown_outcome_on_tiny_timeout():
    _, _, examples = planted_instance(np.random.default_rng(7), max_states=4, max_examples=6)
    res = infer_minimal(examples, FormulaTemplates(f=3), VARS, n_max=4, timeout_ms=1)
    assert res.outcome in ("unknown", "found", "unsat")
    if res.outcome == "unknown":
        assert res.srm is None
