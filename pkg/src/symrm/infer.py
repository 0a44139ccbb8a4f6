"""Learning SRMs from counterexample trajectories by constraint solving.

Two encodings share the same state-assignment and output variables:

* given formulas: the guards are picked from a fixed candidate list;
* formula templates: each state owns ``f`` box templates whose bounds and
  polarity are solved for; guard ``i`` holds where template ``i`` holds and
  all other templates of that state do not.

Symbol naming is deterministic:
``d_p_i_q`` (transition p --guard i--> q), ``x_e_t_p`` (trace e is in state p
after t inputs), ``o_p_i`` (output of guard i at p), ``pos_p_i`` and
``b_p_i_<var>_ge`` / ``b_p_i_<var>_lt`` (template polarity and bounds).
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import logic, smt
from .logic import BoolVar, Cmp, Formula, Iff, Implies, Not, Num, Var, conj, disj
from .srm import Srm, Transition

log = logging.getLogger(__name__)


class InferenceError(RuntimeError):
    pass


class ReplayMismatch(InferenceError):
    pass


@dataclass(frozen=True)
class Counterexample:
    states: tuple
    rewards: tuple

    def __post_init__(self):
        st = tuple(tuple(float(v) for v in s) for s in self.states)
        rw = tuple(float(r) for r in self.rewards)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "rewards", rw)
        if len(st) < 2:
            raise ValueError("a counterexample needs at least two states")
        if len(rw) != len(st) - 1:
            raise ValueError(f"{len(st)} states need {len(st) - 1} rewards, got {len(rw)}")

    def __len__(self):
        return len(self.rewards)


def dedupe(examples: Iterable[Counterexample]) -> list[Counterexample]:
    seen, out = set(), []
    for e in examples:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return out


def consistent(machine: Srm, examples: Iterable[Counterexample]) -> bool:
    return all(tuple(machine.run(e.states)) == e.rewards for e in examples)


def first_inconsistency(machine: Srm, examples) -> tuple[int, int] | None:
    """(example index, step index) of the first reward the machine gets wrong."""
    for k, e in enumerate(examples):
        pred = machine.run(e.states)
        for t, (a, b) in enumerate(zip(pred, e.rewards)):
            if a != b:
                return k, t
    return None


# --------------------------------------------------------------------------
# encodings

@dataclass
class Encoding:
    """Declared symbols, macro definitions and assertions of one instance."""

    n_states: int
    mode: str
    variables: tuple
    declarations: list = field(default_factory=list)   # (name, sort)
    definitions: list = field(default_factory=list)    # (name, formula)
    assertions: list = field(default_factory=list)
    guards: list = field(default_factory=list)         # given-formula mode
    n_templates: int = 0

    def declare(self, name, sort):
        self.declarations.append((name, sort))
        return BoolVar(name) if sort == "Bool" else Var(name)

    def symbol_names(self) -> set:
        return {n for n, _ in self.declarations}

    def smtlib(self) -> str:
        lines = ["(set-logic QF_LRA)"]
        lines += [f"(declare-const {n} {s})" for n, s in self.declarations]
        lines += [f"(define-fun {n} () Bool {logic.print_formula(f)})" for n, f in self.definitions]
        lines += [f"(assert {logic.print_formula(f)})" for f in self.assertions]
        lines.append("(check-sat)")
        return "\n".join(lines) + "\n"


def d_name(p, i, q):
    return f"d_{p}_{i}_{q}"


def x_name(e, t, p):
    return f"x_{e}_{t}_{p}"


def o_name(p, i):
    return f"o_{p}_{i}"


def _state_constraints(enc: Encoding, examples, n):
    """Initial state and exactly one state per time step, for every trace."""
    xs = {}
    for e, ex in enumerate(examples):
        for t in range(len(ex.states)):
            for p in range(n):
                xs[e, t, p] = enc.declare(x_name(e, t, p), "Bool")
    for e, ex in enumerate(examples):
        enc.assertions.append(xs[e, 0, 0])
        for t in range(len(ex.states)):
            row = [xs[e, t, p] for p in range(n)]
            enc.assertions.append(disj(*row))
            for a, b in itertools.combinations(row, 2):
                enc.assertions.append(Not(conj(a, b)))
    return xs


def _reward_eq(o: Var, r: float) -> Formula:
    return Cmp("=", o, Num(r))


class PairwiseCache:
    """Memoised satisfiability of guard conjunctions (depends on the guards only)."""

    def __init__(self, command=None):
        self.command = command
        self.cache: dict = {}

    def sat(self, g1: Formula, g2: Formula) -> bool:
        key = frozenset((g1, g2))
        hit = self.cache.get(key)
        if hit is None:
            hit = smt.satisfiable([g1, g2], self.command)
            self.cache[key] = hit
        return hit


def encode_gf(examples: Sequence[Counterexample], n: int, guards: Sequence[Formula],
              variables: Sequence[str], pair_cache: PairwiseCache | None = None) -> Encoding:
    """Given-formula encoding for ``n`` states over candidate ``guards``."""
    if not guards:
        raise ValueError("the candidate guard list is empty")
    guards = list(dict.fromkeys(guards))
    pair_cache = pair_cache or PairwiseCache()
    enc = Encoding(n, "gf", tuple(variables), guards=guards)
    m = len(guards)
    d = {(p, i, q): enc.declare(d_name(p, i, q), "Bool")
         for p in range(n) for i in range(m) for q in range(n)}
    o = {(p, i): enc.declare(o_name(p, i), "Real") for p in range(n) for i in range(m)}
    xs = _state_constraints(enc, examples, n)

    # determinism: two transitions of one state whose guards overlap exclude each other
    for p in range(n):
        pairs = [(i, q) for i in range(m) for q in range(n)]
        for (i, q1), (j, q2) in itertools.combinations(pairs, 2):
            if pair_cache.sat(guards[i], guards[j]):
                enc.assertions.append(Not(conj(d[p, i, q1], d[p, j, q2])))

    preds = [logic.compile_formula(g, variables) for g in guards]
    holds_cache: dict = {}

    def holds(s):
        hit = holds_cache.get(s)
        if hit is None:
            hit = [i for i in range(m) if preds[i](s)]
            holds_cache[s] = hit
        return hit

    for e, ex in enumerate(examples):
        for t in range(len(ex.rewards)):
            s_next, r = ex.states[t + 1], ex.rewards[t]
            sat_i = holds(s_next)
            for p in range(n):
                here = xs[e, t, p]
                for i in sat_i:
                    for q in range(n):
                        enc.assertions.append(Implies(conj(here, d[p, i, q]),
                                                      conj(xs[e, t + 1, q], _reward_eq(o[p, i], r))))
                enc.assertions.append(Implies(here, disj(*[d[p, i, q] for i in sat_i
                                                           for q in range(n)])))
    return enc


def template_names(p, i, variables):
    return (f"pos_{p}_{i}",
            {v: (f"b_{p}_{i}_{v}_ge", f"b_{p}_{i}_{v}_lt") for v in variables})


def box_template(p, i, variables) -> Formula:
    """``pos <=> (v >= b_ge and v < b_lt for every variable v)``."""
    pos, bounds = template_names(p, i, variables)
    body = conj(*[c for v in variables for c in (Cmp(">=", Var(v), Var(bounds[v][0])),
                                                 Cmp("<", Var(v), Var(bounds[v][1])))])
    return Iff(BoolVar(pos), body)


def template_guard(templates: Sequence[Formula], i: int) -> Formula:
    """Template i holds and every other template of the state does not."""
    return conj(templates[i], *[Not(t) for j, t in enumerate(templates) if j != i])


def encode_ft(examples: Sequence[Counterexample], n: int, f: int,
              variables: Sequence[str]) -> Encoding:
    """Formula-template encoding with ``f`` box templates per state."""
    if f < 1:
        raise ValueError("need at least one template per state")
    enc = Encoding(n, "ft", tuple(variables), n_templates=f)
    d = {(p, i, q): enc.declare(d_name(p, i, q), "Bool")
         for p in range(n) for i in range(f) for q in range(n)}
    o = {(p, i): enc.declare(o_name(p, i), "Real") for p in range(n) for i in range(f)}
    guards = {}
    for p in range(n):
        temps = []
        for i in range(f):
            pos, bounds = template_names(p, i, variables)
            enc.declare(pos, "Bool")
            for v in variables:
                enc.declare(bounds[v][0], "Real")
                enc.declare(bounds[v][1], "Real")
            temps.append(box_template(p, i, variables))
        for i in range(f):
            guards[p, i] = template_guard(temps, i)
    xs = _state_constraints(enc, examples, n)

    # per guard, at most one target
    for p in range(n):
        for i in range(f):
            for q1, q2 in itertools.combinations(range(n), 2):
                enc.assertions.append(Not(conj(d[p, i, q1], d[p, i, q2])))

    # guard instances at observed states, shared as macros
    state_ids: dict = {}
    for ex in examples:
        for s in ex.states[1:]:
            state_ids.setdefault(s, len(state_ids))
    inst: dict = {}

    def instance(p, i, s) -> BoolVar:
        k = (p, i, state_ids[s])
        hit = inst.get(k)
        if hit is None:
            name = f"g_{p}_{i}_s{k[2]}"
            enc.definitions.append((name, logic.substitute(guards[p, i], dict(zip(variables, s)))))
            hit = inst[k] = BoolVar(name)
        return hit

    for e, ex in enumerate(examples):
        for t in range(len(ex.rewards)):
            s_next, r = ex.states[t + 1], ex.rewards[t]
            for p in range(n):
                here = xs[e, t, p]
                fired = []
                for i in range(f):
                    g = instance(p, i, s_next)
                    effects = [Implies(d[p, i, q], conj(xs[e, t + 1, q], _reward_eq(o[p, i], r)))
                               for q in range(n)]
                    enc.assertions.append(Implies(conj(here, g), conj(*effects)))
                    fired += [conj(g, d[p, i, q]) for q in range(n)]
                enc.assertions.append(Implies(here, disj(*fired)))
    return enc


# --------------------------------------------------------------------------
# extraction

def _real(model: smt.Model, name: str) -> float:
    return float(model[name])


def template_boxes(model: smt.Model, p: int, f: int, variables) -> list[tuple[bool, dict]]:
    """(polarity, {variable: (lo, hi)}) for each template of state ``p``."""
    out = []
    for i in range(f):
        pos, bounds = template_names(p, i, variables)
        out.append((bool(model[pos]), {v: (_real(model, bounds[v][0]), _real(model, bounds[v][1]))
                                       for v in variables}))
    return out


def _template(polarity: bool, bounds: dict) -> Formula:
    body = logic.box(bounds)
    return body if polarity else Not(body)


def concretize_templates(model: smt.Model, p: int, f: int, variables) -> list[Formula]:
    return [_template(pos, b) for pos, b in template_boxes(model, p, f, variables)]


def _margins(examples, variables) -> dict:
    """Half the smallest gap between distinct observed values, per variable."""
    out = {}
    for j, v in enumerate(variables):
        vals = np.unique([s[j] for ex in examples for s in ex.states])
        gaps = np.diff(vals)
        out[v] = float(gaps.min()) / 2 if len(gaps) else 0.5
    return out


def tighten_boxes(boxes: dict, machine: Srm, examples, variables) -> dict:
    """Shrink each template box to the hull of the observed points it contains.

    Points are those read while the machine sits in the template's state.  The
    hull is padded by half the smallest coordinate gap and clipped to the
    original box, so every observed point keeps its membership and the machine
    still replays ``examples``.  Boxes containing no observed point become empty.
    """
    seen: dict = {p: [] for p in machine.states}
    for ex in examples:
        for q, s in zip(machine.trace(ex.states), ex.states[1:]):
            seen[q].append(s)
    pad = _margins(examples, variables)
    out = {}
    for (p, i), (pos, bounds) in boxes.items():
        limits = [bounds[v] for v in variables]
        inside = [s for s in seen[p] if all(lo <= x < hi for x, (lo, hi) in zip(s, limits))]
        if not inside:
            out[p, i] = (pos, {v: (0.0, 0.0) for v in variables})
            continue
        pts = np.asarray(inside, dtype=float)
        out[p, i] = (pos, {v: (max(lo, float(pts[:, j].min()) - pad[v]),
                               min(hi, float(pts[:, j].max()) + pad[v]))
                           for j, (v, (lo, hi)) in enumerate(zip(variables, limits))})
    return out


def _simplify_guard(g: Formula) -> Formula:
    if isinstance(g, Not) and isinstance(g.arg, Not):
        return _simplify_guard(g.arg.arg)
    if isinstance(g, logic.And):
        return conj(*[_simplify_guard(a) for a in g.args])
    return g


def extract_srm(model: smt.Model, enc: Encoding, domain: Formula | None = None,
                complete: bool = True, command=None, examples=None) -> Srm:
    """Read transitions from the true ``d`` symbols and outputs from ``o``.

    In template mode, passing ``examples`` shrinks the learned boxes to the
    observed data (see ``tighten_boxes``).
    """
    n = enc.n_states
    if enc.mode == "gf":
        guard_of = {(p, i): g for p in range(n) for i, g in enumerate(enc.guards)}
        return _assemble(model, enc, guard_of, len(enc.guards), domain, complete, command)
    width = enc.n_templates
    boxes = {(p, i): b for p in range(n)
             for i, b in enumerate(template_boxes(model, p, width, enc.variables))}
    if examples:
        machine = _assemble(model, enc, _box_guards(boxes, n, width), width, domain, False,
                            command)
        boxes = tighten_boxes(boxes, machine, examples, enc.variables)
    return _assemble(model, enc, _box_guards(boxes, n, width), width, domain, complete, command)


def _box_guards(boxes, n, width) -> dict:
    out = {}
    for p in range(n):
        temps = [_template(*boxes[p, i]) for i in range(width)]
        for i in range(width):
            out[p, i] = _simplify_guard(template_guard(temps, i))
    return out


def _assemble(model, enc, guard_of, width, domain, complete, command) -> Srm:
    n = enc.n_states
    transitions = []
    for p in range(n):
        for i in range(width):
            targets = [q for q in range(n) if model[d_name(p, i, q)]]
            if len(targets) > 1:
                raise InferenceError(f"model gives guard {i} of state {p} several targets")
            if targets:
                transitions.append(Transition(p, guard_of[p, i], targets[0],
                                              _real(model, o_name(p, i))))
    machine = Srm(enc.variables, tuple(range(n)), 0, tuple(transitions))
    return complete_srm(machine, domain, command) if complete else machine


def complete_srm(machine: Srm, domain: Formula | None = None, command=None) -> Srm:
    """Add a zero-output self-loop on whatever no outgoing guard covers.

    ``domain`` restricts the input space considered; None means all of R^n.
    """
    extra = [] if domain is None else [domain]
    ts = list(machine.transitions)
    for p in machine.states:
        out = [t.guard for t in machine.outgoing(p)]
        if not out:
            ts.append(Transition(p, logic.TRUE, p, 0.0))
            continue
        rest = Not(disj(*out))
        if smt.satisfiable([rest] + extra, command):
            ts.append(Transition(p, rest, p, 0.0))
    return Srm(machine.variables, machine.states, machine.initial, tuple(ts))


# --------------------------------------------------------------------------
# minimal-state search

@dataclass(frozen=True)
class GivenFormulas:
    guards: tuple

    def __init__(self, guards):
        object.__setattr__(self, "guards", tuple(dict.fromkeys(guards)))


@dataclass(frozen=True)
class FormulaTemplates:
    f: int = 3
    diagonal: bool = False   # escalate states and templates together


@dataclass
class InferenceResult:
    outcome: str                   # "found", "unsat", "unknown"
    srm: Srm | None = None
    n_states: int | None = None
    n_templates: int | None = None
    solver_time: float = 0.0
    total_time: float = 0.0
    assertions: int = 0
    attempts: list = field(default_factory=list)    # (n, f, verdict, seconds)

    @property
    def found(self) -> bool:
        return self.outcome == "found"


def _solve(enc: Encoding, command, timeout_ms, transcript_path=None):
    with smt.SolverSession(command, timeout_ms=timeout_ms, transcript_path=transcript_path) as s:
        s.declare_many(enc.declarations)
        for name, f in enc.definitions:
            s.define(name, f)
        s.assert_many(enc.assertions)
        verdict = s.check_sat()
        model = s.get_model() if verdict is smt.Verdict.SAT else None
        return verdict, model, s.check_time


def _schedule(mode, n_max):
    if isinstance(mode, GivenFormulas):
        return [(n, None) for n in range(1, n_max + 1)]
    if not mode.diagonal:
        return [(n, mode.f) for n in range(1, n_max + 1)]
    out = []
    for total in range(2, n_max + mode.f + 1):
        for n in range(1, total):
            f = total - n
            if n <= n_max and f <= mode.f:
                out.append((n, f))
    return out


def infer_minimal(examples: Sequence[Counterexample], mode, variables: Sequence[str],
                  n_max: int = 6, domain: Formula | None = None, command=None,
                  timeout_ms: int = 600_000, pair_cache: PairwiseCache | None = None,
                  transcript_dir: str | None = None, tighten: bool = True) -> InferenceResult:
    """Smallest consistent SRM, escalating the state count from 1.

    In template mode with ``diagonal=True`` states and templates grow together
    (up to ``mode.f`` templates); otherwise the template count stays fixed.
    Every returned machine replays all examples exactly.  ``tighten`` shrinks
    learned template boxes to the observed points (template mode only).
    """
    examples = dedupe(examples)
    if not examples:
        raise ValueError("need at least one counterexample")
    t0 = time.perf_counter()
    res = InferenceResult("unsat")
    if isinstance(mode, GivenFormulas):
        pair_cache = pair_cache or PairwiseCache(command)
    for n, f in _schedule(mode, n_max):
        t1 = time.perf_counter()
        if isinstance(mode, GivenFormulas):
            enc = encode_gf(examples, n, mode.guards, variables, pair_cache)
        else:
            enc = encode_ft(examples, n, f, variables)
        path = None
        if transcript_dir is not None:
            path = f"{transcript_dir}/solver_n{n}" + (f"_f{f}" if f else "") + ".smt2"
        verdict, model, solve_time = _solve(enc, command, timeout_ms, path)
        res.solver_time += solve_time
        res.assertions += len(enc.assertions)
        res.attempts.append((n, f, verdict.value, time.perf_counter() - t1))
        log.info("n=%d f=%s: %s (%d assertions, %.2fs)", n, f, verdict.value,
                 len(enc.assertions), time.perf_counter() - t1)
        if verdict is smt.Verdict.UNKNOWN:
            res.outcome, res.n_states, res.n_templates = "unknown", n, f
            break
        if verdict is smt.Verdict.SAT:
            machine = extract_srm(model, enc, domain, command=command,
                                  examples=examples if tighten else None)
            bad = first_inconsistency(machine, examples)
            if bad is not None:
                raise ReplayMismatch(f"extracted machine disagrees with example {bad[0]} "
                                     f"at step {bad[1]}")
            res.outcome, res.srm, res.n_states, res.n_templates = "found", machine, n, f
            break
    res.total_time = time.perf_counter() - t0
    return res
