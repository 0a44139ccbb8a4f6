"""Symbolic reward machines: automata whose transitions carry LRA guards
over raw environment states and emit real-valued rewards."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import logic
from .logic import Formula


class SrmError(Exception):
    pass


class IncompletenessError(SrmError):
    pass


class NondeterminismError(SrmError):
    pass


class SrmFormatError(SrmError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


@dataclass(frozen=True)
class Transition:
    source: int
    guard: Formula
    target: int
    reward: float

    def __post_init__(self):
        object.__setattr__(self, "reward", float(self.reward))


_CACHE_LIMIT = 500_000


@dataclass(frozen=True)
class Srm:
    variables: tuple
    states: tuple
    initial: int
    transitions: tuple

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if len(set(self.variables)) != len(self.variables) or not all(self.variables):
            raise SrmError(f"bad variable signature {self.variables}")
        qs = set(self.states)
        if self.initial not in qs:
            raise SrmError(f"initial state {self.initial} not in {self.states}")
        sigma = {}
        for t in self.transitions:
            if t.source not in qs or t.target not in qs:
                raise SrmError(f"transition {t.source}->{t.target} references unknown state")
            extra = logic.free_variables(t.guard) - set(self.variables)
            if extra:
                raise SrmError(f"guard uses undeclared variable(s) {sorted(extra)}")
            if logic.free_bool_variables(t.guard):
                raise SrmError("guards must not contain boolean symbols")
            key = (t.source, t.guard)
            if key in sigma and sigma[key] != t.reward:
                raise SrmError(f"output of state {t.source} under one guard is not unique")
            sigma[key] = t.reward

    # -- structure --------------------------------------------------------

    @functools.cached_property
    def _outgoing(self) -> dict:
        out = {q: [] for q in self.states}
        for t in self.transitions:
            out[t.source].append((logic.compile_formula(t.guard, self.variables), t))
        return out

    @functools.cached_property
    def _cache(self) -> dict:
        return {}

    def outgoing(self, p: int) -> list[Transition]:
        return [t for _, t in self._outgoing[p]]

    def output(self, p: int, guard: Formula) -> float:
        for t in self.transitions:
            if t.source == p and t.guard == guard:
                return t.reward
        raise KeyError((p, guard))

    # -- semantics --------------------------------------------------------

    def fire(self, q: int, s: Sequence[float]) -> Transition:
        """The unique transition out of ``q`` whose guard ``s`` satisfies."""
        hit = None
        for pred, t in self._outgoing[q]:
            if pred(s):
                if hit is not None:
                    raise NondeterminismError(
                        f"state {q}: guards {logic.print_formula(hit.guard)} and "
                        f"{logic.print_formula(t.guard)} both hold at {tuple(s)}")
                hit = t
        if hit is None:
            raise IncompletenessError(f"state {q}: no guard holds at {tuple(s)}")
        return hit

    def step(self, q: int, s: Sequence[float]) -> tuple[float, int]:
        key = (q, tuple(s))
        cache = self._cache
        hit = cache.get(key)
        if hit is None:
            t = self.fire(q, s)
            hit = (t.reward, t.target)
            if len(cache) < _CACHE_LIMIT:
                cache[key] = hit
        return hit

    def run(self, states: Sequence[Sequence[float]]) -> list[float]:
        """Reward sequence r_1..r_n for the state sequence s_0..s_n (s_0 is not consumed)."""
        if len(states) < 1:
            raise SrmError("need at least one state")
        q = self.initial
        out = []
        for s in states[1:]:
            r, q = self.step(q, s)
            out.append(r)
        return out

    def trace(self, states: Sequence[Sequence[float]]) -> list[int]:
        q = self.initial
        qs = [q]
        for s in states[1:]:
            _, q = self.step(q, s)
            qs.append(q)
        return qs

    def cursor(self) -> "SrmCursor":
        return SrmCursor(self)


@dataclass
class SrmCursor:
    machine: Srm
    state: int = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = self.machine.initial

    def reset(self):
        self.state = self.machine.initial

    def step(self, s: Sequence[float]) -> tuple[float, int]:
        r, self.state = self.machine.step(self.state, s)
        return r, self.state


# --------------------------------------------------------------------------
# validation

@dataclass
class Violation:
    kind: str            # "nondeterministic" or "incomplete"
    state: int
    guards: tuple
    witness: dict | None

    def __str__(self):
        gs = ", ".join(logic.print_formula(g) for g in self.guards)
        return f"{self.kind} at state {self.state}: [{gs}] witness={self.witness}"


@dataclass
class ValidationReport:
    violations: list

    @property
    def deterministic(self) -> bool:
        return not any(v.kind == "nondeterministic" for v in self.violations)

    @property
    def complete(self) -> bool:
        return not any(v.kind == "incomplete" for v in self.violations)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid

    def __str__(self):
        if self.valid:
            return "valid (deterministic, complete)"
        return "\n".join(str(v) for v in self.violations)


def validate(machine: Srm, domain: Formula | None = None,
             solver_command: list[str] | None = None) -> ValidationReport:
    """Check determinism (pairwise) and completeness (per state, within ``domain``).

    ``domain`` restricts the input space; ``None`` means all of R^n.
    """
    from .smt import find_model

    extra = [] if domain is None else [domain]
    violations = []
    for p in machine.states:
        out = machine.outgoing(p)
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                w = find_model([out[i].guard, out[j].guard] + extra, solver_command)
                if w is not None:
                    violations.append(Violation("nondeterministic", p,
                                                (out[i].guard, out[j].guard), w))
        uncovered = logic.Not(logic.disj(*[t.guard for t in out]))
        w = find_model([uncovered] + extra, solver_command)
        if w is not None:
            violations.append(Violation("incomplete", p, (uncovered,), w))
    return ValidationReport(violations)


# --------------------------------------------------------------------------
# text format

def serialize(machine: Srm) -> str:
    lines = [
        "# symbolic reward machine",
        "variables: " + " ".join(machine.variables),
        "states: " + " ".join(str(q) for q in machine.states),
        f"initial: {machine.initial}",
    ]
    for t in machine.transitions:
        lines.append(f"transition: {t.source} {t.target} {t.reward!r} {logic.print_formula(t.guard)}")
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> Srm:
    variables = states = initial = None
    raw = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise SrmFormatError(f"expected 'key: value', got {line!r}", lineno)
        key, rest = key.strip(), rest.strip()
        if key == "variables":
            variables = tuple(rest.split())
        elif key == "states":
            try:
                states = tuple(int(x) for x in rest.split())
            except ValueError:
                raise SrmFormatError("state ids must be integers", lineno) from None
        elif key == "initial":
            try:
                initial = int(rest)
            except ValueError:
                raise SrmFormatError("initial state must be an integer", lineno) from None
        elif key == "transition":
            parts = rest.split(None, 3)
            if len(parts) != 4:
                raise SrmFormatError("transition needs: source target reward guard", lineno)
            raw.append((lineno, parts))
        else:
            raise SrmFormatError(f"unknown key {key!r}", lineno)
    if variables is None or states is None or initial is None:
        raise SrmFormatError("missing variables/states/initial")
    qs = set(states)
    transitions = []
    for lineno, (src, dst, rew, guard) in raw:
        try:
            src, dst, rew = int(src), int(dst), float(rew)
        except ValueError:
            raise SrmFormatError("bad source/target/reward", lineno) from None
        if src not in qs or dst not in qs:
            raise SrmFormatError(f"transition references unknown state ({src}->{dst})", lineno)
        try:
            g = logic.parse_formula(guard, variables)
        except logic.FormulaError as exc:
            raise SrmFormatError(str(exc), lineno) from None
        transitions.append(Transition(src, g, dst, rew))
    try:
        return Srm(variables, states, initial, tuple(transitions))
    except SrmError as exc:
        raise SrmFormatError(str(exc)) from None


def load(path) -> Srm:
    with open(path) as fh:
        return deserialize(fh.read())


def save(machine: Srm, path):
    with open(path, "w") as fh:
        fh.write(serialize(machine))


def to_dot(machine: Srm, name: str = "srm") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in machine.states:
        lines.append(f'  q{q} [shape=circle, label="q{q}"];')
    lines.append(f"  __start -> q{machine.initial};")
    for t in machine.transitions:
        label = f"{logic.print_formula(t.guard)} / {t.reward:g}".replace('"', '\\"')
        lines.append(f'  q{t.source} -> q{t.target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# construction helpers

def sequence_srm(variables: Sequence[str], guards: Sequence[Formula],
                 rewards: Sequence[float]) -> Srm:
    """Machine that rewards visiting ``guards`` in order.

    State i waits for guards[i] (reward rewards[i], move to i+1) and
    self-loops with reward 0 otherwise; the last state self-loops forever.
    """
    if len(guards) != len(rewards):
        raise SrmError("one reward per guard required")
    k = len(guards)
    ts = []
    for i, (g, r) in enumerate(zip(guards, rewards)):
        ts.append(Transition(i, g, i + 1, r))
        ts.append(Transition(i, logic.Not(g), i, 0.0))
    ts.append(Transition(k, logic.TRUE, k, 0.0))
    return Srm(tuple(variables), tuple(range(k + 1)), 0, tuple(ts))


def single_state_srm(variables: Iterable[str], reward: float = 0.0) -> Srm:
    return Srm(tuple(variables), (0,), 0, (Transition(0, logic.TRUE, 0, reward),))
