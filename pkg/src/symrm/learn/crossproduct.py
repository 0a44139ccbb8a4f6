"""Explicit product of an environment with an SRM, and a lock-step comparison
of QSRM against multi-update Q-learning on that product."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import logic
from ..srm import Srm, Transition
from .common import Hyperparameters, SrmModel, epsilon_greedy
from .tabular import TabularAgent


class ProductMdp:
    """States ``(s, p)``.  The reward of ``(s, p) -a-> (s', q)`` is the sum over
    outgoing transitions of ``p`` of ``[s' satisfies guard] * output``."""

    def __init__(self, env, machine: Srm, step_cap: int = 500):
        self.env = env
        self.machine = machine
        self.step_cap = step_cap
        self.n_actions = env.n_actions
        self.variables = tuple(env.variables)
        self.steps = 0
        self.p = machine.initial

    def reward_and_next(self, p, s2) -> tuple[float, int]:
        assignment = dict(zip(self.variables, s2))
        total, nxt = 0.0, None
        for t in self.machine.transitions:
            if t.source == p and logic.evaluate(t.guard, assignment):
                total += t.reward
                nxt = t.target
        if nxt is None:
            raise ValueError(f"no transition out of {p} at {s2}")
        return total, nxt

    def reset(self):
        self.steps = 0
        self.p = self.machine.initial
        return (tuple(self.env.reset()), self.p)

    def step(self, a):
        s2, _, done = self.env.step(a)
        r, self.p = self.reward_and_next(self.p, s2)
        self.steps += 1
        return (tuple(s2), self.p), r, bool(done), self.steps >= self.step_cap


@dataclass
class CrossProductReport:
    equal: bool
    steps: int
    updates: int
    first_divergence: dict | None = None

    def __bool__(self):
        return self.equal


def perturb_output(machine: Srm, index: int, delta: float = 0.5) -> Srm:
    """Copy of ``machine`` with the output of transition ``index`` shifted."""
    ts = list(machine.transitions)
    t = ts[index]
    ts[index] = Transition(t.source, t.guard, t.target, t.reward + delta)
    return Srm(machine.variables, machine.states, machine.initial, tuple(ts))


def cross_product_check(env_factory, machine: Srm, hp: Hyperparameters, steps: int = 10_000,
                        product_machine: Srm | None = None) -> CrossProductReport:
    """Run QSRM and multi-update Q-learning on the product side by side.

    ``env_factory()`` must return two independent but identical base
    environments on successive calls.  ``product_machine`` (default: the same
    machine) is what the product MDP is built from; pass a perturbed copy as a
    negative control.
    """
    gamma, alpha = hp.gamma, hp.alpha
    cap = hp.episode_cap
    base_a, base_b = env_factory(), env_factory()
    product = ProductMdp(base_b, product_machine or machine, step_cap=cap)
    agent = TabularAgent(SrmModel(machine), base_a.n_actions, hp, np.random.default_rng(hp.seed))
    rng_b = np.random.default_rng(hp.seed)
    n_act = base_a.n_actions
    big_q: dict = {}

    def row(key):
        r = big_q.get(key)
        if r is None:
            r = big_q[key] = np.ones(n_act)
        return r

    s = tuple(base_a.reset())
    u = machine.initial
    ps, pp = product.reset()
    t_a = 0
    updates = 0
    for step in range(1, steps + 1):
        a = agent.act(s, u, hp.epsilon)
        b = epsilon_greedy(row((ps, pp)), hp.epsilon, rng_b)
        s2, _, _ = base_a.step(a)
        s2 = tuple(s2)
        t_a += 1
        _, u2 = agent.observe(s, a, s2, 0.0, {}, False, u)
        (ps2, pp2), _, _, trunc_b = product.step(b)
        # multi-update over every machine state paired with the same (s, b, s')
        for p in product.machine.states:
            r, q = product.reward_and_next(p, ps2)
            cell = row((ps, p))
            cell[b] += alpha * (r + gamma * row((ps2, q)).max() - cell[b])
            updates += 1
            mine = agent.tables[p].peek(s)[a]
            if a != b or s != ps or mine != cell[b]:
                return CrossProductReport(False, step, updates, {
                    "step": step, "machine_state": p, "state": s, "action": a,
                    "qsrm": float(mine), "product": float(cell[b])})
        s, u = s2, u2
        ps, pp = ps2, pp2
        if t_a >= cap:
            s, u, t_a = tuple(base_a.reset()), machine.initial, 0
        if trunc_b:
            ps, pp = product.reset()
    # final full-table comparison
    for (st, p), vals in big_q.items():
        if not np.array_equal(agent.tables[p].peek(st), vals):
            return CrossProductReport(False, steps, updates, {"state": st, "machine_state": p})
    return CrossProductReport(True, steps, updates)
