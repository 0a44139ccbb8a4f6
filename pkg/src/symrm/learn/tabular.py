"""Tabular learners: plain Q-learning, QRM and QSRM share one multi-update loop."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .common import (Checkpoint, EpisodeRecord, Hyperparameters, PlainModel, RmModel,
                     SrmModel, TrainingFault, TrainResult, TerminalRewards, epsilon_greedy)


class QTable:
    """State -> action-value vector, unseen states default to ``init``."""

    def __init__(self, n_actions: int, init: float = 1.0):
        self.n_actions = int(n_actions)
        self.init = float(init)
        self.table: dict = {}

    def __getitem__(self, s) -> np.ndarray:
        row = self.table.get(s)
        if row is None:
            row = np.full(self.n_actions, self.init)
            self.table[s] = row
        return row

    def peek(self, s) -> np.ndarray:
        """Read without inserting."""
        row = self.table.get(s)
        return row if row is not None else np.full(self.n_actions, self.init)

    def __len__(self):
        return len(self.table)

    def copy(self) -> "QTable":
        out = QTable(self.n_actions, self.init)
        out.table = {k: v.copy() for k, v in self.table.items()}
        return out

    def equals(self, other: "QTable") -> bool:
        """Exact equality of the represented functions (materialised rows only
        differ from defaults if they were updated)."""
        keys = set(self.table) | set(other.table)
        return all(np.array_equal(self.peek(k), other.peek(k)) for k in keys)

    def as_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.table.items()}


def tables_equal(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(a[k].equals(b[k]) for k in a)


class TabularPolicy:
    """Greedy snapshot over per-automaton-state tables; never writes to them."""

    def __init__(self, tables: dict, model):
        self.tables = tables
        self.model = model
        self.u = model.initial

    def start(self, state, info):
        self.u = self.model.initial

    def act(self, state) -> int:
        return int(np.argmax(self.tables[self.u].peek(_key(state))))

    def advance(self, next_state, reward, info):
        _, self.u = self.model.transition(self.u, next_state, reward, info)


def _key(s):
    return tuple(s)


class TabularAgent:
    """Q-tables per automaton state with the counterfactual multi-update.

    For every environment transition ``(s, a, s')`` and every automaton state
    ``u'`` the table ``q[u']`` is updated toward ``r + gamma * max q[u''](s')``
    where ``(r, u'') = model.transition(u', s')``.  On a terminating step the
    update drops the bootstrap term for the live state.  Transitions paying a
    reward that only ever ends episodes are terminal too (``TerminalRewards``).
    """

    def __init__(self, model, n_actions: int, hp: Hyperparameters, rng=None):
        self.model = model
        self.hp = hp
        self.n_actions = n_actions
        self.rng = rng if rng is not None else np.random.default_rng(hp.seed)
        self.tables = {u: QTable(n_actions) for u in model.states}
        self.visits: dict = {}
        self.r_lo, self.r_hi = 0.0, 0.0
        self.updates = 0
        self.terminal = TerminalRewards()

    def act(self, s, u, epsilon: float) -> int:
        return epsilon_greedy(self.tables[u][_key(s)], epsilon, self.rng)

    def _alpha(self, u, s, a) -> float:
        if self.hp.alpha_schedule == "constant":
            return self.hp.alpha
        k = (u, s, a)
        n = self.visits.get(k, 0)
        self.visits[k] = n + 1
        return self.hp.alpha / (1.0 + n) ** 0.8

    def _bounds(self):
        g = self.hp.gamma
        if g >= 1:
            return -np.inf, np.inf
        return min(1.0, self.r_lo / (1 - g)) - 1e-9, max(1.0, self.r_hi / (1 - g)) + 1e-9

    def observe(self, s, a, s2, env_reward, info, terminated: bool, u) -> tuple[float, int]:
        """Multi-update for one transition; returns the live (reward, next state)."""
        ks, ks2 = _key(s), _key(s2)
        gamma = self.hp.gamma
        live = None
        self.terminal.record(env_reward, terminated)
        for u1 in self.model.states:
            r, u2 = self.model.transition(u1, s2, env_reward, info)
            if r < self.r_lo:
                self.r_lo = r
            if r > self.r_hi:
                self.r_hi = r
            row = self.tables[u1][ks]
            if self.terminal.ends(u1 == u, terminated, r):
                target = r
            else:
                target = r + gamma * self.tables[u2][ks2].max()
            row[a] += self._alpha(u1, ks, a) * (target - row[a])
            lo, hi = self._bounds()
            if not lo <= row[a] <= hi:
                raise TrainingFault(f"q[{u1}]({ks},{a}) = {row[a]} outside [{lo}, {hi}]")
            if u1 == u:
                live = (r, u2)
            self.updates += 1
        return live

    def policy(self) -> TabularPolicy:
        return TabularPolicy(self.tables, self.model)

    def snapshot(self) -> dict:
        return {u: t.copy() for u, t in self.tables.items()}


def train_tabular(env, model, hp: Hyperparameters, eval_factory: Callable | None = None,
                  on_episode_end: Callable | None = None, on_step: Callable | None = None,
                  max_return: float | None = None) -> TrainResult:
    """Run ``hp.total_steps`` environment steps with periodic greedy evaluation.

    ``eval_factory(seed)`` must build a fresh environment of the same task.
    """
    from ..evaluation import checkpoint_rng, evaluate_policy

    agent = TabularAgent(model, env.n_actions, hp)
    eval_rng = checkpoint_rng(hp.seed)
    result = TrainResult(agent.tables, max_return=max_return if max_return is not None
                         else getattr(env, "max_return", None))
    s, info = env.reset()
    u = model.initial
    ep, ep_ret = 0, 0.0
    for step in range(1, hp.total_steps + 1):
        eps = hp.epsilon_at(step)
        a = agent.act(s, u, eps)
        s2, r_env, term, trunc, info = env.step(a)
        _, u2 = agent.observe(s, a, s2, r_env, info, term, u)
        if on_step is not None:
            on_step(step, s, a, s2, u, agent)
        ep_ret += r_env
        s, u = s2, u2
        if term or trunc:
            result.episodes.append(EpisodeRecord(step, ep, ep_ret, eps))
            if on_episode_end is not None:
                on_episode_end(ep, agent)
            ep, ep_ret = ep + 1, 0.0
            s, info = env.reset()
            u = model.initial
        if eval_factory is not None and step % hp.eval_interval == 0:
            perf = evaluate_policy(agent.policy(), eval_factory, hp.eval_runs, hp.eval_cap, eval_rng)
            result.checkpoints.append(Checkpoint(step, perf))
    result.extra["updates"] = agent.updates
    result.extra["agent"] = agent
    return result


def q_learning(env, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    return train_tabular(env, PlainModel(), hp, eval_factory, **kw)


def qsrm(env, srm, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    """Q-learning with one table per SRM state; the SRM is supplied by the user."""
    return train_tabular(env, SrmModel(srm), hp, eval_factory, **kw)


def qrm(env, rm, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    """Q-learning for reward machines over labels carried in ``info['labels']``."""
    return train_tabular(env, RmModel(rm), hp, eval_factory, **kw)
