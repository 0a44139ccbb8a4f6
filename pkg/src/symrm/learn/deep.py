"""Deep variants: one network per automaton state (DQSRM / DQRM) and a
frame-stacking DQN baseline.  Replay buffer plus target networks."""
from __future__ import annotations

from collections import deque
from typing import Callable

import numpy as np

from .common import (Checkpoint, EpisodeRecord, Hyperparameters, PlainModel, RmModel, SrmModel,
                     TrainingFault, TrainResult, TerminalRewards, epsilon_greedy)
from .nn import Adam, Mlp, train_step


def state_bounds(env) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable (low, high) used to scale inputs to roughly [-1, 1]."""
    inner = env
    while hasattr(inner, "env"):
        inner = inner.env
    if hasattr(inner, "max_speed"):
        return (np.array([inner.min_position, -inner.max_speed]),
                np.array([inner.max_position, inner.max_speed]))
    if hasattr(inner, "width"):
        return np.zeros(2), np.array([float(inner.width), float(inner.height)])
    n = len(env.variables)
    return -np.ones(n), np.ones(n)


class Scaler:
    def __init__(self, lo, hi):
        self.mid = (np.asarray(lo, float) + np.asarray(hi, float)) / 2
        self.half = np.maximum((np.asarray(hi, float) - np.asarray(lo, float)) / 2, 1e-12)

    def __call__(self, s) -> np.ndarray:
        return (np.asarray(s, dtype=float) - self.mid) / self.half


class FrameStack:
    """Concatenation of the last ``k`` scaled states, padded with the first one."""

    def __init__(self, k: int, scale: Scaler):
        self.k = int(k)
        self.scale = scale
        self.frames: deque = deque(maxlen=self.k)

    def reset(self, s) -> np.ndarray:
        x = self.scale(s)
        self.frames.clear()
        for _ in range(self.k):
            self.frames.append(x)
        return np.concatenate(self.frames)

    def push(self, s) -> np.ndarray:
        self.frames.append(self.scale(s))
        return np.concatenate(self.frames)


class SingleFrame:
    def __init__(self, scale: Scaler):
        self.scale = scale

    def reset(self, s):
        return self.scale(s)

    def push(self, s):
        return self.scale(s)


class Replay:
    """Ring buffer of transitions, relabelled under every automaton state on insert."""

    def __init__(self, capacity: int, obs_dim: int, n_states: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros((capacity, n_states))
        self.next_u = np.zeros((capacity, n_states), dtype=np.int64)
        self.done = np.zeros((capacity, n_states))
        self.size = 0
        self.pos = 0

    def add(self, obs, a, next_obs, rewards, next_u, done):
        i = self.pos
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = a
        self.rewards[i] = rewards
        self.next_u[i] = next_u
        self.done[i] = done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)


class DeepPolicy:
    def __init__(self, agent: "DeepAgent"):
        self.agent = agent
        self.u = agent.model.initial
        self.obs = None
        self.encoder = agent.make_encoder()

    def start(self, state, info):
        self.u = self.agent.model.initial
        self.obs = self.encoder.reset(state)

    def act(self, state) -> int:
        return int(np.argmax(self.agent.nets[self.u].predict(self.obs)[0]))

    def advance(self, next_state, reward, info):
        _, self.u = self.agent.model.transition(self.u, next_state, reward, info)
        self.obs = self.encoder.push(next_state)


class DeepAgent:
    """Networks per automaton state with the counterfactual multi-update in
    the replay targets."""

    def __init__(self, model, env, hp: Hyperparameters, stack: int | None = None, rng=None):
        self.model = model
        self.hp = hp
        self.rng = rng if rng is not None else np.random.default_rng(hp.seed)
        self.scale = Scaler(*state_bounds(env))
        self.stack = stack
        self.n_actions = env.n_actions
        obs_dim = len(env.variables) * (stack or 1)
        sizes = (obs_dim, *hp.hidden, env.n_actions)
        self.index = {u: j for j, u in enumerate(model.states)}
        self.nets = {u: Mlp(sizes, self.rng) for u in model.states}
        self.targets = {u: n.clone() for u, n in self.nets.items()}
        self.opts = {u: Adam(n.flat, lr=hp.learning_rate) for u, n in self.nets.items()}
        self.replay = Replay(hp.replay_size, obs_dim, len(model.states))
        self.encoder = self.make_encoder()
        self.steps = 0
        self.terminal = TerminalRewards()
        self.losses: list[float] = []

    def make_encoder(self):
        return SingleFrame(self.scale) if self.stack is None else FrameStack(self.stack, self.scale)

    def act(self, obs, u, epsilon) -> int:
        return epsilon_greedy(self.nets[u].predict(obs)[0], epsilon, self.rng)

    def record(self, obs, a, next_obs, s2, env_reward, info, terminated, u) -> tuple[float, int]:
        n = len(self.model.states)
        rewards = np.zeros(n)
        next_u = np.zeros(n, dtype=np.int64)
        done = np.zeros(n)
        live = None
        self.terminal.record(env_reward, terminated)
        for u1, j in self.index.items():
            r, u2 = self.model.transition(u1, s2, env_reward, info)
            rewards[j], next_u[j] = r, self.index[u2]
            done[j] = float(self.terminal.ends(u1 == u, terminated, r))
            if u1 == u:
                live = (r, u2)
        self.replay.add(obs, a, next_obs, rewards, next_u, done)
        return live

    def learn(self):
        hp = self.hp
        self.steps += 1
        if self.replay.size < max(hp.batch_size, hp.learn_start) or self.steps % hp.train_every:
            return
        rb = self.replay
        idx = self.rng.integers(rb.size, size=hp.batch_size)
        x, x2, a = rb.obs[idx], rb.next_obs[idx], rb.actions[idx]
        q_next = np.stack([self.targets[u].predict(x2).max(axis=1) for u in self.model.states],
                          axis=1)
        rows = np.arange(len(idx))
        for u, j in self.index.items():
            nu = rb.next_u[idx, j]
            tgt = rb.rewards[idx, j] + hp.gamma * (1.0 - rb.done[idx, j]) * q_next[rows, nu]
            self.losses.append(train_step(self.nets[u], self.opts[u], x, a, tgt))
        if np.abs(q_next).max() > hp.value_limit:
            raise TrainingFault(f"value magnitude exceeded {hp.value_limit}")
        if self.steps % hp.target_sync == 0:
            for u in self.model.states:
                self.targets[u].copy_from(self.nets[u])

    def policy(self) -> DeepPolicy:
        return DeepPolicy(self)


def train_deep(env, model, hp: Hyperparameters, eval_factory: Callable | None = None,
               stack: int | None = None, on_checkpoint: Callable | None = None,
               max_return: float | None = None) -> TrainResult:
    from ..evaluation import checkpoint_rng, evaluate_policy

    agent = DeepAgent(model, env, hp, stack)
    eval_rng = checkpoint_rng(hp.seed)
    result = TrainResult(agent.nets, max_return=max_return if max_return is not None
                         else getattr(env, "max_return", None))
    s, info = env.reset()
    obs = agent.encoder.reset(s)
    u = model.initial
    ep, ep_ret = 0, 0.0
    for step in range(1, hp.total_steps + 1):
        eps = hp.epsilon_at(step)
        a = agent.act(obs, u, eps)
        s2, r_env, term, trunc, info = env.step(a)
        obs2 = agent.encoder.push(s2)
        _, u2 = agent.record(obs, a, obs2, s2, r_env, info, term, u)
        agent.learn()
        ep_ret += r_env
        obs, u = obs2, u2
        if term or trunc:
            result.episodes.append(EpisodeRecord(step, ep, ep_ret, eps))
            ep, ep_ret = ep + 1, 0.0
            s, info = env.reset()
            obs = agent.encoder.reset(s)
            u = model.initial
        if eval_factory is not None and step % hp.eval_interval == 0:
            perf = evaluate_policy(agent.policy(), eval_factory, hp.eval_runs, hp.eval_cap, eval_rng)
            result.checkpoints.append(Checkpoint(step, perf))
            if on_checkpoint is not None:
                on_checkpoint(step, perf, agent)
    result.extra["agent"] = agent
    return result


DEEP_DEFAULTS = dict(epsilon=1.0, epsilon_final=0.1, epsilon_decay_steps=50_000,
                     eval_interval=10_000, alpha=0.0)


def deep_hyperparameters(**kw) -> Hyperparameters:
    """Defaults for the deep learners (linear epsilon decay, 10k-step checkpoints)."""
    return Hyperparameters(**{**DEEP_DEFAULTS, **kw})


def dqsrm(env, srm, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    return train_deep(env, SrmModel(srm), hp, eval_factory, **kw)


def dqrm(env, rm, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    return train_deep(env, RmModel(rm), hp, eval_factory, **kw)


def deep_q(env, hp: Hyperparameters, eval_factory=None, **kw) -> TrainResult:
    """Plain deep Q-learning on the raw state."""
    return train_deep(env, PlainModel(), hp, eval_factory, **kw)


def dqn_framestack(env, hp: Hyperparameters, eval_factory=None, stack: int | None = None,
                   **kw) -> TrainResult:
    """Deep Q-learning on the concatenation of the last ``stack`` states."""
    return train_deep(env, PlainModel(), hp, eval_factory, stack=stack or hp.frame_stack, **kw)
