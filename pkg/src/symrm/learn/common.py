"""Shared pieces for the learners: hyperparameters, automaton adapters,
exploration, and training logs."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np


class TrainingFault(RuntimeError):
    """Raised when values diverge or become non-finite."""


@dataclass
class Hyperparameters:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon: float = 0.15
    alpha_schedule: str = "constant"     # or "visits": alpha / (1 + n(s,a))**0.8
    epsilon_final: float | None = None   # linear decay target; None keeps epsilon fixed
    epsilon_decay_steps: int = 0
    total_steps: int = 100_000
    episode_cap: int = 500
    eval_interval: int = 5000
    eval_runs: int = 20
    eval_cap: int = 500
    seed: int = 0
    # deep variants
    hidden: tuple = (64, 64)
    learning_rate: float = 1e-3
    replay_size: int = 50_000
    batch_size: int = 32
    target_sync: int = 1000
    learn_start: int = 1000
    train_every: int = 1
    frame_stack: int = 100
    value_limit: float = 1e6

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        for e in (self.epsilon, self.epsilon_final):
            if e is not None and not 0 <= e <= 1:
                raise ValueError("epsilon must lie in [0, 1]")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.total_steps < 0 or self.eval_interval <= 0 or self.eval_runs <= 0:
            raise ValueError("step counts must be positive")

    def replace(self, **kw) -> "Hyperparameters":
        return dataclasses.replace(self, **kw)

    def epsilon_at(self, step: int) -> float:
        if self.epsilon_final is None or self.epsilon_decay_steps <= 0:
            return self.epsilon
        frac = min(1.0, step / self.epsilon_decay_steps)
        return self.epsilon + frac * (self.epsilon_final - self.epsilon)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def epsilon_greedy(values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    # one uniform draw every step, an action draw only when exploring
    if rng.random() < epsilon:
        return int(rng.integers(len(values)))
    return int(np.argmax(values))


class TerminalRewards:
    """Environment rewards seen only on terminating steps.

    Tasks end when the hidden machine pays its final reward, so an automaton
    transition paying such a reward ends the episode even when it is only
    counterfactual.  A reward also seen on a non-terminating step is dropped.
    """

    def __init__(self):
        self.final: set = set()
        self.other: set = set()

    def record(self, env_reward: float, terminated: bool):
        (self.final if terminated else self.other).add(env_reward)

    def ends(self, live: bool, terminated: bool, reward: float) -> bool:
        if live and terminated:
            return True
        return reward in self.final and reward not in self.other


# -- automaton adapters ---------------------------------------------------
#
# All learners see the environment through ``model.transition(u, s', r_env, info)``
# returning ``(reward, u')``.  The SRM adapter ignores the environment reward and
# the label adapter reads ``info['labels']``.

class AutomatonModel(Protocol):
    states: Sequence[int]
    initial: int

    def transition(self, u, next_state, env_reward, info) -> tuple[float, int]: ...


class SrmModel:
    def __init__(self, srm):
        self.srm = srm
        self.states = tuple(srm.states)
        self.initial = srm.initial

    def transition(self, u, next_state, env_reward, info):
        return self.srm.step(u, next_state)


class RmModel:
    def __init__(self, rm):
        self.rm = rm
        self.states = tuple(rm.states)
        self.initial = rm.initial

    def transition(self, u, next_state, env_reward, info):
        return self.rm.step(u, info["labels"])


class PlainModel:
    """No automaton: one value structure, rewards taken from the environment."""

    states = (0,)
    initial = 0

    def transition(self, u, next_state, env_reward, info):
        return float(env_reward), 0


# -- logs -----------------------------------------------------------------

@dataclass
class EpisodeRecord:
    step: int
    episode: int
    ret: float
    epsilon: float


@dataclass
class Checkpoint:
    step: int
    performance: float


@dataclass
class TrainResult:
    values: object                 # per-automaton-state tables or networks
    episodes: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    max_return: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def performance(self) -> list[float]:
        return [c.performance for c in self.checkpoints]

    def mean10(self, window: int = 10) -> list[float]:
        from ..evaluation import mean10
        return mean10(self.performance, self.max_return, window)
