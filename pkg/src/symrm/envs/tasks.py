"""Task definitions: hidden-SRM reward wrappers and the labeled variant used by
the reward-machine baselines."""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

from .. import logic
from ..srm import Srm, sequence_srm
from .mountain_car import MountainCarRML
from .office import OfficeWorld

ENV_NAMES = ("office-discrete", "office-continuous", "mountain-car")
TASK_IDS = ("post_inner_offices", "diagonal_run", "rml")


class TaskError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def _default_config_text() -> str:
    return resources.files("symrm").joinpath("data/tasks.json").read_text()


def load_config(path=None) -> dict:
    if path is None:
        return json.loads(_default_config_text())
    with open(path) as fh:
        return json.load(fh)


def env_kind(env) -> str:
    if isinstance(env, OfficeWorld):
        return "office"
    if isinstance(env, MountainCarRML):
        return "mountain_car"
    raise TaskError(f"unknown environment type {type(env).__name__}")


def make_env(name: str, seed=None, config: dict | None = None):
    cfg = config or load_config()
    if name in ("office-discrete", "office-continuous"):
        oc = cfg["office"]
        return OfficeWorld(oc["width"], oc["height"], tuple(oc["regions"][oc["start"]]),
                           [tuple(w) for w in oc.get("walls", ())],
                           continuous=(name == "office-continuous"),
                           step_length=oc.get("step_length", 1.0),
                           noise=oc.get("noise", 0.0), seed=seed)
    if name == "mountain-car":
        mc = {k: v for k, v in cfg["mountain_car"].items() if k != "regions"}
        return MountainCarRML(seed=seed, **mc)
    raise TaskError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


def region_formulas(kind: str, config: dict | None = None) -> dict[str, logic.Formula]:
    cfg = config or load_config()
    if kind == "office":
        regs = cfg["office"]["regions"]
        return {k: logic.box({"x": (float(x), float(x + 1)), "y": (float(y), float(y + 1))})
                for k, (x, y) in regs.items()}
    if kind == "mountain_car":
        return {k: logic.parse_formula(v, MountainCarRML.variables)
                for k, v in cfg["mountain_car"]["regions"].items()}
    raise TaskError(f"unknown environment kind {kind!r}")


def task_spec(task_id: str, config: dict | None = None) -> dict:
    cfg = config or load_config()
    try:
        return cfg["tasks"][task_id]
    except KeyError:
        raise TaskError(f"unknown task {task_id!r}") from None


def task_variables(kind: str):
    return OfficeWorld.variables if kind == "office" else MountainCarRML.variables


def task_srm(task_id: str, config: dict | None = None) -> Srm:
    spec = task_spec(task_id, config)
    regions = region_formulas(spec["env"], config)
    guards = [regions[label] for label in spec["sequence"]]
    return sequence_srm(task_variables(spec["env"]), guards, [float(r) for r in spec["rewards"]])


def task_guard_set(task_id: str, config: dict | None = None) -> list:
    """The distinct guards of the task's machine, for inference with given formulas."""
    out = []
    for t in task_srm(task_id, config).transitions:
        if t.guard not in out:
            out.append(t.guard)
    return out


class TaskWrapper:
    """Environment whose reward is produced by a hidden SRM.

    The agent sees ``(state, reward, terminated, truncated, info)`` only.
    """

    def __init__(self, env, srm: Srm, final_reward: float | None = None, step_cap: int = 500,
                 terminal_on_final: bool = True, max_return: float | None = None):
        if tuple(srm.variables) != tuple(env.variables):
            raise TaskError("machine signature does not match the environment")
        self.env = env
        self._srm = srm
        self._q = srm.initial
        self.final_reward = final_reward
        self.terminal_on_final = terminal_on_final
        self.step_cap = int(step_cap)
        self.max_return = max_return
        self.steps = 0

    variables = property(lambda self: self.env.variables)
    n_actions = property(lambda self: self.env.n_actions)
    domain = property(lambda self: self.env.domain)

    def seed(self, seed):
        self.env.seed(seed)

    def reset(self):
        self.steps = 0
        self._q = self._srm.initial
        return self.env.reset(), {}

    def step(self, action):
        s, _, env_done = self.env.step(action)
        reward, self._q = self._srm.step(self._q, s)
        self.steps += 1
        terminated = bool(env_done) or (
            self.terminal_on_final and self.final_reward is not None and reward == self.final_reward)
        truncated = not terminated and self.steps >= self.step_cap
        return s, reward, terminated, truncated, {}


def make_task(env, task_id: str, config: dict | None = None, **kw) -> TaskWrapper:
    spec = task_spec(task_id, config)
    if spec["env"] != env_kind(env):
        raise TaskError(f"task {task_id!r} needs a {spec['env']} environment, got {env_kind(env)}")
    return TaskWrapper(env, task_srm(task_id, config), final_reward=float(spec["rewards"][-1]),
                       step_cap=spec.get("step_cap", 500), max_return=float(spec["max_return"]), **kw)


def task_factory(env_name: str, task_id: str, config: dict | None = None) -> Callable:
    """``factory(seed) -> TaskWrapper`` producing freshly initialised environments."""
    def factory(seed=None):
        return make_task(make_env(env_name, seed=seed, config=config), task_id, config)
    return factory


# --------------------------------------------------------------------------
# labeled variant

@dataclass(frozen=True)
class RmTransition:
    source: int
    condition: logic.Formula   # propositional formula over label names
    target: int
    reward: float


class RewardMachine:
    """Reward machine over sets of propositional labels."""

    def __init__(self, props: Sequence[str], states, initial, transitions):
        self.props = tuple(props)
        self.states = tuple(states)
        self.initial = initial
        self.transitions = tuple(transitions)
        self._out = {q: [] for q in self.states}
        for t in self.transitions:
            self._out[t.source].append(t)
        self._cache: dict = {}

    def step(self, u, labels: frozenset) -> tuple[float, int]:
        key = (u, labels)
        hit = self._cache.get(key)
        if hit is None:
            truth = {p: (p in labels) for p in self.props}
            fired = [t for t in self._out[u] if logic.evaluate(t.condition, truth)]
            if len(fired) != 1:
                raise ValueError(f"reward machine state {u}: {len(fired)} transitions enabled by {set(labels)}")
            hit = (fired[0].reward, fired[0].target)
            self._cache[key] = hit
        return hit


def _relabel(f, table: dict):
    for label, region in table.items():
        if f == region:
            return logic.BoolVar(label)
    if isinstance(f, logic.Not):
        return logic.Not(_relabel(f.arg, table))
    if isinstance(f, logic.And):
        return logic.And(tuple(_relabel(a, table) for a in f.args))
    if isinstance(f, logic.Or):
        return logic.Or(tuple(_relabel(a, table) for a in f.args))
    if isinstance(f, logic.BoolConst):
        return f
    raise TaskError(f"guard {logic.print_formula(f)} has no label counterpart")


def mirror_rm(srm: Srm, regions: dict[str, logic.Formula]) -> RewardMachine:
    """Replace each region formula in the SRM guards by its label."""
    ts = [RmTransition(t.source, _relabel(t.guard, regions), t.target, t.reward)
          for t in srm.transitions]
    return RewardMachine(sorted(regions), srm.states, srm.initial, ts)


class Labeler:
    def __init__(self, regions: dict[str, logic.Formula], variables):
        self.regions = dict(regions)
        self._preds = {k: logic.compile_formula(f, variables) for k, f in regions.items()}
        self._cache: dict = {}

    def __call__(self, s) -> frozenset:
        key = tuple(s)
        hit = self._cache.get(key)
        if hit is None:
            hit = frozenset(k for k, p in self._preds.items() if p(key))
            if len(self._cache) < 500_000:
                self._cache[key] = hit
        return hit


class LabeledTask:
    """Environment emitting labels in ``info['labels']``; rewards come from an RM."""

    def __init__(self, env, rm: RewardMachine, labeler: Labeler, final_reward=None,
                 step_cap=500, max_return=None):
        self.env = env
        self.rm = rm
        self.labeler = labeler
        self.final_reward = final_reward
        self.step_cap = int(step_cap)
        self.max_return = max_return
        self._u = rm.initial
        self.steps = 0

    variables = property(lambda self: self.env.variables)
    n_actions = property(lambda self: self.env.n_actions)
    domain = property(lambda self: self.env.domain)

    def seed(self, seed):
        self.env.seed(seed)

    def reset(self):
        self.steps = 0
        self._u = self.rm.initial
        s = self.env.reset()
        return s, {"labels": self.labeler(s)}

    def step(self, action):
        s, _, env_done = self.env.step(action)
        labels = self.labeler(s)
        reward, self._u = self.rm.step(self._u, labels)
        self.steps += 1
        terminated = bool(env_done) or (self.final_reward is not None and reward == self.final_reward)
        truncated = not terminated and self.steps >= self.step_cap
        return s, reward, terminated, truncated, {"labels": labels}


def make_labeled(env, task_id: str, config: dict | None = None) -> tuple[LabeledTask, RewardMachine]:
    spec = task_spec(task_id, config)
    if env_kind(env) != "office" or spec["env"] != "office":
        raise TaskError("labeled variants exist for Office World tasks only")
    regions = region_formulas("office", config)
    rm = mirror_rm(task_srm(task_id, config), regions)
    labeler = Labeler(regions, env.variables)
    task = LabeledTask(env, rm, labeler, final_reward=float(spec["rewards"][-1]),
                       step_cap=spec.get("step_cap", 500), max_return=float(spec["max_return"]))
    return task, rm


def labeled_factory(env_name: str, task_id: str, config: dict | None = None) -> Callable:
    def factory(seed=None):
        return make_labeled(make_env(env_name, seed=seed, config=config), task_id, config)[0]
    return factory
