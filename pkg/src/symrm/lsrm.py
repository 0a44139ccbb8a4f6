"""Counterexample-driven SRM learning wrapped around (D)QSRM.

The learner starts from a one-state machine that always outputs 0.  Whenever
the environment's reward differs from the hypothesis' prediction, the
trajectory is stored, a minimal consistent machine is inferred, value
structures are rebuilt from scratch, and training continues.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import srm as srm_mod
from .infer import Counterexample, InferenceResult, PairwiseCache, GivenFormulas, infer_minimal
from .learn.common import Checkpoint, EpisodeRecord, Hyperparameters, SrmModel, TrainResult
from .learn.tabular import TabularAgent
from .srm import Srm, single_state_srm

log = logging.getLogger(__name__)


class LsrmError(RuntimeError):
    def __init__(self, msg, result: InferenceResult | None = None):
        super().__init__(msg)
        self.result = result


def init_basic_srm(variables: Sequence[str]) -> Srm:
    """One state, one universal self-loop, output 0."""
    return single_state_srm(variables, 0.0)


# -- trace corpus ---------------------------------------------------------

class TraceFormatError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


def write_traces(examples: Sequence[Counterexample], path):
    with open(path, "w") as fh:
        for e in examples:
            fh.write(json.dumps({"states": [list(s) for s in e.states],
                                 "rewards": list(e.rewards)}) + "\n")


def read_traces(path) -> list[Counterexample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                rec = json.loads(line)
                out.append(Counterexample(rec["states"], rec["rewards"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceFormatError(str(exc), lineno) from None
    return out


# -- agents ---------------------------------------------------------------

class _DeepAdapter:
    """Gives a DeepAgent the tabular agent's act/observe interface."""

    def __init__(self, model, env, hp):
        from .learn.deep import DeepAgent
        self.inner = DeepAgent(model, env, hp)

    def act(self, s, u, eps):
        return self.inner.act(self.inner.scale(s), u, eps)

    def observe(self, s, a, s2, r_env, info, terminated, u):
        sc = self.inner.scale
        live = self.inner.record(sc(s), a, sc(s2), s2, r_env, info, terminated, u)
        self.inner.learn()
        return live

    def policy(self):
        return self.inner.policy()


# -- main loop ------------------------------------------------------------

@dataclass
class InferenceEvent:
    episode: int
    step: int
    n_states: int
    n_examples: int
    solver_time: float
    total_time: float


@dataclass
class LsrmResult(TrainResult):
    srm: Srm | None = None
    examples: list = field(default_factory=list)
    events: list = field(default_factory=list)


def lsrm_train(env, mode, hp: Hyperparameters, eval_factory: Callable | None = None,
               run_dir: str | None = None, full_episodes: bool = False, n_max: int = 6,
               deep: bool = False, domain=None, command=None,
               timeout_ms: int = 600_000) -> LsrmResult:
    """Train while learning the reward machine.

    ``mode`` is :class:`GivenFormulas` or :class:`FormulaTemplates`.  By default
    the stored counterexample is the episode prefix up to and including the
    first mispredicted reward; ``full_episodes`` keeps rolling the current
    policy (without learning) to the end of the episode instead.
    """
    from .evaluation import checkpoint_rng, evaluate_policy

    variables = tuple(env.variables)
    rng = np.random.default_rng(hp.seed)
    hyp = init_basic_srm(variables)
    pair_cache = PairwiseCache(command) if isinstance(mode, GivenFormulas) else None

    def fresh_agent(machine):
        model = SrmModel(machine)
        if deep:
            return _DeepAdapter(model, env, hp.replace(seed=int(rng.integers(2**31))))
        return TabularAgent(model, env.n_actions, hp, rng)

    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        srm_mod.save(hyp, os.path.join(run_dir, "srm_000.txt"))
    agent = fresh_agent(hyp)
    eval_rng = checkpoint_rng(hp.seed)
    result = LsrmResult(None, max_return=getattr(env, "max_return", None))
    examples: list[Counterexample] = []

    s, info = env.reset()
    u = hyp.initial
    traj, rews = [s], []
    ep, ep_ret = 0, 0.0
    for step in range(1, hp.total_steps + 1):
        eps = hp.epsilon_at(step)
        a = agent.act(s, u, eps)
        s2, r_env, term, trunc, info = env.step(a)
        traj.append(s2)
        rews.append(r_env)
        ep_ret += r_env
        r_hyp, _ = hyp.step(u, s2)
        if r_hyp != r_env:
            if full_episodes:
                q = u
                _, q = hyp.step(q, s2)
                cur = s2
                while not (term or trunc):
                    cur, r, term, trunc, info = env.step(agent.act(cur, q, 0.0))
                    _, q = hyp.step(q, cur)
                    traj.append(cur)
                    rews.append(r)
            examples.append(Counterexample(traj, rews))
            res = infer_minimal(examples, mode, variables, n_max=n_max, domain=domain,
                                command=command, timeout_ms=timeout_ms, pair_cache=pair_cache,
                                transcript_dir=run_dir)
            if not res.found:
                if run_dir:
                    write_traces(examples, os.path.join(run_dir, "counterexamples.jsonl"))
                raise LsrmError(f"inference {res.outcome} after {len(examples)} counterexamples "
                                f"(attempts {res.attempts})", res)
            hyp = res.srm
            result.events.append(InferenceEvent(ep, step, res.n_states, len(examples),
                                                res.solver_time, res.total_time))
            log.info("episode %d step %d: new hypothesis with %d states (%d examples, %.1fs)",
                     ep, step, res.n_states, len(examples), res.total_time)
            if run_dir:
                srm_mod.save(hyp, os.path.join(run_dir, f"srm_{len(result.events):03d}.txt"))
                write_traces(examples, os.path.join(run_dir, "counterexamples.jsonl"))
            agent = fresh_agent(hyp)
            term, trunc = True, False      # restart the episode
        else:
            _, u = agent.observe(s, a, s2, r_env, info, term, u)
            s = s2
        if term or trunc:
            result.episodes.append(EpisodeRecord(step, ep, ep_ret, eps))
            ep, ep_ret = ep + 1, 0.0
            s, info = env.reset()
            u = hyp.initial
            traj, rews = [s], []
        if eval_factory is not None and step % hp.eval_interval == 0:
            perf = evaluate_policy(agent.policy(), eval_factory, hp.eval_runs, hp.eval_cap, eval_rng)
            result.checkpoints.append(Checkpoint(step, perf))
    result.srm = hyp
    result.examples = examples
    result.values = agent.tables if hasattr(agent, "tables") else agent.inner.nets
    result.extra["agent"] = agent
    return result


# -- equivalence ----------------------------------------------------------

@dataclass
class EquivalenceReport:
    trials: int
    mismatches: int
    first_witness: dict | None = None

    @property
    def equivalent(self) -> bool:
        return self.mismatches == 0

    def __str__(self):
        if self.equivalent:
            return f"0 mismatches in {self.trials} episodes"
        w = self.first_witness
        return (f"{self.mismatches} mismatching episodes of {self.trials}; first at episode "
                f"{w['episode']} step {w['step']}: {w['reward_a']} vs {w['reward_b']} "
                f"in state {w['state']}")


def equivalence_sample_check(srm_a: Srm, srm_b: Srm, env, trials: int = 1000, seed: int = 0,
                             cap: int | None = None) -> EquivalenceReport:
    """Compare the reward sequences of two machines on random-policy episodes.

    Episodes come from ``env`` (its own termination and step cap apply), so
    differences after an episode necessarily ends are not counted.
    """
    rng = np.random.default_rng(seed)
    if hasattr(env, "seed"):
        env.seed(int(rng.integers(2**31)))
    cap = cap or getattr(env, "step_cap", 500)
    mismatches, witness = 0, None
    for k in range(trials):
        s, _ = env.reset()
        states = [s]
        for _ in range(cap):
            s, _, term, trunc, _ = env.step(int(rng.integers(env.n_actions)))
            states.append(s)
            if term or trunc:
                break
        ra, rb = srm_a.run(states), srm_b.run(states)
        if ra != rb:
            mismatches += 1
            if witness is None:
                t = next(i for i, (x, y) in enumerate(zip(ra, rb)) if x != y)
                witness = {"episode": k, "step": t + 1, "state": states[t + 1],
                           "reward_a": ra[t], "reward_b": rb[t]}
    return EquivalenceReport(trials, mismatches, witness)
