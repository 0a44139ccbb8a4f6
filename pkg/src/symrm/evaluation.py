"""Greedy checkpoint evaluation, the mean10 metric, and result export."""
from __future__ import annotations

import csv
import io
import os
from typing import Callable, Sequence

import numpy as np


def checkpoint_rng(seed: int) -> np.random.Generator:
    """Evaluation stream, independent of the training stream for the same seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))


def run_episode(policy, env, cap: int) -> float:
    s, info = env.reset()
    policy.start(s, info)
    total = 0.0
    for _ in range(cap):
        a = policy.act(s)
        s, r, term, trunc, info = env.step(a)
        total += r
        policy.advance(s, r, info)
        if term or trunc:
            break
    return total


def evaluate_policy(policy, env_factory: Callable, runs: int = 20, cap: int = 500,
                    seed=0) -> float:
    """Mean return of ``runs`` greedy episodes, each on a freshly built environment.

    ``policy`` exposes ``start(s, info)``, ``act(s)`` and ``advance(s', r, info)``
    and must not write to the learner's value structures.
    """
    rng = seed if isinstance(seed, np.random.Generator) else checkpoint_rng(seed)
    returns = []
    for _ in range(runs):
        env = env_factory(int(rng.integers(2**31)))
        returns.append(run_episode(policy, env, cap))
    return float(np.mean(returns))


def mean10(performance: Sequence[float], max_return: float, window: int = 10) -> list[float]:
    """Trailing mean over the last ``window`` performance values, divided by
    ``max_return``; the first few points average whatever is available."""
    if not max_return or max_return <= 0:
        raise ValueError("max_return must be positive")
    vals = np.asarray(performance, dtype=float)
    out = []
    for i in range(len(vals)):
        lo = max(0, i + 1 - window)
        out.append(float(vals[lo:i + 1].mean() / max_return))
    return out


def final_mean10(performance, max_return, window=10) -> float:
    m = mean10(performance, max_return, window)
    return m[-1] if m else 0.0


def csv_text(steps, performance, max_return, window=10) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "performance", "mean10"])
    for st, p, m in zip(steps, performance, mean10(performance, max_return, window)):
        w.writerow([int(st), repr(float(p)), repr(float(m))])
    return buf.getvalue()


def export_csv(result, path, window=10) -> str:
    """Write (step, performance, mean10) rows for a training result."""
    text = csv_text([c.step for c in result.checkpoints], result.performance,
                    result.max_return, window)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in ("step", "performance", "mean10")}


def export_episodes(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "episode", "return", "epsilon"])
        for e in result.episodes:
            w.writerow([e.step, e.episode, repr(float(e.ret)), repr(float(e.epsilon))])
    return path


def export_curves(curves: dict, out_dir, title: str = "") -> list[str]:
    """Plot mean10 curves.

    ``curves`` maps a method name to a list of per-seed ``(steps, mean10)``
    pairs.  Writes one CSV per method and seed, one CSV per method for the
    mean curve, and a PNG when matplotlib is installed.  Returns written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    means = {}
    for method, runs in curves.items():
        for i, (steps, m10) in enumerate(runs):
            p = os.path.join(out_dir, f"{method}_seed{i}.csv")
            _write_xy(p, steps, m10)
            paths.append(p)
        n = min(len(m) for _, m in runs)
        steps = runs[0][0][:n]
        mean = np.mean([np.asarray(m[:n], dtype=float) for _, m in runs], axis=0)
        means[method] = (steps, mean)
        p = os.path.join(out_dir, f"{method}_mean.csv")
        _write_xy(p, steps, mean)
        paths.append(p)
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return paths
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, (steps, mean) in means.items():
        ax.plot(steps, mean, label=method)
    ax.set_xlabel("training steps")
    ax.set_ylabel("mean10")
    ax.set_ylim(-0.05, 1.05)
    if title:
        ax.set_title(title)
    ax.legend()
    p = os.path.join(out_dir, "curves.png")
    fig.savefig(p, dpi=100, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)
    return paths


def _write_xy(path, steps, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean10"])
        for s, v in zip(steps, values):
            w.writerow([int(s), repr(float(v))])
