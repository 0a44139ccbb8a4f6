"""Command-line entry point: ``symrm train|infer|validate|equiv|eval``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import subprocess
import sys

import numpy as np

from . import logic, smt
from . import srm as srm_mod
from .envs import (ENV_NAMES, TASK_IDS, TaskError, labeled_factory, make_env, make_labeled,
                   make_task, task_factory, task_guard_set, task_spec, task_srm)
from .evaluation import evaluate_policy, export_csv, export_episodes, final_mean10
from .infer import FormulaTemplates, GivenFormulas, infer_minimal
from .learn.common import Hyperparameters, PlainModel, RmModel, SrmModel
from .learn.deep import DeepAgent, deep_hyperparameters, dqn_framestack, dqrm, dqsrm
from .learn.tabular import QTable, TabularPolicy, q_learning, qrm, qsrm
from .lsrm import LsrmError, TraceFormatError, equivalence_sample_check, lsrm_train, read_traces

log = logging.getLogger("symrm")

EXIT_OK, EXIT_CONFIG, EXIT_INFERENCE, EXIT_UNKNOWN = 0, 2, 3, 4

METHODS = ("q", "dqn-stack", "qrm", "qsrm", "dqrm", "dqsrm", "lsrm-gf", "lsrm-ft")
TABULAR = {"q", "qrm", "qsrm", "lsrm-gf", "lsrm-ft"}
LABELED = {"qrm", "dqrm"}
DEEP = {"dqn-stack", "dqrm", "dqsrm"}


class ConfigError(ValueError):
    pass


# -- helpers --------------------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1,4,7"`` or ``"1..10"`` (inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out += list(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError(f"no seeds in {text!r}")
    return out


def read_formulas(path, variables) -> list:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith(";"):
                continue
            try:
                out.append(logic.parse_formula(line, variables))
            except logic.FormulaError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def check_compatibility(method: str, env_name: str, task: str):
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    if env_name not in ENV_NAMES:
        raise ConfigError(f"unknown environment {env_name!r}")
    if task not in TASK_IDS:
        raise ConfigError(f"unknown task {task!r}")
    kind = task_spec(task)["env"]
    if (kind == "mountain_car") != (env_name == "mountain-car"):
        raise ConfigError(f"task {task} does not run on {env_name}")
    if method in LABELED and env_name == "mountain-car":
        raise ConfigError(f"{method} needs a labeled Office World environment")
    if method in TABULAR and env_name == "mountain-car":
        raise ConfigError(f"{method} is tabular; mountain-car has a continuous state space")


def build_hyperparameters(method, args) -> Hyperparameters:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))
    fields = {f.name: f for f in dataclasses.fields(Hyperparameters)}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or key not in fields:
            raise ConfigError(f"bad override {item!r}")
        base[key] = json.loads(value) if value[:1] in "[{" else _coerce(value)
    if args.steps is not None:
        base["total_steps"] = args.steps
    base["seed"] = args.seed
    unknown = set(base) - set(fields)
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) {sorted(unknown)}")
    try:
        return deep_hyperparameters(**base) if method in DEEP else Hyperparameters(**base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if v in ("true", "false"):
        return v == "true"
    if v == "none":
        return None
    return v


def solver_identity() -> str:
    cmd = smt.solver_command()
    try:
        out = subprocess.run([cmd[0], "--version"], capture_output=True, text=True, timeout=10)
        return " ".join(cmd) + " :: " + out.stdout.strip()
    except OSError:
        return " ".join(cmd) + " :: unavailable"


def metadata(args, hp) -> dict:
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("symrm")
    except PackageNotFoundError:
        pkg = "unknown"
    command = {k: v for k, v in vars(args).items() if k != "func"}
    return {"argv": args.argv, "command": command, "hyperparameters": hp.as_dict(),
            "seed": hp.seed, "solver": solver_identity(), "python": platform.python_version(),
            "numpy": np.__version__, "symrm": pkg, "platform": platform.platform()}


def save_tabular(path, method, tables, machine=None):
    data = {"kind": "tabular", "method": method,
            "srm": srm_mod.serialize(machine) if machine is not None else None,
            "tables": {str(u): [[list(k), v.tolist()] for k, v in t.table.items()]
                       for u, t in tables.items()}}
    with open(path, "w") as fh:
        json.dump(data, fh)


def save_deep(path, method, agent, machine=None):
    arrays = {f"net_{u}": net.flat for u, net in agent.nets.items()}
    np.savez(path + ".npz", **arrays)
    with open(path, "w") as fh:
        json.dump({"kind": "deep", "method": method, "stack": agent.stack,
                   "hidden": list(agent.hp.hidden), "states": list(agent.model.states),
                   "srm": srm_mod.serialize(machine) if machine is not None else None}, fh)


# -- commands -------------------------------------------------------------

def cmd_train(args) -> int:
    if args.seeds:
        return _fan_out(args)
    if args.seed is None:
        raise ConfigError("a seed is required (--seed N or --seeds A..B)")
    check_compatibility(args.method, args.env, args.task)
    hp = build_hyperparameters(args.method, args)
    out = os.path.join(args.out, f"seed_{args.seed}")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(metadata(args, hp), fh, indent=2, default=str)

    m = args.method
    env_seed = args.seed
    machine = None
    if m in LABELED:
        env, rm = make_labeled(make_env(args.env, seed=env_seed), args.task)
        factory = labeled_factory(args.env, args.task)
    else:
        env = make_task(make_env(args.env, seed=env_seed), args.task)
        factory = task_factory(args.env, args.task)

    if m == "q":
        res = q_learning(env, hp, factory)
    elif m == "qrm":
        res = qrm(env, rm, hp, factory)
    elif m in ("qsrm", "dqsrm"):
        machine = srm_mod.load(args.srm) if args.srm else task_srm(args.task)
        if tuple(machine.variables) != tuple(env.variables):
            raise ConfigError("SRM variables do not match the environment")
        res = (qsrm if m == "qsrm" else dqsrm)(env, machine, hp, factory)
    elif m == "dqrm":
        res = dqrm(env, rm, hp, factory)
    elif m == "dqn-stack":
        res = dqn_framestack(env, hp, factory, stack=args.stack)
    else:
        if m == "lsrm-gf":
            guards = (read_formulas(args.formulas, env.variables) if args.formulas
                      else task_guard_set(args.task))
            mode = GivenFormulas(guards)
        else:
            mode = FormulaTemplates(args.f, diagonal=args.diagonal)
        try:
            res = lsrm_train(env, mode, hp, factory, run_dir=out, full_episodes=args.full_episodes,
                             n_max=args.n_max)
        except LsrmError as exc:
            log.error("%s (transcripts under %s)", exc, out)
            return EXIT_UNKNOWN if exc.result is not None and exc.result.outcome == "unknown" \
                else EXIT_INFERENCE
        machine = res.srm
        srm_mod.save(machine, os.path.join(out, "learned.srm"))
        with open(os.path.join(out, "learned.dot"), "w") as fh:
            fh.write(srm_mod.to_dot(machine))
        with open(os.path.join(out, "inference_events.json"), "w") as fh:
            json.dump([dataclasses.asdict(e) for e in res.events], fh, indent=2)

    export_csv(res, os.path.join(out, "performance.csv"))
    export_episodes(res, os.path.join(out, "episodes.csv"))
    agent = res.extra.get("agent")
    ckpt = os.path.join(out, "checkpoint.json")
    if m in DEEP:
        save_deep(ckpt, m, agent, machine)
    else:
        save_tabular(ckpt, m, res.values, machine)
    score = final_mean10(res.performance, res.max_return) if res.checkpoints else float("nan")
    print(f"{m} {args.env} {args.task} seed={args.seed}: final mean10 {score:.4f} -> {out}")
    return EXIT_OK


def _fan_out(args) -> int:
    seeds = parse_seeds(args.seeds)
    argv = list(args.argv)
    i = argv.index("--seeds")
    del argv[i:i + 2]
    procs = []
    worst = EXIT_OK
    for s in seeds:
        cmd = [sys.executable, "-m", "symrm.cli"] + argv + ["--seed", str(s)]
        procs.append(subprocess.Popen(cmd))
        if len(procs) >= args.jobs:
            worst = max(worst, procs.pop(0).wait())
    for p in procs:
        worst = max(worst, p.wait())
    return worst


def cmd_infer(args) -> int:
    try:
        examples = read_traces(args.traces)
    except TraceFormatError as exc:
        raise ConfigError(f"{args.traces}: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    variables = tuple(args.variables)
    if any(len(s) != len(variables) for e in examples for s in e.states):
        raise ConfigError("trace state width does not match --variables")
    if args.mode == "gf":
        if not args.formulas:
            raise ConfigError("--formulas is required in gf mode")
        mode = GivenFormulas(read_formulas(args.formulas, variables))
    else:
        mode = FormulaTemplates(args.f, diagonal=args.diagonal)
    os.makedirs(args.out, exist_ok=True)
    res = infer_minimal(examples, mode, variables, n_max=args.n_max, transcript_dir=args.out)
    summary = {"outcome": res.outcome, "n_states": res.n_states, "attempts": res.attempts,
               "solver_time": res.solver_time, "examples": len(examples)}
    with open(os.path.join(args.out, "inference.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if res.outcome == "unknown":
        print(f"solver returned unknown at n={res.n_states}", file=sys.stderr)
        return EXIT_UNKNOWN
    if not res.found:
        print(f"no consistent machine with at most {args.n_max} states", file=sys.stderr)
        return EXIT_INFERENCE
    srm_mod.save(res.srm, os.path.join(args.out, "learned.srm"))
    with open(os.path.join(args.out, "learned.dot"), "w") as fh:
        fh.write(srm_mod.to_dot(res.srm))
    print(f"found {res.n_states}-state machine -> {os.path.join(args.out, 'learned.srm')}")
    return EXIT_OK


def _load_srm(path):
    try:
        return srm_mod.load(path)
    except (OSError, srm_mod.SrmFormatError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_validate(args) -> int:
    machine = _load_srm(args.srm)
    domain = make_env(args.env).domain if args.env else None
    report = srm_mod.validate(machine, domain)
    print(report)
    return EXIT_OK if report.valid else 1


def cmd_equiv(args) -> int:
    a, b = _load_srm(args.srm_a), _load_srm(args.srm_b)
    check_compatibility("qsrm" if args.env != "mountain-car" else "dqsrm", args.env, args.task)
    env = make_task(make_env(args.env, seed=args.seed), args.task)
    report = equivalence_sample_check(a, b, env, trials=args.trials, seed=args.seed)
    print(report)
    return EXIT_OK if report.equivalent else 1


def load_policy(path, env_name, task):
    with open(path) as fh:
        data = json.load(fh)
    method = data["method"]
    machine = srm_mod.deserialize(data["srm"]) if data.get("srm") else None
    if method in LABELED:
        model = RmModel(make_labeled(make_env(env_name), task)[1])
        factory = labeled_factory(env_name, task)
    else:
        model = SrmModel(machine) if machine is not None else PlainModel()
        factory = task_factory(env_name, task)
    if data["kind"] == "tabular":
        tables = {}
        for u, rows in data["tables"].items():
            t = QTable(len(rows[0][1]) if rows else make_env(env_name).n_actions)
            for k, v in rows:
                t.table[tuple(k)] = np.asarray(v, dtype=float)
            tables[int(u)] = t
        for u in model.states:
            tables.setdefault(u, QTable(make_env(env_name).n_actions))
        return TabularPolicy(tables, model), factory
    arrays = np.load(path + ".npz")
    env = make_task(make_env(env_name), task) if method not in LABELED else make_labeled(
        make_env(env_name), task)[0]
    hp = deep_hyperparameters(hidden=tuple(data["hidden"]), replay_size=1)
    agent = DeepAgent(model, env, hp, stack=data["stack"])
    for u in model.states:
        agent.nets[u].flat[:] = arrays[f"net_{u}"]
    return agent.policy(), factory


def cmd_eval(args) -> int:
    path = args.checkpoint
    if os.path.isdir(path):
        path = os.path.join(path, "checkpoint.json")
    try:
        policy, factory = load_policy(path, args.env, args.task)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from None
    perf = evaluate_policy(policy, factory, args.runs, args.cap, args.seed)
    max_ret = task_spec(args.task)["max_return"]
    print(f"performance {perf:.4f} normalized {perf / max_ret:.4f}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symrm", description="Symbolic reward machine experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train one method on one task")
    t.add_argument("--method", required=True, choices=METHODS)
    t.add_argument("--env", required=True, choices=ENV_NAMES)
    t.add_argument("--task", required=True, choices=TASK_IDS)
    t.add_argument("--seed", type=int)
    t.add_argument("--seeds", help="fan out over seeds, e.g. 1..10")
    t.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    t.add_argument("--out", default="runs")
    t.add_argument("--steps", type=int)
    t.add_argument("--config", help="JSON file with hyperparameters")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    t.add_argument("--srm", help="SRM file for qsrm/dqsrm (default: the task's machine)")
    t.add_argument("--formulas", help="guard file for lsrm-gf (default: the task's guards)")
    t.add_argument("--f", type=int, default=3, help="templates per state for lsrm-ft")
    t.add_argument("--diagonal", action="store_true", help="grow states and templates together")
    t.add_argument("--n-max", type=int, default=6)
    t.add_argument("--stack", type=int, help="frame stack size for dqn-stack")
    t.add_argument("--full-episodes", action="store_true",
                   help="store whole episodes as counterexamples")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="offline inference from a trace corpus")
    i.add_argument("traces")
    i.add_argument("--mode", choices=("gf", "ft"), default="gf")
    i.add_argument("--variables", nargs="+", required=True)
    i.add_argument("--formulas")
    i.add_argument("--f", type=int, default=3)
    i.add_argument("--diagonal", action="store_true")
    i.add_argument("--n-max", type=int, default=6)
    i.add_argument("--out", default="inferred")
    i.set_defaults(func=cmd_infer)

    v = sub.add_parser("validate", help="check determinism and completeness")
    v.add_argument("srm")
    v.add_argument("--env", choices=ENV_NAMES, help="restrict completeness to this domain")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("equiv", help="sampling-based equivalence of two machines")
    e.add_argument("srm_a")
    e.add_argument("srm_b")
    e.add_argument("--env", required=True, choices=ENV_NAMES)
    e.add_argument("--task", required=True, choices=TASK_IDS)
    e.add_argument("--trials", type=int, default=1000)
    e.add_argument("--seed", type=int, required=True)
    e.set_defaults(func=cmd_equiv)

    ev = sub.add_parser("eval", help="greedy evaluation of a saved checkpoint")
    ev.add_argument("checkpoint", help="run directory or checkpoint.json")
    ev.add_argument("--env", required=True, choices=ENV_NAMES)
    ev.add_argument("--task", required=True, choices=TASK_IDS)
    ev.add_argument("--runs", type=int, default=20)
    ev.add_argument("--cap", type=int, default=500)
    ev.add_argument("--seed", type=int, required=True)
    ev.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TaskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except smt.SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
