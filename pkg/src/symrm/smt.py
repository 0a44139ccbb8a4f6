"""SMT-LIB2 client talking to an external solver over stdin/stdout.

The solver command defaults to ``z3 -in -smt2`` and can be overridden with the
``SYMRM_SOLVER`` environment variable (a shell-style command line).  Any
solver that understands ``:print-success`` and QF_LRA works.
"""
from __future__ import annotations

import enum
import logging
import os
import queue
import shlex
import shutil
import subprocess
import threading
import time
from fractions import Fraction
from typing import Iterable

from . import logic

log = logging.getLogger(__name__)

SOLVER_ENV = "SYMRM_SOLVER"
DEFAULT_TIMEOUT_MS = 60_000


class SolverError(Exception):
    def __init__(self, msg: str, transcript: str = ""):
        super().__init__(msg)
        self.transcript = transcript


class DuplicateDeclarationError(SolverError):
    pass


class UndeclaredSymbolError(SolverError):
    pass


class Verdict(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


SORTS = ("Bool", "Real")


def solver_command() -> list[str]:
    cmd = os.environ.get(SOLVER_ENV)
    if cmd:
        return shlex.split(cmd)
    exe = shutil.which("z3")
    if exe is None:
        raise SolverError(f"no SMT solver found; install z3 or set {SOLVER_ENV}")
    return [exe, "-in", "-smt2"]


def parse_value(text_or_node) -> bool | Fraction:
    """Parse an SMT-LIB2 value (``true``, ``2.0``, ``(- (/ 1 2))`` ...)."""
    node = logic.read_sexpr(text_or_node) if isinstance(text_or_node, str) else text_or_node
    return _value(node)


def _value(node):
    items, off = node
    if isinstance(items, str):
        if items == "true":
            return True
        if items == "false":
            return False
        try:
            return Fraction(items)
        except ValueError:
            raise SolverError(f"cannot parse value {items!r}") from None
    head = items[0][0]
    args = [_value(a) for a in items[1:]]
    if head == "-" and len(args) == 1:
        return -args[0]
    if head == "-":
        acc = args[0]
        for a in args[1:]:
            acc -= a
        return acc
    if head == "/" and len(args) == 2:
        return args[0] / args[1]
    if head == "+":
        return sum(args, Fraction(0))
    if head == "*":
        acc = Fraction(1)
        for a in args:
            acc *= a
        return acc
    raise SolverError(f"cannot parse value {items!r}")


class Model:
    """Symbol assignment returned by ``get-model``.

    Declared symbols the solver left out are treated as don't-cares and
    default to ``False`` / ``0``.
    """

    def __init__(self, values: dict, sorts: dict[str, str]):
        self.exact = dict(values)
        self.sorts = dict(sorts)

    def __getitem__(self, name: str):
        if name not in self.sorts and name not in self.exact:
            raise KeyError(name)
        v = self.exact.get(name)
        if self.sorts.get(name) == "Bool":
            return bool(v) if v is not None else False
        if v is None:
            return 0.0
        return float(v)

    def get(self, name, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def __contains__(self, name):
        return name in self.sorts or name in self.exact

    def as_dict(self) -> dict:
        return {k: self[k] for k in self.sorts}


class SolverSession:
    """One child solver process.  Not thread-safe; use one session per thread."""

    def __init__(self, command: list[str] | None = None, logic_name: str = "QF_LRA",
                 timeout_ms: int = DEFAULT_TIMEOUT_MS, transcript_path: str | None = None):
        self.command = list(command) if command else solver_command()
        self.logic = logic_name
        self.timeout_ms = timeout_ms
        self.transcript_path = transcript_path
        self.transcript: list[str] = []
        self.sorts: dict[str, str] = {}
        self.defined: set[str] = set()
        self.n_assertions = 0
        self.check_time = 0.0
        self._last: Verdict | None = None
        self._responses: queue.Queue = queue.Queue()
        self._dead = False
        argv = list(self.command)
        if timeout_ms and os.path.basename(argv[0]).startswith("z3"):
            argv.append(f"-t:{int(timeout_ms)}")
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT, text=True, bufsize=1)
        except OSError as exc:
            raise SolverError(f"cannot start solver {argv!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._command("(set-option :print-success true)")
        self._command("(set-option :produce-models true)")
        self._command(f"(set-logic {logic_name})")

    # -- plumbing ---------------------------------------------------------

    def _read_loop(self):
        buf: list[str] = []
        depth = 0
        for line in self._proc.stdout:
            stripped = line.strip()
            if not stripped and not buf:
                continue
            buf.append(line)
            depth += _paren_balance(line)
            if depth <= 0:
                self._responses.put("".join(buf).strip())
                buf, depth = [], 0
        self._responses.put(None)

    def _send(self, text: str):
        if self._dead:
            raise SolverError("solver session is closed", self.dump())
        self.transcript.append(text)
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._dead = True
            raise SolverError(f"solver I/O failure: {exc}", self.dump()) from exc

    def _receive(self, timeout: float | None) -> str | None:
        try:
            resp = self._responses.get(timeout=timeout)
        except queue.Empty:
            return None
        if resp is None:
            self._dead = True
            raise SolverError("solver process exited", self.dump())
        self.transcript.append(";; " + resp.replace("\n", "\n;; "))
        return resp

    def _command(self, text: str, timeout: float = 30.0):
        self._send(text)
        resp = self._receive(timeout)
        if resp is None:
            raise SolverError(f"no response to {text[:80]!r}", self.dump())
        if resp != "success":
            raise SolverError(f"solver rejected command: {resp}", self.dump())

    # -- public API -------------------------------------------------------

    def declare(self, name: str, sort: str):
        if sort not in SORTS:
            raise SolverError(f"unsupported sort {sort!r}")
        if name in self.sorts or name in self.defined:
            raise DuplicateDeclarationError(f"duplicate declaration of {name!r}")
        self._command(f"(declare-const {name} {sort})")
        self.sorts[name] = sort

    def declare_many(self, items: Iterable):
        """Pipelined ``declare`` for ``(name, sort)`` pairs."""
        lines = []
        for name, sort in items:
            if sort not in SORTS:
                raise SolverError(f"unsupported sort {sort!r}")
            if name in self.sorts or name in self.defined:
                raise DuplicateDeclarationError(f"duplicate declaration of {name!r}")
            self.sorts[name] = sort
            lines.append(f"(declare-const {name} {sort})")
        self._pipeline(lines)

    def _pipeline(self, lines: list[str], chunk: int = 2000):
        # write in blocks; the reader thread drains the "success" replies meanwhile
        for i in range(0, len(lines), chunk):
            self._send("\n".join(lines[i:i + chunk]))
        for _ in range(len(lines)):
            resp = self._receive(60.0)
            if resp is None:
                raise SolverError("timed out waiting for solver", self.dump())
            if resp != "success":
                raise SolverError(f"solver rejected command: {resp}", self.dump())

    def define(self, name: str, f, sort: str = "Bool"):
        """Named abbreviation ``(define-fun name () sort f)``; not a new unknown."""
        if name in self.sorts or name in self.defined:
            raise DuplicateDeclarationError(f"duplicate declaration of {name!r}")
        self._check_symbols(f)
        self._command(f"(define-fun {name} () {sort} {logic.print_formula(f)})")
        self.defined.add(name)

    def _check_symbols(self, f):
        missing = logic.symbols(f) - self.sorts.keys() - self.defined
        if missing:
            raise UndeclaredSymbolError(f"undeclared symbol(s): {sorted(missing)}")

    def assert_formula(self, f):
        self._check_symbols(f)
        self._command(f"(assert {logic.print_formula(f)})")
        self.n_assertions += 1

    def assert_many(self, fs: Iterable):
        """Pipelined assertions."""
        lines = []
        for f in fs:
            self._check_symbols(f)
            lines.append(f"(assert {logic.print_formula(f)})")
        self._pipeline(lines)
        self.n_assertions += len(lines)

    def push(self):
        self._command("(push 1)")

    def pop(self):
        self._command("(pop 1)")

    def check_sat(self) -> Verdict:
        t0 = time.perf_counter()
        self._send("(check-sat)")
        grace = 5.0 + (self.timeout_ms / 1000.0 if self.timeout_ms else 3600.0)
        resp = self._receive(grace)
        self.check_time += time.perf_counter() - t0
        if resp is None:
            log.warning("solver did not answer within %.1fs; killing it", grace)
            self.close()
            self._last = Verdict.UNKNOWN
            return self._last
        try:
            self._last = Verdict(resp)
        except ValueError:
            raise SolverError(f"unexpected check-sat response: {resp}", self.dump()) from None
        return self._last

    def get_model(self) -> Model:
        if self._last is not Verdict.SAT:
            raise SolverError("get-model requires a preceding sat verdict", self.dump())
        self._send("(get-model)")
        resp = self._receive(60.0)
        if resp is None:
            raise SolverError("timed out waiting for model", self.dump())
        return Model(parse_model(resp, self.sorts), self.sorts)

    def dump(self) -> str:
        return "\n".join(self.transcript)

    def dump_transcript(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.dump() + "\n")

    def close(self):
        if self.transcript_path:
            try:
                self.dump_transcript(self.transcript_path)
            except OSError:
                log.exception("could not write transcript")
        if not self._dead:
            self._dead = True
            try:
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _paren_balance(line: str) -> int:
    depth = 0
    in_str = False
    for c in line:
        if c == '"':
            in_str = not in_str
        elif not in_str:
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
    return depth


def parse_model(text: str, names=None) -> dict:
    """Symbol values from a ``get-model`` reply; ``names`` limits which are read
    (macros defined with ``define-fun`` are echoed back by some solvers)."""
    if text.startswith("(error"):
        raise SolverError(f"solver error: {text}")
    items, _ = logic.read_sexpr(text)
    if items and isinstance(items[0][0], str) and items[0][0] == "model":
        items = items[1:]
    out = {}
    for entry, _ in items:
        if isinstance(entry, str) or not entry or entry[0][0] != "define-fun":
            continue
        name = entry[1][0]
        if names is not None and name not in names:
            continue
        params = entry[2][0]
        if params:  # function definitions are not symbol values
            continue
        out[name] = _value(entry[4])
    return out


def replay_transcript(text: str, command: list[str] | None = None) -> Verdict | None:
    """Send every command of a transcript to a fresh solver; return the last verdict."""
    argv = list(command) if command else solver_command()
    cmds = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith(";;")]
    cmds = [c for c in cmds if "print-success" not in c and "produce-models" not in c
            and not c.startswith("(set-logic")]
    with SolverSession(argv) as s:
        verdict = None
        for c in cmds:
            if c.startswith("(check-sat"):
                verdict = s.check_sat()
            elif c.startswith("(get-model"):
                continue
            else:
                s._command(c)
        return verdict


def find_model(formulas, command: list[str] | None = None) -> dict | None:
    """A satisfying assignment of the conjunction, or None if unsatisfiable.

    Box-fragment inputs are decided by interval reasoning; anything else
    goes to the solver.
    """
    formulas = list(formulas)
    try:
        return logic.box_witness(formulas)
    except logic.UnsupportedFragmentError:
        pass
    with SolverSession(command) as s:
        reals, bools = set(), set()
        for f in formulas:
            reals |= logic.free_variables(f)
            bools |= logic.free_bool_variables(f)
        for name in sorted(reals):
            s.declare(name, "Real")
        for name in sorted(bools):
            s.declare(name, "Bool")
        for f in formulas:
            s.assert_formula(f)
        verdict = s.check_sat()
        if verdict is Verdict.UNKNOWN:
            raise SolverError("solver returned unknown", s.dump())
        if verdict is Verdict.UNSAT:
            return None
        return s.get_model().as_dict()


def satisfiable(formulas, command: list[str] | None = None) -> bool:
    return find_model(formulas, command) is not None
