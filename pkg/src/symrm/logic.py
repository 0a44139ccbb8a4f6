"""Quantifier-free linear real arithmetic formulas.

Formulas are immutable trees.  Real-valued leaves are :class:`Num` and
:class:`Var`; boolean leaves are :class:`BoolConst` and :class:`BoolVar`.
The text format is a subset of SMT-LIB2 term syntax, so :func:`print_formula`
output can be sent to a solver unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Iterable, Mapping, Sequence, Union


class FormulaError(Exception):
    pass


class MissingVariableError(FormulaError, KeyError):
    pass


class ParseError(FormulaError):
    def __init__(self, msg: str, pos: int | None = None):
        self.pos = pos
        super().__init__(msg if pos is None else f"{msg} (at offset {pos})")


class UnsupportedFragmentError(FormulaError):
    """Raised when a formula falls outside the axis-aligned box fragment."""


# --------------------------------------------------------------------------
# terms

@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise FormulaError(f"non-finite constant {self.value}")


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if not self.name:
            raise FormulaError("empty variable name")


@dataclass(frozen=True)
class Add:
    args: tuple


@dataclass(frozen=True)
class Sub:
    args: tuple


@dataclass(frozen=True)
class Neg:
    arg: "Term"

    def __post_init__(self):
        # negative constants are always a single Num so printing round-trips
        if isinstance(self.arg, Num):
            raise FormulaError("use Num(-c) instead of Neg(Num(c))")


@dataclass(frozen=True)
class Mul:
    """Multiplication by a constant coefficient (keeps terms linear)."""
    coef: float
    arg: "Term"

    def __post_init__(self):
        object.__setattr__(self, "coef", float(self.coef))


Term = Union[Num, Var, Add, Sub, Neg, Mul]

# --------------------------------------------------------------------------
# formulas

CMP_OPS = (">=", ">", "<=", "<", "=")


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class BoolVar:
    name: str


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Term
    rhs: Term

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise FormulaError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


Formula = Union[BoolConst, BoolVar, Cmp, Not, And, Or, Iff, Implies]

TRUE = BoolConst(True)
FALSE = BoolConst(False)

_TERM_TYPES = (Num, Var, Add, Sub, Neg, Mul)
_FORMULA_TYPES = (BoolConst, BoolVar, Cmp, Not, And, Or, Iff, Implies)


# --------------------------------------------------------------------------
# convenience constructors

def conj(*fs: Formula) -> Formula:
    fs = tuple(fs)
    if not fs:
        return TRUE
    if len(fs) == 1:
        return fs[0]
    return And(fs)


def disj(*fs: Formula) -> Formula:
    fs = tuple(fs)
    if not fs:
        return FALSE
    if len(fs) == 1:
        return fs[0]
    return Or(fs)


def num(v: float) -> Num:
    return Num(v)


def ge(x: str | Term, c: float | Term) -> Cmp:
    return Cmp(">=", _as_term(x), _as_term(c))


def lt(x: str | Term, c: float | Term) -> Cmp:
    return Cmp("<", _as_term(x), _as_term(c))


def _as_term(v) -> Term:
    if isinstance(v, _TERM_TYPES):
        return v
    if isinstance(v, str):
        return Var(v)
    return Num(v)


def box(bounds: Mapping[str, tuple[float, float]]) -> Formula:
    """Half-open box ``lo <= x < hi`` for every variable in ``bounds``."""
    parts = []
    for name, (lo, hi) in bounds.items():
        parts.append(ge(name, lo))
        parts.append(lt(name, hi))
    return conj(*parts)


# --------------------------------------------------------------------------
# traversal helpers

def free_variables(f) -> set[str]:
    """Names of real variables occurring in ``f``."""
    out: set[str] = set()
    _collect(f, out, set())
    return out


def free_bool_variables(f) -> set[str]:
    out: set[str] = set()
    _collect(f, set(), out)
    return out


def symbols(f) -> set[str]:
    reals: set[str] = set()
    bools: set[str] = set()
    _collect(f, reals, bools)
    return reals | bools


def _collect(node, reals, bools):
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            reals.add(n.name)
        elif isinstance(n, BoolVar):
            bools.add(n.name)
        elif isinstance(n, (Add, Sub, And, Or)):
            stack.extend(n.args)
        elif isinstance(n, (Neg, Not)):
            stack.append(n.arg)
        elif isinstance(n, Mul):
            stack.append(n.arg)
        elif isinstance(n, (Cmp, Iff, Implies)):
            stack.append(n.lhs)
            stack.append(n.rhs)


def is_quantifier_free(f) -> bool:
    # the AST has no binder nodes; this checks that nothing foreign slipped in
    stack = [f]
    while stack:
        n = stack.pop()
        if not isinstance(n, _TERM_TYPES + _FORMULA_TYPES):
            return False
        if isinstance(n, (Add, Sub, And, Or)):
            stack.extend(n.args)
        elif isinstance(n, (Neg, Not, Mul)):
            stack.append(n.arg)
        elif isinstance(n, (Cmp, Iff, Implies)):
            stack.extend((n.lhs, n.rhs))
    return True


# --------------------------------------------------------------------------
# evaluation

def eval_term(t: Term, state: Mapping[str, float]) -> float:
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        try:
            return float(state[t.name])
        except KeyError:
            raise MissingVariableError(t.name) from None
    if isinstance(t, Add):
        return sum(eval_term(a, state) for a in t.args)
    if isinstance(t, Sub):
        vals = [eval_term(a, state) for a in t.args]
        if len(vals) == 1:
            return -vals[0]
        acc = vals[0]
        for v in vals[1:]:
            acc -= v
        return acc
    if isinstance(t, Neg):
        return -eval_term(t.arg, state)
    if isinstance(t, Mul):
        return t.coef * eval_term(t.arg, state)
    raise FormulaError(f"not a term: {t!r}")


def _cmp(op: str, a: float, b: float) -> bool:
    if op == ">=":
        return a >= b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    if op == "<":
        return a < b
    return a == b


def evaluate(f: Formula, state: Mapping[str, float | bool]) -> bool:
    """Truth value of ``state |= f``."""
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, BoolVar):
        try:
            return bool(state[f.name])
        except KeyError:
            raise MissingVariableError(f.name) from None
    if isinstance(f, Cmp):
        return _cmp(f.op, eval_term(f.lhs, state), eval_term(f.rhs, state))
    if isinstance(f, Not):
        return not evaluate(f.arg, state)
    if isinstance(f, And):
        return all(evaluate(a, state) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, state) for a in f.args)
    if isinstance(f, Iff):
        return evaluate(f.lhs, state) == evaluate(f.rhs, state)
    if isinstance(f, Implies):
        return (not evaluate(f.lhs, state)) or evaluate(f.rhs, state)
    raise FormulaError(f"not a formula: {f!r}")


def compile_formula(f: Formula, variables: Sequence[str]) -> Callable[[Sequence[float]], bool]:
    """Compile ``f`` into a fast predicate over a positional state vector.

    Only real variables listed in ``variables`` may occur.
    """
    index = {v: i for i, v in enumerate(variables)}

    def term(t):
        if isinstance(t, Num):
            return repr(t.value)
        if isinstance(t, Var):
            if t.name not in index:
                raise MissingVariableError(t.name)
            return f"s[{index[t.name]}]"
        if isinstance(t, Add):
            return "(" + " + ".join(term(a) for a in t.args) + ")"
        if isinstance(t, Sub):
            if len(t.args) == 1:
                return f"(-{term(t.args[0])})"
            return "(" + " - ".join(term(a) for a in t.args) + ")"
        if isinstance(t, Neg):
            return f"(-{term(t.arg)})"
        if isinstance(t, Mul):
            return f"({t.coef!r} * {term(t.arg)})"
        raise FormulaError(f"not a term: {t!r}")

    def form(g):
        if isinstance(g, BoolConst):
            return "True" if g.value else "False"
        if isinstance(g, BoolVar):
            raise FormulaError(f"boolean variable {g.name!r} in compiled guard")
        if isinstance(g, Cmp):
            op = "==" if g.op == "=" else g.op
            return f"({term(g.lhs)} {op} {term(g.rhs)})"
        if isinstance(g, Not):
            return f"(not {form(g.arg)})"
        if isinstance(g, And):
            return "(" + " and ".join(form(a) for a in g.args) + ")"
        if isinstance(g, Or):
            return "(" + " or ".join(form(a) for a in g.args) + ")"
        if isinstance(g, Iff):
            return f"({form(g.lhs)} == {form(g.rhs)})"
        if isinstance(g, Implies):
            return f"((not {form(g.lhs)}) or {form(g.rhs)})"
        raise FormulaError(f"not a formula: {g!r}")

    src = f"lambda s: {form(f)}"
    return eval(src, {"__builtins__": {}}, {})  # noqa: S307 - generated from our own AST


# --------------------------------------------------------------------------
# substitution

def substitute(f, assignment: Mapping[str, float | bool], require: Iterable[str] = ()):
    """Replace variables named in ``assignment`` by constants.

    Real variables become :class:`Num`, boolean variables become
    :class:`BoolConst`.  Everything else is left symbolic.  Names in
    ``require`` must be assigned.
    """
    for name in require:
        if name not in assignment:
            raise MissingVariableError(name)
    return _subst(f, assignment)


def _subst(n, a):
    if isinstance(n, Var):
        if n.name in a:
            return Num(float(a[n.name]))
        return n
    if isinstance(n, BoolVar):
        if n.name in a:
            return BoolConst(bool(a[n.name]))
        return n
    if isinstance(n, (Num, BoolConst)):
        return n
    if isinstance(n, Add):
        return Add(tuple(_subst(x, a) for x in n.args))
    if isinstance(n, Sub):
        return Sub(tuple(_subst(x, a) for x in n.args))
    if isinstance(n, Neg):
        inner = _subst(n.arg, a)
        return Num(-inner.value) if isinstance(inner, Num) else Neg(inner)
    if isinstance(n, Mul):
        return Mul(n.coef, _subst(n.arg, a))
    if isinstance(n, Cmp):
        return Cmp(n.op, _subst(n.lhs, a), _subst(n.rhs, a))
    if isinstance(n, Not):
        return Not(_subst(n.arg, a))
    if isinstance(n, And):
        return And(tuple(_subst(x, a) for x in n.args))
    if isinstance(n, Or):
        return Or(tuple(_subst(x, a) for x in n.args))
    if isinstance(n, Iff):
        return Iff(_subst(n.lhs, a), _subst(n.rhs, a))
    if isinstance(n, Implies):
        return Implies(_subst(n.lhs, a), _subst(n.rhs, a))
    raise FormulaError(f"unknown node {n!r}")


def simplify_constants(f: Formula) -> Formula:
    """Fold ground comparisons and boolean constants.  No arithmetic reasoning."""
    if isinstance(f, (BoolConst, BoolVar)):
        return f
    if isinstance(f, Cmp):
        if not free_variables(f):
            return BoolConst(_cmp(f.op, eval_term(f.lhs, {}), eval_term(f.rhs, {})))
        return f
    if isinstance(f, Not):
        a = simplify_constants(f.arg)
        if isinstance(a, BoolConst):
            return BoolConst(not a.value)
        if isinstance(a, Not):
            return a.arg
        return Not(a)
    if isinstance(f, And):
        out = []
        for x in f.args:
            x = simplify_constants(x)
            if x == FALSE:
                return FALSE
            if x != TRUE and x not in out:
                out.append(x)
        return conj(*out)
    if isinstance(f, Or):
        out = []
        for x in f.args:
            x = simplify_constants(x)
            if x == TRUE:
                return TRUE
            if x != FALSE and x not in out:
                out.append(x)
        return disj(*out)
    if isinstance(f, Iff):
        a, b = simplify_constants(f.lhs), simplify_constants(f.rhs)
        if isinstance(a, BoolConst) and isinstance(b, BoolConst):
            return BoolConst(a.value == b.value)
        if isinstance(a, BoolConst):
            return b if a.value else simplify_constants(Not(b))
        if isinstance(b, BoolConst):
            return a if b.value else simplify_constants(Not(a))
        return Iff(a, b)
    if isinstance(f, Implies):
        return simplify_constants(Or((Not(f.lhs), f.rhs)))
    raise FormulaError(f"not a formula: {f!r}")


# --------------------------------------------------------------------------
# printing

def format_number(v: float) -> str:
    """Exact decimal rendering of a double in SMT-LIB2 syntax."""
    v = float(v)
    if not math.isfinite(v):
        raise FormulaError(f"non-finite constant {v}")
    if v < 0:
        return f"(- {format_number(-v)})"
    s = format(Decimal(v), "f")
    if "." not in s:
        s += ".0"
    return s


def print_formula(f) -> str:
    parts: list[str] = []
    _print(f, parts)
    return "".join(parts)


def _print(n, out):
    if isinstance(n, Num):
        out.append(format_number(n.value))
    elif isinstance(n, (Var, BoolVar)):
        out.append(n.name)
    elif isinstance(n, BoolConst):
        out.append("true" if n.value else "false")
    elif isinstance(n, (Add, Sub, And, Or)):
        op = {Add: "+", Sub: "-", And: "and", Or: "or"}[type(n)]
        out.append(f"({op}")
        for a in n.args:
            out.append(" ")
            _print(a, out)
        out.append(")")
    elif isinstance(n, (Neg, Not)):
        out.append("(- " if isinstance(n, Neg) else "(not ")
        _print(n.arg, out)
        out.append(")")
    elif isinstance(n, Mul):
        out.append("(* ")
        out.append(format_number(n.coef))
        out.append(" ")
        _print(n.arg, out)
        out.append(")")
    elif isinstance(n, (Cmp, Iff, Implies)):
        op = n.op if isinstance(n, Cmp) else ("=" if isinstance(n, Iff) else "=>")
        out.append(f"({op} ")
        _print(n.lhs, out)
        out.append(" ")
        _print(n.rhs, out)
        out.append(")")
    else:
        raise FormulaError(f"cannot print {n!r}")


# --------------------------------------------------------------------------
# parsing

def tokenize(text: str) -> list[tuple[str, int]]:
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            toks.append((c, i))
            i += 1
        elif c == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise ParseError("unterminated string", i)
            toks.append((text[i:j + 1], i))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"':
                j += 1
            toks.append((text[i:j], i))
            i = j
    return toks


def read_sexpr(text: str):
    """Parse one s-expression into nested lists of ``(atom, offset)`` pairs."""
    toks = tokenize(text)
    if not toks:
        raise ParseError("empty input", 0)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise ParseError("unexpected end of input", len(text))
        tok, off = toks[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise ParseError("missing ')'", off)
                if toks[pos][0] == ")":
                    pos += 1
                    return (items, off)
                items.append(read())
        if tok == ")":
            raise ParseError("unexpected ')'", off)
        return (tok, off)

    node = read()
    if pos != len(toks):
        raise ParseError("trailing input", toks[pos][1])
    return node


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return tok.lower() not in ("nan", "inf", "-inf", "+inf", "infinity", "-infinity")


_BOOL_OPS = {"and", "or", "not", "iff", "=>", "true", "false"}


def parse_formula(text: str, variables: Iterable[str] | None = None,
                  bools: Iterable[str] = ()) -> Formula:
    """Parse the s-expression text format.

    ``variables`` is the real-valued signature; when given, any other bare
    identifier in term position is rejected.  ``bools`` names boolean symbols
    so that ``(= a b)`` between them is read as a biconditional.
    """
    sig = None if variables is None else set(variables)
    bool_names = set(bools)
    node = read_sexpr(text)

    def is_boolish(nd) -> bool:
        items, off = nd
        if isinstance(items, str):
            return items in ("true", "false") or items in bool_names
        if not items or not isinstance(items[0][0], str):
            return False
        head = items[0][0]
        return head in _BOOL_OPS or head in CMP_OPS and head != "=" or (
            head == "=" and len(items) == 3 and (is_boolish(items[1]) or is_boolish(items[2])))

    def term(nd) -> Term:
        items, off = nd
        if isinstance(items, str):
            if _is_number(items):
                return Num(float(items))
            if items in _BOOL_OPS or items in CMP_OPS:
                raise ParseError(f"unexpected {items!r} in term position", off)
            if sig is not None and items not in sig:
                raise ParseError(f"unknown variable {items!r}", off)
            return Var(items)
        if not items:
            raise ParseError("empty list", off)
        head, hoff = items[0]
        if not isinstance(head, str):
            raise ParseError("operator expected", hoff)
        args = items[1:]
        if head == "+":
            if len(args) < 1:
                raise ParseError("'+' needs arguments", off)
            return Add(tuple(term(a) for a in args))
        if head == "-":
            if len(args) == 1:
                t = term(args[0])
                return Num(-t.value) if isinstance(t, Num) else Neg(t)
            if len(args) < 1:
                raise ParseError("'-' needs arguments", off)
            return Sub(tuple(term(a) for a in args))
        if head == "*":
            if len(args) != 2:
                raise ParseError("'*' takes exactly two arguments", off)
            a, b = term(args[0]), term(args[1])
            if isinstance(a, Num):
                return Mul(a.value, b)
            if isinstance(b, Num):
                return Mul(b.value, a)
            raise ParseError("non-linear multiplication", off)
        if head == "/":
            if len(args) != 2:
                raise ParseError("'/' takes exactly two arguments", off)
            a, b = term(args[0]), term(args[1])
            if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
                return Num(a.value / b.value)
            raise ParseError("division only allowed between constants", off)
        raise ParseError(f"unknown term operator {head!r}", hoff)

    def formula(nd) -> Formula:
        items, off = nd
        if isinstance(items, str):
            if items == "true":
                return TRUE
            if items == "false":
                return FALSE
            if _is_number(items):
                raise ParseError(f"number {items!r} in formula position", off)
            if items in _BOOL_OPS or items in CMP_OPS:
                raise ParseError(f"unexpected {items!r}", off)
            if sig is not None and items in sig:
                raise ParseError(f"real variable {items!r} used as formula", off)
            return BoolVar(items)
        if not items:
            raise ParseError("empty list", off)
        head, hoff = items[0]
        if not isinstance(head, str):
            raise ParseError("operator expected", hoff)
        args = items[1:]
        if head in ("and", "or"):
            if not args:
                raise ParseError(f"'{head}' needs arguments", off)
            fs = tuple(formula(a) for a in args)
            return And(fs) if head == "and" else Or(fs)
        if head == "not":
            if len(args) != 1:
                raise ParseError("'not' takes one argument", off)
            return Not(formula(args[0]))
        if head in ("iff", "=>"):
            if len(args) != 2:
                raise ParseError(f"'{head}' takes two arguments", off)
            a, b = formula(args[0]), formula(args[1])
            return Iff(a, b) if head == "iff" else Implies(a, b)
        if head in CMP_OPS:
            if len(args) != 2:
                raise ParseError(f"'{head}' takes exactly two arguments", off)
            if head == "=" and (is_boolish(args[0]) or is_boolish(args[1])):
                return Iff(formula(args[0]), formula(args[1]))
            return Cmp(head, term(args[0]), term(args[1]))
        raise ParseError(f"unknown operator {head!r}", hoff)

    return formula(node)


# --------------------------------------------------------------------------
# box fragment

@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    lo_closed: bool = False
    hi: float = math.inf
    hi_closed: bool = False

    def empty(self) -> bool:
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    def meet(self, other: "Interval") -> "Interval":
        if other.lo > self.lo or (other.lo == self.lo and not other.lo_closed):
            lo, lc = other.lo, other.lo_closed
        else:
            lo, lc = self.lo, self.lo_closed
        if other.hi < self.hi or (other.hi == self.hi and not other.hi_closed):
            hi, hc = other.hi, other.hi_closed
        else:
            hi, hc = self.hi, self.hi_closed
        return Interval(lo, lc, hi, hc)

    def point(self) -> float:
        lo, hi = self.lo, self.hi
        if math.isinf(lo) and math.isinf(hi):
            return 0.0
        if math.isinf(lo):
            return hi if self.hi_closed else hi - 1.0
        if math.isinf(hi):
            return lo if self.lo_closed else lo + 1.0
        if self.lo_closed:
            return lo
        if self.hi_closed:
            return hi
        mid = lo + (hi - lo) / 2
        if lo < mid < hi:
            return mid
        return math.nextafter(lo, hi)


Box = dict  # variable name -> Interval; missing names are unconstrained

_MAX_BOXES = 20000


def _literal_interval(op: str, c: float, positive: bool) -> list[Interval]:
    # interval(s) of x satisfying (x op c), or its negation
    if not positive:
        op = {">=": "<", ">": "<=", "<=": ">", "<": ">=", "=": "!="}[op]
    if op == ">=":
        return [Interval(c, True)]
    if op == ">":
        return [Interval(c, False)]
    if op == "<=":
        return [Interval(hi=c, hi_closed=True)]
    if op == "<":
        return [Interval(hi=c, hi_closed=False)]
    if op == "=":
        return [Interval(c, True, c, True)]
    return [Interval(hi=c), Interval(c)]  # !=


_FLIP = {">=": "<=", ">": "<", "<=": ">=", "<": ">", "=": "="}


def _atom(f: Cmp) -> tuple[str, str, float]:
    lhs, rhs = f.lhs, f.rhs
    if isinstance(lhs, Var) and isinstance(rhs, Num):
        return lhs.name, f.op, rhs.value
    if isinstance(lhs, Num) and isinstance(rhs, Var):
        return rhs.name, _FLIP[f.op], lhs.value
    raise UnsupportedFragmentError(f"not a bound: {print_formula(f)}")


def _meet_boxes(a: Box, b: Box) -> Box | None:
    out = dict(a)
    for k, iv in b.items():
        cur = out.get(k)
        iv2 = iv if cur is None else cur.meet(iv)
        if iv2.empty():
            return None
        out[k] = iv2
    return out


def _product(xs: list[Box], ys: list[Box]) -> list[Box]:
    out = []
    for a in xs:
        for b in ys:
            m = _meet_boxes(a, b)
            if m is not None:
                out.append(m)
                if len(out) > _MAX_BOXES:
                    raise UnsupportedFragmentError("box normal form too large")
    return out


def to_boxes(f: Formula, positive: bool = True) -> list[Box]:
    """Disjunctive normal form of ``f`` (or of its negation) as a union of boxes.

    Empty boxes are pruned, so an empty list means unsatisfiable.
    """
    if isinstance(f, BoolConst):
        return [{}] if f.value == positive else []
    if isinstance(f, Cmp):
        name, op, c = _atom(f)
        return [{name: iv} for iv in _literal_interval(op, c, positive) if not iv.empty()]
    if isinstance(f, Not):
        return to_boxes(f.arg, not positive)
    if isinstance(f, (And, Or)):
        conjunctive = isinstance(f, And) == positive
        if conjunctive:
            acc = [{}]
            for a in f.args:
                acc = _product(acc, to_boxes(a, positive))
                if not acc:
                    return []
            return acc
        out = []
        for a in f.args:
            out.extend(to_boxes(a, positive))
            if len(out) > _MAX_BOXES:
                raise UnsupportedFragmentError("box normal form too large")
        return out
    if isinstance(f, Iff):
        a, b = f.lhs, f.rhs
        if positive:
            return to_boxes(Or((And((a, b)), And((Not(a), Not(b))))))
        return to_boxes(Or((And((a, Not(b))), And((Not(a), b)))))
    if isinstance(f, Implies):
        return to_boxes(Or((Not(f.lhs), f.rhs)), positive)
    raise UnsupportedFragmentError(f"outside box fragment: {type(f).__name__}")


def box_conjunction_satisfiable(fs: Sequence[Formula]) -> bool:
    return box_witness(fs) is not None


def box_witness(fs: Sequence[Formula]) -> dict[str, float] | None:
    """A point satisfying every formula in ``fs``, or None if there is none."""
    acc: list[Box] = [{}]
    for f in fs:
        acc = _product(acc, to_boxes(f))
        if not acc:
            return None
    b = acc[0]
    return {k: iv.point() for k, iv in b.items()}
