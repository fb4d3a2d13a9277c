"""Validity checking for subtyping obligations.

Two backends decide ``hyps /\\ lhs => goal``: a builtin procedure for
linear integer arithmetic (DNF case splitting plus Fourier-Motzkin with
integer tightening) and any external solver that speaks SMT-LIB 2 on
standard input.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .logic import (
    P_TRUE,
    PBin,
    PBool,
    PInt,
    PNot,
    Pred,
    PVar,
    Sort,
    conj,
    eval_pred,
    pred_vars,
    show_pred,
    sort_check,
)
from .syntax import Span

CUBE_CAP = 20000
CONSTRAINT_CAP = 4000
DEFAULT_TIMEOUT = 10.0


@dataclass(frozen=True)
class Origin:
    rule: str
    span: Optional[Span] = None
    binding: Optional[str] = None


@dataclass(frozen=True)
class Query:
    decls: Mapping[str, Sort]
    hyps: tuple
    lhs: Pred
    goal: Pred
    origin: Origin = field(default=Origin("?"), compare=False)

    def formula(self) -> Pred:
        """``hyps /\\ lhs /\\ not goal``; the query is valid iff this is unsat."""
        return conj(list(self.hyps) + [self.lhs, PNot(self.goal)])

    def __str__(self) -> str:
        hyps = " /\\ ".join(f"({show_pred(h)})" for h in self.hyps) or "true"
        return f"{hyps} => ({show_pred(self.lhs)}) => ({show_pred(self.goal)})"


@dataclass(frozen=True)
class Valid:
    def __str__(self):
        return "valid"


@dataclass(frozen=True)
class Invalid:
    model: Mapping[str, object]

    def __str__(self):
        return "invalid (" + ", ".join(f"{k} = {_show_val(v)}" for k, v in sorted(self.model.items())) + ")"


@dataclass(frozen=True)
class Unknown:
    reason: str

    def __str__(self):
        return f"unknown ({self.reason})"


Verdict = Union[Valid, Invalid, Unknown]


def _show_val(v) -> str:
    if type(v) is bool:
        return "true" if v else "false"
    return str(v)


class BackendError(Exception):
    pass


@dataclass(frozen=True)
class Builtin:
    def __str__(self):
        return "builtin"


@dataclass(frozen=True)
class External:
    command: str
    timeout: float = DEFAULT_TIMEOUT

    def __str__(self):
        return f"exec:{self.command}"


Backend = Union[Builtin, External]


def parse_backend(spec: str, timeout: float = DEFAULT_TIMEOUT) -> Backend:
    if spec == "builtin":
        return Builtin()
    if spec.startswith("exec:") and spec[5:].strip():
        return External(spec[5:].strip(), timeout)
    raise ValueError(f"unknown backend {spec!r} (expected 'builtin' or 'exec:<command>')")


# ---------------------------------------------------------------------------
# SMT-LIB 2 rendering

_SIMPLE_SYMBOL_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")


def smt_symbol(name: str) -> str:
    if name and not name[0].isdigit() and set(name) <= _SIMPLE_SYMBOL_CHARS:
        return name
    return "|" + name.replace("|", "_").replace("\\", "_") + "|"


_SMT_OPS = {"+": "+", "-": "-", "*": "*", "<": "<", "<=": "<=", ">": ">", ">=": ">=",
            "=": "=", "and": "and", "or": "or", "=>": "=>", "<=>": "="}


def smt_term(p: Pred) -> str:
    if isinstance(p, PVar):
        return smt_symbol(p.name)
    if isinstance(p, PInt):
        return str(p.value) if p.value >= 0 else f"(- {-p.value})"
    if isinstance(p, PBool):
        return "true" if p.value else "false"
    if isinstance(p, PNot):
        return f"(not {smt_term(p.arg)})"
    if p.op == "!=":
        return f"(not (= {smt_term(p.left)} {smt_term(p.right)}))"
    return f"({_SMT_OPS[p.op]} {smt_term(p.left)} {smt_term(p.right)})"


def emit_smtlib(q: Query) -> str:
    lines = ["(set-logic QF_LIA)"]
    for name in sorted(q.decls):
        lines.append(f"(declare-const {smt_symbol(name)} {q.decls[name].value})")
    for h in q.hyps:
        lines.append(f"(assert {smt_term(h)})")
    if q.lhs != P_TRUE:
        lines.append(f"(assert {smt_term(q.lhs)})")
    lines.append(f"(assert (not {smt_term(q.goal)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Builtin decision procedure
#
# A linear constraint is (coeffs, const, kind) meaning
#   sum(coeffs[x] * x) + const  <= 0   (kind "le")
#   sum(coeffs[x] * x) + const  == 0   (kind "eq")
# with coeffs a sorted tuple of (name, nonzero int).


class _Unknown(Exception):
    pass


def _lin(p: Pred):
    """Linear form of an integer term: ({var: coeff}, const)."""
    if isinstance(p, PVar):
        return {p.name: 1}, 0
    if isinstance(p, PInt):
        return {}, p.value
    if isinstance(p, PBin) and p.op in ("+", "-"):
        lc, lk = _lin(p.left)
        rc, rk = _lin(p.right)
        sign = 1 if p.op == "+" else -1
        out = dict(lc)
        for x, c in rc.items():
            out[x] = out.get(x, 0) + sign * c
        return {x: c for x, c in out.items() if c}, lk + sign * rk
    if isinstance(p, PBin) and p.op == "*":
        lc, lk = _lin(p.left)
        rc, rk = _lin(p.right)
        if lc and rc:
            raise _Unknown("nonlinear product")
        if not lc:
            return {x: lk * c for x, c in rc.items() if lk * c}, lk * rk
        return {x: rk * c for x, c in lc.items() if rk * c}, lk * rk
    raise _Unknown(f"not an integer term: {p!r}")


def _sub(a, b):
    ac, ak = a
    bc, bk = b
    out = dict(ac)
    for x, c in bc.items():
        out[x] = out.get(x, 0) - c
    return {x: c for x, c in out.items() if c}, ak - bk


def _atom(coeffs: dict, const: int, kind: str):
    return ("lin", tuple(sorted(coeffs.items())), const, kind)


# Normalized formulas: ("and", [..]) ("or", [..]) ("bool", name, polarity)
# ("lin", coeffs, const, kind) ("const", bool)


def _normalize(p: Pred, decls, positive: bool = True):
    """Negation normal form over linear atoms, with iff/implication and
    disequalities expanded."""
    if isinstance(p, PBool):
        return ("const", p.value if positive else not p.value)
    if isinstance(p, PVar):
        if decls.get(p.name) is not Sort.BOOL:
            raise _Unknown(f"{p.name} used as a formula")
        return ("bool", p.name, positive)
    if isinstance(p, PNot):
        return _normalize(p.arg, decls, not positive)
    op = p.op
    if op in ("and", "or"):
        parts = [_normalize(p.left, decls, positive), _normalize(p.right, decls, positive)]
        real = op if positive else ("or" if op == "and" else "and")
        return (real, parts)
    if op == "=>":
        return _normalize(PBin("or", PNot(p.left), p.right), decls, positive)
    if op == "<=>" or (op in ("=", "!=") and sort_check(decls, p.left) is Sort.BOOL):
        same = (op != "!=") == positive
        a_pos, b_pos = _normalize(p.left, decls, True), _normalize(p.right, decls, True)
        a_neg, b_neg = _normalize(p.left, decls, False), _normalize(p.right, decls, False)
        if same:
            return ("or", [("and", [a_pos, b_pos]), ("and", [a_neg, b_neg])])
        return ("or", [("and", [a_pos, b_neg]), ("and", [a_neg, b_pos])])
    diff = _sub(_lin(p.left), _lin(p.right))  # left - right
    neg = ({x: -c for x, c in diff[0].items()}, -diff[1])  # right - left
    if op in ("=", "!="):
        if (op == "=") == positive:
            return _atom(*diff, "eq")
        return ("or", [_atom(diff[0], diff[1] + 1, "le"), _atom(neg[0], neg[1] + 1, "le")])
    # Integer tightening: a < b  <=>  a - b + 1 <= 0.
    if not positive:
        op = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}[op]
    if op == "<":
        return _atom(diff[0], diff[1] + 1, "le")
    if op == "<=":
        return _atom(*diff, "le")
    if op == ">":
        return _atom(neg[0], neg[1] + 1, "le")
    return _atom(*neg, "le")


class _Budget:
    def __init__(self, cap):
        self.cap = cap
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.cap:
            raise _Unknown(f"more than {self.cap} cases")


def _cubes(work: list, bools: dict, lins: list, budget: _Budget):
    """Enumerate conjunctions of literals (DNF cubes) lazily."""
    while work:
        f = work[-1]
        work = work[:-1]
        tag = f[0]
        if tag == "const":
            if not f[1]:
                return
        elif tag == "and":
            work = work + list(reversed(f[1]))
        elif tag == "or":
            for alt in f[1]:
                yield from _cubes(work + [alt], bools, lins, budget)
            return
        elif tag == "bool":
            prev = bools.get(f[1])
            if prev is not None and prev != f[2]:
                return
            bools = {**bools, f[1]: f[2]}
        else:
            lins = lins + [f]
    budget.tick()
    yield bools, lins


def _tighten(coeffs: tuple, const: int, kind: str):
    """Divide by the coefficient gcd; for <= round the constant up.
    Returns None for an equality with no integer solution."""
    if not coeffs:
        return coeffs, const, kind
    g = 0
    for _, c in coeffs:
        g = math.gcd(g, c)
    if g <= 1:
        return coeffs, const, kind
    if kind == "eq":
        if const % g:
            return None
        return tuple((x, c // g) for x, c in coeffs), const // g, kind
    return tuple((x, c // g) for x, c in coeffs), -((-const) // g), kind


def _solve_int(cons: list):
    """Decide a conjunction of linear constraints over the integers.

    Returns a model (dict) or None when unsatisfiable; raises _Unknown when
    the real shadow is feasible but no integer point was found.
    """
    # Each constraint as (dict coeffs, const, kind).
    work = []
    for _, coeffs, const, kind in cons:
        t = _tighten(coeffs, const, kind)
        if t is None:
            return None
        work.append((dict(t[0]), t[1], t[2]))
    all_vars = set()
    for c, _, _ in work:
        all_vars |= set(c)

    solved = []  # stack of ("eq", var, coeffs, const, coef) or ("fm", var, constraints)

    # Equality elimination through unit coefficients.
    while True:
        pick = None
        for i, (c, k, kind) in enumerate(work):
            if kind != "eq":
                continue
            if not c:
                if k != 0:
                    return None
                continue
            for x in sorted(c):
                if abs(c[x]) == 1:
                    pick = (i, x)
                    break
            if pick:
                break
        if pick is None:
            break
        i, x = pick
        c, k, _ = work.pop(i)
        a = c[x]
        # x = -(rest + k) / a, with a = +-1
        rest = {y: -cy * a for y, cy in c.items() if y != x}
        rk = -k * a
        solved.append(("eq", x, rest, rk))
        new = []
        for c2, k2, kind2 in work:
            if x in c2:
                m = c2[x]
                merged = {y: cy for y, cy in c2.items() if y != x}
                for y, cy in rest.items():
                    merged[y] = merged.get(y, 0) + m * cy
                merged = {y: cy for y, cy in merged.items() if cy}
                t = _tighten(tuple(sorted(merged.items())), k2 + m * rk, kind2)
                if t is None:
                    return None
                new.append((dict(t[0]), t[1], t[2]))
            else:
                new.append((c2, k2, kind2))
        work = new

    ineqs = []
    for c, k, kind in work:
        if kind == "eq":
            ineqs.append((c, k))
            ineqs.append(({y: -cy for y, cy in c.items()}, -k))
        else:
            ineqs.append((c, k))

    def norm(c, k):
        t = _tighten(tuple(sorted(c.items())), k, "le")
        return t[0], t[1]

    current = set()
    for c, k in ineqs:
        current.add(norm(c, k))

    while True:
        for coeffs, k in list(current):
            if not coeffs:
                if k > 0:
                    return None
                current.discard((coeffs, k))
        live = set()
        for coeffs, _ in current:
            live |= {x for x, _ in coeffs}
        if not live:
            break
        # Eliminate the variable producing the fewest new constraints.
        best, best_cost = None, None
        for x in sorted(live):
            pos = sum(1 for cs, _ in current if dict(cs).get(x, 0) > 0)
            neg = sum(1 for cs, _ in current if dict(cs).get(x, 0) < 0)
            cost = pos * neg - pos - neg
            if best_cost is None or cost < best_cost:
                best, best_cost = x, cost
        x = best
        mentioning = [(dict(cs), k) for cs, k in current if dict(cs).get(x, 0) != 0]
        rest = {(cs, k) for cs, k in current if dict(cs).get(x, 0) == 0}
        solved.append(("fm", x, mentioning))
        uppers = [(c, k) for c, k in mentioning if c[x] > 0]
        lowers = [(c, k) for c, k in mentioning if c[x] < 0]
        for cu, ku in uppers:
            for cl, kl in lowers:
                a, b = cu[x], -cl[x]
                merged = {}
                for y, cy in cu.items():
                    merged[y] = merged.get(y, 0) + b * cy
                for y, cy in cl.items():
                    merged[y] = merged.get(y, 0) + a * cy
                merged = {y: cy for y, cy in merged.items() if cy}
                rest.add(norm(merged, b * ku + a * kl))
        if len(rest) > CONSTRAINT_CAP:
            raise _Unknown("elimination size cap exceeded")
        current = rest

    # Back-substitution.
    model = {x: 0 for x in all_vars}
    for entry in reversed(solved):
        if entry[0] == "eq":
            _, x, rest, rk = entry
            model[x] = rk + sum(cy * model[y] for y, cy in rest.items())
            continue
        _, x, mentioning = entry
        lo, hi = None, None
        for c, k in mentioning:
            a = c[x]
            other = k + sum(cy * model[y] for y, cy in c.items() if y != x)
            # a*x + other <= 0
            if a > 0:
                bound = (-other) // a  # floor
                hi = bound if hi is None else min(hi, bound)
            else:
                bound = _ceil_div(other, -a)
                lo = bound if lo is None else max(lo, bound)
        if lo is not None and hi is not None and lo > hi:
            raise _Unknown("no integer point in the real shadow")
        model[x] = _closest_to_zero(lo, hi)
    return model


def _ceil_div(n: int, d: int) -> int:
    return -((-n) // d)


def _closest_to_zero(lo, hi) -> int:
    if lo is not None and lo > 0:
        return lo
    if hi is not None and hi < 0:
        return hi
    return 0


def builtin_check(q: Query) -> Verdict:
    """Decide validity of ``q`` with the builtin procedure."""
    decls = dict(q.decls)
    formula = q.formula()
    try:
        norm = _normalize(formula, decls)
        budget = _Budget(CUBE_CAP)
        unknown = None
        for bools, lins in _cubes([norm], {}, [], budget):
            try:
                ints = _solve_int(lins)
            except _Unknown as exc:
                unknown = str(exc)
                continue
            if ints is None:
                continue
            model = {}
            for name, sort in decls.items():
                model[name] = bools.get(name, False) if sort is Sort.BOOL else ints.get(name, 0)
            if eval_pred(formula, model):
                return Invalid(model)
            unknown = "model self-check failed"
    except _Unknown as exc:
        return Unknown(str(exc))
    if unknown is not None:
        return Unknown(unknown)
    return Valid()


# ---------------------------------------------------------------------------
# External solvers


def _sexprs(text: str):
    """Tiny s-expression reader for solver output."""
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "()":
            tokens.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == '"':
            j = text.index('"', i + 1)
            tokens.append(text[i:j + 1])
            i = j + 1
        elif ch == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j

    def read(pos):
        if tokens[pos] == "(":
            out = []
            pos += 1
            while tokens[pos] != ")":
                item, pos = read(pos)
                out.append(item)
            return out, pos + 1
        return tokens[pos], pos + 1

    out, pos = [], 0
    while pos < len(tokens):
        item, pos = read(pos)
        out.append(item)
    return out


def _model_value(sx):
    if isinstance(sx, str):
        if sx == "true":
            return True
        if sx == "false":
            return False
        return int(sx)
    if len(sx) == 2 and sx[0] == "-":
        return -_model_value(sx[1])
    raise BackendError(f"unsupported model value {sx!r}")


def parse_model(text: str, decls: Mapping[str, Sort]) -> dict:
    model = {}
    for sx in _sexprs(text):
        items = sx if isinstance(sx, list) else []
        if items and items[0] == "model":
            items = items[1:]
        for entry in items:
            if isinstance(entry, list) and len(entry) == 5 and entry[0] == "define-fun":
                model[entry[1]] = _model_value(entry[4])
    out = {}
    for name, sort in decls.items():
        key = name if name in model else smt_symbol(name)
        out[name] = model.get(key, False if sort is Sort.BOOL else 0)
    return out


def external_check(q: Query, backend: External) -> Verdict:
    text = emit_smtlib(q)
    try:
        proc = subprocess.run(shlex.split(backend.command), input=text, capture_output=True,
                              text=True, timeout=backend.timeout)
    except subprocess.TimeoutExpired:
        return Unknown(f"timeout after {backend.timeout}s")
    except OSError as exc:
        raise BackendError(f"cannot run {backend.command!r}: {exc}") from exc
    lines = proc.stdout.strip().splitlines()
    if not lines:
        raise BackendError(f"no output from {backend.command!r}: {proc.stderr.strip()}")
    answer = lines[0].strip()
    if answer == "unsat":
        return Valid()
    if answer == "unknown":
        return Unknown("solver answered unknown")
    if answer != "sat":
        raise BackendError(f"unexpected solver answer {answer!r}")
    model = parse_model("\n".join(lines[1:]), q.decls)
    if not eval_pred(q.formula(), model):
        raise BackendError("solver model does not satisfy the query")
    return Invalid(model)


def check_valid(q: Query, backend: Backend = Builtin()) -> Verdict:
    if isinstance(backend, External):
        return external_check(q, backend)
    return builtin_check(q)


class SolverSession:
    """Exclusive handle on a backend; records timing."""

    def __init__(self, backend: Backend = Builtin()):
        self.backend = backend
        self.seconds = 0.0
        self.count = 0
        self._lock = threading.Lock()

    def check(self, q: Query) -> Verdict:
        if not self._lock.acquire(blocking=False):
            raise BackendError("solver session used concurrently")
        try:
            start = time.perf_counter()
            verdict = check_valid(q, self.backend)
            self.seconds += time.perf_counter() - start
            self.count += 1
            return verdict
        finally:
            self._lock.release()


def query_vars(q: Query) -> frozenset:
    out = pred_vars(q.lhs) | pred_vars(q.goal)
    for h in q.hyps:
        out |= pred_vars(h)
    return out
