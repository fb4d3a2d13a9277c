"""Small-step evaluation parameterized by a force predicate.

The force predicate decides whether an argument or let-bound expression is
evaluated before it is substituted.  Never forcing gives call-by-name,
forcing every non-value gives call-by-value, and forcing exactly the
(provably) trivial non-values gives optimistic evaluation.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .constants import arity, delta
from .syntax import (
    App,
    BoolLit,
    Crash,
    Expr,
    Fix,
    If,
    IntLit,
    Lam,
    Let,
    Prim,
    Var,
    show_expr,
    subst_expr,
)

DEFAULT_FUEL = 100_000

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))


def is_value(e: Expr) -> bool:
    return isinstance(e, (IntLit, BoolLit, Prim, Lam, Fix))


def is_constant(e: Expr) -> bool:
    return isinstance(e, (IntLit, BoolLit))


# ---------------------------------------------------------------------------
# Strategies


@dataclass(frozen=True)
class FuelProbe:
    """Deems ``e`` trivial when call-by-name reaches a non-crash value
    within ``fuel`` steps. Sound but incomplete: a false answer only means
    the probe ran out."""

    fuel: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.fuel < 1:
            raise ValueError("probe fuel must be at least 1")

    def trivial(self, e: Expr) -> bool:
        try:
            return self._cache[e]
        except KeyError:
            pass
        out = is_trivial_probe(e, self.fuel)
        self._cache[e] = out
        return out


@dataclass(frozen=True)
class LabelFromChecker:
    """Deems ``e`` trivial when the sound checker gives it a trivial type."""

    classify: Callable[[Expr], bool]
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @classmethod
    def sound(cls) -> "LabelFromChecker":
        from .typecheck import has_trivial_type
        return cls(has_trivial_type)

    def trivial(self, e: Expr) -> bool:
        try:
            return self._cache[e]
        except KeyError:
            pass
        out = self.classify(e)
        self._cache[e] = out
        return out


TrivialityOracle = Union[FuelProbe, LabelFromChecker]


@dataclass(frozen=True)
class CBN:
    name = "cbn"


@dataclass(frozen=True)
class CBV:
    name = "cbv"


@dataclass(frozen=True)
class OPT:
    oracle: TrivialityOracle
    name = "opt"


Strategy = Union[CBN, CBV, OPT]


def force(s: Strategy, e: Expr) -> bool:
    if isinstance(s, CBN):
        return False
    if is_value(e):
        return False
    if isinstance(s, CBV):
        return True
    return s.oracle.trivial(e)


# ---------------------------------------------------------------------------
# Single steps


@dataclass(frozen=True)
class Stepped:
    expr: Expr


@dataclass(frozen=True)
class AlreadyValue:
    pass


@dataclass(frozen=True)
class Stuck:
    reason: str


StepResult = Union[Stepped, AlreadyValue, Stuck]


class _StuckError(Exception):
    pass


def step(e: Expr, s: Strategy) -> StepResult:
    if is_value(e):
        return AlreadyValue()
    if isinstance(e, Crash):
        return Stuck("crash")
    try:
        return Stepped(_step(e, s))
    except _StuckError as exc:
        return Stuck(str(exc))


def _sub_step(e: Expr, s: Strategy, rebuild) -> Expr:
    # A crash inside a forced position aborts the whole term.
    out = _step(e, s)
    if isinstance(out, Crash):
        return out
    return rebuild(out)


def _prim_spine(e: App):
    """The application nodes of ``c e1 .. en`` (innermost first) when the
    head is a constant and the arguments do not exceed its arity."""
    nodes = []
    while isinstance(e, App):
        nodes.append(e)
        e = e.fun
    if not isinstance(e, Prim) or len(e.args) + len(nodes) > arity(e.op):
        return None
    nodes.reverse()
    return nodes


def _step_prim(e: App, head: Prim, nodes: list, s: Strategy) -> Expr:
    """Constants need their arguments as values, under every strategy:
    the leftmost non-value argument steps; once all are values a saturated
    application reduces by delta and a partial one becomes a value."""
    args = [n.arg for n in nodes]
    for i, a in enumerate(args):
        if not is_value(a):
            def rebuild(a2, i=i):
                out: Expr = head
                for j, n in enumerate(nodes):
                    out = App(out, a2 if j == i else n.arg, n.span)
                return out
            return _sub_step(a, s, rebuild)
    full = head.args + tuple(args)
    if len(full) < arity(head.op):
        return Prim(head.op, full, head.span)
    out = delta(head.op, full)
    if out is None:
        raise _StuckError(f"ill-typed primitive application {show_expr(e)}")
    return out


def _step(e: Expr, s: Strategy) -> Expr:
    if isinstance(e, App):
        f, a = e.fun, e.arg
        nodes = _prim_spine(e)
        if nodes is not None:
            return _step_prim(e, nodes[0].fun, nodes, s)
        if not is_value(f):
            return _sub_step(f, s, lambda f2: App(f2, a, e.span))
        if isinstance(f, Prim):
            raise _StuckError(f"too many arguments for {f.op}")
        if isinstance(f, (Lam, Fix)):
            if force(s, a):
                return _sub_step(a, s, lambda a2: App(f, a2, e.span))
            if isinstance(f, Lam):
                return subst_expr(f.body, f.param, a)
            return subst_expr(subst_expr(f.body, f.param, a), f.fname, f)
        raise _StuckError(f"applying a non-function {show_expr(f)}")
    if isinstance(e, Let):
        if force(s, e.bound):
            return _sub_step(e.bound, s, lambda b2: Let(e.name, b2, e.body, e.ann, e.span))
        return subst_expr(e.body, e.name, e.bound)
    if isinstance(e, If):
        if not is_value(e.cond):
            return _sub_step(e.cond, s, lambda c2: If(c2, e.then, e.orelse, e.span))
        if isinstance(e.cond, BoolLit):
            return e.then if e.cond.value else e.orelse
        raise _StuckError(f"non-boolean condition {show_expr(e.cond)}")
    if isinstance(e, Var):
        raise _StuckError(f"free variable {e.name}")
    if isinstance(e, Crash):
        raise _StuckError("crash")
    raise _StuckError(f"no rule applies to {show_expr(e)}")


# ---------------------------------------------------------------------------
# Fuel-bounded evaluation

VALUE, CRASH, FUEL, STUCK = "value", "crash", "fuel_exhausted", "stuck"


@dataclass(frozen=True)
class Outcome:
    result: str  # one of VALUE, CRASH, FUEL, STUCK
    value: Optional[Expr]
    steps: int
    trace: tuple = ()
    reason: str = ""

    @property
    def is_value(self) -> bool:
        return self.result == VALUE

    def describe(self) -> str:
        if self.result == VALUE:
            return f"value {show_expr(self.value)}"
        if self.result == CRASH:
            return "crash"
        if self.result == FUEL:
            return "fuel exhausted"
        return f"stuck: {self.reason}"


def eval_expr(e: Expr, s: Strategy, fuel: int = DEFAULT_FUEL, trace: bool = False) -> Outcome:
    """Iterate ``step`` at most ``fuel`` times."""
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    seen = [e] if trace else None
    steps = 0
    while True:
        if isinstance(e, Crash):
            return Outcome(CRASH, None, steps, tuple(seen or ()))
        if is_value(e):
            return Outcome(VALUE, e, steps, tuple(seen or ()))
        if steps >= fuel:
            return Outcome(FUEL, None, steps, tuple(seen or ()))
        try:
            r = step(e, s)
        except RecursionError:
            # Terms nested beyond the interpreter's stack are a budget
            # exhaustion, like running out of steps.
            return Outcome(FUEL, None, steps, tuple(seen or ()), "term nesting exceeds the evaluator's depth limit")
        if isinstance(r, Stuck):
            return Outcome(STUCK, None, steps, tuple(seen or ()), r.reason)
        e = r.expr
        steps += 1
        if trace:
            seen.append(e)


def format_trace(outcome: Outcome) -> str:
    return "\n".join(f"{i}: {show_expr(t)}" for i, t in enumerate(outcome.trace))


def is_trivial_probe(e: Expr, fuel: int) -> bool:
    return eval_expr(e, CBN(), fuel).result == VALUE


# ---------------------------------------------------------------------------
# Differential comparison

AGREE, DISAGREE, INCONCLUSIVE = "agree", "disagree", "inconclusive"


@dataclass(frozen=True)
class AgreementReport:
    status: str
    cbn: Outcome
    opt: Outcome

    @property
    def constant(self) -> Optional[Expr]:
        if self.status == AGREE and self.cbn.result == VALUE:
            return self.cbn.value
        return None


def compare_strategies(e: Expr, fuel: int = DEFAULT_FUEL, oracle: Optional[TrivialityOracle] = None) -> AgreementReport:
    """Run call-by-name and optimistic evaluation side by side.

    Agreement is only claimed for constant results (or both crashing);
    functional values are reported inconclusive.
    """
    oracle = oracle if oracle is not None else FuelProbe(max(1, fuel))
    lazy = eval_expr(e, CBN(), fuel)
    opt = eval_expr(e, OPT(oracle), fuel)
    if FUEL in (lazy.result, opt.result):
        return AgreementReport(INCONCLUSIVE, lazy, opt)
    if lazy.result == CRASH and opt.result == CRASH:
        return AgreementReport(AGREE, lazy, opt)
    if lazy.result == VALUE and opt.result == VALUE:
        if is_constant(lazy.value) and is_constant(opt.value):
            status = AGREE if lazy.value == opt.value else DISAGREE
            return AgreementReport(status, lazy, opt)
        if is_constant(lazy.value) or is_constant(opt.value):
            return AgreementReport(DISAGREE, lazy, opt)
        return AgreementReport(INCONCLUSIVE, lazy, opt)
    return AgreementReport(DISAGREE, lazy, opt)
