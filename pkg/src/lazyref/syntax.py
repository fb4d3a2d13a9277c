"""Abstract syntax of the core lazy calculus: terms, refinement types,
capture-avoiding substitution, alpha-equivalence and pretty printing."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _span():
    return field(default=None, compare=False, repr=False)


class BaseType(enum.Enum):
    INT = "Int"
    BOOL = "Bool"


class Label(enum.Enum):
    FIN = "fin"  # trivial: inhabitants always terminate
    DIV = "div"  # serious: may diverge


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Prim:
    """A primitive constant, possibly partially applied to values."""

    op: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Crash:
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Lam:
    param: str
    ann: Optional["RType"]
    body: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class App:
    fun: "Expr"
    arg: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"
    ann: Optional["RType"] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Lex:
    """Lexicographic metric. ``names`` are local binders matched
    positionally against the function's parameters, so the metric is a
    closed object that substitution never has to look into."""

    names: tuple
    terms: tuple


@dataclass(frozen=True)
class ParamIndex:
    index: int


MetricSpec = Union[None, ParamIndex, Lex]  # None means the default metric


@dataclass(frozen=True)
class Fix:
    """``rec f x. body`` with signature ``x:ann -> ret``; ``ret`` may
    mention ``param``."""

    fname: str
    param: str
    ann: "RType"
    ret: "RType"
    metric: MetricSpec
    body: "Expr"
    span: Optional[Span] = _span()

    @property
    def signature(self) -> "RFun":
        return RFun(self.param, self.ann, self.ret)


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"
    span: Optional[Span] = _span()


Expr = Union[Var, IntLit, BoolLit, Prim, Crash, Lam, App, Let, Fix, If]

# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class RBase:
    binder: str
    base: BaseType
    label: Label
    refinement: Expr

    @property
    def trivial(self) -> bool:
        return self.label is Label.FIN


@dataclass(frozen=True)
class RFun:
    binder: str
    input: "RType"
    output: "RType"

    trivial = True


RType = Union[RBase, RFun]

TRUE = BoolLit(True)


def base(b: BaseType, label: Label = Label.FIN, refinement: Expr = TRUE, binder: str = "v") -> RBase:
    return RBase(binder, b, label, refinement)


INT = base(BaseType.INT)
BOOL = base(BaseType.BOOL)
INT_DIV = base(BaseType.INT, Label.DIV)
BOOL_DIV = base(BaseType.BOOL, Label.DIV)


def is_serious(t: RType) -> bool:
    return isinstance(t, RBase) and t.label is Label.DIV


def result_type(t: RType) -> RType:
    while isinstance(t, RFun):
        t = t.output
    return t


def binop(op: str, left: Expr, right: Expr, span: Optional[Span] = None) -> App:
    return App(App(Prim(op), left, span), right, span)


# ---------------------------------------------------------------------------
# Free variables


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (IntLit, BoolLit, Crash)):
        return frozenset()
    if isinstance(e, Prim):
        return frozenset().union(*(free_vars(a) for a in e.args))
    if isinstance(e, Lam):
        out = free_vars(e.body) - {e.param}
        return out | free_vars_type(e.ann) if e.ann is not None else out
    if isinstance(e, App):
        return free_vars(e.fun) | free_vars(e.arg)
    if isinstance(e, Let):
        out = free_vars(e.bound) | (free_vars(e.body) - {e.name})
        return out | free_vars_type(e.ann) if e.ann is not None else out
    if isinstance(e, Fix):
        inner = (free_vars(e.body) - {e.fname, e.param}) | (free_vars_type(e.ret) - {e.param})
        return inner | free_vars_type(e.ann)
    if isinstance(e, If):
        return free_vars(e.cond) | free_vars(e.then) | free_vars(e.orelse)
    raise TypeError(f"not an expression: {e!r}")


def free_vars_type(t: RType) -> frozenset:
    if isinstance(t, RBase):
        return free_vars(t.refinement) - {t.binder}
    return free_vars_type(t.input) | (free_vars_type(t.output) - {t.binder})


def fresh_name(base_name: str, avoid: Iterable[str]) -> str:
    """Prime ``base_name`` until it is not in ``avoid``."""
    avoid = set(avoid)
    name = base_name + "'"
    while name in avoid:
        name += "'"
    return name


# ---------------------------------------------------------------------------
# Substitution


def subst_expr(e: Expr, x: str, a: Expr) -> Expr:
    """Capture-avoiding ``e[x := a]``."""
    fa = free_vars(a)
    return _subst(e, x, a, fa)


def _rebind(binder: str, body_fv: frozenset, x: str, a_fv: frozenset, extra=()):
    # Returns the binder to use; renames only if capture would happen.
    if binder != x and binder in a_fv and x in body_fv:
        return fresh_name(binder, a_fv | body_fv | {x} | set(extra))
    return binder


def _subst(e: Expr, x: str, a: Expr, fa: frozenset) -> Expr:
    if isinstance(e, Var):
        return a if e.name == x else e
    if isinstance(e, (IntLit, BoolLit, Crash)):
        return e
    if isinstance(e, Prim):
        if not e.args:
            return e
        return Prim(e.op, tuple(_subst(v, x, a, fa) for v in e.args), e.span)
    if isinstance(e, App):
        return App(_subst(e.fun, x, a, fa), _subst(e.arg, x, a, fa), e.span)
    if isinstance(e, If):
        return If(_subst(e.cond, x, a, fa), _subst(e.then, x, a, fa), _subst(e.orelse, x, a, fa), e.span)
    if isinstance(e, Lam):
        ann = _subst_type(e.ann, x, a, fa) if e.ann is not None else None
        if e.param == x:
            return Lam(e.param, ann, e.body, e.span)
        p = _rebind(e.param, free_vars(e.body), x, fa)
        body = e.body if p == e.param else _subst(e.body, e.param, Var(p), frozenset([p]))
        return Lam(p, ann, _subst(body, x, a, fa), e.span)
    if isinstance(e, Let):
        bound = _subst(e.bound, x, a, fa)
        ann = _subst_type(e.ann, x, a, fa) if e.ann is not None else None
        if e.name == x:
            return Let(e.name, bound, e.body, ann, e.span)
        n = _rebind(e.name, free_vars(e.body), x, fa)
        body = e.body if n == e.name else _subst(e.body, e.name, Var(n), frozenset([n]))
        return Let(n, bound, _subst(body, x, a, fa), ann, e.span)
    if isinstance(e, Fix):
        ann = _subst_type(e.ann, x, a, fa)
        if x in (e.fname, e.param):
            # ret sees param, body sees both; x is shadowed in whichever binds it.
            ret = e.ret if x == e.param else _subst_type(e.ret, x, a, fa)
            return Fix(e.fname, e.param, ann, ret, e.metric, e.body, e.span)
        body_fv = free_vars(e.body) | free_vars_type(e.ret)
        f = _rebind(e.fname, free_vars(e.body), x, fa, extra=[e.param])
        p = _rebind(e.param, body_fv, x, fa, extra=[f])
        body, ret = e.body, e.ret
        if f != e.fname:
            body = _subst(body, e.fname, Var(f), frozenset([f]))
        if p != e.param:
            body = _subst(body, e.param, Var(p), frozenset([p]))
            ret = _subst_type(ret, e.param, Var(p), frozenset([p]))
        return Fix(f, p, ann, _subst_type(ret, x, a, fa), e.metric, _subst(body, x, a, fa), e.span)
    raise TypeError(f"not an expression: {e!r}")


def subst_type(t: RType, x: str, a: Expr) -> RType:
    """Capture-avoiding substitution of ``a`` for ``x`` in every refinement."""
    return _subst_type(t, x, a, free_vars(a))


def _subst_type(t: RType, x: str, a: Expr, fa: frozenset) -> RType:
    if isinstance(t, RBase):
        if t.binder == x or x not in free_vars(t.refinement):
            return t
        v = _rebind(t.binder, free_vars(t.refinement), x, fa)
        r = t.refinement if v == t.binder else _subst(t.refinement, t.binder, Var(v), frozenset([v]))
        return RBase(v, t.base, t.label, _subst(r, x, a, fa))
    tin = _subst_type(t.input, x, a, fa)
    if t.binder == x:
        return RFun(t.binder, tin, t.output)
    y = _rebind(t.binder, free_vars_type(t.output), x, fa)
    out = t.output if y == t.binder else _subst_type(t.output, t.binder, Var(y), frozenset([y]))
    return RFun(y, tin, _subst_type(out, x, a, fa))


def rename_type_binder(t: RBase, new: str) -> RBase:
    if t.binder == new:
        return t
    return RBase(new, t.base, t.label, subst_expr(t.refinement, t.binder, Var(new)))


# ---------------------------------------------------------------------------
# Alpha equivalence


def alpha_eq(e1: Expr, e2: Expr) -> bool:
    return _aeq(e1, e2, {}, {})


def alpha_eq_type(t1: RType, t2: RType) -> bool:
    return _aeq_type(t1, t2, {}, {})


def _bind(m1, m2, x1, x2):
    m1 = dict(m1)
    m2 = dict(m2)
    key = object()
    m1[x1] = key
    m2[x2] = key
    return m1, m2


def _aeq(e1, e2, m1, m2) -> bool:
    if type(e1) is not type(e2):
        return False
    if isinstance(e1, Var):
        k1, k2 = m1.get(e1.name), m2.get(e2.name)
        if k1 is None and k2 is None:
            return e1.name == e2.name
        return k1 is k2
    if isinstance(e1, (IntLit, BoolLit)):
        return e1.value == e2.value
    if isinstance(e1, Crash):
        return True
    if isinstance(e1, Prim):
        return e1.op == e2.op and len(e1.args) == len(e2.args) and all(
            _aeq(a, b, m1, m2) for a, b in zip(e1.args, e2.args))
    if isinstance(e1, App):
        return _aeq(e1.fun, e2.fun, m1, m2) and _aeq(e1.arg, e2.arg, m1, m2)
    if isinstance(e1, If):
        return (_aeq(e1.cond, e2.cond, m1, m2) and _aeq(e1.then, e2.then, m1, m2)
                and _aeq(e1.orelse, e2.orelse, m1, m2))
    if isinstance(e1, Lam):
        if (e1.ann is None) != (e2.ann is None):
            return False
        if e1.ann is not None and not _aeq_type(e1.ann, e2.ann, m1, m2):
            return False
        return _aeq(e1.body, e2.body, *_bind(m1, m2, e1.param, e2.param))
    if isinstance(e1, Let):
        if (e1.ann is None) != (e2.ann is None):
            return False
        if e1.ann is not None and not _aeq_type(e1.ann, e2.ann, m1, m2):
            return False
        return _aeq(e1.bound, e2.bound, m1, m2) and _aeq(e1.body, e2.body, *_bind(m1, m2, e1.name, e2.name))
    if isinstance(e1, Fix):
        if not _aeq_type(e1.ann, e2.ann, m1, m2) or not _metric_eq(e1.metric, e2.metric):
            return False
        p1, p2 = _bind(m1, m2, e1.param, e2.param)
        if not _aeq_type(e1.ret, e2.ret, p1, p2):
            return False
        f1, f2 = _bind(p1, p2, e1.fname, e2.fname)
        return _aeq(e1.body, e2.body, f1, f2)
    raise TypeError(f"not an expression: {e1!r}")


def _metric_eq(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Lex):
        if len(a.names) != len(b.names) or len(a.terms) != len(b.terms):
            return False
        m1, m2 = {}, {}
        for x, y in zip(a.names, b.names):
            m1, m2 = _bind(m1, m2, x, y)
        return all(_aeq(s, t, m1, m2) for s, t in zip(a.terms, b.terms))
    return a == b


def _aeq_type(t1, t2, m1, m2) -> bool:
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, RBase):
        return (t1.base is t2.base and t1.label is t2.label
                and _aeq(t1.refinement, t2.refinement, *_bind(m1, m2, t1.binder, t2.binder)))
    return _aeq_type(t1.input, t2.input, m1, m2) and _aeq_type(
        t1.output, t2.output, *_bind(m1, m2, t1.binder, t2.binder))


# ---------------------------------------------------------------------------
# Pretty printing (emits the surface grammar accepted by lazyref.parser)

BINOPS = {
    "<=>": (1, "right"),
    "==>": (2, "right"),
    "||": (3, "right"),
    "&&": (4, "right"),
    "==": (5, "none"), "/=": (5, "none"), "<": (5, "none"),
    "<=": (5, "none"), ">": (5, "none"), ">=": (5, "none"),
    "+": (6, "left"), "-": (6, "left"),
    "*": (7, "left"), "/": (7, "left"),
}
APP_PREC = 8
ATOM_PREC = 9


def _as_binop(e):
    if isinstance(e, App) and isinstance(e.fun, App) and isinstance(e.fun.fun, Prim):
        p = e.fun.fun
        if p.op in BINOPS and not p.args:
            return p.op, e.fun.arg, e.arg
    return None


def show_expr(e: Expr, prec: int = 0) -> str:
    text, own = _show(e)
    return f"({text})" if own < prec else text


def _show(e):
    if isinstance(e, Var):
        return e.name, ATOM_PREC
    if isinstance(e, IntLit):
        return (str(e.value), ATOM_PREC) if e.value >= 0 else (f"({e.value})", ATOM_PREC)
    if isinstance(e, BoolLit):
        return ("true" if e.value else "false"), ATOM_PREC
    if isinstance(e, Crash):
        return "crash", ATOM_PREC
    if isinstance(e, Prim):
        head = f"({e.op})" if e.op in BINOPS else e.op
        if not e.args:
            return head, ATOM_PREC
        return " ".join([head] + [show_expr(a, ATOM_PREC) for a in e.args]), APP_PREC
    b = _as_binop(e)
    if b is not None:
        op, left, right = b
        p, assoc = BINOPS[op]
        lp = p if assoc == "left" else p + 1
        rp = p if assoc == "right" else p + 1
        return f"{show_expr(left, lp)} {op} {show_expr(right, rp)}", p
    if isinstance(e, App):
        return f"{show_expr(e.fun, APP_PREC)} {show_expr(e.arg, ATOM_PREC)}", APP_PREC
    if isinstance(e, Lam):
        if e.ann is None:
            return f"\\{e.param}. {show_expr(e.body)}", 0
        return f"\\{e.param}:{show_type(e.ann, atom=True)}. {show_expr(e.body)}", 0
    if isinstance(e, Let):
        if e.ann is not None:
            return f"let {e.name} : {show_type(e.ann)} = {show_expr(e.bound)} in {show_expr(e.body)}", 0
        return f"let {e.name} = {show_expr(e.bound)} in {show_expr(e.body)}", 0
    if isinstance(e, If):
        return f"if {show_expr(e.cond)} then {show_expr(e.then)} else {show_expr(e.orelse)}", 0
    if isinstance(e, Fix):
        metric = ""
        if isinstance(e.metric, Lex):
            # Metric binders are positional; print them against this fix's parameters.
            params = _fix_params(e)
            terms = e.metric.terms
            if len(params) >= len(e.metric.names):
                for old, new in zip(e.metric.names, params):
                    terms = tuple(subst_expr(t, old, Var(new)) for t in terms)
                metric = " decreases [" + ", ".join(show_expr(t) for t in terms) + "]"
        return (f"rec {e.fname} ({e.param} : {show_type(e.ann)}) : {show_type(e.ret)}"
                f"{metric}. {show_expr(e.body)}"), 0
    raise TypeError(f"not an expression: {e!r}")


def _fix_params(e: Fix) -> list:
    params = [e.param]
    body = e.body
    t = e.ret
    while isinstance(t, RFun) and isinstance(body, Lam):
        params.append(body.param)
        body, t = body.body, t.output
    return params


def show_type(t: RType, atom: bool = False) -> str:
    if isinstance(t, RBase):
        name = t.base.value
        if t.label is Label.DIV:
            return "~" + name
        if t.refinement == TRUE:
            return name
        return f"{{{t.binder}:{name} | {show_expr(t.refinement)}}}"
    text = f"{t.binder}:{show_type(t.input, atom=True)} -> {show_type(t.output)}"
    return f"({text})" if atom else text


def show(x) -> str:
    if isinstance(x, (RBase, RFun)):
        return show_type(x)
    return show_expr(x)
