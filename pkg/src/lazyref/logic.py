"""The refinement logic: a quantifier-free fragment of linear integer
arithmetic with booleans, and the translation of environments into it."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from .syntax import (
    App,
    BaseType,
    BoolLit,
    Expr,
    IntLit,
    Label,
    Prim,
    RBase,
    Var,
    binop,
    show_expr,
    subst_expr,
)


class Sort(enum.Enum):
    INT = "Int"
    BOOL = "Bool"


def sort_of_base(b: BaseType) -> Sort:
    return Sort.INT if b is BaseType.INT else Sort.BOOL


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PInt:
    value: int


@dataclass(frozen=True)
class PBool:
    value: bool


@dataclass(frozen=True)
class PBin:
    """Binary node. ``op`` is one of ``+ - *`` (terms), ``< <= > >= = !=``
    (atoms) or ``and or => <=>`` (connectives)."""

    op: str
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class PNot:
    arg: "Pred"


Pred = Union[PVar, PInt, PBool, PBin, PNot]

P_TRUE = PBool(True)
P_FALSE = PBool(False)

ARITH = {"+", "-", "*"}
ORDER = {"<", "<=", ">", ">="}
EQUALITY = {"=", "!="}
CONNECTIVES = {"and", "or", "=>", "<=>"}

_FROM_PRIM = {
    "+": "+", "-": "-", "*": "*",
    "<": "<", "<=": "<=", ">": ">", ">=": ">=", "==": "=", "/=": "!=",
    "&&": "and", "||": "or", "==>": "=>", "<=>": "<=>",
}
_TO_PRIM = {v: k for k, v in _FROM_PRIM.items()}


class NotLogical(Exception):
    def __init__(self, reason: str, subterm=None):
        super().__init__(reason)
        self.reason = reason
        self.subterm = subterm


class SortError(Exception):
    def __init__(self, reason: str, subterm=None):
        super().__init__(reason)
        self.subterm = subterm


def conj(ps: Sequence[Pred]) -> Pred:
    ps = [p for p in ps if p != P_TRUE]
    if not ps:
        return P_TRUE
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = PBin("and", p, out)
    return out


def disj(ps: Sequence[Pred]) -> Pred:
    ps = [p for p in ps if p != P_FALSE]
    if not ps:
        return P_FALSE
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = PBin("or", p, out)
    return out


def _is_literal(p: Pred) -> bool:
    return isinstance(p, PInt)


def to_pred(e: Expr) -> Pred:
    """Translate a refinement expression into the logic; raises NotLogical."""
    if isinstance(e, Var):
        return PVar(e.name)
    if isinstance(e, IntLit):
        return PInt(e.value)
    if isinstance(e, BoolLit):
        return PBool(e.value)
    if isinstance(e, App):
        if isinstance(e.fun, Prim) and e.fun.op == "not" and not e.fun.args:
            return PNot(to_pred(e.arg))
        if isinstance(e.fun, App) and isinstance(e.fun.fun, Prim) and not e.fun.fun.args:
            op = e.fun.fun.op
            if op in _FROM_PRIM:
                left, right = to_pred(e.fun.arg), to_pred(e.arg)
                if op == "*" and not (_is_literal(left) or _is_literal(right)):
                    raise NotLogical(f"nonlinear product {show_expr(e)}", e)
                return PBin(_FROM_PRIM[op], left, right)
    raise NotLogical(f"{show_expr(e)} is outside the refinement logic", e)


def is_logical(e: Expr) -> bool:
    try:
        to_pred(e)
    except NotLogical:
        return False
    return True


def pred_to_expr(p: Pred) -> Expr:
    if isinstance(p, PVar):
        return Var(p.name)
    if isinstance(p, PInt):
        return IntLit(p.value)
    if isinstance(p, PBool):
        return BoolLit(p.value)
    if isinstance(p, PNot):
        return App(Prim("not"), pred_to_expr(p.arg))
    return binop(_TO_PRIM[p.op], pred_to_expr(p.left), pred_to_expr(p.right))


def pred_vars(p: Pred) -> frozenset:
    if isinstance(p, PVar):
        return frozenset([p.name])
    if isinstance(p, (PInt, PBool)):
        return frozenset()
    if isinstance(p, PNot):
        return pred_vars(p.arg)
    return pred_vars(p.left) | pred_vars(p.right)


def rename_pred(p: Pred, mapping: Mapping[str, str]) -> Pred:
    if isinstance(p, PVar):
        return PVar(mapping.get(p.name, p.name))
    if isinstance(p, (PInt, PBool)):
        return p
    if isinstance(p, PNot):
        return PNot(rename_pred(p.arg, mapping))
    return PBin(p.op, rename_pred(p.left, mapping), rename_pred(p.right, mapping))


def sort_check(decls: Mapping[str, Sort], p: Pred) -> Sort:
    if isinstance(p, PVar):
        if p.name not in decls:
            raise SortError(f"undeclared variable {p.name}", p)
        return decls[p.name]
    if isinstance(p, PInt):
        return Sort.INT
    if isinstance(p, PBool):
        return Sort.BOOL
    if isinstance(p, PNot):
        if sort_check(decls, p.arg) is not Sort.BOOL:
            raise SortError("'not' expects a boolean", p)
        return Sort.BOOL
    ls, rs = sort_check(decls, p.left), sort_check(decls, p.right)
    if p.op in ARITH:
        if ls is not Sort.INT or rs is not Sort.INT:
            raise SortError(f"'{p.op}' expects integers", p)
        return Sort.INT
    if p.op in ORDER:
        if ls is not Sort.INT or rs is not Sort.INT:
            raise SortError(f"'{p.op}' expects integers", p)
        return Sort.BOOL
    if p.op in EQUALITY:
        if ls is not rs:
            raise SortError(f"'{p.op}' compares {ls.value} with {rs.value}", p)
        return Sort.BOOL
    if ls is not Sort.BOOL or rs is not Sort.BOOL:
        raise SortError(f"'{p.op}' expects booleans", p)
    return Sort.BOOL


def eval_pred(p: Pred, model: Mapping[str, object]):
    """Evaluate under a total assignment (ints and bools)."""
    if isinstance(p, PVar):
        return model[p.name]
    if isinstance(p, (PInt, PBool)):
        return p.value
    if isinstance(p, PNot):
        return not eval_pred(p.arg, model)
    op = p.op
    if op == "and":
        return bool(eval_pred(p.left, model)) and bool(eval_pred(p.right, model))
    if op == "or":
        return bool(eval_pred(p.left, model)) or bool(eval_pred(p.right, model))
    a, b = eval_pred(p.left, model), eval_pred(p.right, model)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op in ("=", "<=>"):
        return a == b
    if op == "!=":
        return a != b
    if op == "=>":
        return (not a) or b
    raise ValueError(op)


def show_pred(p: Pred) -> str:
    return show_expr(pred_to_expr(p))


# ---------------------------------------------------------------------------
# Environments

TEnv = tuple  # of (name, RType) pairs, most recent last


def strict_env(g: TEnv) -> TEnv:
    """Drop every binding of serious base type."""
    return tuple((x, t) for x, t in g if not (isinstance(t, RBase) and t.label is Label.DIV))


def env_decls(g: TEnv) -> dict:
    """Sorts of the trivial base binders of ``g``."""
    return {x: sort_of_base(t.base) for x, t in strict_env(g) if isinstance(t, RBase)}


def embed_env(g: TEnv) -> list:
    """One predicate per trivial base binding, value binder renamed to the
    program binder. Bindings refined by ``true`` contribute nothing."""
    out = []
    for x, t in strict_env(g):
        if not isinstance(t, RBase) or t.refinement == BoolLit(True):
            continue
        out.append(to_pred(subst_expr(t.refinement, t.binder, Var(x))))
    return out


# ---------------------------------------------------------------------------
# Termination metrics


def lex_pred(old: Sequence[Pred], new: Sequence[Pred]) -> Pred:
    """Strict lexicographic decrease of ``new`` below ``old``."""
    if len(old) != len(new):
        raise ValueError(f"metric length mismatch: {len(old)} vs {len(new)}")
    if not old:
        raise ValueError("empty metric")
    cases = []
    for i in range(len(old)):
        eqs = [PBin("=", new[j], old[j]) for j in range(i)]
        cases.append(conj(eqs + [PBin("<", new[i], old[i])]))
    return disj(cases)
