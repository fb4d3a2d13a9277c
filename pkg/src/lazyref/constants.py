"""Primitive constants: refined signatures and evaluation (delta) rules."""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Optional

from .syntax import (
    App,
    BOOL,
    INT,
    BaseType,
    BoolLit,
    Crash,
    Expr,
    IntLit,
    Label,
    Prim,
    RBase,
    RFun,
    RType,
    Var,
    binop,
)


class CrashResult:
    """Sentinel returned by delta for inputs outside a primitive's domain."""

    def __repr__(self):
        return "CRASH"


CRASH = CrashResult()


@dataclass(frozen=True)
class Constant:
    name: str
    arity: int
    signature: Optional[RType]  # None for ``error``, which is monomorphized per use
    delta: Callable


def _refined(b: BaseType, refinement: Expr) -> RBase:
    return RBase("v", b, Label.FIN, refinement)


def _v() -> Var:
    return Var("v")


def int_literal_type(n: int) -> RBase:
    return _refined(BaseType.INT, binop("==", _v(), IntLit(n)))


def bool_literal_type(b: bool) -> RBase:
    return _refined(BaseType.BOOL, binop("==", _v(), BoolLit(b)))


def _arith(op):
    def delta(x, y):
        if type(x) is not int or type(y) is not int:
            return None
        return op(x, y)
    return delta


def _div(x, y):
    if type(x) is not int or type(y) is not int:
        return None
    if y == 0:
        return CRASH
    return x // y


def _cmp(op):
    def delta(x, y):
        if type(x) is not int or type(y) is not int:
            return None
        return op(x, y)
    return delta


def _logic(op):
    def delta(*xs):
        if any(type(x) is not bool for x in xs):
            return None
        return op(*xs)
    return delta


def _assert(b, y):
    if type(b) is not bool or type(y) is not int:
        return None
    return y if b else CRASH


def _error(_):
    return CRASH


def _binary(name: str, arg: BaseType, res: BaseType) -> RType:
    x, y = Var("x"), Var("y")
    tx = RBase("v", arg, Label.FIN, BoolLit(True))
    return RFun("x", tx, RFun("y", tx, _refined(res, binop("==", _v(), binop(name, x, y)))))


def _not(e: Expr) -> Expr:
    return App(Prim("not"), e)


def _build_table() -> dict:
    table = {}

    def add(name, arity, sig, delta):
        table[name] = Constant(name, arity, sig, delta)

    for name, fn in (("+", operator.add), ("-", operator.sub), ("*", operator.mul)):
        add(name, 2, _binary(name, BaseType.INT, BaseType.INT), _arith(fn))
    add("/", 2, RFun("x", INT, RFun("y", _refined(BaseType.INT, binop("/=", _v(), IntLit(0))), INT)), _div)
    for name, fn in (("<", operator.lt), ("<=", operator.le), (">", operator.gt),
                     (">=", operator.ge), ("==", operator.eq), ("/=", operator.ne)):
        add(name, 2, _binary(name, BaseType.INT, BaseType.BOOL), _cmp(fn))
    add("&&", 2, _binary("&&", BaseType.BOOL, BaseType.BOOL), _logic(lambda a, b: a and b))
    add("||", 2, _binary("||", BaseType.BOOL, BaseType.BOOL), _logic(lambda a, b: a or b))
    add("==>", 2, _binary("==>", BaseType.BOOL, BaseType.BOOL), _logic(lambda a, b: (not a) or b))
    add("<=>", 2, _binary("<=>", BaseType.BOOL, BaseType.BOOL), _logic(lambda a, b: a == b))
    add("not", 1, RFun("x", BOOL, _refined(BaseType.BOOL, binop("==", _v(), _not(Var("x"))))),
        _logic(lambda a: not a))
    add("assert", 2, RFun("b", _refined(BaseType.BOOL, Var("v")),
                          RFun("y", INT, _refined(BaseType.INT, binop("==", _v(), Var("y"))))), _assert)
    add("error", 1, None, _error)
    return table


_TABLE = _build_table()


def const_table() -> dict:
    return dict(_TABLE)


def arity(op: str) -> int:
    return _TABLE[op].arity


def error_signature(result: RType) -> RFun:
    """``error`` at the locally expected type."""
    return RFun("x", _refined(BaseType.INT, BoolLit(False)), result)


def value_of(e: Expr):
    if isinstance(e, (IntLit, BoolLit)):
        return e.value
    return None


def to_value(x) -> Expr:
    if type(x) is bool:
        return BoolLit(x)
    return IntLit(x)


def delta(op: str, args) -> object:
    """Apply primitive ``op`` to a full tuple of value expressions.

    Returns an expression, ``Crash()``, or None when the arguments are of
    the wrong shape (a stuck, ill-typed redex).
    """
    raw = [value_of(a) for a in args]
    if any(r is None for r in raw):
        return None
    out = _TABLE[op].delta(*raw)
    if out is None:
        return None
    if out is CRASH:
        return Crash()
    return to_value(out)
