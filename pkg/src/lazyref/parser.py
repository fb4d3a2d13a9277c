"""Lexer, parser and desugaring for ``.lzr`` source files."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .syntax import (
    BOOL,
    BOOL_DIV,
    INT,
    INT_DIV,
    TRUE,
    App,
    BaseType,
    BoolLit,
    Crash,
    Expr,
    Fix,
    If,
    IntLit,
    Label,
    Lam,
    Let,
    Lex,
    Prim,
    RBase,
    RFun,
    RType,
    Span,
    Var,
    binop,
    free_vars,
    free_vars_type,
    show_expr,
    subst_type,
    show_type,
)


class LazyrefSyntaxError(Exception):
    def __init__(self, message: str, span: Optional[Span] = None):
        super().__init__(f"{span}: {message}" if span else message)
        self.message = message
        self.span = span


class ParseError(LazyrefSyntaxError):
    pass


class ScopeError(LazyrefSyntaxError):
    def __init__(self, name: str, span: Optional[Span] = None):
        super().__init__(f"unbound name {name!r}", span)
        self.name = name


class AnnotationError(LazyrefSyntaxError):
    pass


# ---------------------------------------------------------------------------
# Program structure


@dataclass(frozen=True)
class Signature:
    name: str
    type: RType
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Decreases:
    name: str
    terms: tuple
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Binding:
    name: str
    params: tuple
    body: Expr
    recursive: bool
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    items: tuple
    main: Expr
    main_span: Optional[Span] = field(default=None, compare=False)

    def signature(self, name: str, before: Optional[int] = None) -> Optional[RType]:
        found = None
        for i, item in enumerate(self.items):
            if before is not None and i >= before:
                break
            if isinstance(item, Signature) and item.name == name:
                found = item.type
        return found

    def decreases(self, name: str) -> Optional[Decreases]:
        found = None
        for item in self.items:
            if isinstance(item, Decreases) and item.name == name:
                found = item
        return found

    @property
    def bindings(self) -> list:
        return [i for i in self.items if isinstance(i, Binding)]

    def binding_signature(self, b: Binding) -> Optional[RType]:
        idx = self.items.index(b)
        sig = self.signature(b.name, before=idx)
        return sig if sig is not None else self.signature(b.name)

    def binding_expr(self, b: Binding) -> Expr:
        return binding_expr(b, self.binding_signature(b), self.decreases(b.name))

    def main_signature(self) -> Optional[RType]:
        return self.signature("main")


def _split_arrows(sig: Optional[RType], n: int, where: Binding):
    params = []
    t = sig
    for p in range(n):
        if not isinstance(t, RFun):
            raise AnnotationError(
                f"signature of {where.name!r} has fewer arrows than its {n} parameters", where.span)
        params.append(t)
        t = t.output
    return params


def binding_expr(b: Binding, sig: Optional[RType], dec: Optional[Decreases] = None) -> Expr:
    """The core term a top-level binding stands for."""
    if not b.recursive:
        if not b.params:
            return b.body
        arrows = _split_arrows(sig, len(b.params), b) if sig is not None else [None] * len(b.params)
        body = b.body
        # Arrow binders may differ from parameter names; rename inside types.
        anns = _param_annotations(arrows, b.params)
        for p, ann in reversed(list(zip(b.params, anns))):
            body = Lam(p, ann, body, b.span)
        return body
    arrows = _split_arrows(sig, len(b.params), b)
    anns = _param_annotations(arrows, b.params)
    ret = _rename_ret(sig, b.params)
    body = b.body
    for p, ann in reversed(list(zip(b.params[1:], anns[1:]))):
        body = Lam(p, ann, body, b.span)
    # ret of the Fix is the type after its first parameter
    fix_ret = ret
    for ann, p in reversed(list(zip(anns[1:], b.params[1:]))):
        fix_ret = RFun(p, ann, fix_ret)
    metric = Lex(tuple(b.params), tuple(dec.terms)) if dec is not None else None
    return Fix(b.name, b.params[0], anns[0], fix_ret, metric, body, b.span)


def _rename_all(t: RType, pairs) -> RType:
    """Simultaneous renaming of binder names inside a type."""
    pairs = [(old, new) for old, new in pairs if old != new]
    tmp = [f"%{i}" for i in range(len(pairs))]
    for (old, _), k in zip(pairs, tmp):
        t = subst_type(t, old, Var(k))
    for (_, new), k in zip(pairs, tmp):
        t = subst_type(t, k, Var(new))
    return t


def _param_annotations(arrows, params):
    anns = []
    pairs = []
    for arrow, p in zip(arrows, params):
        if arrow is None:
            anns.append(None)
            continue
        anns.append(_rename_all(arrow.input, pairs))
        pairs = [(o, n) for o, n in pairs if o != arrow.binder] + [(arrow.binder, p)]
    return anns


def _rename_ret(sig, params):
    t = sig
    pairs = []
    for p in params:
        pairs = [(o, n) for o, n in pairs if o != t.binder] + [(t.binder, p)]
        t = t.output
    return _rename_all(t, pairs)


def desugar(p: Program) -> Expr:
    """Nest the top-level bindings around ``main`` as let-expressions."""
    e = p.main
    for b in reversed(p.bindings):
        e = Let(b.name, p.binding_expr(b), e, None, b.span)
    return e


# ---------------------------------------------------------------------------
# Lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>--[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op><=>|==>|::|->|==|/=|<=|>=|&&|\|\||[-+*/<>=\\.:;,|{}()\[\]~])
""", re.VERBOSE)

KEYWORDS = {"val", "decreases", "let", "rec", "in", "if", "then", "else", "true", "false"}


@dataclass
class Token:
    kind: str  # 'int', 'ident', 'kw', 'op', 'eof'
    text: str
    span: Span


def tokenize(src: str) -> list:
    out = []
    pos, line, col = 0, 1, 1
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", Span(line, col))
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind in ("int", "op"):
                out.append(Token(kind, text, Span(line, col)))
            elif kind == "ident":
                out.append(Token("kw" if text in KEYWORDS else "ident", text, Span(line, col)))
            col += len(text)
        pos = m.end()
    out.append(Token("eof", "", Span(line, col)))
    return out


# ---------------------------------------------------------------------------
# Parser

_PRIM_NAMES = {"not", "assert", "error"}
_ALIASES = {
    "Nat": RBase("v", BaseType.INT, Label.FIN, binop("<=", IntLit(0), Var("v"))),
    "Pos": RBase("v", BaseType.INT, Label.FIN, binop("<", IntLit(0), Var("v"))),
}
_CMP_OPS = {"==", "/=", "<", "<=", ">", ">=", "="}


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise ParseError(f"expected {text!r}, found {self.tok.text or 'end of input'!r}", self.tok.span)
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise ParseError(f"expected identifier, found {self.tok.text or 'end of input'!r}", self.tok.span)
        return self.advance()

    # -- program
    def program(self) -> Program:
        items = []
        while True:
            t = self.tok
            if t.kind == "ident" and t.text == "main" and self.peek().text == "=":
                self.advance()
                self.advance()
                main = self.expr()
                if self.at(";"):
                    self.advance()
                if self.tok.kind != "eof":
                    raise ParseError(f"unexpected {self.tok.text!r} after main", self.tok.span)
                return Program(tuple(items), main, t.span)
            if self.at("val"):
                self.advance()
                name = self.ident()
                self.expect("::")
                ty = self.type_()
                self.expect(";")
                items.append(Signature(name.text, ty, t.span))
            elif self.at("decreases"):
                self.advance()
                name = self.ident()
                self.expect("[")
                terms = [self.expr()]
                while self.at(","):
                    self.advance()
                    terms.append(self.expr())
                self.expect("]")
                self.expect(";")
                items.append(Decreases(name.text, tuple(terms), t.span))
            elif self.at("let") or self.at("rec"):
                rec = self.advance().text == "rec"
                name = self.ident()
                params = []
                while self.tok.kind == "ident":
                    params.append(self.advance().text)
                if rec and not params:
                    raise ParseError("recursive binding needs at least one parameter", t.span)
                self.expect("=")
                body = self.expr()
                self.expect(";")
                items.append(Binding(name.text, tuple(params), body, rec, t.span))
            elif t.kind == "eof":
                raise ParseError("missing 'main = ...'", t.span)
            else:
                raise ParseError(f"unexpected {t.text!r}", t.span)

    # -- types
    def type_(self) -> RType:
        t = self.tok
        if t.kind == "ident" and self.peek().text == ":" and t.text not in ("Int", "Bool", "Nat", "Pos"):
            self.advance()
            self.advance()
            dom = self.type_atom()
            self.expect("->")
            return RFun(t.text, dom, self.type_())
        dom = self.type_atom()
        if self.at("->"):
            self.advance()
            return RFun("_", dom, self.type_())
        return dom

    def type_atom(self) -> RType:
        t = self.tok
        if self.at("("):
            self.advance()
            ty = self.type_()
            self.expect(")")
            return ty
        if self.at("~"):
            self.advance()
            b = self.base_type()
            return INT_DIV if b is BaseType.INT else BOOL_DIV
        if self.at("{"):
            self.advance()
            v = self.ident().text
            self.expect(":")
            serious = False
            if self.at("~"):
                self.advance()
                serious = True
            b = self.base_type()
            self.expect("|")
            pred = self.expr()
            self.expect("}")
            if serious:
                if pred != TRUE:
                    raise ParseError("serious types are unrefined; only 'true' is allowed", t.span)
                return RBase(v, b, Label.DIV, TRUE)
            return RBase(v, b, Label.FIN, pred)
        if t.kind == "ident" and t.text in _ALIASES:
            self.advance()
            return _ALIASES[t.text]
        b = self.base_type()
        return INT if b is BaseType.INT else BOOL

    def base_type(self) -> BaseType:
        t = self.ident()
        if t.text == "Int":
            return BaseType.INT
        if t.text == "Bool":
            return BaseType.BOOL
        raise ParseError(f"unknown base type {t.text!r}", t.span)

    # -- expressions
    def expr(self) -> Expr:
        t = self.tok
        if self.at("\\"):
            self.advance()
            x = self.ident().text
            ann = None
            if self.at(":"):
                self.advance()
                ann = self.type_()
            self.expect(".")
            return Lam(x, ann, self.expr(), t.span)
        if self.at("let"):
            self.advance()
            x = self.ident().text
            ann = None
            if self.at(":"):
                self.advance()
                ann = self.type_()
            self.expect("=")
            bound = self.expr()
            self.expect("in")
            return Let(x, bound, self.expr(), ann, t.span)
        if self.at("if"):
            self.advance()
            c = self.expr()
            self.expect("then")
            a = self.expr()
            self.expect("else")
            return If(c, a, self.expr(), t.span)
        if self.at("rec"):
            return self.rec_expr()
        return self.binary(1)

    def rec_expr(self) -> Fix:
        t = self.advance()
        f = self.ident().text
        self.expect("(")
        x = self.ident().text
        self.expect(":")
        ann = self.type_()
        self.expect(")")
        self.expect(":")
        ret = self.type_()
        metric = None
        if self.at("decreases"):
            self.advance()
            self.expect("[")
            terms = [self.expr()]
            while self.at(","):
                self.advance()
                terms.append(self.expr())
            self.expect("]")
            metric = terms
        self.expect(".")
        body = self.expr()
        if metric is not None:
            params = [x]
            b, r = body, ret
            while isinstance(r, RFun) and isinstance(b, Lam):
                params.append(b.param)
                b, r = b.body, r.output
            metric = Lex(tuple(params), tuple(metric))
        return Fix(f, x, ann, ret, metric, body, t.span)

    _LEVELS = {
        1: ({"<=>"}, "right"),
        2: ({"==>"}, "right"),
        3: ({"||"}, "right"),
        4: ({"&&"}, "right"),
        5: (_CMP_OPS, "none"),
        6: ({"+", "-"}, "left"),
        7: ({"*", "/"}, "left"),
    }

    def binary(self, level: int) -> Expr:
        if level > 7:
            return self.unary()
        ops, assoc = self._LEVELS[level]
        left = self.binary(level + 1)
        if assoc == "left":
            while self.tok.kind == "op" and self.tok.text in ops:
                t = self.advance()
                right = self.binary(level + 1)
                left = binop(t.text, left, right, t.span)
            return left
        if self.tok.kind == "op" and self.tok.text in ops:
            t = self.advance()
            op = "==" if t.text == "=" else t.text
            if assoc == "right":
                right = self.binary(level)
            else:
                right = self.binary(level + 1)
                if self.tok.kind == "op" and self.tok.text in ops:
                    raise ParseError(f"comparison operators do not chain ({self.tok.text!r})", self.tok.span)
            return binop(op, left, right, t.span)
        return left

    def unary(self) -> Expr:
        if self.at("-"):
            t = self.advance()
            if self.tok.kind == "int":
                return IntLit(-int(self.advance().text), t.span)
            return binop("-", IntLit(0, t.span), self.unary(), t.span)
        return self.application()

    def _starts_atom(self) -> bool:
        t = self.tok
        if t.kind in ("int", "ident"):
            return True
        if t.kind == "kw" and t.text in ("true", "false"):
            return True
        return t.kind == "op" and t.text == "("

    def application(self) -> Expr:
        e = self.atom()
        while self._starts_atom():
            arg = self.atom()
            e = App(e, arg, e.span)
        return e

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text), t.span)
        if t.kind == "kw" and t.text in ("true", "false"):
            self.advance()
            return BoolLit(t.text == "true", t.span)
        if t.kind == "ident":
            self.advance()
            if t.text in _PRIM_NAMES:
                return Prim(t.text, (), t.span)
            if t.text == "crash":
                return Crash(t.span)
            return Var(t.text, t.span)
        if self.at("("):
            self.advance()
            # operator section such as (+)
            nxt = self.peek()
            if self.tok.kind == "op" and self.tok.text in _SECTION_OPS and nxt.text == ")":
                op = self.advance().text
                self.advance()
                return Prim(op, (), t.span)
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.span)


_SECTION_OPS = {"+", "-", "*", "/", "<", "<=", ">", ">=", "==", "/=", "&&", "||", "==>", "<=>"}


def parse_expr(src: str) -> Expr:
    p = Parser(src)
    e = p.expr()
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p.tok.text!r}", p.tok.span)
    return e


def parse_type(src: str) -> RType:
    p = Parser(src)
    t = p.type_()
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p.tok.text!r}", p.tok.span)
    return t


def parse_program(src: str) -> Program:
    """Parse and scope-check a ``.lzr`` program."""
    prog = Parser(src).program()
    check_scopes(prog)
    return prog


# ---------------------------------------------------------------------------
# Scope and annotation checks


def _check_expr_scope(e: Expr, scope: frozenset):
    missing = free_vars(e) - scope
    if missing:
        name = sorted(missing)[0]
        raise ScopeError(name, _find_var_span(e, name))


def _check_type_scope(t: RType, scope: frozenset, span):
    missing = free_vars_type(t) - scope
    if missing:
        raise ScopeError(sorted(missing)[0], span)


def _find_var_span(e, name):
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Var):
            if x.name == name:
                return x.span
            continue
        for attr in ("fun", "arg", "body", "bound", "cond", "then", "orelse"):
            sub = getattr(x, attr, None)
            if sub is not None:
                stack.append(sub)
    return getattr(e, "span", None)


def check_scopes(p: Program) -> None:
    scope = set()
    for idx, item in enumerate(p.items):
        if isinstance(item, Signature):
            _check_type_scope(item.type, frozenset(scope), item.span)
        elif isinstance(item, Binding):
            sig = p.binding_signature(item)
            if item.recursive and sig is None:
                raise AnnotationError(f"recursive binding {item.name!r} has no signature", item.span)
            if item.params and sig is None:
                raise AnnotationError(f"function {item.name!r} has parameters but no signature", item.span)
            if sig is not None:
                _split_arrows(sig, len(item.params), item)
            inner = set(scope) | set(item.params)
            if item.recursive:
                inner.add(item.name)
            _check_expr_scope(item.body, frozenset(inner))
            dec = p.decreases(item.name)
            if dec is not None:
                if not item.recursive:
                    raise AnnotationError(f"'decreases' given for non-recursive {item.name!r}", dec.span)
                for term in dec.terms:
                    _check_expr_scope(term, frozenset(item.params))
            scope.add(item.name)
        elif isinstance(item, Decreases):
            pass
    _check_expr_scope(p.main, frozenset(scope))
    for item in p.items:
        if isinstance(item, Decreases) and not any(
                isinstance(b, Binding) and b.name == item.name for b in p.items):
            raise ScopeError(item.name, item.span)


# ---------------------------------------------------------------------------
# Printing programs


def show_program(p: Program) -> str:
    lines = []
    for item in p.items:
        if isinstance(item, Signature):
            lines.append(f"val {item.name} :: {show_type(item.type)};")
        elif isinstance(item, Decreases):
            lines.append(f"decreases {item.name} [{', '.join(show_expr(t) for t in item.terms)}];")
        else:
            kw = "rec" if item.recursive else "let"
            head = " ".join((kw, item.name) + tuple(item.params))
            lines.append(f"{head} = {show_expr(item.body)};")
    lines.append(f"main = {show_expr(p.main)}")
    return "\n".join(lines) + "\n"
