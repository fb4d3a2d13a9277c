"""Bidirectional refinement type checking with termination labels.

Base types carry a label: ``Fin`` (trivial, inhabitants reduce to a value)
or ``Div`` (serious, may diverge).  Only trivial base binders contribute
hypotheses to SMT queries; recursive definitions with a trivial result are
checked in an environment where the function may only be called on
metrically smaller arguments.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Optional

from .constants import bool_literal_type, const_table, error_signature, int_literal_type
from .logic import (
    P_TRUE,
    NotLogical,
    PBin,
    PInt,
    Sort,
    SortError,
    TEnv,
    embed_env,
    env_decls,
    lex_pred,
    pred_to_expr,
    pred_vars,
    sort_check,
    sort_of_base,
    to_pred,
)
from .parser import Program
from .smt import Builtin, Origin, Query, SolverSession, Unknown, Valid
from .syntax import (
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
    ParamIndex,
    Prim,
    RBase,
    RFun,
    RType,
    Span,
    TRUE,
    Var,
    alpha_eq_type,
    binop,
    free_vars,
    free_vars_type,
    fresh_name,
    result_type,
    show_expr,
    show_type,
    subst_expr,
    subst_type,
)


class CheckMode(enum.Enum):
    SOUND = "sound"
    EAGER_NAIVE = "eager-naive"  # deliberately unsound: labels erased, no weakening


# Diagnostic kinds
SUBTYPING_FAILED = "SubtypingFailed"
WELL_FORMEDNESS = "WellFormedness"
TERMINATION_METRIC = "TerminationMetric"
SERIOUS_ESCAPE = "SeriousEscape"
LET_ESCAPE = "LetEscape"
ANNOTATION_MISSING = "AnnotationMissing"
SOLVER_UNKNOWN = "SolverUnknown"
SHAPE_MISMATCH = "ShapeMismatch"

TRIVIAL, SERIOUS, SERIOUS_BY_ANNOTATION = "Trivial", "Serious", "SeriousByAnnotation"

FALSE_INT = RBase("v", BaseType.INT, Label.FIN, BoolLit(False))


@dataclass(frozen=True)
class CheckError:
    kind: str
    rule: str
    span: Optional[Span]
    message: str
    query: Optional[Query] = None
    verdict: object = None


class _Abort(Exception):
    """A rule failure that makes the rest of the current binding meaningless."""

    def __init__(self, error: CheckError):
        super().__init__(error.message)
        self.error = error


@dataclass(frozen=True)
class QueryRecord:
    id: int
    query: Query
    verdict: object


# ---------------------------------------------------------------------------
# Helpers on types


def erase_labels_type(t: RType) -> RType:
    if isinstance(t, RBase):
        return RBase(t.binder, t.base, Label.FIN, t.refinement)
    return RFun(t.binder, erase_labels_type(t.input), erase_labels_type(t.output))


def erase_labels(e: Expr) -> Expr:
    """Treat every base type as trivial (the eager-naive reading)."""
    if isinstance(e, (Var, IntLit, BoolLit, Crash)):
        return e
    if isinstance(e, Prim):
        return Prim(e.op, tuple(erase_labels(a) for a in e.args), e.span) if e.args else e
    if isinstance(e, Lam):
        ann = erase_labels_type(e.ann) if e.ann is not None else None
        return Lam(e.param, ann, erase_labels(e.body), e.span)
    if isinstance(e, App):
        return App(erase_labels(e.fun), erase_labels(e.arg), e.span)
    if isinstance(e, Let):
        ann = erase_labels_type(e.ann) if e.ann is not None else None
        return Let(e.name, erase_labels(e.bound), erase_labels(e.body), ann, e.span)
    if isinstance(e, Fix):
        return Fix(e.fname, e.param, erase_labels_type(e.ann), erase_labels_type(e.ret),
                   e.metric, erase_labels(e.body), e.span)
    return If(erase_labels(e.cond), erase_labels(e.then), erase_labels(e.orelse), e.span)


def weaken_occurrences(t: RType, x: str, positive: bool = True) -> RType:
    """Drop every refinement mentioning ``x``: to ``true`` in covariant
    positions and ``false`` in contravariant ones, giving a supertype."""
    if isinstance(t, RBase):
        if x not in free_vars(t.refinement) or t.binder == x:
            return t
        return RBase(t.binder, t.base, t.label, BoolLit(positive))
    tin = weaken_occurrences(t.input, x, not positive)
    if t.binder == x:
        return RFun(t.binder, tin, t.output)
    return RFun(t.binder, tin, weaken_occurrences(t.output, x, positive))


def _conj_expr(a: Expr, b: Expr) -> Expr:
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    return binop("&&", a, b)


def _names(g: TEnv) -> set:
    return {x for x, _ in g}


def lookup(g: TEnv, x: str) -> Optional[RType]:
    for name, t in reversed(g):
        if name == x:
            return t
    return None


def _types_logical(t: RType) -> bool:
    if isinstance(t, RBase):
        try:
            to_pred(t.refinement)
        except NotLogical:
            return False
        return True
    return _types_logical(t.input) and _types_logical(t.output)


# ---------------------------------------------------------------------------
# The checker


class Checker:
    """One check session: environment rules, solver handle, accumulators."""

    def __init__(self, mode: CheckMode = CheckMode.SOUND, backend=None, solver: Optional[SolverSession] = None):
        self.mode = mode
        self.solver = solver if solver is not None else SolverSession(backend or Builtin())
        self.queries: list = []
        self.errors: list = []
        self.weakened: set = set()
        self.binding: Optional[str] = None
        self._span: Optional[Span] = None
        self._guard = 0

    # -- bookkeeping
    def _at(self, e) -> Optional[Span]:
        span = getattr(e, "span", None)
        if span is not None:
            self._span = span
        return self._span

    def fail(self, kind: str, rule: str, message: str, span=None, **extra):
        raise _Abort(CheckError(kind, rule, span or self._span, message, **extra))

    def record(self, error: CheckError):
        self.errors.append(error)

    def fresh(self, x: str, g: TEnv, avoid=()) -> str:
        taken = _names(g) | set(avoid)
        return x if x not in taken else fresh_name(x, taken)

    # -- well-formedness
    def wf(self, g: TEnv, t: RType, rule: str = "WF") -> None:
        if isinstance(t, RFun):
            self.wf(g, t.input, rule)
            self.wf(g + ((t.binder, t.input),), t.output, rule)
            return
        if t.label is Label.DIV:
            if t.refinement != TRUE:
                self.fail(WELL_FORMEDNESS, "WF-Base-⊥", f"serious type {show_type(t)} must be unrefined")
            return
        decls = env_decls(g)
        decls[t.binder] = sort_of_base(t.base)
        try:
            p = to_pred(t.refinement)
            sort = sort_check(decls, p)
        except NotLogical as exc:
            self.fail(WELL_FORMEDNESS, "WF-Base-⊤", f"refinement of {show_type(t)}: {exc.reason}")
        except SortError as exc:
            self.fail(WELL_FORMEDNESS, "WF-Base-⊤", f"refinement of {show_type(t)}: {exc}")
        if sort is not Sort.BOOL:
            self.fail(WELL_FORMEDNESS, "WF-Base-⊤", f"refinement of {show_type(t)} is not a boolean")

    # -- SMT
    def _query(self, g: TEnv, lhs, goal, rule: str, span=None) -> Optional[object]:
        """Build and discharge ``embed(g) => lhs => goal``; returns the verdict."""
        if goal == P_TRUE:
            return None
        hyps = tuple(embed_env(g))
        sorts = env_decls(g)
        q = Query({}, hyps, lhs, goal)
        used = pred_vars(lhs) | pred_vars(goal)
        for h in hyps:
            used |= pred_vars(h)
        decls = {}
        for x in sorted(used):
            if x not in sorts:
                raise AssertionError(f"query mentions {x}, which is not a trivial base binder")
            decls[x] = sorts[x]
        origin = Origin(rule, span or self._span, self.binding)
        q = Query(decls, hyps, lhs, goal, origin)
        verdict = self.solver.check(q)
        self.queries.append(QueryRecord(len(self.queries), q, verdict))
        return verdict

    def _discharge(self, g, lhs, goal, rule, kind=SUBTYPING_FAILED, what="subtyping"):
        verdict = self._query(g, lhs, goal, rule)
        if verdict is None or isinstance(verdict, Valid):
            return
        q = self.queries[-1].query
        if isinstance(verdict, Unknown):
            self.record(CheckError(SOLVER_UNKNOWN, rule, self._span,
                                   f"solver could not decide {what} obligation: {verdict.reason}", q, verdict))
        else:
            self.record(CheckError(kind, rule, self._span,
                                   f"{what} obligation is invalid: {q}; counterexample {verdict}", q, verdict))

    # -- subtyping
    def sub(self, g: TEnv, t1: RType, t2: RType, rule: str = "T-Sub") -> None:
        if alpha_eq_type(t1, t2):
            return  # reflexivity; no obligation
        if isinstance(t1, RBase) and isinstance(t2, RBase):
            if t1.base is not t2.base:
                self.fail(SHAPE_MISMATCH, rule, f"expected {show_type(t2)}, got {show_type(t1)}")
            if t2.label is Label.DIV:
                return  # S-Base-⊥
            if t1.label is Label.DIV:
                self.record(CheckError(SERIOUS_ESCAPE, rule, self._span,
                                       f"a serious {show_type(t1)} is used where trivial {show_type(t2)} is required"))
                return
            if t2.refinement == TRUE:
                return
            v = self.fresh("v", g)
            g2 = g + ((v, RBase(v, t1.base, Label.FIN, TRUE)),)
            lhs = to_pred(subst_expr(t1.refinement, t1.binder, Var(v)))
            goal = to_pred(subst_expr(t2.refinement, t2.binder, Var(v)))
            self._discharge(g2, lhs, goal, rule)
            return
        if isinstance(t1, RFun) and isinstance(t2, RFun):
            self.sub(g, t2.input, t1.input, rule)
            y = self.fresh(t2.binder, g)
            out1 = subst_type(t1.output, t1.binder, Var(y))
            out2 = subst_type(t2.output, t2.binder, Var(y))
            self.sub(g + ((y, t2.input),), out1, out2, rule)
            return
        self.fail(SHAPE_MISMATCH, rule, f"expected {show_type(t2)}, got {show_type(t1)}")

    # -- logical arguments
    def _substitutable(self, g: TEnv, e: Expr) -> bool:
        """``e`` can be copied into a refinement: it is in the logic and
        mentions only trivial base binders."""
        try:
            to_pred(e)
        except NotLogical:
            return False
        return free_vars(e) <= set(env_decls(g))

    # -- synthesis
    def synth(self, g: TEnv, e: Expr) -> RType:
        self._at(e)
        if isinstance(e, IntLit):
            return int_literal_type(e.value)
        if isinstance(e, BoolLit):
            return bool_literal_type(e.value)
        if isinstance(e, Prim):
            if e.args:
                chain = Prim(e.op, (), e.span)
                for a in e.args:
                    chain = App(chain, a, e.span)
                return self.synth(g, chain)
            if e.op == "error":
                return error_signature(FALSE_INT)
            return const_table()[e.op].signature
        if isinstance(e, Crash):
            self.fail(WELL_FORMEDNESS, "T-Const", "crash has no type")
        if isinstance(e, Var):
            t = lookup(g, e.name)
            if t is None:
                self.fail(WELL_FORMEDNESS, "T-Var", f"unbound variable {e.name}")
            if isinstance(t, RBase) and t.label is Label.FIN:
                return RBase("v", t.base, Label.FIN, binop("==", Var("v"), Var(e.name)))  # T-Var-A
            return t  # T-Var-B
        if isinstance(e, Lam):
            if e.ann is None:
                self.fail(ANNOTATION_MISSING, "T-Fun", f"cannot infer the type of parameter {e.param}; add an annotation")
            self.wf(g, e.ann)
            x = self.fresh(e.param, g)
            body = subst_expr(e.body, e.param, Var(x)) if x != e.param else e.body
            t = RFun(x, e.ann, self.synth(g + ((x, e.ann),), body))
            self.wf(g, t)
            return t
        if isinstance(e, App):
            return self._app(g, e, None)
        if isinstance(e, Let):
            return self._let(g, e, None)
        if isinstance(e, If):
            return self._if(g, e, None)
        if isinstance(e, Fix):
            return self.check_fix(g, e)
        raise TypeError(f"not an expression: {e!r}")

    def _head(self, e: Expr) -> Expr:
        while isinstance(e, App):
            e = e.fun
        return e

    def _app(self, g: TEnv, e: App, expected: Optional[RType]) -> RType:
        """Synthesize an application, hiding any names introduced for
        non-logical arguments by weakening the refinements mentioning them."""
        t, ext = self._app_open(g, e, expected)
        for z, _ in reversed(ext):
            t = weaken_occurrences(t, z)
        return t

    def _app_open(self, g: TEnv, e: App, expected: Optional[RType]):
        """Type of an application together with the fresh bindings it
        introduced: a trivial argument outside the logic is named instead of
        copied into the result type, which is sound because it provably
        reduces to a value satisfying its refinement."""
        if isinstance(e.fun, Prim) and e.fun.op == "error" and not e.fun.args:
            result = expected if expected is not None else FALSE_INT
            self.check(g, e.arg, FALSE_INT, "T-App")
            return result, ()
        if isinstance(e.fun, App):
            tf, ext = self._app_open(g, e.fun, None)
        else:
            tf, ext = self.synth(g, e.fun), ()
        self._at(e)
        if not isinstance(tf, RFun):
            self.fail(SHAPE_MISMATCH, "T-App", f"applying {show_expr(e.fun)} of non-function type {show_type(tf)}")
        head = self._head(e)
        rule = "T-Rec-T" if isinstance(head, Var) and head.name in self.weakened else "T-App"
        g2 = g + ext
        x = tf.binder
        dependent = x in free_vars_type(tf.output)
        if not dependent or not (isinstance(tf.input, RBase) and tf.input.trivial) \
                or self._substitutable(g2, e.arg):
            self.check(g2, e.arg, tf.input, rule, site=e.span)
            self._at(e)
            if not dependent:
                return tf.output, ext
            if isinstance(tf.input, RBase) and tf.input.trivial:
                out = subst_type(tf.output, x, e.arg)
                if _types_logical(out):
                    return out, ext
            return weaken_occurrences(tf.output, x), ext
        # Dependent result, trivial input, argument outside the logic.
        if isinstance(e.arg, (App, Var, Prim)):
            s = self.synth(g2, e.arg)
            self._at(e)
            self.sub(g2, s, tf.input, rule)
            if not (isinstance(s, RBase) and s.trivial and s.base is tf.input.base):
                s = tf.input
        else:
            self.check(g2, e.arg, tf.input, rule, site=e.span)
            self._at(e)
            s = tf.input
        self._guard += 1
        z = self.fresh(f"_a{self._guard}", g2)
        ext = ext + ((z, s),)
        return subst_type(tf.output, x, Var(z)), ext

    def _let(self, g: TEnv, e: Let, expected: Optional[RType]) -> Optional[RType]:
        if e.ann is not None:
            self.wf(g, e.ann)
            self.check(g, e.bound, e.ann, "T-Let")
            tx = e.ann
        else:
            tx = self.synth(g, e.bound)
        self._at(e)
        x = self.fresh(e.name, g)
        body = subst_expr(e.body, e.name, Var(x)) if x != e.name else e.body
        g2 = g + ((x, tx),)
        if expected is not None:
            self.check(g2, body, expected, "T-Let")
            return None
        t = self.synth(g2, body)
        self._at(e)
        if x not in free_vars_type(t):
            return t
        if isinstance(tx, RBase) and tx.trivial and self._substitutable(g, e.bound):
            out = subst_type(t, x, e.bound)
            if _types_logical(out):
                return out
        return weaken_occurrences(t, x)

    def _if(self, g: TEnv, e: If, expected: Optional[RType]) -> Optional[RType]:
        tc = self.synth(g, e.cond)
        self._at(e)
        if not (isinstance(tc, RBase) and tc.base is BaseType.BOOL):
            self.fail(SHAPE_MISMATCH, "T-If", f"condition has type {show_type(tc)}, expected Bool")
        serious = tc.label is Label.DIV
        if serious and expected is not None and not (isinstance(expected, RBase) and expected.label is Label.DIV):
            self.record(CheckError(SERIOUS_ESCAPE, "T-If", self._span,
                                   f"serious condition {show_expr(e.cond)} in a context requiring {show_type(expected)}"))
            return None
        g_then, g_else = g, g
        if not serious and self._substitutable(g, e.cond):
            self._guard += 1
            gname = self.fresh(f"_g{self._guard}", g)
            g_then = g + ((gname, RBase("v", BaseType.BOOL, Label.FIN, e.cond)),)
            g_else = g + ((gname, RBase("v", BaseType.BOOL, Label.FIN, App(Prim("not"), e.cond))),)
        if expected is not None:
            self.check(g_then, e.then, expected, "T-If")
            self.check(g_else, e.orelse, expected, "T-If")
            return None
        t1 = self.synth(g_then, e.then)
        t2 = self.synth(g_else, e.orelse)
        self._at(e)
        if not (isinstance(t1, RBase) and isinstance(t2, RBase)):
            self.fail(ANNOTATION_MISSING, "T-If", "cannot join branches of function type; add an annotation")
        if t1.base is not t2.base:
            self.fail(SHAPE_MISMATCH, "T-If", f"branches have types {show_type(t1)} and {show_type(t2)}")
        label = Label.FIN if t1.trivial and t2.trivial and not serious else Label.DIV
        return RBase("v", t1.base, label, TRUE)

    # -- checking
    def check(self, g: TEnv, e: Expr, t: RType, rule: str = "T-Sub", site: Optional[Span] = None) -> None:
        """``site`` overrides the span reported for the final subtyping
        step, e.g. the call whose argument is being checked."""
        self._at(e)
        self._check(g, e, t, rule, site)

    def _boundary(self, e: Expr, site: Optional[Span]) -> None:
        self._at(e)
        if site is not None:
            self._span = site

    def _check(self, g: TEnv, e: Expr, t: RType, rule: str, site: Optional[Span] = None) -> None:
        if isinstance(e, Lam) and isinstance(t, RFun):
            if e.ann is not None and not alpha_eq_type(e.ann, t.input):
                self.wf(g, e.ann)
                self.sub(g, t.input, e.ann, rule)
            x = self.fresh(e.param, g)
            body = subst_expr(e.body, e.param, Var(x)) if x != e.param else e.body
            out = subst_type(t.output, t.binder, Var(x))
            self.check(g + ((x, t.input),), body, out, rule)
            return
        if isinstance(e, Let):
            self._let(g, e, t)
            return
        if isinstance(e, If):
            self._if(g, e, t)
            return
        if isinstance(e, App):
            s, ext = self._app_open(g, e, t)
            self._boundary(e, site)
            self.sub(g + ext, s, t, rule)
            return
        s = self.synth(g, e)
        self._boundary(e, site)
        self.sub(g, s, t, rule)

    # -- recursion
    def check_fix(self, g: TEnv, fix: Fix) -> RType:
        self._at(fix)
        sig = fix.signature
        self.wf(g, sig)
        # Peel the curried parameters covered by the signature.
        f = self.fresh(fix.fname, g)
        taken = _names(g) | {f}
        params = []
        x = self.fresh(fix.param, g, taken)
        taken.add(x)
        body = subst_expr(fix.body, fix.param, Var(x)) if x != fix.param else fix.body
        params.append((x, fix.ann))
        t = subst_type(fix.ret, fix.param, Var(x))
        while isinstance(t, RFun) and isinstance(body, Lam):
            lam = body
            y = self.fresh(lam.param, (), taken)
            taken.add(y)
            if lam.ann is not None and not alpha_eq_type(lam.ann, t.input):
                g_ann = g + tuple(params)
                self.wf(g_ann, lam.ann)
                self.sub(g_ann, t.input, lam.ann, "T-Fun")
            params.append((y, t.input))
            body = subst_expr(lam.body, lam.param, Var(y)) if y != lam.param else lam.body
            t = subst_type(t.output, t.binder, Var(y))
        if f != fix.fname:
            body = subst_expr(body, fix.fname, Var(f))
        renamed_sig = t
        for name, ty in reversed(params):
            renamed_sig = RFun(name, ty, renamed_sig)
        g_params = g + tuple(params)
        result = result_type(sig)
        if self.mode is CheckMode.EAGER_NAIVE or (isinstance(result, RBase) and result.label is Label.DIV):
            fbind, rule = renamed_sig, "T-Rec-S"
        else:
            fbind = self.weaken_rec_type(g, params, t, fix)
            rule = "T-Rec-T"
            self.weakened.add(f)
        try:
            self.check(g_params + ((f, fbind),), body, t, rule)
        finally:
            self.weakened.discard(f)
        return sig

    def _metric_terms(self, g: TEnv, params: list, fix: Fix) -> list:
        names = [p for p, _ in params]
        strict = {p: sort_of_base(ty.base) for p, ty in params
                  if isinstance(ty, RBase) and ty.label is Label.FIN}
        metric = fix.metric
        if metric is None:
            for p, ty in params:
                if isinstance(ty, RBase) and ty.label is Label.FIN and ty.base is BaseType.INT:
                    return [Var(p)]
            self.fail(TERMINATION_METRIC, "T-Rec-T",
                      f"{fix.fname} has no trivial Int parameter to serve as the default metric; add 'decreases'")
        if isinstance(metric, ParamIndex):
            if not 0 <= metric.index < len(params):
                self.fail(TERMINATION_METRIC, "T-Rec-T", f"metric parameter index {metric.index} out of range")
            terms = [Var(names[metric.index])]
        else:
            if len(metric.names) > len(names):
                self.fail(TERMINATION_METRIC, "T-Rec-T",
                          f"metric ranges over {len(metric.names)} parameters but {fix.fname} takes {len(names)}")
            terms = []
            for term in metric.terms:
                for k, old in enumerate(metric.names):
                    term = subst_expr(term, old, Var(f"%{k}"))
                for k in range(len(metric.names)):
                    term = subst_expr(term, f"%{k}", Var(names[k]))
                terms.append(term)
        if not terms:
            self.fail(TERMINATION_METRIC, "T-Rec-T", "empty metric")
        for term in terms:
            try:
                p = to_pred(term)
                sort = sort_check(strict, p)
            except (NotLogical, SortError) as exc:
                self.fail(TERMINATION_METRIC, "T-Rec-T",
                          f"metric term {show_expr(term)} must be a linear Int term over trivial parameters: {exc}")
            if sort is not Sort.INT:
                self.fail(TERMINATION_METRIC, "T-Rec-T", f"metric term {show_expr(term)} is not an Int")
        return terms

    def weaken_rec_type(self, g: TEnv, params: list, out: RType, fix: Fix) -> RType:
        """The recursive binder's type: parameters copied under fresh names,
        with the last parameter the metric mentions restricted to a strictly
        smaller metric value. Also discharges metric nonnegativity."""
        terms = self._metric_terms(g, params, fix)
        names = [p for p, _ in params]
        g_params = g + tuple(params)
        for term in terms:
            self._discharge(g_params, P_TRUE, PBin(">=", to_pred(term), PInt(0)),
                            "T-Rec-T", kind=TERMINATION_METRIC, what="metric nonnegativity")
        taken = _names(g_params) | {fix.fname}
        primed = []
        for p in names:
            q = fresh_name(p, taken)
            taken.add(q)
            primed.append(q)
        rename = list(zip(names, primed))

        def prime(x):
            for old, new in rename:
                x = subst_type(x, old, Var(new)) if isinstance(x, (RBase, RFun)) else subst_expr(x, old, Var(new))
            return x

        old = [to_pred(t) for t in terms]
        new = [to_pred(prime(t)) for t in terms]
        mentioned = set()
        for t in terms:
            mentioned |= free_vars(t)
        last = max(i for i, p in enumerate(names) if p in mentioned) if mentioned else 0
        decrease = pred_to_expr(lex_pred(old, new))
        out_t = prime(out)
        for i in reversed(range(len(params))):
            ty = params[i][1]
            # Earlier parameters are already primed in later inputs.
            for old_name, new_name in rename[:i]:
                ty = subst_type(ty, old_name, Var(new_name))
            if i == last:
                if not (isinstance(ty, RBase) and ty.label is Label.FIN):
                    self.fail(TERMINATION_METRIC, "T-Rec-T", f"metric mentions non-trivial parameter {names[i]}")
                bound = subst_expr(decrease, primed[i], Var(ty.binder))
                ty = RBase(ty.binder, ty.base, ty.label, _conj_expr(ty.refinement, bound))
            out_t = RFun(primed[i], ty, out_t)
        return out_t


def has_trivial_type(e: Expr) -> bool:
    """Does the sound checker give the closed term ``e`` a trivial type?"""
    checker = Checker(CheckMode.SOUND)
    try:
        t = checker.synth((), e)
    except _Abort:
        return False
    except RecursionError:
        return False
    if checker.errors:
        return False
    return not (isinstance(t, RBase) and t.label is Label.DIV)


# ---------------------------------------------------------------------------
# Programs


@dataclass(frozen=True)
class BindingInfo:
    name: str
    type: str
    termination: str


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    rule: str
    span: Optional[str]
    message: str
    query_id: Optional[int] = None


@dataclass
class Report:
    verdict: str
    mode: str
    bindings: list
    errors: list
    stats: dict
    queries: list = field(default_factory=list, compare=False, repr=False)
    main_type: Optional[RType] = field(default=None, compare=False, repr=False)
    check_errors: list = field(default_factory=list, compare=False, repr=False)

    @property
    def safe(self) -> bool:
        return self.verdict == "Safe"

    @property
    def unknown(self) -> bool:
        return any(d.kind == SOLVER_UNKNOWN for d in self.errors)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "bindings": [asdict(b) for b in self.bindings],
            "errors": [asdict(d) for d in self.errors],
            "stats": dict(self.stats),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["verdict"], d["mode"], [BindingInfo(**b) for b in d["bindings"]],
                   [Diagnostic(**x) for x in d["errors"]], dict(d["stats"]))


def _termination(t: RType, annotated: bool) -> str:
    r = result_type(t)
    if isinstance(r, RBase) and r.label is Label.DIV:
        return SERIOUS_BY_ANNOTATION if annotated else SERIOUS
    return TRIVIAL


def check_program(p: Program, mode: CheckMode = CheckMode.SOUND, backend=None) -> Report:
    """Check every top-level binding in order, then ``main``."""
    checker = Checker(mode, backend)
    naive = mode is CheckMode.EAGER_NAIVE
    g: TEnv = ()
    infos = []
    errors: list = []

    def run(name, fn):
        checker.binding = name
        try:
            return fn()
        except _Abort as exc:
            checker.errors.append(exc.error)
            return None

    for b in p.bindings:
        sig = p.binding_signature(b)
        e = p.binding_expr(b)
        if naive:
            e = erase_labels(e)
            sig = erase_labels_type(sig) if sig is not None else None
        checker._span = b.span

        def go(e=e, sig=sig):
            if sig is not None:
                checker.wf(g, sig)
                checker.check(g, e, sig, "T-Sig")
                return sig
            return checker.synth(g, e)

        t = run(b.name, go)
        if t is None:
            t = sig if sig is not None else RBase("v", BaseType.INT, Label.DIV, TRUE)
        g = g + ((b.name, t),)
        infos.append(BindingInfo(b.name, show_type(t), _termination(t, sig is not None)))

    main_sig = p.main_signature()
    if naive and main_sig is not None:
        main_sig = erase_labels_type(main_sig)
    main = erase_labels(p.main) if naive else p.main
    checker._span = p.main_span

    def go_main():
        if main_sig is not None:
            checker.wf(g, main_sig)
            checker.check(g, main, main_sig, "T-Sig")
            return main_sig
        return checker.synth(g, main)

    main_t = run("main", go_main)
    if main_t is not None:
        infos.append(BindingInfo("main", show_type(main_t), _termination(main_t, main_sig is not None)))

    query_ids = {id(r.query): r.id for r in checker.queries}
    for err in checker.errors:
        qid = query_ids.get(id(err.query)) if err.query is not None else None
        errors.append(Diagnostic(err.kind, err.rule, str(err.span) if err.span else None, err.message, qid))
    stats = {"queries": len(checker.queries), "solver_ms": round(checker.solver.seconds * 1000.0, 3)}
    verdict = "Safe" if not errors else "Unsafe"
    return Report(verdict, mode.value, infos, errors, stats, list(checker.queries), main_t,
                  list(checker.errors))
