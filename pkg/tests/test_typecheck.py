import pytest

from lazyref.logic import Sort
from lazyref.parser import desugar, parse_expr, parse_program, parse_type
from lazyref.semantics import CBN, eval_expr
from lazyref.smt import Invalid, Valid
from lazyref.syntax import INT_DIV, Fix, alpha_eq_type, show_type
from lazyref.typecheck import (
    SERIOUS_ESCAPE,
    SUBTYPING_FAILED,
    TERMINATION_METRIC,
    WELL_FORMEDNESS,
    Checker,
    CheckMode,
    Report,
    _Abort,
    check_program,
    has_trivial_type,
)

from conftest import load

NAT = parse_type("Nat")
INT = parse_type("Int")


def t(src):
    return parse_type(src)


def e(src):
    return parse_expr(src)


def aborts(fn, kind):
    with pytest.raises(_Abort) as info:
        fn()
    assert info.value.error.kind == kind


# -- well-formedness

def test_wf_accepts_refinement_over_trivial_binders():
    Checker().wf((), t("{v:Int | v >= 0}"))
    Checker().wf((("x", NAT),), t("y:{v:Int | v > x} -> {v:Int | v > y}"))


def test_wf_rejects_refinement_mentioning_serious_binder():
    aborts(lambda: Checker().wf((("b", INT_DIV),), t("{v:Int | v > b}")), WELL_FORMEDNESS)


def test_wf_rejects_refined_serious_type():
    from lazyref.syntax import Label, RBase
    refined = RBase("v", INT.base, Label.DIV, e("v >= 0"))
    aborts(lambda: Checker().wf((), refined), WELL_FORMEDNESS)


def test_wf_rejects_ill_sorted_refinement():
    aborts(lambda: Checker().wf((), t("{v:Int | v}")), WELL_FORMEDNESS)


# -- subtyping

def test_sub_good_query_is_valid():
    c = Checker()
    c.sub((("x", NAT), ("y", NAT)), t("{v:Int | v == y + 1}"), t("{v:Int | v > 0}"))
    assert c.errors == []
    (rec,) = c.queries
    assert rec.verdict == Valid()
    assert set(rec.query.decls) == {"x", "y", "v"}


def test_sub_serious_binder_contributes_no_hypothesis():
    c = Checker()
    g = (("a", t("{v:Int | v == 0}")), ("b", INT_DIV))
    c.sub(g, t("{v:Int | v == a}"), t("{v:Int | v > 0}"))
    (err,) = c.errors
    assert err.kind == SUBTYPING_FAILED
    assert isinstance(err.verdict, Invalid) and err.verdict.model == {"a": 0, "v": 0}
    assert "b" not in err.query.decls


def test_trivial_flows_into_serious():
    c = Checker()
    c.sub((), t("{v:Int | v == 3}"), INT_DIV)
    assert c.errors == [] and c.queries == []


def test_serious_into_trivial_is_an_escape():
    c = Checker()
    c.sub((), INT_DIV, INT)
    assert [x.kind for x in c.errors] == [SERIOUS_ESCAPE]


def test_function_subtyping_is_contravariant():
    c = Checker()
    c.sub((), t("x:Int -> {v:Int | v == x}"), t("x:Nat -> {v:Int | v >= 0}"))
    assert c.errors == []
    c.sub((), t("x:Nat -> Int"), t("x:Int -> Int"))
    assert [x.kind for x in c.errors] == [SUBTYPING_FAILED]


# -- synthesis and checking

def test_synth_variable_singletons():
    c = Checker()
    assert c.synth((("x", NAT),), e("x")) == t("{v:Int | v == x}")
    assert c.synth((("b", INT_DIV),), e("b")) == INT_DIV


def test_synth_division_requires_nonzero_divisor():
    c = Checker()
    g = (("x", NAT), ("y", NAT))
    c.synth(g, e("x / (y + 1)"))
    assert c.errors == []
    c.synth(g, e("x / y"))
    assert [x.kind for x in c.errors] == [SUBTYPING_FAILED]


def test_check_bad_body():
    c = Checker()
    c.check((("x", NAT), ("y", NAT)), e("y"), t("{v:Int | v > 0}"))
    assert [x.kind for x in c.errors] == [SUBTYPING_FAILED]


def test_check_lambda_against_arrow():
    c = Checker()
    c.check((), e(r"\x:Int. x"), t("x:Int -> Int"))
    assert c.errors == []


def test_ghost_binder_discharges_assert():
    c = Checker()
    g = (("x", INT), ("y", INT), ("z", t("{v:Int | x > y}")))
    c.check(g, e("assert (x > y) 0"), INT)
    assert c.errors == []
    c.check(g[:2], e("assert (x > y) 0"), INT)
    assert [x.kind for x in c.errors] == [SUBTYPING_FAILED]


def test_path_sensitive_branches():
    c = Checker()
    c.check((("x", INT),), e("if x > 0 then 10 / x else 0"), INT)
    assert c.errors == []


def test_annotated_lambda_synthesizes_an_arrow():
    p = parse_expr(r"\x:Int. x")
    assert show_type(Checker().synth((), p)).startswith("x:Int ->")


def test_has_trivial_type():
    assert has_trivial_type(e("1 + 2"))
    assert not has_trivial_type(e("(rec f (x : Int) : ~Int. f x) 0"))
    assert not has_trivial_type(e("1 / 0"))


# -- recursion

def _fix(name):
    p = load(name)
    return p.binding_expr(p.bindings[0])


def test_fib_recursive_binder_type():
    c = Checker()
    w = c.weaken_rec_type((), [("n", NAT)], INT, _fix("fib.lzr"))
    assert alpha_eq_type(w, t("n':{v:Int | 0 <= v && v < n} -> Int"))
    assert all(r.verdict == Valid() for r in c.queries)


def test_ack_recursive_binder_type():
    c = Checker()
    w = c.weaken_rec_type((), [("m", NAT), ("n", NAT)], NAT, _fix("ack.lzr"))
    expected = t("m':Nat -> n':{v:Int | 0 <= v && (m' < m || m' == m && v < n)} -> Nat")
    assert alpha_eq_type(w, expected)


def test_negative_metric_is_rejected():
    p = parse_program("val f :: x:Int -> y:Int -> Int; decreases f [x - y];"
                      "rec f x y = if x > y then f (x - 1) y else 0; main = 0")
    r = check_program(p)
    kinds = [d.kind for d in r.errors]
    assert TERMINATION_METRIC in kinds
    (q,) = [x.query for x in r.check_errors if x.kind == TERMINATION_METRIC]
    assert q.decls == {"x": Sort.INT, "y": Sort.INT}


def test_no_default_metric_without_int_parameter():
    p = parse_program("val f :: b:Bool -> Int; rec f b = f b; main = 0")
    assert [d.kind for d in check_program(p).errors] == [TERMINATION_METRIC]


def test_serious_result_uses_unweakened_binder():
    r = check_program(load("loop.lzr"))
    assert r.safe and r.stats["queries"] == 0
    assert [b.termination for b in r.bindings][0] == "SeriousByAnnotation"


def test_foo_is_rejected_at_its_recursive_call():
    r = check_program(load("foobar.lzr"))
    assert not r.safe
    rules = {d.rule for d in r.errors}
    assert "T-Rec-T" in rules


def test_foo_with_serious_result_then_fails_at_bar():
    r = check_program(load("foobar_serious.lzr"))
    (err,) = r.check_errors
    assert err.kind == SUBTYPING_FAILED
    assert err.query.origin.binding == "main"
    assert isinstance(err.verdict, Invalid) and err.verdict.model["a"] == 0


def test_foobar_family_under_both_modes():
    assert not check_program(load("foobar_serious.lzr")).safe
    assert check_program(load("foobar.lzr"), CheckMode.EAGER_NAIVE).safe
    # a == 0 is not Pos regardless of labels.
    assert not check_program(load("foobar_serious.lzr"), CheckMode.EAGER_NAIVE).safe


# -- programs

@pytest.mark.parametrize("name,safe", [
    ("good.lzr", True), ("bad.lzr", False), ("fib.lzr", True), ("fib5.lzr", True),
    ("ack.lzr", True), ("ack_single.lzr", False), ("baz.lzr", True), ("sum.lzr", True),
    ("countdown.lzr", True), ("loop.lzr", True), ("unsafe_assert.lzr", False),
    ("guarded.lzr", True),
])
def test_corpus_verdicts(name, safe):
    assert check_program(load(name)).safe is safe


def test_mode_monotonicity(corpus):
    for name, p in corpus.items():
        if check_program(p).safe:
            assert check_program(p, CheckMode.EAGER_NAIVE).safe, name


def test_type_preservation_on_constants(corpus):
    """A Safe main evaluating to a constant checks against main's type."""
    for name, p in corpus.items():
        r = check_program(p)
        if not r.safe or r.main_type is None:
            continue
        out = eval_expr(desugar(p), CBN(), 10**6)
        if out.is_value:
            c = Checker()
            c.check((), out.value, r.main_type)
            assert c.errors == [], name


def test_report_json_round_trip():
    r = check_program(load("bad.lzr"))
    assert Report.from_dict(r.to_dict()) == r
    (err,) = r.errors
    assert isinstance(r.queries[err.query_id].verdict, Invalid)


def test_every_binding_reported():
    r = check_program(load("foobar.lzr"))
    assert [b.name for b in r.bindings] == ["foo", "bar", "main"]
    assert isinstance(load("foobar.lzr").binding_expr(load("foobar.lzr").bindings[0]), Fix)
