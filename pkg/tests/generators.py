"""Hypothesis strategies for random SPARQL and FLWR syntax trees.

Trees are built directly from model nodes (not from text), so they exercise
the serializer on shapes the base corpus never shows.
"""

from __future__ import annotations

import dataclasses

from hypothesis import strategies as st

from xqfed.model import (
    XSD_INTEGER, BinaryOp, BoolOp, Bracketed, Comparison, ElementConstructor, Enclosed,
    ExtendedQuery, FlwrQuery, ForClause, FunctionCall, GraphPattern, LetClause, NumberLit,
    PathExpr, RdfTerm, ServiceClause, Step, StringLit, Text, TriplePattern, Var,
    XQueryFilterClause, XqVar,
)

from fixtures import DBPEDIA, EX

ELEMENT_NAMES = ("mail", "body", "leaveDate", "item", "title", "note")
XQ_VARS = ("x", "m", "d", "t")
SPARQL_VARS = ("s", "o", "x", "doc", "pop", "n")
COMPARATORS = ("=", "!=", "<", ">", "<=", ">=")

_text = st.text(alphabet="abcXYZ 019'&.-", min_size=0, max_size=8)
_word = st.text(alphabet="abcdefXYZ019", min_size=1, max_size=6)


# -- XQuery ------------------------------------------------------------------

def _steps(preds, first_relative: bool):
    def build(names, axes, pred_lists, attr):
        steps = []
        for i, (name, axis, pl) in enumerate(zip(names, axes, pred_lists)):
            if i == 0 and first_relative:
                axis = "child"
            steps.append(Step(axis, name, tuple(pl)))
        if attr:
            steps.append(Step("attribute", "lang"))
        return tuple(steps)

    return st.integers(1, 3).flatmap(lambda n: st.builds(
        build,
        st.lists(st.sampled_from(ELEMENT_NAMES), min_size=n, max_size=n),
        st.lists(st.sampled_from(("child", "descendant")), min_size=n, max_size=n),
        st.lists(st.lists(preds, max_size=1), min_size=n, max_size=n),
        st.booleans()))


xq_atoms = st.one_of(
    st.builds(StringLit, _text),
    st.builds(lambda n: NumberLit(str(n)), st.integers(0, 999)),
    st.builds(XqVar, st.sampled_from(XQ_VARS)),
    st.builds(lambda s: FunctionCall("xs:date", (StringLit(s),)),
              st.sampled_from(("2020-03-01", "2021-12-31"))),
)


def _extend(children):
    root = st.one_of(st.builds(XqVar, st.sampled_from(XQ_VARS)),
                     st.builds(lambda s: FunctionCall("doc", (StringLit(s),)),
                               st.sampled_from(("a.xml", "0001.xml"))))
    return st.one_of(
        st.builds(Comparison, st.sampled_from(COMPARATORS), children, children),
        st.builds(BoolOp, st.sampled_from(("and", "or")), children, children),
        st.builds(lambda a, b: FunctionCall("contains", (a, b)), children, children),
        st.builds(lambda n, a: FunctionCall(n, (a,)),
                  st.sampled_from(("not", "exists", "count", "base-uri")), children),
        st.builds(PathExpr, root, _steps(children, False)),
        st.builds(lambda s: PathExpr(None, s), _steps(children, True)),
    )


xq_exprs = st.recursive(xq_atoms, _extend, max_leaves=8)

boolean_heads = st.one_of(
    st.builds(Comparison, st.sampled_from(COMPARATORS), xq_exprs, xq_exprs),
    st.builds(BoolOp, st.sampled_from(("and", "or")), xq_exprs, xq_exprs),
    st.builds(lambda a, b: FunctionCall("contains", (a, b)), xq_exprs, xq_exprs),
    st.builds(lambda n, a: FunctionCall(n, (a,)), st.sampled_from(("not", "exists")), xq_exprs),
)

elements = st.builds(
    lambda inner, word, e: ElementConstructor("tuple", (
        ElementConstructor("doc", (Enclosed(inner),)), Text(word),
        ElementConstructor("bool", (Enclosed(e),)))),
    xq_exprs, _word, boolean_heads)


@st.composite
def flwr_queries(draw, return_exprs=None):
    names = draw(st.lists(st.sampled_from(XQ_VARS), max_size=3, unique=True))
    split = draw(st.integers(0, len(names)))
    fors = tuple(ForClause(XqVar(n), draw(xq_exprs)) for n in names[:split])
    lets = tuple(LetClause(XqVar(n), draw(xq_exprs)) for n in names[split:])
    # a bare WHERE needs a FOR or LET to attach to
    where = draw(st.none() | xq_exprs) if names else None
    ret = draw(return_exprs if return_exprs is not None else st.one_of(xq_exprs, elements))
    return FlwrQuery(fors, lets, where, ret)


# -- SPARQL ------------------------------------------------------------------

_vars = st.builds(Var, st.sampled_from(SPARQL_VARS))
_iris = st.builds(lambda w: RdfTerm.iri(EX + w), st.sampled_from(("Country", "p", "q", "r1")))
_literals = st.one_of(
    st.builds(RdfTerm.literal, _text),
    st.builds(lambda n: RdfTerm.literal(str(n), XSD_INTEGER), st.integers(0, 10**8)),
    st.builds(lambda w: RdfTerm.literal(w, lang="en"), _word),
)


def _triples(ensure: tuple = ()):
    tp = st.builds(TriplePattern, st.one_of(_vars, _iris),
                   st.one_of(_iris, _vars), st.one_of(_vars, _iris, _literals))

    def add(ts, extra):
        return tuple(extra) + tuple(ts)
    return st.builds(add, st.lists(tp, min_size=1, max_size=4),
                     st.just(tuple(TriplePattern(v, RdfTerm.iri(EX + "p"), Var("o"))
                                   for v in ensure)))


def _filters(bound: set):
    if not bound:
        return st.just(())
    comp = st.builds(lambda op, v, lit: BinaryOp(op, v, lit),
                     st.sampled_from(COMPARATORS), st.sampled_from(sorted(bound, key=lambda v: v.name)),
                     _literals)
    expr = st.recursive(comp, lambda c: st.builds(
        lambda op, a, b: BinaryOp(op, Bracketed(a), b), st.sampled_from(("&&", "||")), c, c),
        max_leaves=3)
    return st.lists(expr, max_size=2).map(tuple)


def _vars_of(triples) -> set:
    out = set()
    for tp in triples:
        out |= {t for t in (tp.subject, tp.predicate, tp.object) if isinstance(t, Var)}
    return out


@st.composite
def groups(draw, depth: int = 0, ensure: tuple = ()):
    triples = draw(_triples(ensure))
    bound = _vars_of(triples)
    services = ()
    if depth < 1 and draw(st.booleans()):
        inner = draw(groups(depth + 1))
        inner_vars = sorted(_vars_of(inner.triples), key=lambda v: v.name)
        proj = None
        if inner_vars and draw(st.booleans()):
            proj = tuple(draw(st.lists(st.sampled_from(inner_vars), min_size=1, unique=True)))
        services = (ServiceClause(DBPEDIA, inner, proj),)
    unions = ()
    if depth < 1 and draw(st.booleans()):
        unions = tuple(draw(st.lists(groups(depth + 1), min_size=2, max_size=3)))
    return GraphPattern(triples=triples, filters=draw(_filters(bound)), services=services,
                        unions=unions)


def _doc_filter(link: Var):
    def build(q: FlwrQuery):
        lets = (LetClause(XqVar("__t"), FunctionCall("doc", (link,))),) + q.let_clauses
        return XQueryFilterClause(FlwrQuery(q.for_clauses, lets, q.where, q.return_expr), link)
    return flwr_queries(return_exprs=boolean_heads).map(build)


@st.composite
def extended_queries(draw, with_filter: bool | None = None):
    link = Var("doc")
    where = draw(groups(ensure=(link,)))
    if with_filter is None:
        with_filter = draw(st.booleans())
    if with_filter:
        where = dataclasses.replace(where, xquery_filters=(draw(_doc_filter(link)),))
    bound = sorted(_vars_of(where.triples), key=lambda v: v.name)
    select = tuple(draw(st.lists(st.sampled_from(bound), min_size=1, max_size=3, unique=True)))
    return ExtendedQuery(select, where)
