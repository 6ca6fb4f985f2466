"""The three plan rewrites: Parallel, SPARQL-first and XQuery-first."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Optional, Sequence as Seq

from .errors import (
    DocCallAmbiguous, EmptyBindingList, LinkVarNotInDocCall, PlanError, VariableNotInPattern,
)
from .model import (
    Bind, BoolOp, ElementConstructor, Enclosed, ExtendedQuery, FlwrQuery, ForClause, FunctionCall,
    GraphPattern, RdfTerm, Sequence, StringLit, TriplePattern, Var, XqVar, binding_variables,
    iter_nodes, substitute_sparql_var, transform, xq_var_names,
)
from .parser import DecomposedQuery, serialize

DOC_VAR = "__doc"
DEFAULT_CHUNK_LIMIT = 500


class PlanKind(enum.Enum):
    PARALLEL = "Parallel"
    SPARQL_FIRST = "SparqlFirst"
    XQUERY_FIRST = "XqueryFirst"

    @classmethod
    def parse(cls, text: str) -> "PlanKind":
        key = text.strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown plan {text!r} (parallel, sparql-first, xquery-first)")

    @property
    def cli_name(self) -> str:
        return {"Parallel": "parallel", "SparqlFirst": "sparql-first",
                "XqueryFirst": "xquery-first"}[self.value]


@dataclass(frozen=True)
class RewrittenPlanQueries:
    plan: PlanKind
    sparql_text: str
    xquery_text: Optional[str]
    join_required: bool
    join_key_variable: Optional[Var]

    def __post_init__(self):
        if self.plan is PlanKind.XQUERY_FIRST and self.join_required:
            raise ValueError("the XQuery-first plan never needs a join")
        if self.join_required and self.join_key_variable is None:
            raise ValueError("a join needs a key variable")


# ---------------------------------------------------------------------------
# SPARQL side
# ---------------------------------------------------------------------------


def ensure_link_var_selected(q: ExtendedQuery, v: Var) -> ExtendedQuery:
    if v not in binding_variables(q.where):
        raise VariableNotInPattern(f"?{v.name} does not occur in the graph pattern")
    if v in q.select_vars:
        return q
    return dataclasses.replace(q, select_vars=q.select_vars + (v,))


def normalize_doc_ids(doc_ids: Seq[str]) -> list[str]:
    """Deduplicate and sort document identifiers."""
    return sorted(set(doc_ids))


def chunked(items: list, limit: int) -> list[list]:
    if limit < 1:
        raise ValueError("chunk limit must be >= 1")
    return [items[i:i + limit] for i in range(0, len(items), limit)]


def doc_term(doc_id: str, as_iri: bool = False) -> RdfTerm:
    return RdfTerm.iri(doc_id) if as_iri else RdfTerm.literal(doc_id)


def rewrite_sparql_xquery_first(q: ExtendedQuery, link_var: Var, doc_ids: Seq[str], *,
                                doc_id_as_iri: bool = False) -> ExtendedQuery:
    """UNION of replicas of the WHERE clause, one per document identifier.

    When the link variable is itself projected, each branch re-binds it to
    its identifier with BIND so the SELECT list keeps its meaning.
    """
    if not doc_ids:
        raise EmptyBindingList("no document identifiers to push down")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("document identifiers must be duplicate-free")
    if link_var not in binding_variables(q.where):
        raise VariableNotInPattern(f"?{link_var.name} does not occur in the graph pattern")
    if not doc_id_as_iri and any(n.predicate == link_var for n in iter_nodes(q.where)
                                 if isinstance(n, TriplePattern)):
        raise PlanError(f"?{link_var.name} is used as a predicate; literal document "
                        "identifiers cannot replace it")
    keep = link_var in q.select_vars
    branches = []
    for doc_id in doc_ids:
        term = doc_term(doc_id, doc_id_as_iri)
        branch = substitute_sparql_var(q.where, link_var, term)
        if keep:
            branch = dataclasses.replace(branch, binds=branch.binds + (Bind(term, link_var),))
        branches.append(branch)
    if len(branches) == 1:
        where = branches[0]
    else:
        where = GraphPattern(unions=tuple(branches))
    return dataclasses.replace(q, where=where)


# ---------------------------------------------------------------------------
# XQuery side
# ---------------------------------------------------------------------------


def _doc_calls(x: FlwrQuery, link_var: Var) -> list[FunctionCall]:
    return [n for n in iter_nodes(x)
            if isinstance(n, FunctionCall) and n.name == "doc" and n.args == (link_var,)]


def _check_doc_call(x: FlwrQuery, link_var: Var) -> None:
    calls = _doc_calls(x, link_var)
    if not calls:
        raise LinkVarNotInDocCall(f"?{link_var.name} must appear as the argument of doc()")
    if len(calls) > 1:
        raise DocCallAmbiguous(f"?{link_var.name} appears in {len(calls)} doc() calls")
    total = sum(1 for n in iter_nodes(x) if n == link_var)
    if total != 1:
        raise LinkVarNotInDocCall(f"?{link_var.name} is used outside its doc() call")


def fresh_doc_var(x: FlwrQuery) -> XqVar:
    taken = xq_var_names(x)
    if DOC_VAR not in taken:
        return XqVar(DOC_VAR)
    n = 1
    while f"{DOC_VAR}{n}" in taken:
        n += 1
    return XqVar(f"{DOC_VAR}{n}")


def _replace_doc_call(x: FlwrQuery, link_var: Var, var: XqVar) -> FlwrQuery:
    target = FunctionCall("doc", (link_var,))
    return transform(x, lambda n: var if n == target else None)


def _conjoin(left, right):
    # explicit parentheses keep the original operands intact when re-parsed
    def wrap(e):
        return Sequence((e,)) if isinstance(e, (BoolOp, FlwrQuery)) else e
    return BoolOp("and", wrap(left), wrap(right))


def rewrite_xquery_parallel(x: FlwrQuery, link_var: Var, collection_name: str) -> FlwrQuery:
    _check_doc_call(x, link_var)
    var = fresh_doc_var(x)
    body = _replace_doc_call(x, link_var, var)
    cond = body.return_expr
    where = cond if body.where is None else _conjoin(body.where, cond)
    return FlwrQuery(
        (ForClause(var, FunctionCall("collection", (StringLit(collection_name),))),)
        + body.for_clauses,
        body.let_clauses,
        where,
        FunctionCall("base-uri", (var,)),
    )


def rewrite_xquery_sparql_first(x: FlwrQuery, link_var: Var, doc_ids: Seq[str]) -> FlwrQuery:
    if not doc_ids:
        raise EmptyBindingList("no SPARQL bindings to push down")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("document identifiers must be duplicate-free")
    _check_doc_call(x, link_var)
    var = fresh_doc_var(x)
    body = _replace_doc_call(x, link_var, var)
    seq = Sequence(tuple(StringLit(d) for d in doc_ids))
    ret = ElementConstructor("tuple", (
        ElementConstructor("doc", (Enclosed(var),)),
        ElementConstructor("bool", (Enclosed(body.return_expr),)),
    ))
    return FlwrQuery((ForClause(var, seq),) + body.for_clauses, body.let_clauses, body.where, ret)


# ---------------------------------------------------------------------------
# plan assembly
# ---------------------------------------------------------------------------


def plan_queries(d: DecomposedQuery, plan: PlanKind, *, collection_name: str,
                 doc_ids: Seq[str] | None = None, prefixes: dict[str, str] | None = None,
                 doc_id_as_iri: bool = False) -> RewrittenPlanQueries:
    """Rewritten query texts for ``plan`` (canonical form, no PREFIX lines).

    ``doc_ids`` is the pushed-down identifier list; it is required for the
    second stage of the two pushdown plans and ignored by Parallel.
    """
    link = d.link_variable
    if plan is PlanKind.PARALLEL:
        sq = ensure_link_var_selected(d.sparql_instance, link)
        xq = rewrite_xquery_parallel(d.xquery_instance, link, collection_name)
        return RewrittenPlanQueries(plan, serialize(sq, prefixes), serialize(xq, prefixes),
                                    True, link)
    ids = normalize_doc_ids(doc_ids or [])
    if plan is PlanKind.SPARQL_FIRST:
        sq = ensure_link_var_selected(d.sparql_instance, link)
        xq_text = None
        if ids:
            xq_text = serialize(rewrite_xquery_sparql_first(d.xquery_instance, link, ids), prefixes)
        return RewrittenPlanQueries(plan, serialize(sq, prefixes), xq_text, True, link)
    xq = rewrite_xquery_parallel(d.xquery_instance, link, collection_name)
    sparql_text = ""
    if ids:
        sparql_text = serialize(rewrite_sparql_xquery_first(d.sparql_instance, link, ids,
                                                            doc_id_as_iri=doc_id_as_iri), prefixes)
    return RewrittenPlanQueries(plan, sparql_text, serialize(xq, prefixes), False, None)


__all__ = [
    "DEFAULT_CHUNK_LIMIT", "DOC_VAR", "PlanKind", "RewrittenPlanQueries", "chunked", "doc_term",
    "ensure_link_var_selected", "fresh_doc_var", "normalize_doc_ids", "plan_queries",
    "rewrite_sparql_xquery_first", "rewrite_xquery_parallel", "rewrite_xquery_sparql_first",
]
