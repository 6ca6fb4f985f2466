"""Parsing, canonical serialization and decomposition of hybrid queries."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..errors import NoXQueryFilter
from ..model import ExtendedQuery, FlwrQuery, Var, XQueryFilterClause
from .serializer import Serializer, serialize, to_wire
from .sparql import DEFAULT_PREFIXES, parse_extended_query
from .xquery import is_boolean_expr, parse_flwr, parse_xquery


@dataclass(frozen=True)
class DecomposedQuery:
    sparql_instance: ExtendedQuery
    xquery_instance: FlwrQuery
    link_variable: Var


def decompose(q: ExtendedQuery) -> DecomposedQuery:
    """Split ``q`` into its SPARQL instance, XQuery instance and link variable."""
    if not q.where.xquery_filters:
        raise NoXQueryFilter("query has no XQueryFILTER clause; execute it as plain SPARQL")
    clause = q.where.xquery_filters[0]
    where = dataclasses.replace(q.where, xquery_filters=())
    return DecomposedQuery(dataclasses.replace(q, where=where), clause.body, clause.link_variable)


def recompose(d: DecomposedQuery) -> ExtendedQuery:
    """Inverse of :func:`decompose`."""
    q = d.sparql_instance
    clause = XQueryFilterClause(d.xquery_instance, d.link_variable)
    return dataclasses.replace(q, where=dataclasses.replace(q.where, xquery_filters=(clause,)))


__all__ = [
    "DEFAULT_PREFIXES", "DecomposedQuery", "Serializer", "decompose", "is_boolean_expr",
    "parse_extended_query", "parse_flwr", "parse_xquery", "recompose", "serialize", "to_wire",
]
