"""Abstract syntax for the extended SPARQL dialect and the FLWR subset.

All nodes are frozen dataclasses; trees can be shared freely between
threads.  Generic helpers (:func:`iter_nodes`, :func:`transform`) walk any
node by its dataclass fields, so new node types need no visitor plumbing.
"""

from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

from .errors import VariableNotFound

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_BOOLEAN = XSD + "boolean"
XSD_DATE = XSD + "date"
RDF_TYPE = RDF + "type"
RDF_LANGSTRING = RDF + "langString"

_WS = re.compile(r"\s")


class Node:
    """Marker base for every AST node."""

    __slots__ = ()


# ---------------------------------------------------------------------------
# RDF terms and SPARQL structure
# ---------------------------------------------------------------------------


class TermKind(enum.Enum):
    IRI = "uri"
    LITERAL = "literal"
    BNODE = "bnode"


@dataclass(frozen=True)
class RdfTerm(Node):
    kind: TermKind
    lexical: str
    datatype: Optional[str] = None
    lang: Optional[str] = None

    def __post_init__(self):
        if self.kind is TermKind.IRI:
            if not self.lexical or _WS.search(self.lexical):
                raise ValueError(f"invalid IRI {self.lexical!r}")
        if self.lang is not None:
            if self.kind is not TermKind.LITERAL:
                raise ValueError("language tags are only allowed on literals")
            object.__setattr__(self, "lang", self.lang.lower())
            object.__setattr__(self, "datatype", None)
        elif self.kind is TermKind.LITERAL and self.datatype is None:
            # RDF 1.1: simple literals are xsd:string
            object.__setattr__(self, "datatype", XSD_STRING)
        if self.kind is not TermKind.LITERAL and self.datatype is not None:
            raise ValueError("only literals carry a datatype")

    @classmethod
    def iri(cls, value: str) -> "RdfTerm":
        return cls(TermKind.IRI, value)

    @classmethod
    def literal(cls, value: str, datatype: str | None = None, lang: str | None = None) -> "RdfTerm":
        return cls(TermKind.LITERAL, value, datatype, lang)

    @classmethod
    def bnode(cls, label: str) -> "RdfTerm":
        return cls(TermKind.BNODE, label)

    @property
    def is_iri(self) -> bool:
        return self.kind is TermKind.IRI

    @property
    def is_literal(self) -> bool:
        return self.kind is TermKind.LITERAL


@dataclass(frozen=True)
class Var(Node):
    """A SPARQL variable (``?name``); ``name`` excludes the sigil."""

    name: str


VarOrTerm = Union[Var, RdfTerm]


@dataclass(frozen=True)
class TriplePattern(Node):
    subject: VarOrTerm
    predicate: VarOrTerm
    object: VarOrTerm

    def __post_init__(self):
        if isinstance(self.predicate, RdfTerm) and not self.predicate.is_iri:
            raise ValueError("triple pattern predicate must be a variable or IRI")


# SPARQL filter expressions ---------------------------------------------------


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str  # || && = != < > <= >= + - * /
    left: "SparqlExpr"
    right: "SparqlExpr"


@dataclass(frozen=True)
class UnaryOp(Node):
    op: str  # ! - +
    operand: "SparqlExpr"


@dataclass(frozen=True)
class Bracketed(Node):
    """Explicit parentheses, kept so that serialization is canonical."""

    expr: "SparqlExpr"


SparqlExpr = Union[Var, RdfTerm, BinaryOp, UnaryOp, Bracketed]


@dataclass(frozen=True)
class Bind(Node):
    expr: SparqlExpr
    var: Var


@dataclass(frozen=True)
class ServiceClause(Node):
    endpoint: str
    pattern: "GraphPattern"
    # set when the SERVICE body is a sub-SELECT: its projected variables
    projection: Optional[tuple[Var, ...]] = None


@dataclass(frozen=True)
class XQueryFilterClause(Node):
    body: "FlwrQuery"
    link_variable: Var


@dataclass(frozen=True)
class GraphPattern(Node):
    triples: tuple[TriplePattern, ...] = ()
    filters: tuple[SparqlExpr, ...] = ()
    services: tuple[ServiceClause, ...] = ()
    xquery_filters: tuple[XQueryFilterClause, ...] = ()
    # alternatives of a single (possibly one-branch) UNION block
    unions: tuple["GraphPattern", ...] = ()
    binds: tuple[Bind, ...] = ()


@dataclass(frozen=True)
class CountAggregate(Node):
    """``(COUNT([DISTINCT] *|?v) AS ?alias)``; used by cardinality probes."""

    var: Optional[Var]
    distinct: bool
    alias: Var


@dataclass(frozen=True)
class ExtendedQuery(Node):
    select_vars: tuple[Var, ...]
    where: GraphPattern
    aggregates: tuple[CountAggregate, ...] = ()
    source_text: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if not self.select_vars and not self.aggregates:
            raise ValueError("SELECT list must not be empty")


# ---------------------------------------------------------------------------
# XQuery FLWR subset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StringLit(Node):
    value: str


@dataclass(frozen=True)
class NumberLit(Node):
    lexical: str


@dataclass(frozen=True)
class XqVar(Node):
    """An XQuery variable reference (``$name``)."""

    name: str


@dataclass(frozen=True)
class ContextItem(Node):
    pass


@dataclass(frozen=True)
class FunctionCall(Node):
    name: str
    args: tuple["XqExpr", ...] = ()


@dataclass(frozen=True)
class Step(Node):
    axis: str  # child | descendant | attribute
    name: str  # element/attribute name or '*'
    predicates: tuple["XqExpr", ...] = ()


@dataclass(frozen=True)
class PathExpr(Node):
    """``root/step//step...``; ``root=None`` means relative to the context item."""

    root: Optional["XqExpr"]
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class FilterExpr(Node):
    base: "XqExpr"
    predicates: tuple["XqExpr", ...]


@dataclass(frozen=True)
class Comparison(Node):
    op: str  # = != < > <= >=
    left: "XqExpr"
    right: "XqExpr"


@dataclass(frozen=True)
class BoolOp(Node):
    op: str  # and | or
    left: "XqExpr"
    right: "XqExpr"


@dataclass(frozen=True)
class Sequence(Node):
    """A parenthesized expression; ``()`` is the empty sequence."""

    items: tuple["XqExpr", ...]


@dataclass(frozen=True)
class Text(Node):
    value: str


@dataclass(frozen=True)
class Enclosed(Node):
    expr: "XqExpr"


@dataclass(frozen=True)
class ElementConstructor(Node):
    name: str
    content: tuple[Union[Text, Enclosed, "ElementConstructor"], ...] = ()


@dataclass(frozen=True)
class ForClause(Node):
    var: XqVar
    seq: "XqExpr"


@dataclass(frozen=True)
class LetClause(Node):
    var: XqVar
    expr: "XqExpr"


@dataclass(frozen=True)
class FlwrQuery(Node):
    for_clauses: tuple[ForClause, ...]
    let_clauses: tuple[LetClause, ...]
    where: Optional["XqExpr"]
    return_expr: "XqExpr"


XqExpr = Union[StringLit, NumberLit, XqVar, Var, ContextItem, FunctionCall, PathExpr,
               FilterExpr, Comparison, BoolOp, Sequence, ElementConstructor, FlwrQuery]


# ---------------------------------------------------------------------------
# generic traversal
# ---------------------------------------------------------------------------


def _child_values(node: Node):
    for f in dataclasses.fields(node):
        if not f.compare:
            continue
        yield getattr(node, f.name)


def iter_nodes(node) -> Iterator[Node]:
    """Pre-order walk over ``node`` and every nested node."""
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, tuple):
            stack.extend(reversed(cur))
            continue
        if not isinstance(cur, Node):
            continue
        yield cur
        if isinstance(cur, (RdfTerm, Var, XqVar, StringLit, NumberLit, Text, ContextItem)):
            continue
        stack.extend(reversed(list(_child_values(cur))))


def count_nodes(node) -> int:
    return sum(1 for _ in iter_nodes(node))


def transform(node, fn: Callable[[Node], Optional[Node]]):
    """Rebuild ``node`` top-down; ``fn`` returns a replacement or ``None``.

    A replacement is not descended into.
    """
    if isinstance(node, tuple):
        return tuple(transform(n, fn) for n in node)
    if not isinstance(node, Node):
        return node
    replaced = fn(node)
    if replaced is not None:
        return replaced
    if isinstance(node, (RdfTerm, Var, XqVar, StringLit, NumberLit, Text, ContextItem)):
        return node
    changes = {}
    for f in dataclasses.fields(node):
        if not f.compare:
            continue
        old = getattr(node, f.name)
        new = transform(old, fn)
        if new is not old and new != old:
            changes[f.name] = new
    return dataclasses.replace(node, **changes) if changes else node


def sparql_vars_in(node) -> set[Var]:
    return {n for n in iter_nodes(node) if isinstance(n, Var)}


def xq_var_names(node) -> set[str]:
    names = set()
    for n in iter_nodes(node):
        if isinstance(n, XqVar):
            names.add(n.name)
    return names


def free_variables(pattern: GraphPattern) -> set[Var]:
    """Every SPARQL variable mentioned anywhere in ``pattern``."""
    return sparql_vars_in(pattern)


def binding_variables(pattern: GraphPattern) -> set[Var]:
    """Variables that can be *bound* by ``pattern`` (triples, services, binds)."""
    out: set[Var] = set()
    for tp in pattern.triples:
        out |= sparql_vars_in(tp)
    for svc in pattern.services:
        out |= set(svc.projection) if svc.projection is not None else binding_variables(svc.pattern)
    for alt in pattern.unions:
        out |= binding_variables(alt)
    for b in pattern.binds:
        out.add(b.var)
    return out


def triple_pattern_count(pattern: GraphPattern) -> int:
    return sum(1 for n in iter_nodes(pattern) if isinstance(n, TriplePattern))


def substitute_variable(q: FlwrQuery, v: Var, value: str) -> FlwrQuery:
    """Replace every occurrence of SPARQL variable ``v`` by a string literal."""
    if v not in sparql_vars_in(q):
        raise VariableNotFound(f"?{v.name} does not occur in the XQuery")
    lit = StringLit(value)
    return transform(q, lambda n: lit if n == v else None)


def substitute_sparql_var(node, v: Var, term) -> Node:
    """Replace ``v`` by ``term`` throughout a SPARQL tree."""
    return transform(node, lambda n: term if n == v else None)


def strip_filters(pattern: GraphPattern) -> GraphPattern:
    """Remove FILTER and XQueryFILTER clauses at every nesting level."""
    return GraphPattern(
        triples=pattern.triples,
        filters=(),
        services=tuple(dataclasses.replace(s, pattern=strip_filters(s.pattern))
                       for s in pattern.services),
        xquery_filters=(),
        unions=tuple(strip_filters(a) for a in pattern.unions),
        binds=pattern.binds,
    )
