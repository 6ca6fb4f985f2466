"""Canonical text form for extended SPARQL queries and FLWR queries.

The canonical form is what golden tests compare byte-for-byte:

* one clause per line, two-space indentation per nesting level;
* consecutive triples sharing a subject are written as ``s p o ; p2 o2 .``;
* inside a group: triples, SERVICE blocks, the UNION block, BINDs, FILTERs,
  then the XQueryFILTER clause;
* IRIs are compacted with the prefix map, but no PREFIX lines are emitted
  (see :func:`to_wire` for text sent to an endpoint).
"""

from __future__ import annotations

import re

from ..model import (
    XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING, BinaryOp, Bind, BoolOp,
    Bracketed, Comparison, ContextItem, ElementConstructor, Enclosed, ExtendedQuery, FilterExpr,
    FlwrQuery, FunctionCall, GraphPattern, NumberLit, PathExpr, RdfTerm, Sequence, ServiceClause,
    Step, StringLit, Text, UnaryOp, Var, XqVar,
)
from .sparql import DEFAULT_PREFIXES

INDENT = "  "

_LOCAL = re.compile(r"(?:[A-Za-z0-9_][A-Za-z0-9_\-]*(?:\.[A-Za-z0-9_\-]+)*)?", re.A)
_BARE_NUMBER = {
    XSD_INTEGER: re.compile(r"-?\d+"),
    XSD_DECIMAL: re.compile(r"-?\d*\.\d+"),
    XSD_DOUBLE: re.compile(r"-?(?:\d*\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+)"),
}
_SPARQL_STR_ESC = {"\\": "\\\\", "'": "\\'", "\n": "\\n", "\r": "\\r", "\t": "\\t"}

_SPARQL_PREC = {"||": 1, "&&": 2, "=": 3, "!=": 3, "<": 3, ">": 3, "<=": 3, ">=": 3,
                "+": 4, "-": 4, "*": 5, "/": 5}


class Serializer:
    def __init__(self, prefixes: dict[str, str] | None = None):
        self.prefixes = dict(DEFAULT_PREFIXES if prefixes is None else prefixes)
        # longest namespace first, then prefix name
        self._ns = sorted(self.prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        self.used: set[str] = set()

    # -- terms -----------------------------------------------------------

    def iri(self, value: str) -> str:
        for prefix, ns in self._ns:
            if value.startswith(ns) and _LOCAL.fullmatch(value[len(ns):]):
                self.used.add(prefix)
                return f"{prefix}:{value[len(ns):]}"
        return f"<{value}>"

    def term(self, t) -> str:
        if isinstance(t, Var):
            return "?" + t.name
        if t.is_iri:
            return self.iri(t.lexical)
        if not t.is_literal:
            return "_:" + t.lexical
        if t.lang is None:
            bare = _BARE_NUMBER.get(t.datatype)
            if bare is not None and bare.fullmatch(t.lexical):
                return t.lexical
            if t.datatype == XSD_BOOLEAN and t.lexical in ("true", "false"):
                return t.lexical
        body = "".join(_SPARQL_STR_ESC.get(c, c) for c in t.lexical)
        out = f"'{body}'"
        if t.lang is not None:
            return out + "@" + t.lang
        if t.datatype != XSD_STRING:
            out += "^^" + self.iri(t.datatype)
        return out

    # -- SPARQL expressions ----------------------------------------------

    def sparql_expr(self, e) -> str:
        if isinstance(e, BinaryOp):
            prec = _SPARQL_PREC[e.op]
            left = self._sparql_operand(e.left, prec, right=False, nonassoc=prec == 3)
            right = self._sparql_operand(e.right, prec, right=True, nonassoc=prec == 3)
            return f"{left} {e.op} {right}"
        if isinstance(e, UnaryOp):
            inner = self.sparql_expr(e.operand)
            if isinstance(e.operand, BinaryOp):
                inner = f"({inner})"
            return e.op + inner
        if isinstance(e, Bracketed):
            return f"({self.sparql_expr(e.expr)})"
        return self.term(e)

    def _sparql_operand(self, e, prec: int, right: bool, nonassoc: bool) -> str:
        text = self.sparql_expr(e)
        if isinstance(e, BinaryOp):
            child = _SPARQL_PREC[e.op]
            if child < prec or (child == prec and (right or nonassoc)):
                return f"({text})"
        return text

    # -- SPARQL structure ------------------------------------------------

    def query_lines(self, q: ExtendedQuery) -> list[str]:
        head = ["?" + v.name for v in q.select_vars]
        for agg in q.aggregates:
            arg = "*" if agg.var is None else "?" + agg.var.name
            if agg.distinct:
                arg = "DISTINCT " + arg
            head.append(f"(COUNT({arg}) AS ?{agg.alias.name})")
        lines = ["SELECT " + " ".join(head), "WHERE {"]
        lines += self.group_lines(q.where, 1)
        lines.append("}")
        return lines

    def group_lines(self, g: GraphPattern, depth: int) -> list[str]:
        pad = INDENT * depth
        lines: list[str] = []
        i = 0
        while i < len(g.triples):
            subj = g.triples[i].subject
            parts = []
            while i < len(g.triples) and g.triples[i].subject == subj:
                tp = g.triples[i]
                parts.append(f"{self.term(tp.predicate)} {self.term(tp.object)}")
                i += 1
            lines.append(f"{pad}{self.term(subj)} " + " ; ".join(parts) + " .")
        for svc in g.services:
            lines += self._service_lines(svc, depth)
        for n, alt in enumerate(g.unions):
            if n:
                lines.append(pad + "UNION")
            lines.append(pad + "{")
            lines += self.group_lines(alt, depth + 1)
            lines.append(pad + "}")
        for b in g.binds:
            lines.append(f"{pad}BIND ( {self.sparql_expr(b.expr)} AS ?{b.var.name} ) .")
        for f in g.filters:
            lines.append(f"{pad}FILTER ( {self.sparql_expr(f)} ) .")
        for xf in g.xquery_filters:
            lines.append(pad + "XQueryFILTER (")
            lines += [INDENT * (depth + 1) + ln for ln in self.flwr_lines(xf.body)]
            lines.append(pad + ") .")
        return lines

    def _service_lines(self, svc: ServiceClause, depth: int) -> list[str]:
        pad = INDENT * depth
        lines = [f"{pad}SERVICE {self.iri(svc.endpoint)} {{"]
        if svc.projection is not None:
            inner = INDENT * (depth + 1)
            lines.append(inner + "SELECT " + " ".join("?" + v.name for v in svc.projection))
            lines.append(inner + "WHERE {")
            lines += self.group_lines(svc.pattern, depth + 2)
            lines.append(inner + "}")
        else:
            lines += self.group_lines(svc.pattern, depth + 1)
        lines.append(pad + "}")
        return lines

    # -- XQuery ----------------------------------------------------------

    def flwr_lines(self, q: FlwrQuery) -> list[str]:
        lines = [f"FOR ${fc.var.name} in {self.xq(fc.seq)}" for fc in q.for_clauses]
        lines += [f"LET ${lc.var.name} := {self.xq(lc.expr)}" for lc in q.let_clauses]
        if q.where is not None:
            lines.append("WHERE " + self.xq(q.where))
        lines.append("RETURN " + self.xq(q.return_expr))
        return lines

    def xq(self, e) -> str:
        """Single-line text of an XQuery expression in ExprSingle position."""
        if isinstance(e, FlwrQuery):
            return " ".join(self.flwr_lines(e))
        if isinstance(e, BoolOp):
            left = self._xq_bool_operand(e.left, e.op, right=False)
            right = self._xq_bool_operand(e.right, e.op, right=True)
            return f"{left} {e.op} {right}"
        if isinstance(e, Comparison):
            return f"{self._xq_path_operand(e.left)} {e.op} {self._xq_path_operand(e.right)}"
        if isinstance(e, PathExpr):
            out = "" if e.root is None else self._xq_primary(e.root)
            for n, step in enumerate(e.steps):
                out += self._step(step, first=(n == 0 and e.root is None))
            return out
        return self._xq_primary(e)

    def _xq_bool_operand(self, e, op: str, right: bool) -> str:
        if isinstance(e, FlwrQuery):
            return f"({self.xq(e)})"
        # left-associative; 'and' binds tighter than 'or'
        if isinstance(e, BoolOp) and (right or e.op != op):
            return f"({self.xq(e)})"
        return self.xq(e)

    def _xq_path_operand(self, e) -> str:
        if isinstance(e, (FlwrQuery, BoolOp, Comparison)):
            return f"({self.xq(e)})"
        return self.xq(e)

    def _step(self, s: Step, first: bool) -> str:
        if s.axis == "attribute":
            sep = "@" if first else "/@"
        elif s.axis == "descendant":
            sep = "//"
        else:
            sep = "" if first else "/"
        return sep + s.name + self._preds(s.predicates)

    def _preds(self, preds) -> str:
        return "".join(f"[{self.xq(p)}]" for p in preds)

    def _xq_primary(self, e) -> str:
        if isinstance(e, StringLit):
            return "'" + e.value.replace("&", "&amp;").replace("'", "''") + "'"
        if isinstance(e, NumberLit):
            return e.lexical
        if isinstance(e, XqVar):
            return "$" + e.name
        if isinstance(e, Var):
            return "?" + e.name
        if isinstance(e, ContextItem):
            return "."
        if isinstance(e, FunctionCall):
            return f"{e.name}(" + ", ".join(self.xq(a) for a in e.args) + ")"
        if isinstance(e, Sequence):
            return "(" + ", ".join(self.xq(a) for a in e.items) + ")"
        if isinstance(e, FilterExpr):
            return self._xq_primary(e.base) + self._preds(e.predicates)
        if isinstance(e, ElementConstructor):
            return self._element(e)
        # a non-primary in primary position (only from constructed trees)
        return f"({self.xq(e)})"

    def _element(self, e: ElementConstructor) -> str:
        out = [f"<{e.name}>"]
        for c in e.content:
            if isinstance(c, Text):
                out.append(c.value.replace("&", "&amp;").replace("<", "&lt;")
                           .replace("{", "{{").replace("}", "}}"))
            elif isinstance(c, Enclosed):
                out.append("{" + self.xq(c.expr) + "}")
            else:
                out.append(self._element(c))
        out.append(f"</{e.name}>")
        return "".join(out)


def serialize(ast, prefixes: dict[str, str] | None = None) -> str:
    """Canonical text of an :class:`ExtendedQuery`, :class:`FlwrQuery` or expression."""
    s = Serializer(prefixes)
    if isinstance(ast, ExtendedQuery):
        return "\n".join(s.query_lines(ast)) + "\n"
    if isinstance(ast, FlwrQuery):
        return "\n".join(s.flwr_lines(ast)) + "\n"
    if isinstance(ast, GraphPattern):
        return "\n".join(s.group_lines(ast, 0)) + "\n"
    if isinstance(ast, (RdfTerm, Var, BinaryOp, UnaryOp, Bracketed)):
        return s.sparql_expr(ast)
    if isinstance(ast, Bind):
        return f"BIND ( {s.sparql_expr(ast.expr)} AS ?{ast.var.name} )"
    return s.xq(ast)


def to_wire(q: ExtendedQuery, prefixes: dict[str, str] | None = None) -> str:
    """Canonical text preceded by PREFIX declarations for every prefix used."""
    s = Serializer(prefixes)
    body = "\n".join(s.query_lines(q)) + "\n"
    decl = "".join(f"PREFIX {p}: <{s.prefixes[p]}>\n" for p in sorted(s.used))
    return decl + body
