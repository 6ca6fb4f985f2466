"""Brute-force reference evaluators used to check the engines and the plans.

They share only the AST types with the package.  The SPARQL matcher works
bottom-up over a flat triple list (no indexes, no reordering); the XQuery
interpreter walks ElementTree documents directly.
"""

from __future__ import annotations

import datetime as dt
from collections import Counter
from decimal import Decimal, InvalidOperation
from xml.etree import ElementTree as ET

from xqfed.model import (
    Bind, BinaryOp, BoolOp, Bracketed, Comparison, ContextItem, ElementConstructor, Enclosed,
    FilterExpr, FlwrQuery, FunctionCall, GraphPattern, NumberLit, PathExpr, RdfTerm, Sequence,
    StringLit, Text, UnaryOp, Var, XqVar,
)
from xqfed.results import term_from_json

XSD = "http://www.w3.org/2001/XMLSchema#"
NUMERIC = {XSD + t for t in ("integer", "decimal", "double", "float", "int", "long")}


# ---------------------------------------------------------------------------
# SPARQL
# ---------------------------------------------------------------------------


class OracleError(Exception):
    pass


def _num(t):
    if isinstance(t, RdfTerm) and t.is_literal and t.datatype in NUMERIC:
        try:
            return Decimal(t.lexical)
        except InvalidOperation:
            raise OracleError("bad number") from None
    raise OracleError("not a number")


def _value(t):
    """Comparable Python value of a term, or raise."""
    if t is None:
        raise OracleError("unbound")
    if isinstance(t, (bool, Decimal, str)):
        return t
    if t.is_literal:
        if t.datatype in NUMERIC:
            return _num(t)
        if t.datatype == XSD + "boolean":
            return t.lexical in ("true", "1")
        if t.datatype == XSD + "string" and t.lang is None:
            return t.lexical
    raise OracleError("incomparable")


def sparql_eval(e, sol):
    if isinstance(e, Var):
        if e not in sol or sol[e] is None:
            raise OracleError("unbound")
        return sol[e]
    if isinstance(e, RdfTerm):
        return e
    if isinstance(e, Bracketed):
        return sparql_eval(e.expr, sol)
    if isinstance(e, UnaryOp):
        if e.op == "!":
            return not sparql_truth(e.operand, sol)
        v = _value(sparql_eval(e.operand, sol))
        if not isinstance(v, Decimal):
            raise OracleError("sign of non-number")
        return -v if e.op == "-" else v
    if isinstance(e, BinaryOp):
        if e.op == "||":
            a = _try_truth(e.left, sol)
            b = _try_truth(e.right, sol)
            if a is True or b is True:
                return True
            if a is None or b is None:
                raise OracleError("error in ||")
            return False
        if e.op == "&&":
            a = _try_truth(e.left, sol)
            b = _try_truth(e.right, sol)
            if a is False or b is False:
                return False
            if a is None or b is None:
                raise OracleError("error in &&")
            return True
        left = sparql_eval(e.left, sol)
        right = sparql_eval(e.right, sol)
        if e.op in "+-*/":
            a, b = _value(left), _value(right)
            if not (isinstance(a, Decimal) and isinstance(b, Decimal)):
                raise OracleError("arithmetic on non-numbers")
            if e.op == "/" and b == 0:
                raise OracleError("division by zero")
            return {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else 0}[e.op]
        if e.op in ("=", "!=") and isinstance(left, RdfTerm) and isinstance(right, RdfTerm) \
                and (not left.is_literal or not right.is_literal):
            same = left == right
            return same if e.op == "=" else not same
        a, b = _value(left), _value(right)
        if type(a) is not type(b):
            if isinstance(a, bool) or isinstance(b, bool):
                raise OracleError("mixed comparison")
            raise OracleError("mixed comparison")
        return {"=": a == b, "!=": a != b, "<": a < b, ">": a > b, "<=": a <= b,
                ">=": a >= b}[e.op]
    raise OracleError(f"unsupported expression {e!r}")


def _truth_of(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, Decimal):
        return v != 0
    if isinstance(v, str):
        return v != ""
    val = _value(v)
    return _truth_of(val)


def sparql_truth(e, sol) -> bool:
    return _truth_of(sparql_eval(e, sol))


def _try_truth(e, sol):
    try:
        return sparql_truth(e, sol)
    except OracleError:
        return None


def _unify(tp, triple, sol):
    out = dict(sol)
    for pat, val in zip((tp.subject, tp.predicate, tp.object), triple):
        if isinstance(pat, Var):
            if pat in out and out[pat] != val:
                return None
            out[pat] = val
        elif pat != val:
            return None
    return out


def _compatible_join(left, right):
    out = []
    for a in left:
        for b in right:
            if all(a[k] == b[k] for k in a.keys() & b.keys()):
                merged = dict(a)
                merged.update(b)
                out.append(merged)
    return out


def match_group(g: GraphPattern, graph: list, named: dict) -> list[dict]:
    sols = [{}]
    for tp in g.triples:
        sols = [s2 for s in sols for t in graph if (s2 := _unify(tp, t, s)) is not None]
    for svc in g.services:
        inner = match_group(svc.pattern, named.get(svc.endpoint, []), named)
        if svc.projection is not None:
            inner = [{v: s[v] for v in svc.projection if v in s} for s in inner]
        sols = _compatible_join(sols, inner)
    if g.unions:
        alts = [s for alt in g.unions for s in match_group(alt, graph, named)]
        sols = _compatible_join(sols, alts)
    for b in g.binds:
        new = []
        for s in sols:
            s = dict(s)
            try:
                v = sparql_eval(b.expr, s)
                if isinstance(v, RdfTerm):
                    s[b.var] = v
            except OracleError:
                pass
            new.append(s)
        sols = new
    for f in g.filters:
        sols = [s for s in sols if _try_truth(f, s) is True]
    return sols


def select_rows(q, graph: list, named: dict) -> Counter:
    sols = match_group(q.where, graph, named)
    return Counter(tuple(s.get(v) for v in q.select_vars) for s in sols)


def store_triples(store) -> tuple[list, dict]:
    """Flatten a TripleStore into (default triples, {graph: triples})."""
    default, named = [], {}
    for rec in store.records():
        t = (term_from_json(rec["s"]), term_from_json(rec["p"]), term_from_json(rec["o"]))
        if "g" in rec:
            named.setdefault(rec["g"], []).append(t)
        else:
            default.append(t)
    return default, named


# ---------------------------------------------------------------------------
# XQuery
# ---------------------------------------------------------------------------


class DocNode:
    def __init__(self, uri: str, root: ET.Element):
        self.uri = uri
        self.root = root


class Untyped(str):
    pass


class Ctx:
    """Parents and document order for every element of a document."""

    def __init__(self, docs: dict[str, DocNode]):
        self.docs = docs
        self.parent = {}
        self.order = {}
        self.owner = {}
        n = 0
        for uri in sorted(docs):
            d = docs[uri]
            self.order[id(d)] = n
            n += 1
            for el in d.root.iter():
                self.order[id(el)] = n
                self.owner[id(el)] = d
                n += 1
                for c in el:
                    self.parent[id(c)] = el


def load_docs(texts: dict[str, str]) -> dict[str, DocNode]:
    return {u: DocNode(u, ET.fromstring(t)) for u, t in texts.items()}


def _string(item) -> str:
    if isinstance(item, DocNode):
        return "".join(item.root.itertext())
    if isinstance(item, ET.Element):
        return "".join(item.itertext())
    if isinstance(item, bool):
        return "true" if item else "false"
    if isinstance(item, dt.date):
        return item.isoformat()
    if isinstance(item, float):
        return repr(item)
    return str(item)


def _atom(item):
    if isinstance(item, (DocNode, ET.Element)):
        return Untyped(_string(item))
    return item


def _ebv(seq) -> bool:
    if not seq:
        return False
    first = seq[0]
    if isinstance(first, (DocNode, ET.Element)):
        return True
    if len(seq) > 1:
        raise OracleError("EBV of a multi-item atomic sequence")
    if isinstance(first, bool):
        return first
    if isinstance(first, str):
        return first != ""
    if isinstance(first, (int, float)):
        return first != 0
    raise OracleError("no EBV")


def _cmp(op, a, b) -> bool:
    if isinstance(a, Untyped) and not isinstance(b, Untyped):
        a = _cast_like(a, b)
    elif isinstance(b, Untyped) and not isinstance(a, Untyped):
        b = _cast_like(b, a)
    if isinstance(a, bool) != isinstance(b, bool):
        raise OracleError("type mismatch")
    if isinstance(a, str) != isinstance(b, str):
        raise OracleError("type mismatch")
    return {"=": a == b, "!=": a != b, "<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]


def _cast_like(u: str, other):
    if isinstance(other, dt.date):
        return dt.date.fromisoformat(u.strip())
    if isinstance(other, bool):
        return u.strip() in ("true", "1")
    if isinstance(other, (int, float)):
        return float(u)
    return str(u)


class XQueryOracle:
    def __init__(self, docs: dict[str, DocNode], collections: dict[str, list[str]] | None = None):
        self.docs = docs
        self.ctx = Ctx(docs)
        self.collections = collections or {}

    def flwr(self, q: FlwrQuery, env: dict) -> list:
        tuples = [dict(env)]
        for fc in q.for_clauses:
            tuples = [dict(t, **{fc.var.name: [item]}) for t in tuples
                      for item in self.ev(fc.seq, t, None)]
        for lc in q.let_clauses:
            tuples = [dict(t, **{lc.var.name: self.ev(lc.expr, t, None)}) for t in tuples]
        out = []
        for t in tuples:
            if q.where is None or _ebv(self.ev(q.where, t, None)):
                out.extend(self.ev(q.return_expr, t, None))
        return out

    def _children(self, node):
        el = node.root if isinstance(node, DocNode) else node
        if isinstance(node, DocNode):
            return [el]
        return list(el)

    def _desc_or_self(self, node):
        out = [node]
        root = node.root if isinstance(node, DocNode) else node
        if isinstance(node, DocNode):
            out.extend(root.iter())
        else:
            out.extend(list(root.iter())[1:])
        return out

    def _sort(self, nodes):
        seen = {}
        for n in nodes:
            seen[id(n)] = n
        return sorted(seen.values(), key=lambda n: self.ctx.order.get(id(n), -1))

    def _step(self, ctx_nodes, step, env):
        out = []
        bases = ctx_nodes
        if step.axis == "descendant":
            bases = [d for n in ctx_nodes for d in self._desc_or_self(n)]
            bases = self._sort(bases)
        for n in bases:
            if step.axis == "attribute":
                el = n.root if isinstance(n, DocNode) else n
                cands = [v for k, v in el.attrib.items() if step.name in ("*", k)]
                cands = [Untyped(v) for v in cands]
            else:
                cands = [c for c in self._children(n) if step.name in ("*", c.tag)]
            out.extend(self._filter(cands, step.predicates, env))
        if step.axis == "attribute":
            return out
        return self._sort(out)

    def _filter(self, items, preds, env):
        for p in preds:
            kept = []
            for pos, item in enumerate(items, 1):
                v = self.ev(p, env, item)
                if len(v) == 1 and isinstance(v[0], (int, float)) and not isinstance(v[0], bool):
                    if v[0] == pos:
                        kept.append(item)
                elif _ebv(v):
                    kept.append(item)
            items = kept
        return items

    def ev(self, e, env, ctx_item) -> list:
        if isinstance(e, StringLit):
            return [e.value]
        if isinstance(e, NumberLit):
            return [float(e.lexical)]
        if isinstance(e, XqVar):
            return list(env[e.name])
        if isinstance(e, Var):
            raise OracleError("unsubstituted SPARQL variable")
        if isinstance(e, ContextItem):
            return [ctx_item]
        if isinstance(e, FlwrQuery):
            return self.flwr(e, env)
        if isinstance(e, Sequence):
            return [x for i in e.items for x in self.ev(i, env, ctx_item)]
        if isinstance(e, BoolOp):
            a = _ebv(self.ev(e.left, env, ctx_item))
            if e.op == "and":
                return [a and _ebv(self.ev(e.right, env, ctx_item))]
            return [a or _ebv(self.ev(e.right, env, ctx_item))]
        if isinstance(e, Comparison):
            left = [_atom(x) for x in self.ev(e.left, env, ctx_item)]
            right = [_atom(x) for x in self.ev(e.right, env, ctx_item)]
            return [any(_cmp(e.op, a, b) for a in left for b in right)]
        if isinstance(e, PathExpr):
            if e.root is None:
                nodes = [ctx_item]
            else:
                nodes = self.ev(e.root, env, ctx_item)
            for st in e.steps:
                nodes = self._step(nodes, st, env)
            return nodes
        if isinstance(e, FilterExpr):
            return self._filter(self.ev(e.base, env, ctx_item), e.predicates, env)
        if isinstance(e, FunctionCall):
            return self.call(e, env, ctx_item)
        if isinstance(e, ElementConstructor):
            el = ET.Element(e.name)
            parts = []
            for c in e.content:
                if isinstance(c, Text):
                    parts.append(c.value)
                elif isinstance(c, Enclosed):
                    parts.append(" ".join(_string(x) for x in self.ev(c.expr, env, ctx_item)))
                else:
                    parts.append(ET.tostring(self.ev(c, env, ctx_item)[0], encoding="unicode"))
            el.text = "".join(parts)
            return [el]
        raise OracleError(f"unsupported {type(e).__name__}")

    def call(self, e: FunctionCall, env, ctx_item) -> list:
        args = [self.ev(a, env, ctx_item) for a in e.args]
        name = e.name
        if name == "doc":
            uri = _string(args[0][0])
            if uri not in self.docs:
                raise OracleError(f"no document {uri}")
            return [self.docs[uri]]
        if name == "collection":
            return [self.docs[u] for u in self.collections.get(_string(args[0][0]), [])]
        if name in ("contains", "starts-with", "ends-with"):
            needle = _string(args[1][0]) if args[1] else ""
            hay = [_string(x) for x in args[0]] or [""]
            fn = {"contains": str.__contains__, "starts-with": str.startswith,
                  "ends-with": str.endswith}[name]
            return [any(fn(h, needle) for h in hay)]
        if name == "xs:date":
            return [dt.date.fromisoformat(_string(args[0][0]).strip())]
        if name == "not":
            return [not _ebv(args[0])]
        if name == "boolean":
            return [_ebv(args[0])]
        if name == "exists":
            return [bool(args[0])]
        if name == "empty":
            return [not args[0]]
        if name == "count":
            return [float(len(args[0]))]
        if name == "true":
            return [True]
        if name == "false":
            return [False]
        if name == "base-uri":
            node = args[0][0]
            if isinstance(node, DocNode):
                return [node.uri]
            return [self.ctx.owner[id(node)].uri]
        if name in ("string", "data"):
            return [_string(x) for x in args[0]]
        raise OracleError(f"unsupported function {name}")


def document_satisfies(flwr: FlwrQuery, link: Var, doc_id: str, oracle: XQueryOracle) -> bool:
    """Evaluate the filter body with ``doc(?link)`` bound to ``doc_id``; any true item passes."""
    from xqfed.model import substitute_variable
    body = substitute_variable(flwr, link, doc_id)
    try:
        return any(x is True for x in oracle.flwr(body, {}))
    except OracleError:
        return False


def hybrid_oracle(q, store, docs: dict[str, str]) -> Counter:
    """Reference semantics of a query with one XQueryFILTER, evaluated row by row."""
    graph, named = store_triples(store)
    clause = q.where.xquery_filters[0]
    where = GraphPattern(q.where.triples, q.where.filters, q.where.services, (),
                         q.where.unions, q.where.binds)
    oracle = XQueryOracle(load_docs(docs))
    verdicts = {}
    out = Counter()
    for sol in match_group(where, graph, named):
        term = sol.get(clause.link_variable)
        if term is None:
            continue
        key = term.lexical
        if key not in verdicts:
            verdicts[key] = key in docs and document_satisfies(
                clause.body, clause.link_variable, key, oracle)
        if verdicts[key]:
            out[tuple(sol.get(v) for v in q.select_vars)] += 1
    return out
