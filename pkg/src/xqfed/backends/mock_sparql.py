"""In-process SPARQL engine over an indexed triple bag.

Named graphs are keyed by SERVICE endpoint IRI, so ``SERVICE <iri> {...}``
evaluates against the locally seeded graph ``<iri>``.  Evaluation is a
bind-join: each triple pattern extends the current solutions, patterns
ordered greedily by how many positions are already bound, then by how many
triples match their constant positions.
"""

from __future__ import annotations

import json
import threading
import time
from collections import defaultdict
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional

from ..errors import Cancelled, ParseError, UnsupportedFeature
from ..model import (
    XSD, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING, BinaryOp, Bracketed,
    ExtendedQuery, GraphPattern, RdfTerm, TriplePattern, UnaryOp, Var,
)
from ..parser import parse_extended_query
from ..results import BindingTable, term_from_json, term_to_json
from .base import BackendConfig, BackendKind, SparqlBackend

Triple = tuple[RdfTerm, RdfTerm, RdfTerm]
Solution = dict  # Var -> RdfTerm

_INTEGER_TYPES = {XSD_INTEGER} | {XSD + t for t in (
    "int", "long", "short", "byte", "nonNegativeInteger", "positiveInteger",
    "nonPositiveInteger", "negativeInteger", "unsignedInt", "unsignedLong",
    "unsignedShort", "unsignedByte")}
_NUMERIC_TYPES = _INTEGER_TYPES | {XSD_DECIMAL, XSD_DOUBLE, XSD + "float"}


class Graph:
    """Triples with one hash index per bound-position mask."""

    def __init__(self):
        self.triples: list[Triple] = []
        self._seen: set[Triple] = set()
        self._index: dict[tuple, list[Triple]] = defaultdict(list)

    def add(self, s: RdfTerm, p: RdfTerm, o: RdfTerm) -> None:
        t = (s, p, o)
        if t in self._seen:
            return
        self._seen.add(t)
        self.triples.append(t)
        for mask in range(1, 8):
            key = (mask,) + tuple(t[i] if mask & (1 << i) else None for i in range(3))
            self._index[key].append(t)

    def match(self, s, p, o) -> list[Triple]:
        mask = (s is not None) | ((p is not None) << 1) | ((o is not None) << 2)
        if mask == 0:
            return self.triples
        return self._index.get((mask, s, p, o), [])

    def __len__(self) -> int:
        return len(self.triples)


class TripleStore:
    def __init__(self):
        self.default = Graph()
        self.named: dict[str, Graph] = {}

    def graph(self, name: Optional[str]) -> Graph:
        if name is None:
            return self.default
        if name not in self.named:
            self.named[name] = Graph()
        return self.named[name]

    def add(self, s: RdfTerm, p: RdfTerm, o: RdfTerm, graph: Optional[str] = None) -> None:
        self.graph(graph).add(s, p, o)

    def __len__(self) -> int:
        return len(self.default) + sum(len(g) for g in self.named.values())

    # -- fixtures --------------------------------------------------------

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "TripleStore":
        store = cls()
        for rec in records:
            store.add(term_from_json(rec["s"]), term_from_json(rec["p"]),
                      term_from_json(rec["o"]), rec.get("g"))
        return store

    @classmethod
    def load(cls, path: str | Path) -> "TripleStore":
        """Load a JSON Lines fixture: ``{"s": term, "p": term, "o": term, "g"?: iri}``."""
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls.from_records(records)

    def records(self) -> list[dict]:
        out = []
        for name, g in [(None, self.default)] + sorted(self.named.items()):
            for s, p, o in g.triples:
                rec = {"s": term_to_json(s), "p": term_to_json(p), "o": term_to_json(o)}
                if name is not None:
                    rec["g"] = name
                out.append(rec)
        return out

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# FILTER expression evaluation
# ---------------------------------------------------------------------------


class _TypeError(Exception):
    """SPARQL expression error: the enclosing FILTER evaluates to false."""


_TRUE = RdfTerm.literal("true", XSD_BOOLEAN)
_FALSE = RdfTerm.literal("false", XSD_BOOLEAN)


def _numeric(t: RdfTerm):
    if not t.is_literal or t.datatype not in _NUMERIC_TYPES:
        return None
    try:
        if t.datatype in (XSD_DOUBLE, XSD + "float"):
            return float(t.lexical)
        if t.datatype in _INTEGER_TYPES:
            return int(t.lexical)
        return Decimal(t.lexical)
    except (ValueError, InvalidOperation):
        raise _TypeError(f"invalid numeric lexical {t.lexical!r}") from None


def _num_term(value, dtype: str) -> RdfTerm:
    if dtype == XSD_INTEGER:
        return RdfTerm.literal(str(int(value)), XSD_INTEGER)
    if dtype == XSD_DECIMAL:
        return RdfTerm.literal(str(value), XSD_DECIMAL)
    return RdfTerm.literal(repr(float(value)), XSD_DOUBLE)


def _promote(a, b, ta: str, tb: str):
    if XSD_DOUBLE in (ta, tb) or XSD + "float" in (ta, tb):
        return float(a), float(b), XSD_DOUBLE
    if ta in _INTEGER_TYPES and tb in _INTEGER_TYPES:
        return a, b, XSD_INTEGER
    return Decimal(a), Decimal(b), XSD_DECIMAL


def ebv(t: RdfTerm) -> bool:
    if t.is_literal:
        if t.datatype == XSD_BOOLEAN:
            return t.lexical in ("true", "1")
        n = _numeric(t)
        if n is not None:
            return n != 0 and n == n
        if t.datatype == XSD_STRING or t.lang is not None:
            return t.lexical != ""
    raise _TypeError("no effective boolean value")


def _compare(op: str, a: RdfTerm, b: RdfTerm) -> bool:
    na, nb = _numeric(a), _numeric(b)
    if na is not None and nb is not None:
        x, y = na, nb
    elif a.is_literal and b.is_literal and a.datatype == b.datatype and a.lang == b.lang \
            and a.datatype in (XSD_STRING, XSD_BOOLEAN, XSD + "date", XSD + "dateTime"):
        x, y = a.lexical, b.lexical
    elif op in ("=", "!="):
        same = a == b
        if not same and a.is_literal and b.is_literal and a.datatype != b.datatype \
                and a.datatype not in (XSD_STRING,) and b.datatype not in (XSD_STRING,):
            raise _TypeError("cannot compare literals of different datatypes")
        return same if op == "=" else not same
    else:
        raise _TypeError(f"cannot order {a} and {b}")
    return {"=": x == y, "!=": x != y, "<": x < y, ">": x > y, "<=": x <= y, ">=": x >= y}[op]


def eval_expr(e, sol: Solution) -> RdfTerm:
    if isinstance(e, Var):
        t = sol.get(e)
        if t is None:
            raise _TypeError(f"unbound ?{e.name}")
        return t
    if isinstance(e, RdfTerm):
        return e
    if isinstance(e, Bracketed):
        return eval_expr(e.expr, sol)
    if isinstance(e, UnaryOp):
        if e.op == "!":
            return _FALSE if ebv(eval_expr(e.operand, sol)) else _TRUE
        t = eval_expr(e.operand, sol)
        n = _numeric(t)
        if n is None:
            raise _TypeError("unary minus on a non-number")
        return _num_term(-n if e.op == "-" else n, t.datatype if t.datatype in
                         (XSD_DECIMAL, XSD_DOUBLE) else XSD_INTEGER)
    if isinstance(e, BinaryOp):
        if e.op in ("||", "&&"):
            # SPARQL error semantics: an error can be masked by the other side
            try:
                left = ebv(eval_expr(e.left, sol))
                lerr = None
            except _TypeError as exc:
                left, lerr = None, exc
            if e.op == "||" and left is True:
                return _TRUE
            if e.op == "&&" and left is False:
                return _FALSE
            right = ebv(eval_expr(e.right, sol))
            if lerr is not None:
                if (e.op == "||" and right) or (e.op == "&&" and not right):
                    return _TRUE if right else _FALSE
                raise lerr
            return _TRUE if right else _FALSE
        a = eval_expr(e.left, sol)
        b = eval_expr(e.right, sol)
        if e.op in ("=", "!=", "<", ">", "<=", ">="):
            return _TRUE if _compare(e.op, a, b) else _FALSE
        na, nb = _numeric(a), _numeric(b)
        if na is None or nb is None:
            raise _TypeError("arithmetic on non-numbers")
        x, y, dtype = _promote(na, nb, a.datatype, b.datatype)
        if e.op == "+":
            return _num_term(x + y, dtype)
        if e.op == "-":
            return _num_term(x - y, dtype)
        if e.op == "*":
            return _num_term(x * y, dtype)
        if dtype == XSD_INTEGER:
            dtype = XSD_DECIMAL
            x, y = Decimal(x), Decimal(y)
        if y == 0:
            if dtype == XSD_DOUBLE:
                return _num_term(float("inf") if x > 0 else float("-inf") if x < 0
                                 else float("nan"), dtype)
            raise _TypeError("division by zero")
        return _num_term(x / y, dtype)
    raise UnsupportedFeature(f"expression {type(e).__name__} is not supported")


def filter_passes(e, sol: Solution) -> bool:
    try:
        return ebv(eval_expr(e, sol))
    except _TypeError:
        return False


# ---------------------------------------------------------------------------
# pattern evaluation
# ---------------------------------------------------------------------------


class Evaluator:
    def __init__(self, store: TripleStore):
        self.store = store
        self.work = 0  # candidate matches produced by triple-pattern steps

    def eval_group(self, g: GraphPattern, graph: Graph, sols: list[Solution]) -> list[Solution]:
        if g.xquery_filters:
            raise UnsupportedFeature("XQueryFILTER cannot be evaluated by a SPARQL endpoint")
        sols = self._eval_triples(g.triples, graph, sols)
        for svc in g.services:
            if svc.endpoint not in self.store.named:
                raise UnsupportedFeature(f"SERVICE <{svc.endpoint}> has no seeded local graph")
            sols = self._eval_service(svc, self.store.named[svc.endpoint], sols)
        if g.unions:
            out = []
            for alt in g.unions:
                out.extend(self.eval_group(alt, graph, sols))
            sols = out
        for b in g.binds:
            nxt = []
            for sol in sols:
                try:
                    value = eval_expr(b.expr, sol)
                except _TypeError:
                    nxt.append(sol)
                    continue
                cur = sol.get(b.var)
                if cur is None:
                    sol = dict(sol)
                    sol[b.var] = value
                    nxt.append(sol)
                elif cur == value:
                    nxt.append(sol)
            sols = nxt
        for f in g.filters:
            sols = [s for s in sols if filter_passes(f, s)]
        return sols

    def _eval_service(self, svc, graph: Graph, sols: list[Solution]) -> list[Solution]:
        if svc.projection is None:
            return self.eval_group(svc.pattern, graph, sols)
        proj = svc.projection
        cache: dict[tuple, list[dict]] = {}
        out = []
        for sol in sols:
            key = tuple(sol.get(v) for v in proj)
            if key not in cache:
                seed = {v: t for v, t in zip(proj, key) if t is not None}
                inner = self.eval_group(svc.pattern, graph, [seed])
                cache[key] = [{v: s[v] for v in proj if v in s} for s in inner]
            for part in cache[key]:
                merged = dict(sol)
                merged.update(part)
                out.append(merged)
        return out

    def _eval_triples(self, triples, graph: Graph, sols: list[Solution]) -> list[Solution]:
        if not triples or not sols:
            return sols
        bound = set.intersection(*(set(s) for s in sols)) if sols else set()
        pending = list(triples)
        while pending:
            best = min(range(len(pending)), key=lambda i: (
                -_bound_positions(pending[i], bound), _static_count(pending[i], graph), i))
            tp = pending.pop(best)
            sols = self._step(tp, graph, sols)
            bound |= {x for x in (tp.subject, tp.predicate, tp.object) if isinstance(x, Var)}
            if not sols:
                return sols
        return sols

    def _step(self, tp: TriplePattern, graph: Graph, sols: list[Solution]) -> list[Solution]:
        out = []
        positions = (tp.subject, tp.predicate, tp.object)
        for sol in sols:
            key = [sol.get(x) if isinstance(x, Var) else x for x in positions]
            matches = graph.match(*key)
            self.work += len(matches)
            for t in matches:
                ext = sol
                ok = True
                for x, val in zip(positions, t):
                    if isinstance(x, Var):
                        prev = ext.get(x)
                        if prev is None:
                            if ext is sol:
                                ext = dict(sol)
                            ext[x] = val
                        elif prev != val:
                            ok = False
                            break
                if ok:
                    out.append(ext)
        return out


def _bound_positions(tp: TriplePattern, bound: set) -> int:
    return sum(1 for x in (tp.subject, tp.predicate, tp.object)
               if not isinstance(x, Var) or x in bound)


def _static_count(tp: TriplePattern, graph: Graph) -> int:
    consts = [None if isinstance(x, Var) else x for x in (tp.subject, tp.predicate, tp.object)]
    return len(graph.match(*consts))


def evaluate_query(store: TripleStore, q: ExtendedQuery) -> tuple[BindingTable, int]:
    """Evaluate ``q``; returns the table and the work counter."""
    ev = Evaluator(store)
    sols = ev.eval_group(q.where, store.default, [{}])
    if q.aggregates:
        values = []
        for agg in q.aggregates:
            if agg.var is None:
                n = len({tuple(sorted(s.items(), key=lambda kv: kv[0].name)) for s in sols}) \
                    if agg.distinct else len(sols)
            else:
                col = [s[agg.var] for s in sols if agg.var in s]
                n = len(set(col)) if agg.distinct else len(col)
            values.append(RdfTerm.literal(str(n), XSD_INTEGER))
        return BindingTable(tuple(a.alias for a in q.aggregates), [tuple(values)]), ev.work
    rows = [tuple(s.get(v) for v in q.select_vars) for s in sols]
    return BindingTable(q.select_vars, rows), ev.work


class MockSparqlBackend(SparqlBackend):
    """SPARQL backend over a :class:`TripleStore` with simulated latency.

    The simulated response time is ``fixedMs + perRowMs * work``, where work
    counts the candidate matches produced while evaluating triple patterns.
    """

    def __init__(self, config: BackendConfig, store: Optional[TripleStore] = None):
        if config.kind is not BackendKind.SPARQL_MOCK:
            raise ValueError("MockSparqlBackend needs a sparql-mock config")
        super().__init__(config)
        if store is None:
            store = TripleStore.load(config.fixture) if config.fixture else TripleStore()
        self.store = store
        self.last_work = 0

    def select(self, query_text: str, cancel: Optional[threading.Event] = None) -> BindingTable:
        self._count_call()
        started = time.perf_counter()
        try:
            q = parse_extended_query(query_text)
        except ParseError as exc:
            raise UnsupportedFeature(f"mock SPARQL engine cannot parse query: {exc}",
                                     backend=self.id) from None
        table, work = evaluate_query(self.store, q)
        self.last_work = work
        if self.config.simulated_latency is not None:
            fixed, per_row = self.config.simulated_latency
            self._pad_latency(started, fixed + per_row * work, cancel)
        elif cancel is not None and cancel.is_set():
            raise Cancelled(backend=self.id)
        return table
