"""Evaluator for the FLWR XQuery subset over ElementTree documents.

Values are Python lists (XQuery sequences) of items: :class:`NodeRef`
(elements and document nodes), :class:`AttrRef`, ``str``,
:class:`Untyped` (untypedAtomic), ``bool``, ``int``/``Decimal``/``float``
and ``datetime.date``.
"""

from __future__ import annotations

import datetime as _dt
import re
from decimal import Decimal, InvalidOperation
from typing import Callable, Optional
from xml.etree import ElementTree as ET

from ..errors import UnsupportedFeature, XQueryRuntimeError
from ..model import (
    BoolOp, Comparison, ContextItem, ElementConstructor, Enclosed, FilterExpr, FlwrQuery,
    FunctionCall, NumberLit, PathExpr, Sequence, Step, StringLit, Text, Var, XqVar,
)

_DATE_RX = re.compile(r"\d{4}-\d{2}-\d{2}(?:Z|[+-]\d{2}:\d{2})?")


class Untyped(str):
    """xs:untypedAtomic: the typed value of element and attribute nodes."""


class Document:
    __slots__ = ("uri", "root", "order")

    def __init__(self, uri: str, root: ET.Element):
        self.uri = uri
        self.root = root
        self.order = {id(el): i for i, el in enumerate(root.iter())}


class DocumentStore:
    """Parsed documents keyed by identifier (usually the file name)."""

    def __init__(self):
        self.docs: dict[str, Document] = {}
        self.rank: dict[str, int] = {}

    def add(self, uri: str, content) -> None:
        if isinstance(content, (str, bytes)):
            try:
                root = ET.fromstring(content)
            except ET.ParseError as exc:
                raise ValueError(f"document {uri!r} is not well-formed: {exc}") from None
        else:
            root = content
        self.docs[uri] = Document(uri, root)
        self.rank = {u: i for i, u in enumerate(sorted(self.docs))}

    def add_many(self, items: dict) -> None:
        for uri, content in items.items():
            root = ET.fromstring(content) if isinstance(content, (str, bytes)) else content
            self.docs[uri] = Document(uri, root)
        self.rank = {u: i for i, u in enumerate(sorted(self.docs))}

    def uris(self) -> list[str]:
        return sorted(self.docs)

    def __len__(self) -> int:
        return len(self.docs)


class NodeRef:
    """An element (``el`` set) or document node (``el`` is None) of ``doc``."""

    __slots__ = ("el", "doc", "rank")

    def __init__(self, el: Optional[ET.Element], doc: Optional[Document], rank: tuple):
        self.el = el
        self.doc = doc
        self.rank = rank

    def key(self):
        return (id(self.doc), id(self.el))

    def string_value(self) -> str:
        if self.el is None:
            return "".join(self.doc.root.itertext())
        return "".join(self.el.itertext())


class AttrRef:
    __slots__ = ("owner", "name", "value")

    def __init__(self, owner: NodeRef, name: str, value: str):
        self.owner = owner
        self.name = name
        self.value = value

    def key(self):
        return (id(self.owner.doc), id(self.owner.el), self.name)

    @property
    def rank(self):
        return self.owner.rank + (self.name,)


def _is_node(x) -> bool:
    return isinstance(x, (NodeRef, AttrRef))


def atomize(seq: list) -> list:
    out = []
    for x in seq:
        if isinstance(x, NodeRef):
            out.append(Untyped(x.string_value()))
        elif isinstance(x, AttrRef):
            out.append(Untyped(x.value))
        else:
            out.append(x)
    return out


def string_of(x) -> str:
    if isinstance(x, NodeRef):
        return x.string_value()
    if isinstance(x, AttrRef):
        return x.value
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if x != x:
            return "NaN"
        if x in (float("inf"), float("-inf")):
            return "INF" if x > 0 else "-INF"
        return repr(x) if not x.is_integer() else str(int(x))
    if isinstance(x, _dt.date):
        return x.isoformat()
    return str(x)


def ebv(seq: list) -> bool:
    if not seq:
        return False
    first = seq[0]
    if _is_node(first):
        return True
    if len(seq) > 1:
        raise XQueryRuntimeError("effective boolean value of a multi-item sequence", code="FORG0006")
    if isinstance(first, bool):
        return first
    if isinstance(first, str):
        return first != ""
    if isinstance(first, (int, float, Decimal)):
        return first != 0 and first == first
    raise XQueryRuntimeError("no effective boolean value for this type", code="FORG0006")


def parse_date(s: str) -> _dt.date:
    s = s.strip()
    if not _DATE_RX.fullmatch(s):
        raise XQueryRuntimeError(f"invalid xs:date lexical {s!r}", code="FORG0001")
    try:
        return _dt.date.fromisoformat(s[:10])
    except ValueError:
        raise XQueryRuntimeError(f"invalid xs:date lexical {s!r}", code="FORG0001") from None


def _to_number(x):
    if isinstance(x, bool):
        raise XQueryRuntimeError("cannot compare xs:boolean with a number", code="XPTY0004")
    if isinstance(x, (int, float, Decimal)):
        return x
    try:
        return float(str(x))
    except ValueError:
        raise XQueryRuntimeError(f"cannot cast {x!r} to xs:double", code="FORG0001") from None


def _cmp_pair(op: str, a, b) -> bool:
    # untypedAtomic casting for general comparisons
    if isinstance(a, Untyped) and not isinstance(b, Untyped):
        a = _cast_like(a, b)
    elif isinstance(b, Untyped) and not isinstance(a, Untyped):
        b = _cast_like(b, a)
    num = (int, float, Decimal)
    if isinstance(a, bool) or isinstance(b, bool):
        if not (isinstance(a, bool) and isinstance(b, bool)):
            raise XQueryRuntimeError("incomparable types", code="XPTY0004")
    elif isinstance(a, num) and isinstance(b, num):
        if isinstance(a, Decimal) and isinstance(b, float):
            a = float(a)
        elif isinstance(b, Decimal) and isinstance(a, float):
            b = float(b)
    elif isinstance(a, _dt.date) and isinstance(b, _dt.date):
        pass
    elif isinstance(a, str) and isinstance(b, str):
        a, b = str(a), str(b)
    else:
        raise XQueryRuntimeError(
            f"cannot compare {type(a).__name__} with {type(b).__name__}", code="XPTY0004")
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    return a >= b


def _cast_like(u: Untyped, other):
    if isinstance(other, bool):
        v = str(u).strip()
        if v in ("true", "1"):
            return True
        if v in ("false", "0"):
            return False
        raise XQueryRuntimeError(f"cannot cast {v!r} to xs:boolean", code="FORG0001")
    if isinstance(other, (int, float, Decimal)):
        return _to_number(u)
    if isinstance(other, _dt.date):
        return parse_date(u)
    return str(u)


def general_compare(op: str, left: list, right: list) -> bool:
    a_items = atomize(left)
    b_items = atomize(right)
    for a in a_items:
        for b in b_items:
            if _cmp_pair(op, a, b):
                return True
    return False


def _number(lexical: str):
    if "e" in lexical or "E" in lexical:
        return float(lexical)
    if "." in lexical:
        return Decimal(lexical)
    return int(lexical)


class XQueryEngine:
    """Evaluates FLWR-subset ASTs against a fixed set of documents.

    ``touched`` collects the URIs of every document accessed, which drives
    the per-document simulated latency.
    """

    def __init__(self, store: "DocumentStore", collections: dict[str, list[str]]):
        self.docs = store.docs
        self.collections = collections
        self.touched: set[str] = set()
        self._doc_rank = store.rank
        self._built = 0

    # -- documents -------------------------------------------------------

    def doc_node(self, uri: str) -> NodeRef:
        d = self.docs.get(uri)
        if d is None:
            raise XQueryRuntimeError(f"document {uri!r} not found", code="FODC0002")
        self.touched.add(uri)
        return NodeRef(None, d, (self._doc_rank[uri], -1))

    def _elem(self, el: ET.Element, d: Document) -> NodeRef:
        if d.uri is None:
            return NodeRef(el, d, (float("inf"), d.order[id(el)]))
        return NodeRef(el, d, (self._doc_rank[d.uri], d.order[id(el)]))

    # -- evaluation ------------------------------------------------------

    def run(self, q) -> list:
        return self.eval(q, {}, None)

    def eval(self, e, env: dict, ctx) -> list:
        if isinstance(e, StringLit):
            return [e.value]
        if isinstance(e, NumberLit):
            return [_number(e.lexical)]
        if isinstance(e, XqVar):
            if e.name not in env:
                raise XQueryRuntimeError(f"undeclared variable ${e.name}", code="XPST0008")
            return env[e.name]
        if isinstance(e, Var):
            raise XQueryRuntimeError(f"unbound SPARQL variable ?{e.name}", code="XPST0008")
        if isinstance(e, ContextItem):
            if ctx is None:
                raise XQueryRuntimeError("context item is undefined", code="XPDY0002")
            return [ctx[0]]
        if isinstance(e, Sequence):
            out = []
            for item in e.items:
                out.extend(self.eval(item, env, ctx))
            return out
        if isinstance(e, FunctionCall):
            return self.call(e, env, ctx)
        if isinstance(e, PathExpr):
            return self.path(e, env, ctx)
        if isinstance(e, FilterExpr):
            return self.apply_predicates(self.eval(e.base, env, ctx), e.predicates, env)
        if isinstance(e, Comparison):
            return [general_compare(e.op, self.eval(e.left, env, ctx), self.eval(e.right, env, ctx))]
        if isinstance(e, BoolOp):
            left = ebv(self.eval(e.left, env, ctx))
            if e.op == "and":
                return [left and ebv(self.eval(e.right, env, ctx))]
            return [left or ebv(self.eval(e.right, env, ctx))]
        if isinstance(e, ElementConstructor):
            return [self.construct(e, env, ctx)]
        if isinstance(e, FlwrQuery):
            return self.flwr(e, env, ctx)
        raise UnsupportedFeature(f"expression {type(e).__name__} is not supported")

    def flwr(self, q: FlwrQuery, env: dict, ctx) -> list:
        tuples = [env]
        for fc in q.for_clauses:
            nxt = []
            for t in tuples:
                for item in self.eval(fc.seq, t, ctx):
                    t2 = dict(t)
                    t2[fc.var.name] = [item]
                    nxt.append(t2)
            tuples = nxt
        for lc in q.let_clauses:
            nxt = []
            for t in tuples:
                t2 = dict(t)
                t2[lc.var.name] = self.eval(lc.expr, t, ctx)
                nxt.append(t2)
            tuples = nxt
        if q.where is not None:
            tuples = [t for t in tuples if ebv(self.eval(q.where, t, ctx))]
        out = []
        for t in tuples:
            out.extend(self.eval(q.return_expr, t, ctx))
        return out

    # -- paths -----------------------------------------------------------

    def _as_node(self, item) -> NodeRef:
        if isinstance(item, NodeRef):
            return item
        if isinstance(item, str) and not isinstance(item, Untyped):
            # a bare document identifier, as enumerated by the SPARQL-first rewrite
            return self.doc_node(item)
        raise XQueryRuntimeError("path step applied to a non-node", code="XPTY0019")

    def path(self, p: PathExpr, env: dict, ctx) -> list:
        if p.root is None:
            if ctx is None:
                raise XQueryRuntimeError("relative path without a context item", code="XPDY0002")
            current = [ctx[0]]
        else:
            current = self.eval(p.root, env, ctx)
        for step in p.steps:
            current = self.step(step, current, env)
        return current

    def step(self, s: Step, current: list, env: dict) -> list:
        out: dict = {}
        for item in current:
            if isinstance(item, AttrRef):
                continue
            node = self._as_node(item)
            for group in self._axis_groups(s, node):
                for r in self.apply_predicates(group, s.predicates, env):
                    out.setdefault(r.key(), r)
        return sorted(out.values(), key=lambda n: n.rank)

    def _axis_groups(self, s: Step, node: NodeRef):
        d = node.doc
        if s.axis == "attribute":
            if node.el is None:
                return
            attrs = [AttrRef(node, k, v) for k, v in node.el.attrib.items()
                     if s.name == "*" or k == s.name]
            yield attrs
            return
        match = (lambda el: True) if s.name == "*" else (lambda el: el.tag == s.name)
        if s.axis == "child":
            if node.el is None:
                yield [self._elem(d.root, d)] if match(d.root) else []
            else:
                yield [self._elem(c, d) for c in node.el if match(c)]
            return
        # descendant-or-self::node()/child::name, grouped per parent
        if node.el is None:
            if match(d.root):
                yield [self._elem(d.root, d)]
            parents = d.root.iter()
        else:
            parents = node.el.iter()
        for parent in parents:
            kids = [c for c in parent if match(c)]
            if kids:
                yield [self._elem(c, d) for c in kids]

    def apply_predicates(self, seq: list, preds, env: dict) -> list:
        for pred in preds:
            n = len(seq)
            kept = []
            for i, item in enumerate(seq, 1):
                r = self.eval(pred, env, (item, i, n))
                if len(r) == 1 and isinstance(r[0], (int, float, Decimal)) \
                        and not isinstance(r[0], bool):
                    if r[0] == i:
                        kept.append(item)
                elif ebv(r):
                    kept.append(item)
            seq = kept
        return seq

    # -- constructors ----------------------------------------------------

    def construct(self, e: ElementConstructor, env: dict, ctx) -> NodeRef:
        el = self._build(e, env, ctx)
        self._built += 1
        return NodeRef(el, Document(None, el), (float("inf"), self._built))

    def _build(self, e: ElementConstructor, env: dict, ctx) -> ET.Element:
        el = ET.Element(e.name)
        last = None

        def add_text(text: str):
            if last is None:
                el.text = (el.text or "") + text
            else:
                last.tail = (last.tail or "") + text

        for c in e.content:
            if isinstance(c, Text):
                add_text(c.value)
            elif isinstance(c, ElementConstructor):
                last = self._build(c, env, ctx)
                el.append(last)
            elif isinstance(c, Enclosed):
                prev_atomic = False
                for item in self.eval(c.expr, env, ctx):
                    if isinstance(item, NodeRef):
                        prev_atomic = False
                        if item.el is None:
                            src = item.doc.root
                        else:
                            src = item.el
                        last = _copy(src)
                        el.append(last)
                    elif isinstance(item, AttrRef):
                        el.set(item.name, item.value)
                    else:
                        add_text((" " if prev_atomic else "") + string_of(item))
                        prev_atomic = True
        return el

    # -- functions -------------------------------------------------------

    def call(self, f: FunctionCall, env: dict, ctx) -> list:
        impl = _FUNCTIONS.get(f.name)
        if impl is None:
            raise UnsupportedFeature(f"function {f.name}() is not supported by the mock engine")
        arity, fn = impl
        if len(f.args) not in arity:
            raise XQueryRuntimeError(f"{f.name}() called with {len(f.args)} arguments",
                                     code="XPST0017")
        args = [self.eval(a, env, ctx) for a in f.args]
        return fn(self, args, ctx)


def _copy(el: ET.Element) -> ET.Element:
    new = ET.Element(el.tag, dict(el.attrib))
    new.text = el.text
    for c in el:
        cc = _copy(c)
        cc.tail = c.tail
        new.append(cc)
    return new


def _single_string(seq: list, fname: str) -> str:
    if not seq:
        return ""
    if len(seq) > 1:
        raise XQueryRuntimeError(f"{fname}() expects a single item", code="XPTY0004")
    return string_of(seq[0])


def _fn_doc(eng: XQueryEngine, args, ctx):
    uri = _single_string(args[0], "doc")
    return [eng.doc_node(uri)]


def _fn_collection(eng: XQueryEngine, args, ctx):
    name = _single_string(args[0], "collection") if args else ""
    if name not in eng.collections:
        raise XQueryRuntimeError(f"collection {name!r} not found", code="FODC0002")
    return [eng.doc_node(uri) for uri in eng.collections[name]]


def _existential(pred: Callable[[str, str], bool], fname: str):
    def fn(eng, args, ctx):
        needle = _single_string(args[1], fname)
        hay = [string_of(x) for x in args[0]] or [""]
        return [any(pred(h, needle) for h in hay)]
    return fn


def _fn_base_uri(eng: XQueryEngine, args, ctx):
    seq = args[0] if args else ([ctx[0]] if ctx else [])
    if not seq:
        return []
    if len(seq) > 1:
        raise XQueryRuntimeError("base-uri() expects a single node", code="XPTY0004")
    x = seq[0]
    if isinstance(x, AttrRef):
        x = x.owner
    if isinstance(x, NodeRef):
        return [] if x.doc.uri is None else [x.doc.uri]
    if isinstance(x, str) and not isinstance(x, Untyped) and x in eng.docs:
        return [x]
    raise XQueryRuntimeError("base-uri() expects a node", code="XPTY0004")


def _fn_date(eng, args, ctx):
    seq = atomize(args[0])
    if not seq:
        return []
    if len(seq) > 1:
        raise XQueryRuntimeError("xs:date() expects a single item", code="XPTY0004")
    if isinstance(seq[0], _dt.date):
        return [seq[0]]
    return [parse_date(str(seq[0]))]


def _fn_distinct(eng, args, ctx):
    seen = set()
    out = []
    for x in atomize(args[0]):
        key = str(x) if isinstance(x, str) else x
        if key not in seen:
            seen.add(key)
            out.append(str(x) if isinstance(x, Untyped) else x)
    return out


def _fn_string(eng, args, ctx):
    seq = args[0] if args else ([ctx[0]] if ctx else [])
    return [_single_string(seq, "string")]


_FUNCTIONS: dict[str, tuple[tuple[int, ...], Callable]] = {
    "doc": ((1,), _fn_doc),
    "collection": ((0, 1), _fn_collection),
    "contains": ((2,), _existential(lambda h, n: n in h, "contains")),
    "starts-with": ((2,), _existential(lambda h, n: h.startswith(n), "starts-with")),
    "ends-with": ((2,), _existential(lambda h, n: h.endswith(n), "ends-with")),
    "base-uri": ((0, 1), _fn_base_uri),
    "xs:date": ((1,), _fn_date),
    "true": ((0,), lambda eng, a, c: [True]),
    "false": ((0,), lambda eng, a, c: [False]),
    "not": ((1,), lambda eng, a, c: [not ebv(a[0])]),
    "boolean": ((1,), lambda eng, a, c: [ebv(a[0])]),
    "exists": ((1,), lambda eng, a, c: [bool(a[0])]),
    "empty": ((1,), lambda eng, a, c: [not a[0]]),
    "count": ((1,), lambda eng, a, c: [len(a[0])]),
    "distinct-values": ((1,), _fn_distinct),
    "string": ((0, 1), _fn_string),
    "data": ((1,), lambda eng, a, c: atomize(a[0])),
}

SUPPORTED_FUNCTIONS = frozenset(_FUNCTIONS)


def serialize_item(x) -> str:
    if isinstance(x, NodeRef):
        el = _copy(x.doc.root if x.el is None else x.el)
        return ET.tostring(el, encoding="unicode")
    if isinstance(x, AttrRef):
        return x.value
    return string_of(x)
