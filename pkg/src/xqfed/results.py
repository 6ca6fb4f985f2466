"""Result containers shared by the backends and the executor."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence as Seq
from xml.etree import ElementTree as ET

from .errors import BackendError, JoinKeyMissing, MalformedTupleResult
from .model import XSD_STRING, RdfTerm, TermKind, Var

Row = tuple  # tuple[Optional[RdfTerm], ...]


@dataclass
class BindingTable:
    """A bag of solution mappings; ``None`` marks an unbound position."""

    variables: tuple[Var, ...]
    rows: list[Row] = field(default_factory=list)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        width = len(self.variables)
        for r in self.rows:
            if len(r) != width:
                raise ValueError(f"row has {len(r)} terms, expected {width}")

    def __len__(self) -> int:
        return len(self.rows)

    def index(self, v: Var) -> int:
        try:
            return self.variables.index(v)
        except ValueError:
            raise JoinKeyMissing(f"?{v.name} is not a column of the result table") from None

    def column(self, v: Var) -> list[Optional[RdfTerm]]:
        i = self.index(v)
        return [r[i] for r in self.rows]

    def project(self, variables: Seq[Var]) -> "BindingTable":
        idx = [self.variables.index(v) if v in self.variables else None for v in variables]
        rows = [tuple(None if i is None else r[i] for i in idx) for r in self.rows]
        return BindingTable(tuple(variables), rows)

    def bag(self) -> Counter:
        return Counter(self.rows)

    def bag_equal(self, other: "BindingTable") -> bool:
        if self.variables == other.variables:
            return self.bag() == other.bag()
        if set(self.variables) != set(other.variables):
            return False
        return self.bag() == other.project(self.variables).bag()

    @classmethod
    def empty(cls, variables: Seq[Var]) -> "BindingTable":
        return cls(tuple(variables), [])

    # -- SPARQL JSON results ---------------------------------------------

    def to_sparql_json(self) -> dict:
        bindings = []
        for r in self.rows:
            b = {}
            for v, t in zip(self.variables, r):
                if t is not None:
                    b[v.name] = term_to_json(t)
            bindings.append(b)
        return {"head": {"vars": [v.name for v in self.variables]},
                "results": {"bindings": bindings}}

    def to_json_text(self) -> str:
        return json.dumps(self.to_sparql_json(), indent=2, sort_keys=False, ensure_ascii=False)

    @classmethod
    def from_sparql_json(cls, doc) -> "BindingTable":
        try:
            names = list(doc["head"]["vars"])
            items = doc["results"]["bindings"]
            rows = [tuple(term_from_json(b[n]) if n in b else None for n in names) for b in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed SPARQL JSON results: {exc}",
                               kind="malformed-results") from None
        return cls(tuple(Var(n) for n in names), rows)

    # -- text renderings ---------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([v.name for v in self.variables])
        for r in self.rows:
            w.writerow(["" if t is None else t.lexical for t in r])
        return buf.getvalue()

    def to_table(self) -> str:
        header = ["?" + v.name for v in self.variables]
        body = [["" if t is None else term_display(t) for t in r] for r in self.rows]
        widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(header)]
        line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
        sep = "+-" + "-+-".join("-" * w for w in widths) + "-+"
        out = [sep, line(header), sep] + [line(r) for r in body] + [sep]
        return "\n".join(out) + "\n"


def term_display(t: RdfTerm) -> str:
    if t.is_iri:
        return f"<{t.lexical}>"
    if t.is_literal:
        return t.lexical
    return "_:" + t.lexical


def term_to_json(t: RdfTerm) -> dict:
    if t.kind is TermKind.IRI:
        return {"type": "uri", "value": t.lexical}
    if t.kind is TermKind.BNODE:
        return {"type": "bnode", "value": t.lexical}
    out = {"type": "literal", "value": t.lexical}
    if t.lang is not None:
        out["xml:lang"] = t.lang
    elif t.datatype != XSD_STRING:
        out["datatype"] = t.datatype
    return out


def term_from_json(obj: dict) -> RdfTerm:
    kind = obj["type"]
    value = obj["value"]
    if kind == "uri":
        return RdfTerm.iri(value)
    if kind == "bnode":
        return RdfTerm.bnode(value)
    if kind in ("literal", "typed-literal"):
        return RdfTerm.literal(value, obj.get("datatype"), obj.get("xml:lang"))
    raise ValueError(f"unknown term type {kind!r}")


@dataclass(frozen=True)
class DocumentId:
    uri: str

    def __post_init__(self):
        if not self.uri:
            raise ValueError("document identifiers must be non-empty")


_TRUE = {"true", "1"}
_FALSE = {"false", "0"}


@dataclass
class XQueryTupleResult:
    entries: list[tuple[DocumentId, bool]]

    @classmethod
    def parse(cls, items: Iterable[str]) -> "XQueryTupleResult":
        """Parse ``<tuple><doc>id</doc><bool>b</bool></tuple>`` items.

        A document appearing in several tuples (one per FOR binding) is
        true if any of its tuples is true.
        """
        verdicts: dict[str, bool] = {}
        for item in items:
            try:
                el = ET.fromstring(item)
            except ET.ParseError as exc:
                raise MalformedTupleResult(f"result item is not XML: {exc}") from None
            if el.tag != "tuple":
                raise MalformedTupleResult(f"expected <tuple>, got <{el.tag}>")
            doc = el.find("doc")
            flag = el.find("bool")
            if doc is None or flag is None:
                raise MalformedTupleResult("<tuple> must contain <doc> and <bool>")
            doc_id = "".join(doc.itertext()).strip()
            lexical = "".join(flag.itertext()).strip().lower()
            if lexical in _TRUE:
                value = True
            elif lexical in _FALSE:
                value = False
            else:
                raise MalformedTupleResult(f"invalid boolean {lexical!r} in <bool>")
            if not doc_id:
                raise MalformedTupleResult("empty <doc> in tuple")
            verdicts[doc_id] = verdicts.get(doc_id, False) or value
        return cls([(DocumentId(d), v) for d, v in verdicts.items()])

    def true_docs(self) -> set[str]:
        return {d.uri for d, v in self.entries if v}
