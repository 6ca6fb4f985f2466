"""Recursive-descent parser for the extended SPARQL subset.

Supported: PREFIX prologue, ``SELECT`` with variables and ``COUNT``
aggregates, basic graph patterns with ``;``/``,`` lists, ``FILTER``,
``BIND``, ``SERVICE`` (plain group or sub-SELECT), one ``UNION`` block per
group and ``XQueryFILTER ( <FLWR> )`` in the top-level group.  Numeric
literals may carry thousands separators (``10,000,000``).
"""

from __future__ import annotations

import re

from ..errors import (
    MissingLinkVariable, MultipleSparqlVarsInXQuery, MultipleXQueryFilters, NonBooleanReturn,
    VariableNotInPattern, XQueryFilterPlacement,
)
from ..model import (
    RDF_TYPE, XSD, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, BinaryOp, Bind, Bracketed,
    CountAggregate, ExtendedQuery, GraphPattern, RdfTerm, ServiceClause, TriplePattern, UnaryOp,
    Var, XQueryFilterClause, binding_variables, sparql_vars_in,
)
from .scanner import Scanner
from .xquery import is_boolean_expr, parse_flwr

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "owl": "http://www.w3.org/2002/07/owl#",
    "ex": "http://example.org/",
    "dbo": "http://dbpedia.org/ontology/",
    "xs": XSD,
}

_UNSUPPORTED_KEYWORDS = {"OPTIONAL", "MINUS", "GRAPH", "VALUES", "CONSTRUCT", "ASK", "DESCRIBE",
                         "BASE", "GROUP", "ORDER", "LIMIT", "OFFSET", "HAVING"}

_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class SparqlParser(Scanner):
    SKIP = re.compile(r"(?:\s+|#[^\n]*)+")
    RULES = [
        ("VAR", re.compile(r"[?$][A-Za-z_]\w*")),
        ("IRIREF", re.compile(r"<[^<>\"{}|^`\\\s]*>")),
        ("STRING", re.compile(r"'(?:[^'\\\n]|\\.)*'|\"(?:[^\"\\\n]|\\.)*\"")),
        ("NUMBER", re.compile(r"\d{1,3}(?:,\d{3})+(?![\d,])|\d*\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+")),
        ("PNAME", re.compile(r"(?:[A-Za-z][\w\-]*(?:\.[\w\-]+)*)?:(?:[\w\-]+(?:\.[\w\-]+)*)?")),
        ("BNODE", re.compile(r"_:\w+|\[")),
        ("NAME", re.compile(r"[A-Za-z_]\w*")),
        ("LANGTAG", re.compile(r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*")),
        ("SYM", re.compile(r"&&|\|\||!=|<=|>=|\^\^|[{}().;,*=<>!+\-/\]]")),
    ]

    def __init__(self, text: str, prefixes: dict[str, str] | None = None):
        super().__init__(text)
        self.prefixes = dict(DEFAULT_PREFIXES if prefixes is None else prefixes)
        self._xq_clauses = 0

    # -- entry point -----------------------------------------------------

    def parse_query(self) -> ExtendedQuery:
        while self.at("NAME", "PREFIX", ci=True):
            self.next()
            tok = self.expect("PNAME")
            prefix, _, local = tok.value.partition(":")
            if local:
                raise self.error("expected a prefix declaration like 'ex:'", tok.start)
            iri = self.expect("IRIREF")
            self.prefixes[prefix] = iri.value[1:-1]
        q = self.parse_select(depth=0)
        self.expect("EOF")
        return ExtendedQuery(q.select_vars, q.where, q.aggregates, source_text=self.text)

    def _keyword(self, word: str) -> bool:
        return self.at("NAME", word, ci=True)

    def _reject_unsupported(self):
        tok = self.peek()
        if tok.kind == "NAME" and tok.value.upper() in _UNSUPPORTED_KEYWORDS:
            raise self.error(f"{tok.value.upper()} is outside the supported SPARQL subset")

    def parse_select(self, depth: int) -> ExtendedQuery:
        self._reject_unsupported()
        self.expect("NAME", "SELECT", ci=True)
        if self._keyword("DISTINCT") or self._keyword("REDUCED"):
            raise self.error("SELECT modifiers are outside the supported SPARQL subset")
        select: list[Var] = []
        aggregates: list[CountAggregate] = []
        while True:
            if self.at("VAR"):
                if aggregates:
                    raise self.error("plain variables cannot follow aggregates without GROUP BY")
                select.append(Var(self.next().value[1:]))
            elif self.at("SYM", "("):
                if select:
                    raise self.error("aggregates cannot be mixed with plain variables")
                aggregates.append(self._parse_count())
            else:
                break
        if self.at("SYM", "*"):
            raise self.error("SELECT * is outside the supported SPARQL subset")
        if not select and not aggregates:
            raise self.error("empty SELECT list", expected=["variable"])
        self.accept("NAME", "WHERE", ci=True)
        where = self.parse_group(depth)
        self._reject_unsupported()
        return ExtendedQuery(tuple(select), where, tuple(aggregates))

    def _parse_count(self) -> CountAggregate:
        self.expect("SYM", "(")
        self.expect("NAME", "COUNT", ci=True)
        self.expect("SYM", "(")
        distinct = bool(self.accept("NAME", "DISTINCT", ci=True))
        if self.accept("SYM", "*"):
            var = None
        else:
            var = Var(self.expect("VAR").value[1:])
        self.expect("SYM", ")")
        self.expect("NAME", "AS", ci=True)
        alias = Var(self.expect("VAR").value[1:])
        self.expect("SYM", ")")
        return CountAggregate(var, distinct, alias)

    # -- group graph patterns ------------------------------------------------

    def parse_group(self, depth: int, in_service: bool = False) -> GraphPattern:
        self.expect("SYM", "{")
        triples, filters, services, xqf, unions, binds = [], [], [], [], [], []
        while not self.at("SYM", "}"):
            tok = self.peek()
            if tok.kind == "EOF":
                raise self.error("unterminated group pattern", expected=["}"])
            if tok.kind == "SYM" and tok.value == ".":
                self.next()
                continue
            if tok.kind == "NAME" and tok.value.upper() == "FILTER":
                self.next()
                self.expect("SYM", "(")
                filters.append(self.parse_expr())
                self.expect("SYM", ")")
            elif tok.kind == "NAME" and tok.value.upper() == "XQUERYFILTER":
                if depth > 0 or in_service:
                    raise XQueryFilterPlacement(
                        "XQueryFILTER is only supported in the top-level WHERE group"
                        f" (line {self.error('', tok.start).line})")
                self.next()
                self._xq_clauses += 1
                if self._xq_clauses > 1:
                    raise MultipleXQueryFilters("at most one XQueryFILTER per query is supported")
                xqf.append(self._parse_xquery_filter())
            elif tok.kind == "NAME" and tok.value.upper() == "SERVICE":
                self.next()
                services.append(self._parse_service(depth))
            elif tok.kind == "NAME" and tok.value.upper() == "BIND":
                self.next()
                self.expect("SYM", "(")
                expr = self.parse_expr()
                self.expect("NAME", "AS", ci=True)
                var = Var(self.expect("VAR").value[1:])
                self.expect("SYM", ")")
                binds.append(Bind(expr, var))
            elif tok.kind == "SYM" and tok.value == "{":
                if unions:
                    raise self.error("only one UNION block per group is supported")
                if self.peek2().kind == "NAME" and self.peek2().value.upper() == "SELECT":
                    raise self.error("sub-SELECT is only supported directly inside SERVICE")
                unions.append(self.parse_group(depth + 1, in_service))
                while self.accept("NAME", "UNION", ci=True):
                    unions.append(self.parse_group(depth + 1, in_service))
            elif tok.kind == "NAME" and tok.value.upper() == "UNION":
                raise self.error("UNION must follow a group pattern")
            else:
                self._reject_unsupported()
                triples.extend(self._parse_triples_block())
        self.expect("SYM", "}")
        return GraphPattern(tuple(triples), tuple(filters), tuple(services), tuple(xqf),
                            tuple(unions), tuple(binds))

    def _parse_service(self, depth: int) -> ServiceClause:
        if self._keyword("SILENT"):
            raise self.error("SERVICE SILENT is outside the supported SPARQL subset")
        endpoint = self._parse_iri()
        nxt = self.peek2()
        if self.at("SYM", "{") and nxt.kind == "NAME" and nxt.value.upper() == "SELECT":
            self.next()
            sub = self._parse_subselect(depth)
            self.expect("SYM", "}")
            return ServiceClause(endpoint.lexical, sub.where, sub.select_vars)
        return ServiceClause(endpoint.lexical, self.parse_group(depth + 1, in_service=True))

    def _parse_subselect(self, depth: int) -> ExtendedQuery:
        self.expect("NAME", "SELECT", ci=True)
        select = []
        while self.at("VAR"):
            select.append(Var(self.next().value[1:]))
        if not select:
            raise self.error("sub-SELECT needs a variable list", expected=["variable"])
        self.accept("NAME", "WHERE", ci=True)
        return ExtendedQuery(tuple(select), self.parse_group(depth + 1, in_service=True))

    def _parse_xquery_filter(self) -> XQueryFilterClause:
        open_tok = self.expect("SYM", "(")
        start = open_tok.end
        end = _matching_paren(self.text, start)
        if end < 0:
            raise self.error("unterminated XQueryFILTER body", open_tok.start, expected=[")"])
        body = parse_flwr(self.text[start:end], base_offset=start, source=self.text)
        self.reset(end + 1)
        svars = sparql_vars_in(body)
        if not svars:
            raise MissingLinkVariable("XQueryFILTER body must reference exactly one SPARQL variable")
        if len(svars) > 1:
            names = ", ".join("?" + v.name for v in sorted(svars, key=lambda v: v.name))
            raise MultipleSparqlVarsInXQuery(
                f"XQueryFILTER body references several SPARQL variables: {names}")
        if not is_boolean_expr(body.return_expr):
            raise NonBooleanReturn("XQueryFILTER RETURN expression must be boolean-valued")
        return XQueryFilterClause(body, next(iter(svars)))

    # -- triples ---------------------------------------------------------------

    def _parse_triples_block(self) -> list[TriplePattern]:
        subject = self._parse_term("subject")
        out = []
        while True:
            pred = self._parse_verb()
            while True:
                out.append(TriplePattern(subject, pred, self._parse_term("object")))
                if not self.accept("SYM", ","):
                    break
            if not self.accept("SYM", ";"):
                break
            while self.accept("SYM", ";"):
                pass
            if self.at("SYM", ".") or self.at("SYM", "}"):
                break
        if not (self.at("SYM", ".") or self.at("SYM", "}")):
            tok = self.peek()
            if not (tok.kind == "NAME" and tok.value.upper() in
                    ("FILTER", "SERVICE", "BIND", "XQUERYFILTER")) and not self.at("SYM", "{"):
                raise self.error(f"unexpected {tok.value or 'end of input'!r}",
                                 expected=[".", ";", ",", "}"])
        return out

    def _parse_verb(self):
        if self.at("NAME", "a"):
            self.next()
            return RdfTerm.iri(RDF_TYPE)
        if self.at("VAR"):
            return Var(self.next().value[1:])
        if self.at("IRIREF") or self.at("PNAME"):
            return self._parse_iri()
        raise self.error(f"unexpected {self.peek().value or 'end of input'!r}",
                         expected=["predicate"])

    def _parse_iri(self) -> RdfTerm:
        tok = self.peek()
        if tok.kind == "IRIREF":
            self.next()
            return RdfTerm.iri(tok.value[1:-1])
        if tok.kind == "PNAME":
            self.next()
            prefix, _, local = tok.value.partition(":")
            if prefix not in self.prefixes:
                raise self.error(f"undeclared prefix '{prefix}:'", tok.start)
            return RdfTerm.iri(self.prefixes[prefix] + local)
        raise self.error(f"unexpected {tok.value or 'end of input'!r}", expected=["IRI"])

    def _parse_term(self, position: str):
        tok = self.peek()
        if tok.kind == "VAR":
            self.next()
            return Var(tok.value[1:])
        if tok.kind == "BNODE":
            raise self.error("blank nodes are not supported in query patterns")
        if tok.kind in ("IRIREF", "PNAME"):
            return self._parse_iri()
        term = self._parse_literal()
        if term is None:
            raise self.error(f"unexpected {tok.value or 'end of input'!r}", expected=[position])
        return term

    def _parse_literal(self) -> RdfTerm | None:
        tok = self.peek()
        if tok.kind == "STRING":
            self.next()
            value = _unescape(tok.value[1:-1])
            if self.at("LANGTAG"):
                return RdfTerm.literal(value, lang=self.next().value[1:])
            if self.accept("SYM", "^^"):
                return RdfTerm.literal(value, datatype=self._parse_iri().lexical)
            return RdfTerm.literal(value)
        sign = ""
        if tok.kind == "SYM" and tok.value in "+-" and self.peek2().kind == "NUMBER":
            sign = "-" if self.next().value == "-" else ""
            tok = self.peek()
        if tok.kind == "NUMBER":
            self.next()
            return number_term(sign + tok.value)
        if tok.kind == "NAME" and tok.value in ("true", "false"):
            self.next()
            return RdfTerm.literal(tok.value, datatype=XSD + "boolean")
        return None

    # -- filter expressions ------------------------------------------------------

    def parse_expr(self):
        left = self._parse_and()
        while self.accept("SYM", "||"):
            left = BinaryOp("||", left, self._parse_and())
        return left

    def _parse_and(self):
        left = self._parse_rel()
        while self.accept("SYM", "&&"):
            left = BinaryOp("&&", left, self._parse_rel())
        return left

    def _parse_rel(self):
        left = self._parse_add()
        tok = self.peek()
        if tok.kind == "SYM" and tok.value in ("=", "!=", "<", ">", "<=", ">="):
            self.next()
            return BinaryOp(tok.value, left, self._parse_add())
        return left

    def _parse_add(self):
        left = self._parse_mul()
        while self.at("SYM", "+") or self.at("SYM", "-"):
            op = self.next().value
            left = BinaryOp(op, left, self._parse_mul())
        return left

    def _parse_mul(self):
        left = self._parse_unary()
        while self.at("SYM", "*") or self.at("SYM", "/"):
            op = self.next().value
            left = BinaryOp(op, left, self._parse_unary())
        return left

    def _parse_unary(self):
        tok = self.peek()
        if tok.kind == "SYM" and tok.value in ("!", "-", "+"):
            if tok.value != "!" and self.peek2().kind == "NUMBER":
                return self._parse_primary()
            self.next()
            return UnaryOp(tok.value, self._parse_unary())
        return self._parse_primary()

    def _parse_primary(self):
        tok = self.peek()
        if tok.kind == "SYM" and tok.value == "(":
            self.next()
            inner = self.parse_expr()
            self.expect("SYM", ")")
            return Bracketed(inner)
        if tok.kind == "VAR":
            self.next()
            return Var(tok.value[1:])
        if tok.kind in ("IRIREF", "PNAME"):
            return self._parse_iri()
        term = self._parse_literal()
        if term is None:
            raise self.error(f"unexpected {tok.value or 'end of input'!r}",
                             expected=["expression"])
        return term


def number_term(lexical: str) -> RdfTerm:
    lexical = lexical.replace(",", "")
    if "e" in lexical.lower():
        return RdfTerm.literal(lexical, datatype=XSD_DOUBLE)
    if "." in lexical:
        return RdfTerm.literal(lexical, datatype=XSD_DECIMAL)
    return RdfTerm.literal(lexical, datatype=XSD_INTEGER)


def _unescape(s: str) -> str:
    if "\\" not in s:
        return s
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            if nxt == "u" and i + 5 < len(s):
                out.append(chr(int(s[i + 2:i + 6], 16)))
                i += 6
                continue
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _matching_paren(text: str, start: int) -> int:
    """Index of the ')' closing a '(' that ends just before ``start``, or -1."""
    depth = 1
    i = start
    n = len(text)
    while i < n:
        c = text[i]
        if c in "'\"":
            j = text.find(c, i + 1)
            if j < 0:
                return -1
            i = j + 1
            continue
        if text.startswith("(:", i):
            j = text.find(":)", i + 2)
            if j < 0:
                return -1
            i = j + 2
            continue
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


def _check_scoping(pattern: GraphPattern, outer: frozenset) -> None:
    visible = outer | binding_variables(pattern)
    for expr in pattern.filters:
        missing = sparql_vars_in(expr) - visible
        if missing:
            names = ", ".join(sorted("?" + v.name for v in missing))
            raise VariableNotInPattern(f"FILTER references {names}, not bound by any pattern")
    for svc in pattern.services:
        _check_scoping(svc.pattern, frozenset() if svc.projection is not None else visible)
    for alt in pattern.unions:
        _check_scoping(alt, visible)


def parse_extended_query(text: str, prefixes: dict[str, str] | None = None) -> ExtendedQuery:
    """Parse extended-SPARQL text into an :class:`ExtendedQuery`."""
    q = SparqlParser(text, prefixes).parse_query()
    _check_scoping(q.where, frozenset())
    for clause in q.where.xquery_filters:
        if clause.link_variable not in binding_variables(q.where):
            raise VariableNotInPattern(
                f"link variable ?{clause.link_variable.name} does not occur in the graph pattern")
    return q
