"""Recursive-descent parser for the FLWR XQuery subset.

Grammar (keywords are case-insensitive)::

    Query      := Expr EOF
    Expr       := ExprSingle ("," ExprSingle)*
    ExprSingle := Flwr | OrExpr
    Flwr       := ("FOR" $v "in" ExprSingle ("," $v "in" ExprSingle)*)*
                  ("LET" $v ":=" ExprSingle)*
                  ("WHERE" ExprSingle)?
                  "RETURN" ExprSingle
    OrExpr     := AndExpr ("or" AndExpr)*
    AndExpr    := CompExpr ("and" CompExpr)*
    CompExpr   := PathExpr (("="|"!="|"<"|">"|"<="|">=") PathExpr)?
    PathExpr   := (AxisStep | Primary Predicate*) (("/"|"//") AxisStep)*
    AxisStep   := "@"? (Name | "*") Predicate*
    Primary    := String | Number | $v | ?v | "." | "(" Expr? ")"
                | QName "(" (ExprSingle ("," ExprSingle)*)? ")"
                | "<" Name ">" Content* "</" Name ">"
"""

from __future__ import annotations

import re

from ..model import (
    BoolOp, Comparison, ContextItem, ElementConstructor, Enclosed, FilterExpr, FlwrQuery,
    ForClause, FunctionCall, LetClause, NumberLit, PathExpr, Sequence, Step, StringLit, Text,
    Var, XqVar,
)
from .scanner import Scanner

NAME_RX = re.compile(r"[A-Za-z_][\w\-.]*(?::[A-Za-z_][\w\-.]*)?")
_ENTITY = re.compile(r"&(amp|lt|gt|quot|apos|#\d+|#x[0-9A-Fa-f]+);")
_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}

COMPARISON_OPS = ("=", "!=", "<", ">", "<=", ">=")

BOOLEAN_FUNCTIONS = frozenset({
    "contains", "exists", "not", "empty", "true", "false", "boolean",
    "starts-with", "ends-with",
})


def _decode_entities(s: str, scanner: Scanner, offset: int) -> str:
    def repl(m):
        ref = m.group(1)
        if ref.startswith("#x"):
            return chr(int(ref[2:], 16))
        if ref.startswith("#"):
            return chr(int(ref[1:]))
        return _ENTITIES[ref]

    if "&" in s and _ENTITY.sub("", s).count("&"):
        raise scanner.error("unescaped '&' in literal (use &amp;)", offset)
    return _ENTITY.sub(repl, s)


class XQueryParser(Scanner):
    RULES = [
        ("XVAR", re.compile(r"\$[A-Za-z_][\w\-.]*")),
        ("SVAR", re.compile(r"\?[A-Za-z_]\w*")),
        ("STRING", re.compile(r"'(?:[^']|'')*'|\"(?:[^\"]|\"\")*\"")),
        ("NUMBER", re.compile(r"\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|\.\d+")),
        ("SYM", re.compile(r"//|:=|!=|<=|>=|[/\[\](),=<>@{}*.]")),
        ("NAME", NAME_RX),
    ]

    # -- entry points ----------------------------------------------------

    def parse_query(self):
        expr = self.parse_expr()
        self.expect("EOF")
        return expr

    def parse_flwr_query(self) -> FlwrQuery:
        if not self._at_flwr_start():
            raise self.error("expected a FLWR expression", expected=["FOR", "LET", "RETURN"])
        q = self.parse_flwr()
        self.expect("EOF")
        return q

    # -- expressions -----------------------------------------------------

    def parse_expr(self):
        items = [self.parse_expr_single()]
        while self.accept("SYM", ","):
            items.append(self.parse_expr_single())
        return items[0] if len(items) == 1 else Sequence(tuple(items))

    def _at_kw(self, word: str) -> bool:
        return self.at("NAME", word, ci=True)

    def _at_flwr_start(self) -> bool:
        if (self._at_kw("for") or self._at_kw("let")) and self.peek2().kind == "XVAR":
            return True
        return self._at_kw("return")

    def parse_expr_single(self):
        if self._at_flwr_start():
            return self.parse_flwr()
        return self.parse_or()

    def parse_flwr(self) -> FlwrQuery:
        fors: list[ForClause] = []
        lets: list[LetClause] = []
        while self._at_kw("for") and self.peek2().kind == "XVAR":
            self.next()
            while True:
                var = XqVar(self.expect("XVAR").value[1:])
                self.expect("NAME", "in", ci=True)
                fors.append(ForClause(var, self.parse_expr_single()))
                if not self.accept("SYM", ","):
                    break
        while self._at_kw("let") and self.peek2().kind == "XVAR":
            self.next()
            var = XqVar(self.expect("XVAR").value[1:])
            self.expect("SYM", ":=")
            lets.append(LetClause(var, self.parse_expr_single()))
        if self._at_kw("for") and self.peek2().kind == "XVAR":
            raise self.error("FOR after LET is outside the supported FLWR subset")
        where = None
        if self._at_kw("where"):
            self.next()
            where = self.parse_expr_single()
        if not self._at_kw("return"):
            raise self.error(f"unexpected {self.peek().value or 'end of input'!r}",
                             expected=["WHERE", "RETURN"] if where is None else ["RETURN"])
        self.next()
        ret = self.parse_expr_single()
        return FlwrQuery(tuple(fors), tuple(lets), where, ret)

    def parse_or(self):
        left = self.parse_and()
        while self._at_kw("or"):
            self.next()
            left = BoolOp("or", left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_comparison()
        while self._at_kw("and"):
            self.next()
            left = BoolOp("and", left, self.parse_comparison())
        return left

    def parse_comparison(self):
        left = self.parse_path()
        tok = self.peek()
        if tok.kind == "SYM" and tok.value in COMPARISON_OPS:
            self.next()
            right = self.parse_path()
            nxt = self.peek()
            if nxt.kind == "SYM" and nxt.value in COMPARISON_OPS:
                raise self.error("comparisons are not associative; add parentheses")
            return Comparison(tok.value, left, right)
        return left

    def _at_axis_step(self) -> bool:
        tok = self.peek()
        if tok.kind == "SYM" and tok.value in ("@", "*"):
            return True
        return tok.kind == "NAME" and not (self.peek2().kind == "SYM" and self.peek2().value == "(")

    def parse_path(self):
        tok = self.peek()
        if tok.kind == "SYM" and tok.value in ("/", "//"):
            raise self.error("absolute paths are outside the supported subset; start from doc(), "
                             "collection() or a variable")
        steps: list[Step] = []
        if self._at_axis_step():
            root = None
            steps.append(self.parse_axis_step("child"))
        else:
            prim = self.parse_primary()
            preds = self.parse_predicates()
            root = FilterExpr(prim, preds) if preds else prim
        while self.at("SYM", "/") or self.at("SYM", "//"):
            sep = self.next().value
            steps.append(self.parse_axis_step("descendant" if sep == "//" else "child"))
        if not steps:
            return root
        return PathExpr(root, tuple(steps))

    def parse_axis_step(self, axis: str) -> Step:
        if self.accept("SYM", "@"):
            if axis == "descendant":
                raise self.error("'//@' is outside the supported subset")
            axis = "attribute"
        tok = self.peek()
        if tok.kind == "SYM" and tok.value == "*":
            self.next()
            name = "*"
        elif tok.kind == "NAME":
            self.next()
            name = tok.value
        else:
            raise self.error(f"unexpected {tok.value or 'end of input'!r}", expected=["name test"])
        return Step(axis, name, self.parse_predicates())

    def parse_predicates(self) -> tuple:
        preds = []
        while self.accept("SYM", "["):
            preds.append(self.parse_expr())
            self.expect("SYM", "]")
        return tuple(preds)

    def parse_primary(self):
        tok = self.peek()
        if tok.kind == "STRING":
            self.next()
            q = tok.value[0]
            body = tok.value[1:-1].replace(q + q, q)
            return StringLit(_decode_entities(body, self, tok.start))
        if tok.kind == "NUMBER":
            self.next()
            return NumberLit(tok.value)
        if tok.kind == "XVAR":
            self.next()
            return XqVar(tok.value[1:])
        if tok.kind == "SVAR":
            self.next()
            return Var(tok.value[1:])
        if tok.kind == "SYM" and tok.value == ".":
            self.next()
            return ContextItem()
        if tok.kind == "SYM" and tok.value == "(":
            self.next()
            if self.accept("SYM", ")"):
                return Sequence(())
            items = [self.parse_expr_single()]
            while self.accept("SYM", ","):
                items.append(self.parse_expr_single())
            self.expect("SYM", ")")
            return Sequence(tuple(items))
        if tok.kind == "NAME" and self.peek2().value == "(":
            self.next()
            self.next()
            args = []
            if not self.accept("SYM", ")"):
                args.append(self.parse_expr_single())
                while self.accept("SYM", ","):
                    args.append(self.parse_expr_single())
                self.expect("SYM", ")")
            return FunctionCall(tok.value, tuple(args))
        if tok.kind == "SYM" and tok.value == "<" and NAME_RX.match(self.text, tok.end):
            node, end = self._parse_constructor(tok.start)
            self.reset(end)
            return node
        raise self.error(f"unexpected {tok.value or 'end of input'!r}",
                         expected=["literal", "variable", "function call", "(", "element constructor"])

    # -- direct element constructors (raw character level) ---------------

    def _parse_constructor(self, start: int) -> tuple[ElementConstructor, int]:
        text = self.text
        m = NAME_RX.match(text, start + 1)
        name = m.group(0)
        i = m.end()
        while i < len(text) and text[i].isspace():
            i += 1
        if i >= len(text) or text[i] != ">":
            raise self.error(f"expected '>' in <{name}> (attributes are not supported)", i)
        i += 1
        content: list = []
        buf: list[str] = []

        def flush():
            if buf:
                s = "".join(buf)
                buf.clear()
                if s.strip():
                    content.append(Text(_decode_entities(s, self, i)))

        while True:
            if i >= len(text):
                raise self.error(f"unterminated element constructor <{name}>", start)
            if text.startswith("{{", i):
                buf.append("{")
                i += 2
            elif text.startswith("}}", i):
                buf.append("}")
                i += 2
            elif text[i] == "{":
                flush()
                self.reset(i + 1)
                expr = self.parse_expr()
                close = self.expect("SYM", "}")
                content.append(Enclosed(expr))
                i = close.end
            elif text[i] == "}":
                raise self.error("unbalanced '}' in element content (use '}}')", i)
            elif text.startswith("</", i):
                flush()
                m2 = NAME_RX.match(text, i + 2)
                if not m2 or m2.group(0) != name:
                    raise self.error(f"mismatched closing tag for <{name}>", i)
                j = m2.end()
                while j < len(text) and text[j].isspace():
                    j += 1
                if j >= len(text) or text[j] != ">":
                    raise self.error("expected '>'", j)
                return ElementConstructor(name, tuple(content)), j + 1
            elif text[i] == "<":
                flush()
                if not NAME_RX.match(text, i + 1):
                    raise self.error("unexpected '<' in element content", i)
                child, i = self._parse_constructor(i)
                content.append(child)
            else:
                buf.append(text[i])
                i += 1


def parse_xquery(text: str, *, base_offset: int = 0, source: str | None = None):
    """Parse any expression of the subset (used by the mock XML engine)."""
    return XQueryParser(text, base_offset, source).parse_query()


def parse_flwr(text: str, *, base_offset: int = 0, source: str | None = None) -> FlwrQuery:
    """Parse a FLWR query; the whole input must be one FLWR expression."""
    return XQueryParser(text, base_offset, source).parse_flwr_query()


def is_boolean_expr(expr) -> bool:
    """Static check that ``expr`` is boolean-valued by construction."""
    if isinstance(expr, (Comparison, BoolOp)):
        return True
    if isinstance(expr, FunctionCall):
        return expr.name in BOOLEAN_FUNCTIONS
    if isinstance(expr, Sequence) and len(expr.items) == 1:
        return is_boolean_expr(expr.items[0])
    return False
