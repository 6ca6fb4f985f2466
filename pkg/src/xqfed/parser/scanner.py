"""On-demand tokenizer base shared by the SPARQL and XQuery parsers.

Tokens are lexed lazily from ``pos`` so that a parser can drop to raw
character scanning (XQueryFILTER bodies, XML element constructors) and then
resume token-level parsing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import QuerySyntaxError


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    start: int
    end: int


class Scanner:
    # (kind, compiled regex) tried in order; subclasses fill this in
    RULES: list[tuple[str, re.Pattern]] = []
    SKIP = re.compile(r"(?:\s+|\(:.*?:\))+", re.S)

    def __init__(self, text: str, base_offset: int = 0, source: str | None = None):
        self.text = text
        self.pos = 0
        self.base_offset = base_offset
        # full original text, for line/column reporting of embedded snippets
        self.source = source if source is not None else text
        self._peeked: Token | None = None
        self._cache: dict[int, Token] = {}

    @classmethod
    def _combined(cls) -> re.Pattern:
        # one alternation per subclass; alternatives keep RULES priority order
        rx = cls.__dict__.get("_COMBINED_RX")
        if rx is None:
            rx = re.compile("|".join(f"(?P<{kind}__{i}>{r.pattern})"
                                     for i, (kind, r) in enumerate(cls.RULES)))
            cls._COMBINED_RX = rx
        return rx

    # -- positions ---------------------------------------------------------

    def error(self, message: str, offset: int | None = None, expected=()) -> QuerySyntaxError:
        if offset is None:
            offset = self.peek().start
        absolute = self.base_offset + offset
        absolute = max(0, min(absolute, len(self.source)))
        before = self.source[:absolute]
        line = before.count("\n") + 1
        column = absolute - (before.rfind("\n") + 1) + 1
        return QuerySyntaxError(message, offset=absolute, line=line, column=column,
                                expected=frozenset(expected))

    # -- lexing ------------------------------------------------------------

    def _skip(self, pos: int) -> int:
        m = self.SKIP.match(self.text, pos)
        return m.end() if m else pos

    def _lex(self, pos: int) -> Token:
        tok = self._cache.get(pos)
        if tok is not None:
            return tok
        start = self._skip(pos)
        if start >= len(self.text):
            tok = Token("EOF", "", start, start)
        else:
            m = self._combined().match(self.text, start)
            if m is None:
                raise self.error(f"unexpected character {self.text[start]!r}", start)
            tok = Token(m.lastgroup.split("__")[0], m.group(0), start, m.end())
        self._cache[pos] = tok
        return tok

    def peek(self) -> Token:
        if self._peeked is None:
            self._peeked = self._lex(self.pos)
        return self._peeked

    def peek2(self) -> Token:
        return self._lex(self.peek().end)

    def next(self) -> Token:
        tok = self.peek()
        self.pos = tok.end
        self._peeked = None
        return tok

    def reset(self, pos: int) -> None:
        self.pos = pos
        self._peeked = None

    def at(self, kind: str, value: str | None = None, *, ci: bool = False) -> bool:
        tok = self.peek()
        if tok.kind != kind:
            return False
        if value is None:
            return True
        return tok.value.lower() == value.lower() if ci else tok.value == value

    def accept(self, kind: str, value: str | None = None, *, ci: bool = False) -> Token | None:
        if self.at(kind, value, ci=ci):
            return self.next()
        return None

    def expect(self, kind: str, value: str | None = None, *, ci: bool = False) -> Token:
        tok = self.accept(kind, value, ci=ci)
        if tok is None:
            got = self.peek()
            shown = got.value or "end of input"
            raise self.error(f"unexpected {shown!r}", got.start, expected=[value or kind])
        return tok
