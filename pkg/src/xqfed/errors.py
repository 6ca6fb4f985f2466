"""Exception hierarchy.

Every error carries the pipeline ``stage`` it belongs to; the CLI maps
stages to exit codes.
"""

from __future__ import annotations


class XqfedError(Exception):
    stage = "internal"

    def __init__(self, message: str = "", *, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


# -- configuration ---------------------------------------------------------


class ConfigError(XqfedError):
    stage = "config"


# -- parsing / static checks -----------------------------------------------


class ParseError(XqfedError):
    stage = "parse"


class QuerySyntaxError(ParseError):
    """Raised on the first syntax error, with a 1-based position."""

    def __init__(self, message: str, *, offset: int, line: int, column: int,
                 expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.line = line
        self.column = column
        self.expected = expected
        detail = f"{message} at line {line}, column {column}"
        if expected:
            detail += " (expected one of: " + ", ".join(sorted(expected)) + ")"
        super().__init__(detail)


class LinkVariableError(ParseError):
    pass


class MultipleSparqlVarsInXQuery(LinkVariableError):
    pass


class MissingLinkVariable(LinkVariableError):
    pass


class MultipleXQueryFilters(ParseError):
    pass


class NonBooleanReturn(ParseError):
    pass


class XQueryFilterPlacement(ParseError):
    """XQueryFILTER outside the top-level WHERE group (e.g. inside SERVICE)."""


class NoXQueryFilter(ParseError):
    pass


class VariableNotFound(ParseError):
    pass


class VariableNotInPattern(ParseError):
    pass


# -- planning ----------------------------------------------------------------


class PlanError(XqfedError):
    stage = "plan"


class LinkVarNotInDocCall(PlanError):
    pass


class DocCallAmbiguous(PlanError):
    pass


class EmptyBindingList(PlanError):
    pass


class InvalidEstimate(PlanError):
    pass


class NoStatsAvailable(PlanError):
    pass


# -- backends ----------------------------------------------------------------


class BackendError(XqfedError):
    stage = "backend"

    def __init__(self, message: str = "", *, kind: str = "error", backend: str | None = None):
        super().__init__(message)
        self.kind = kind
        self.backend = backend


class UnsupportedFeature(BackendError):
    def __init__(self, message: str = "", **kw):
        kw.setdefault("kind", "unsupported")
        super().__init__(message, **kw)


class XQueryRuntimeError(BackendError):
    def __init__(self, message: str = "", *, code: str = "FOER0000", **kw):
        kw.setdefault("kind", "xquery-runtime")
        super().__init__(f"[{code}] {message}", **kw)
        self.code = code


class Cancelled(BackendError):
    def __init__(self, message: str = "request cancelled", **kw):
        kw.setdefault("kind", "cancelled")
        super().__init__(message, **kw)


# -- join / merge ------------------------------------------------------------


class JoinError(XqfedError):
    stage = "join"


class JoinKeyMissing(JoinError):
    pass


class MalformedTupleResult(JoinError):
    pass


class RowCapExceeded(JoinError):
    pass


# -- bench -------------------------------------------------------------------


class InfeasibleGrid(ConfigError):
    pass


EXIT_CODES = {
    "config": 1,
    "parse": 2,
    "plan": 3,
    "backend": 4,
    "join": 5,
}
