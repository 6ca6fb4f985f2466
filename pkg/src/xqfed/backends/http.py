"""HTTP adapters: a SPARQL 1.1 Protocol client and a REST XQuery client."""

from __future__ import annotations

import json
import logging
import re
import threading
from typing import Optional
from xml.etree import ElementTree as ET

import requests
from urllib3.exceptions import ConnectTimeoutError, NewConnectionError

from ..errors import BackendError, Cancelled, ParseError
from ..model import (
    ElementConstructor, Enclosed, FlwrQuery, ForClause, FunctionCall, Sequence, StringLit, XqVar,
    transform,
)
from ..parser import parse_xquery, serialize
from ..results import BindingTable
from .base import BackendConfig, BackendKind, SparqlBackend, XmlBackend

log = logging.getLogger(__name__)

SPARQL_JSON = "application/sparql-results+json"
EXIST_NS = "http://exist.sourceforge.net/NS/exist"
_XML_DECL = re.compile(r"^\s*<\?xml[^>]*\?>")


def _is_connect_failure(exc: requests.RequestException) -> bool:
    """True only when no request bytes can have reached the server."""
    if isinstance(exc, requests.ConnectTimeout):
        return True
    if isinstance(exc, requests.ConnectionError):
        reason = exc.args[0] if exc.args else None
        reason = getattr(reason, "reason", reason)
        return isinstance(reason, (NewConnectionError, ConnectTimeoutError))
    return False


class _HttpMixin:
    config: BackendConfig

    def _init_http(self) -> None:
        self._session = requests.Session()

    def _headers(self) -> dict:
        headers = {}
        auth = self.config.auth_header
        if auth:
            name, sep, value = auth.partition(":")
            if sep and " " not in name:
                headers[name.strip()] = value.strip()
            else:
                headers["Authorization"] = auth
        return headers

    def _post(self, cancel: Optional[threading.Event], **kwargs) -> requests.Response:
        timeout = self.config.request_timeout_ms / 1000.0
        attempts = self.config.retry_count + 1
        last: Optional[Exception] = None
        for attempt in range(attempts):
            if cancel is not None and cancel.is_set():
                raise Cancelled(backend=self.config.id)
            try:
                resp = self._session.post(self.config.endpoint_url, timeout=timeout, **kwargs)
            except requests.RequestException as exc:
                if _is_connect_failure(exc) and attempt + 1 < attempts:
                    log.warning("backend %s: connect failure (%s), retrying", self.config.id, exc)
                    last = exc
                    continue
                kind = "timeout" if isinstance(exc, requests.Timeout) else "connection"
                raise BackendError(f"{self.config.id}: request failed: {exc}", kind=kind,
                                   backend=self.config.id) from None
            if cancel is not None and cancel.is_set():
                raise Cancelled(backend=self.config.id)
            if resp.status_code != 200:
                snippet = resp.text[:300]
                raise BackendError(f"{self.config.id}: HTTP {resp.status_code}: {snippet}",
                                   kind="http-status", backend=self.config.id)
            return resp
        raise BackendError(f"{self.config.id}: request failed: {last}", kind="connection",
                           backend=self.config.id)


class HttpSparqlBackend(_HttpMixin, SparqlBackend):
    """POSTs the query as the ``query`` form field and parses JSON results."""

    def __init__(self, config: BackendConfig):
        if config.kind is not BackendKind.SPARQL_HTTP:
            raise ValueError("HttpSparqlBackend needs a sparql-http config")
        super().__init__(config)
        self._init_http()

    def select(self, query_text: str, cancel: Optional[threading.Event] = None) -> BindingTable:
        self._count_call()
        headers = self._headers()
        headers["Accept"] = SPARQL_JSON
        resp = self._post(cancel, data={"query": query_text}, headers=headers)
        try:
            doc = json.loads(resp.content.decode(resp.encoding or "utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise BackendError(f"{self.id}: malformed SPARQL JSON results: {exc}",
                               kind="malformed-results", backend=self.id) from None
        try:
            return BindingTable.from_sparql_json(doc)
        except BackendError as exc:
            exc.backend = self.id
            raise


def resolve_bare_ids(text: str, document_root: str = "") -> str:
    """Rewrite enumerated bare document IDs into ``doc()`` calls.

    ``FOR $v in ('a.xml', ...)`` becomes ``FOR $v in (doc('<root>a.xml'), ...)``
    and a ``<doc>{$v}</doc>`` constructor becomes ``<doc>{base-uri($v)}</doc>``
    so that tuples still carry identifiers rather than whole documents.
    """
    try:
        ast = parse_xquery(text)
    except ParseError:
        return text
    if not isinstance(ast, FlwrQuery):
        return text
    id_vars = set()
    fors = []
    for fc in ast.for_clauses:
        seq = fc.seq
        if isinstance(seq, Sequence) and seq.items and all(isinstance(i, StringLit) for i in seq.items):
            fc = ForClause(fc.var, Sequence(tuple(
                FunctionCall("doc", (StringLit(document_root + i.value),)) for i in seq.items)))
            id_vars.add(fc.var.name)
        fors.append(fc)
    if not id_vars:
        return text

    def fix(node):
        if isinstance(node, ElementConstructor) and node.name == "doc" and len(node.content) == 1:
            c = node.content[0]
            if isinstance(c, Enclosed) and isinstance(c.expr, XqVar) and c.expr.name in id_vars:
                return ElementConstructor("doc", (Enclosed(FunctionCall("base-uri", (c.expr,))),))
        return None

    ret = transform(ast.return_expr, fix)
    return serialize(FlwrQuery(tuple(fors), ast.let_clauses, ast.where, ret))


def parse_xml_sequence(body: str) -> list[str]:
    """Split a REST XQuery response into items (fragments or atomic lines)."""
    body = _XML_DECL.sub("", body)
    try:
        root = ET.fromstring(f"<xqfed-wrap>{body}</xqfed-wrap>")
    except ET.ParseError:
        return [ln.strip() for ln in body.splitlines() if ln.strip()]
    if len(root) == 1 and root[0].tag == f"{{{EXIST_NS}}}result" and not (root.text or "").strip():
        root = root[0]
    items: list[str] = []

    def text_items(t: Optional[str]):
        if t:
            items.extend(ln.strip() for ln in t.splitlines() if ln.strip())

    text_items(root.text)
    for child in root:
        if child.tag == f"{{{EXIST_NS}}}value":
            items.append("".join(child.itertext()))
        else:
            tail = child.tail
            child.tail = None
            items.append(ET.tostring(child, encoding="unicode"))
            child.tail = tail
        text_items(child.tail)
    return items


class HttpXmlBackend(_HttpMixin, XmlBackend):
    """REST XQuery client with two profiles.

    ``body``: raw XQuery in the request body (``application/xquery``).
    ``form``: XQuery in a form field (``form_field``, default ``_query``).
    """

    def __init__(self, config: BackendConfig):
        if config.kind is not BackendKind.XMLDB_HTTP:
            raise ValueError("HttpXmlBackend needs an xmldb-http config")
        super().__init__(config)
        self._init_http()

    def _strip_root(self, value: str) -> str:
        root = self.config.document_root
        return value[len(root):] if root and value.startswith(root) else value

    def evaluate(self, query_text: str, cancel: Optional[threading.Event] = None) -> list[str]:
        self._count_call()
        return self._dispatch(query_text, cancel)

    def _dispatch(self, query_text: str, cancel: Optional[threading.Event]) -> list[str]:
        text = resolve_bare_ids(query_text, self.config.document_root)
        headers = self._headers()
        if self.config.profile == "body":
            headers["Content-Type"] = "application/xquery; charset=utf-8"
            resp = self._post(cancel, data=text.encode("utf-8"), headers=headers)
        else:
            resp = self._post(cancel, data={self.config.form_field: text}, headers=headers)
        resp.encoding = resp.encoding or "utf-8"
        items = parse_xml_sequence(resp.text)
        if not self.config.document_root:
            return items
        out = []
        for item in items:
            if item.startswith("<tuple>"):
                el = ET.fromstring(item)
                d = el.find("doc")
                if d is not None and d.text:
                    d.text = self._strip_root(d.text.strip())
                out.append(ET.tostring(el, encoding="unicode"))
            else:
                out.append(self._strip_root(item))
        return out

    def count_documents(self) -> int:
        name = self.collection_name.replace("'", "''")
        items = self._dispatch(f"count(collection('{name}'))", None)
        try:
            return int(items[0])
        except (IndexError, ValueError):
            raise BackendError(f"{self.id}: unexpected count() response {items!r}",
                               kind="malformed-results", backend=self.id) from None
