"""Backend abstraction, HTTP adapters and in-process mock engines."""

from __future__ import annotations

from .base import Backend, BackendConfig, BackendKind, SparqlBackend, XmlBackend
from .http import HttpSparqlBackend, HttpXmlBackend, parse_xml_sequence, resolve_bare_ids
from .mock_sparql import MockSparqlBackend, TripleStore, evaluate_query
from .mock_xml import MockXmlBackend, load_document_dir
from .xquery_engine import DocumentStore, XQueryEngine


def create_backend(config: BackendConfig, store=None) -> Backend:
    """Instantiate the backend for ``config``; ``store`` seeds a mock."""
    if config.kind is BackendKind.SPARQL_HTTP:
        return HttpSparqlBackend(config)
    if config.kind is BackendKind.XMLDB_HTTP:
        return HttpXmlBackend(config)
    if config.kind is BackendKind.SPARQL_MOCK:
        return MockSparqlBackend(config, store)
    return MockXmlBackend(config, store)


__all__ = [
    "Backend", "BackendConfig", "BackendKind", "DocumentStore", "HttpSparqlBackend",
    "HttpXmlBackend", "MockSparqlBackend", "MockXmlBackend", "SparqlBackend", "TripleStore",
    "XQueryEngine", "XmlBackend", "create_backend", "evaluate_query", "load_document_dir",
    "parse_xml_sequence", "resolve_bare_ids",
]
