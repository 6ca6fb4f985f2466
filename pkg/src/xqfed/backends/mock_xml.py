"""In-process XML database over a :class:`DocumentStore`."""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from ..errors import Cancelled, ParseError, UnsupportedFeature
from ..parser import parse_xquery
from .base import BackendConfig, BackendKind, XmlBackend
from .xquery_engine import DocumentStore, XQueryEngine, serialize_item


def load_document_dir(path: str | Path) -> DocumentStore:
    """Load every ``*.xml`` file of a directory, keyed by file name."""
    store = DocumentStore()
    items = {}
    for f in sorted(Path(path).glob("*.xml")):
        items[f.name] = f.read_bytes()
    store.add_many(items)
    return store


class MockXmlBackend(XmlBackend):
    """Evaluates the FLWR subset locally.

    The simulated response time is ``fixedMs + perDocMs * touched``, where
    ``touched`` counts distinct documents opened via ``doc()``,
    ``collection()`` or a bare identifier used as a path root.
    """

    def __init__(self, config: BackendConfig, store: Optional[DocumentStore] = None):
        if config.kind is not BackendKind.XML_MOCK:
            raise ValueError("MockXmlBackend needs an xml-mock config")
        super().__init__(config)
        if store is None:
            store = load_document_dir(config.fixture) if config.fixture else DocumentStore()
        self.store = store
        self.last_touched = 0

    def add_document(self, uri: str, content) -> None:
        self.store.add(uri, content)

    def evaluate(self, query_text: str, cancel: Optional[threading.Event] = None) -> list[str]:
        self._count_call()
        started = time.perf_counter()
        try:
            ast = parse_xquery(query_text)
        except ParseError as exc:
            raise UnsupportedFeature(f"mock XQuery engine cannot parse query: {exc}",
                                     backend=self.id) from None
        engine = XQueryEngine(self.store, {self.collection_name: self.store.uris()})
        items = [serialize_item(x) for x in engine.run(ast)]
        self.last_touched = len(engine.touched)
        if self.config.simulated_latency is not None:
            fixed, per_doc = self.config.simulated_latency
            self._pad_latency(started, fixed + per_doc * self.last_touched, cancel)
        elif cancel is not None and cancel.is_set():
            raise Cancelled(backend=self.id)
        return items

    def count_documents(self) -> int:
        # metadata lookup; not counted as a query dispatch
        return len(self.store)
