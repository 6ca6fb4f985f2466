"""Backend configuration and the two backend interfaces."""

from __future__ import annotations

import enum
import threading
import time
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

from ..errors import Cancelled, ConfigError
from ..results import BindingTable


class BackendKind(enum.Enum):
    SPARQL_HTTP = "sparql-http"
    XMLDB_HTTP = "xmldb-http"
    SPARQL_MOCK = "sparql-mock"
    XML_MOCK = "xml-mock"

    @property
    def is_sparql(self) -> bool:
        return self in (BackendKind.SPARQL_HTTP, BackendKind.SPARQL_MOCK)

    @property
    def is_http(self) -> bool:
        return self in (BackendKind.SPARQL_HTTP, BackendKind.XMLDB_HTTP)


@dataclass
class BackendConfig:
    id: str
    kind: BackendKind
    endpoint_url: Optional[str] = None
    request_timeout_ms: float = 30000.0
    retry_count: int = 0
    auth_header: Optional[str] = None
    collection_name: str = "default"
    # (fixedMs, perRowMs) for SPARQL mocks, (fixedMs, perDocMs) for XML mocks
    simulated_latency: Optional[tuple[float, float]] = None
    # XML DB HTTP profile: "body" posts raw XQuery, "form" posts a form field
    profile: str = "body"
    form_field: str = "_query"
    document_root: str = ""
    # mock fixtures: triples file (SPARQL) or document directory (XML)
    fixture: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = BackendKind(self.kind)
            except ValueError:
                raise ConfigError(f"backend {self.id!r}: unknown kind {self.kind!r}") from None
        if self.kind.is_http and not self.endpoint_url:
            raise ConfigError(f"backend {self.id!r}: HTTP backends need endpoint_url")
        if not self.kind.is_http and self.endpoint_url:
            raise ConfigError(f"backend {self.id!r}: mock backends must not set endpoint_url")
        if self.retry_count < 0:
            raise ConfigError(f"backend {self.id!r}: retry_count must be >= 0")
        if self.request_timeout_ms <= 0:
            raise ConfigError(f"backend {self.id!r}: request_timeout_ms must be > 0")
        if self.profile not in ("body", "form"):
            raise ConfigError(f"backend {self.id!r}: profile must be 'body' or 'form'")
        if self.simulated_latency is not None:
            fixed, per = self.simulated_latency
            if fixed < 0 or per < 0:
                raise ConfigError(f"backend {self.id!r}: simulated latency must be >= 0")
            self.simulated_latency = (float(fixed), float(per))


class Backend(ABC):
    """Common plumbing: identity, call counting and simulated latency."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self.identity = config.endpoint_url or f"{config.id}:{uuid.uuid4()}"
        self._lock = threading.Lock()
        self.calls = 0

    @property
    def id(self) -> str:
        return self.config.id

    def _count_call(self) -> None:
        with self._lock:
            self.calls += 1

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0

    @staticmethod
    def _pad_latency(started: float, target_ms: float, cancel: Optional[threading.Event]) -> None:
        """Sleep until ``target_ms`` has elapsed since ``started``."""
        remaining = target_ms / 1000.0 - (time.perf_counter() - started)
        if cancel is not None and cancel.is_set():
            raise Cancelled()
        if remaining <= 0:
            return
        if cancel is None:
            time.sleep(remaining)
        elif cancel.wait(remaining):
            raise Cancelled()


class SparqlBackend(Backend):
    @abstractmethod
    def select(self, query_text: str, cancel: Optional[threading.Event] = None) -> BindingTable:
        """Evaluate a SELECT query."""


class XmlBackend(Backend):
    @property
    def collection_name(self) -> str:
        return self.config.collection_name

    @abstractmethod
    def evaluate(self, query_text: str, cancel: Optional[threading.Event] = None) -> list[str]:
        """Evaluate an XQuery; items are atomic strings or serialized XML fragments."""

    @abstractmethod
    def count_documents(self) -> int:
        """Number of documents in the configured collection."""
