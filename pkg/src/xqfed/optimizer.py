"""Cost model, catalog statistics and plan selection.

Plan costs (all in estimated milliseconds)::

    parallel    = max(cS, cX) + cJoinP
    sparqlFirst = cS + rhoS * cX + cJoinS
    xqueryFirst = cX + rhoX * cS (+ optional UNION surcharge, default 0)

Estimates come from the execution history (exact fingerprint match), from
exact COUNT probes against the backends (oracle mode) or are given directly.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import enum
import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import BackendError, InvalidEstimate, NoStatsAvailable
from .model import CountAggregate, ExtendedQuery, Var, strip_filters, triple_pattern_count
from .parser import DecomposedQuery, serialize, to_wire
from .rewriter import PlanKind, ensure_link_var_selected, rewrite_xquery_parallel

REL_TIE_EPS = 1e-9
DEFAULT_JOIN_ALPHA = 0.001
# tie-break order when costs are equal
_PREFERENCE = (PlanKind.SPARQL_FIRST, PlanKind.XQUERY_FIRST, PlanKind.PARALLEL)


class EstimateMode(enum.Enum):
    HISTORY = "history"
    ORACLE = "oracle"
    FIXED = "fixed"


@dataclass(frozen=True)
class CostEstimate:
    c_sparql: float
    c_xquery: float
    c_join_parallel: float
    c_join_sparql_first: float
    rho_sparql: float
    rho_xquery: float
    # extension beyond the three-plan formulas: extra cost of the UNION pushdown
    c_union_surcharge: float = 0.0

    def validate(self) -> "CostEstimate":
        costs = (self.c_sparql, self.c_xquery, self.c_join_parallel, self.c_join_sparql_first,
                 self.c_union_surcharge)
        for name, v in zip(("cSparql", "cXquery", "cJoinParallel", "cJoinSparqlFirst",
                            "unionSurcharge"), costs):
            if not isinstance(v, (int, float)) or math.isnan(v) or v < 0 or math.isinf(v):
                raise InvalidEstimate(f"{name} must be a finite cost >= 0, got {v!r}")
        for name, v in (("rhoSparql", self.rho_sparql), ("rhoXquery", self.rho_xquery)):
            if not isinstance(v, (int, float)) or math.isnan(v) or not 0.0 <= v <= 1.0:
                raise InvalidEstimate(f"{name} must be in [0, 1], got {v!r}")
        return self

    @classmethod
    def from_csv(cls, text: str) -> "CostEstimate":
        """``cSparql,cXquery,cJoinP,cJoinS,rhoSparql,rhoXquery``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 6:
            raise InvalidEstimate(f"expected 6 comma-separated numbers, got {len(parts)}")
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise InvalidEstimate(f"non-numeric estimate in {text!r}") from None
        return cls(*values).validate()

    def scaled(self, k: float) -> "CostEstimate":
        return dataclasses.replace(
            self, c_sparql=self.c_sparql * k, c_xquery=self.c_xquery * k,
            c_join_parallel=self.c_join_parallel * k,
            c_join_sparql_first=self.c_join_sparql_first * k,
            c_union_surcharge=self.c_union_surcharge * k)

    def as_dict(self) -> dict:
        return {"cSparql": self.c_sparql, "cXquery": self.c_xquery,
                "cJoinParallel": self.c_join_parallel,
                "cJoinSparqlFirst": self.c_join_sparql_first,
                "rhoSparql": self.rho_sparql, "rhoXquery": self.rho_xquery,
                "unionSurcharge": self.c_union_surcharge}


@dataclass(frozen=True)
class PlanCosts:
    parallel: float
    sparql_first: float
    xquery_first: float

    def cost(self, plan: PlanKind) -> float:
        return {PlanKind.PARALLEL: self.parallel, PlanKind.SPARQL_FIRST: self.sparql_first,
                PlanKind.XQUERY_FIRST: self.xquery_first}[plan]

    def as_dict(self) -> dict:
        return {"parallel": self.parallel, "sparqlFirst": self.sparql_first,
                "xqueryFirst": self.xquery_first}


def compute_plan_costs(e: CostEstimate) -> PlanCosts:
    e.validate()
    return PlanCosts(
        parallel=max(e.c_sparql, e.c_xquery) + e.c_join_parallel,
        sparql_first=e.c_sparql + e.rho_sparql * e.c_xquery + e.c_join_sparql_first,
        xquery_first=e.c_xquery + e.rho_xquery * e.c_sparql + e.c_union_surcharge,
    )


def choose_plan(costs: PlanCosts) -> PlanKind:
    best = min(costs.cost(p) for p in _PREFERENCE)
    tol = REL_TIE_EPS * max(abs(best), 1e-300)
    for plan in _PREFERENCE:
        if costs.cost(plan) - best <= tol:
            return plan
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def fingerprint(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


def docs_fingerprint(fp: str) -> str:
    """Key under which distinct link-variable counts for ``fp`` are recorded."""
    return "docs|" + fp


@dataclass
class BackendStats:
    mean_latency_ms: float = 0.0
    per_result_ms: float = 0.0
    per_doc_ms: float = 0.0
    total_documents: Optional[int] = None
    observed_mean_ms: float = 0.0
    observed_count: int = 0


@dataclass(frozen=True)
class HistoryEntry:
    fingerprint: str
    cardinality: int
    elapsed_ms: float
    timestamp: str
    backend: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({"fingerprint": self.fingerprint, "cardinality": self.cardinality,
                           "elapsed_ms": self.elapsed_ms, "timestamp": self.timestamp,
                           "backend": self.backend}, sort_keys=True)


@dataclass
class _Aggregate:
    n: int = 0
    total_ms: float = 0.0
    total_card: float = 0.0


class CatalogStats:
    """Per-backend parameters plus an append-only observation history.

    Reads take snapshots; appends are serialized by a lock.  When ``path``
    is set every appended entry is also written to that JSON Lines file.
    """

    def __init__(self, per_backend: Optional[dict[str, BackendStats]] = None,
                 path: Optional[str | Path] = None):
        self.per_backend: dict[str, BackendStats] = dict(per_backend or {})
        self.path = Path(path) if path else None
        self._history: list[HistoryEntry] = []
        self._agg: dict[str, _Aggregate] = {}
        self._lock = threading.Lock()

    @property
    def history(self) -> tuple[HistoryEntry, ...]:
        with self._lock:
            return tuple(self._history)

    def __len__(self) -> int:
        return len(self._history)

    def _apply(self, entry: HistoryEntry) -> None:
        self._history.append(entry)
        agg = self._agg.setdefault(entry.fingerprint, _Aggregate())
        agg.n += 1
        agg.total_ms += entry.elapsed_ms
        agg.total_card += entry.cardinality
        if entry.backend is not None:
            bs = self.per_backend.setdefault(entry.backend, BackendStats())
            bs.observed_count += 1
            bs.observed_mean_ms += (entry.elapsed_ms - bs.observed_mean_ms) / bs.observed_count

    def record_observation(self, fingerprint: str, cardinality: int, elapsed_ms: float, *,
                           backend: Optional[str] = None,
                           timestamp: Optional[str] = None) -> "CatalogStats":
        if elapsed_ms < 0:
            raise ValueError("elapsed time must be >= 0")
        if timestamp is None:
            timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")
        entry = HistoryEntry(fingerprint, int(cardinality), float(elapsed_ms), timestamp, backend)
        with self._lock:
            self._apply(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")
        return self

    def lookup(self, fp: str) -> Optional[tuple[float, float, int]]:
        """(mean elapsed ms, mean cardinality, count) for a fingerprint."""
        with self._lock:
            agg = self._agg.get(fp)
            if agg is None or agg.n == 0:
                return None
            return agg.total_ms / agg.n, agg.total_card / agg.n, agg.n

    def clear(self) -> None:
        with self._lock:
            self._history.clear()
            self._agg.clear()
            for bs in self.per_backend.values():
                bs.observed_mean_ms = 0.0
                bs.observed_count = 0
            if self.path is not None and self.path.exists():
                self.path.write_text("", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, per_backend: Optional[dict[str, BackendStats]] = None
             ) -> "CatalogStats":
        stats = cls(per_backend, path)
        p = Path(path)
        if p.exists():
            with open(p, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    stats._apply(HistoryEntry(rec["fingerprint"], int(rec["cardinality"]),
                                              float(rec["elapsed_ms"]), rec["timestamp"],
                                              rec.get("backend")))
        return stats


def record_observation(stats: CatalogStats, fingerprint: str, cardinality: int,
                       elapsed_ms: float, *, backend: Optional[str] = None) -> CatalogStats:
    return stats.record_observation(fingerprint, cardinality, elapsed_ms, backend=backend)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


@dataclass
class OptimizerDefaults:
    """Cardinality guesses used when the history has no matching entry."""

    sparql_rows: float = 100.0
    sparql_docs: Optional[float] = None  # defaults to sparql_rows
    xquery_docs: float = 100.0
    total_documents: float = 1000.0
    # when set, returned verbatim whenever the history has no entry
    estimate: Optional[CostEstimate] = None


@dataclass
class OptimizerSettings:
    mode: EstimateMode = EstimateMode.HISTORY
    join_alpha: float = DEFAULT_JOIN_ALPHA
    chunk_limit: int = 500
    union_branch_ms: float = 0.0
    defaults: Optional[OptimizerDefaults] = field(default_factory=OptimizerDefaults)
    fixed: Optional[CostEstimate] = None


@dataclass(frozen=True)
class Cardinalities:
    """Inputs of the cost formulas besides the backend costs."""

    sparql_rows: float  # S: rows of the SPARQL instance
    sparql_docs: float  # D: distinct link values in those rows
    xquery_docs: float  # X: documents satisfying the XQuery instance
    total_docs: float   # N: documents in the collection


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def assemble_estimate(c_sparql: float, c_xquery: float, card: Cardinalities,
                      settings: OptimizerSettings) -> CostEstimate:
    n = card.total_docs
    rho_s = _clamp01(card.sparql_docs / n) if n > 0 else 0.0
    rho_x = _clamp01(card.xquery_docs / n) if n > 0 else 0.0
    alpha = settings.join_alpha
    return CostEstimate(
        c_sparql=max(0.0, c_sparql),
        c_xquery=max(0.0, c_xquery),
        c_join_parallel=alpha * (card.sparql_rows + card.xquery_docs),
        c_join_sparql_first=alpha * (card.sparql_rows + rho_s * card.xquery_docs),
        rho_sparql=rho_s,
        rho_xquery=rho_x,
        c_union_surcharge=settings.union_branch_ms * rho_x * n,
    ).validate()


@dataclass(frozen=True)
class PlanFingerprints:
    sparql: str   # SPARQL instance with the link variable selected
    xquery: str   # Parallel-rewritten XQuery instance


def plan_fingerprints(d: DecomposedQuery, collection_name: str,
                      prefixes: Optional[dict] = None) -> PlanFingerprints:
    sq = ensure_link_var_selected(d.sparql_instance, d.link_variable)
    xq = rewrite_xquery_parallel(d.xquery_instance, d.link_variable, collection_name)
    return PlanFingerprints(fingerprint(serialize(sq, prefixes)),
                            fingerprint(serialize(xq, prefixes)))


class ProbeCache:
    """Oracle probe results keyed by (backend identity, probe fingerprint)."""

    def __init__(self):
        self._data: dict[tuple[str, str], tuple] = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def put(self, key, value) -> None:
        with self._lock:
            self._data[key] = value

    def clear(self) -> None:
        with self._lock:
            self._data.clear()


PROCESS_PROBE_CACHE = ProbeCache()


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0) * 1000.0


def sparql_count_probe(d: DecomposedQuery) -> ExtendedQuery:
    """``SELECT (COUNT(*) AS ?n) (COUNT(DISTINCT ?link) AS ?d)`` over the SPARQL instance."""
    q = d.sparql_instance
    return ExtendedQuery((), q.where, (
        CountAggregate(None, False, Var("__n")),
        CountAggregate(d.link_variable, True, Var("__d")),
    ))


def unfiltered_count_probe(d: DecomposedQuery) -> ExtendedQuery:
    return ExtendedQuery((), strip_filters(d.sparql_instance.where),
                         (CountAggregate(None, False, Var("__n")),))


def xquery_count_probe(d: DecomposedQuery, collection_name: str,
                       prefixes: Optional[dict] = None) -> str:
    xq = rewrite_xquery_parallel(d.xquery_instance, d.link_variable, collection_name)
    body = serialize(xq, prefixes).strip().replace("\n", " ")
    return f"count(distinct-values({body}))"


def _first_int(table, col: int = 0) -> int:
    try:
        return int(table.rows[0][col].lexical)
    except (IndexError, AttributeError, ValueError):
        raise BackendError("COUNT probe returned no number", kind="malformed-results") from None


@dataclass(frozen=True)
class OracleProbe:
    sparql_rows: int
    sparql_docs: int
    unfiltered_rows: int
    xquery_docs: int
    total_docs: int
    sparql_ms: float
    xquery_ms: float


def run_oracle_probes(d: DecomposedQuery, sparql, xml, *, prefixes: Optional[dict] = None,
                      cache: Optional[ProbeCache] = None) -> OracleProbe:
    """Exact cardinalities via COUNT probes; probe wall times are kept too."""
    cache = PROCESS_PROBE_CACHE if cache is None else cache
    coll = xml.collection_name
    s_text = to_wire(sparql_count_probe(d), prefixes)
    u_text = to_wire(unfiltered_count_probe(d), prefixes)
    x_text = xquery_count_probe(d, coll, prefixes)
    key = (f"{sparql.identity}|{xml.identity}", fingerprint(s_text + "\n" + x_text))
    hit = cache.get(key)
    if hit is not None:
        return hit
    s_table, s_ms = _timed(lambda: sparql.select(s_text))
    u_table = sparql.select(u_text)
    x_items, x_ms = _timed(lambda: xml.evaluate(x_text))
    try:
        x_docs = int(x_items[0])
    except (IndexError, ValueError):
        raise BackendError("count() probe returned no number", kind="malformed-results",
                           backend=xml.id) from None
    probe = OracleProbe(
        sparql_rows=_first_int(s_table, 0), sparql_docs=_first_int(s_table, 1),
        unfiltered_rows=_first_int(u_table, 0), xquery_docs=x_docs,
        total_docs=xml.count_documents(), sparql_ms=s_ms, xquery_ms=x_ms)
    cache.put(key, probe)
    return probe


def _backend_stats(stats: CatalogStats, backend_id: str) -> Optional[BackendStats]:
    return stats.per_backend.get(backend_id)


def estimate(d: DecomposedQuery, stats: CatalogStats, mode: EstimateMode | str, *,
             sparql=None, xml=None, settings: Optional[OptimizerSettings] = None,
             sparql_id: Optional[str] = None, xml_id: Optional[str] = None,
             collection_name: Optional[str] = None, prefixes: Optional[dict] = None,
             cache: Optional[ProbeCache] = None) -> CostEstimate:
    """Build a :class:`CostEstimate` for ``d``.

    ``sparql``/``xml`` are backend objects (required for oracle mode; in
    history mode only their ids and collection name are used).
    """
    settings = settings or OptimizerSettings()
    mode = EstimateMode(mode) if isinstance(mode, str) else mode
    if mode is EstimateMode.FIXED:
        if settings.fixed is None:
            raise InvalidEstimate("fixed estimation mode needs six cost numbers")
        return settings.fixed.validate()
    sparql_id = sparql_id or (sparql.id if sparql is not None else "sparql")
    xml_id = xml_id or (xml.id if xml is not None else "xml")
    if collection_name is None:
        collection_name = xml.collection_name if xml is not None else "default"
    s_stats = _backend_stats(stats, sparql_id)
    x_stats = _backend_stats(stats, xml_id)

    if mode is EstimateMode.ORACLE:
        if sparql is None or xml is None:
            raise InvalidEstimate("oracle estimation needs both backends")
        probe = run_oracle_probes(d, sparql, xml, prefixes=prefixes, cache=cache)
        card = Cardinalities(probe.sparql_rows, probe.sparql_docs, probe.xquery_docs,
                             probe.total_docs)
        c_sparql = probe.sparql_ms
        c_xquery = probe.xquery_ms
        if s_stats is not None and (s_stats.mean_latency_ms or s_stats.per_result_ms):
            work = probe.unfiltered_rows * max(1, triple_pattern_count(d.sparql_instance.where))
            c_sparql = s_stats.mean_latency_ms + s_stats.per_result_ms * work
        if x_stats is not None and (x_stats.mean_latency_ms or x_stats.per_doc_ms):
            c_xquery = x_stats.mean_latency_ms + x_stats.per_doc_ms * probe.total_docs
        return assemble_estimate(c_sparql, c_xquery, card, settings)

    # history mode
    fps = plan_fingerprints(d, collection_name, prefixes)
    s_hist = stats.lookup(fps.sparql)
    x_hist = stats.lookup(fps.xquery)
    d_hist = stats.lookup(docs_fingerprint(fps.sparql))
    defaults = settings.defaults
    if s_hist is None and x_hist is None and defaults is not None and defaults.estimate is not None:
        return defaults.estimate.validate()
    if defaults is None and (s_hist is None or x_hist is None):
        raise NoStatsAvailable("no execution history and no configured defaults")
    defaults = defaults or OptimizerDefaults()
    n_docs = (x_stats.total_documents if x_stats is not None and x_stats.total_documents
              else defaults.total_documents)
    s_rows = s_hist[1] if s_hist is not None else defaults.sparql_rows
    s_docs = d_hist[1] if d_hist is not None else (
        defaults.sparql_docs if defaults.sparql_docs is not None else min(s_rows, n_docs))
    x_docs = x_hist[1] if x_hist is not None else defaults.xquery_docs
    card = Cardinalities(s_rows, s_docs, x_docs, n_docs)
    if s_hist is not None:
        c_sparql = s_hist[0]
    else:
        bs = s_stats or BackendStats()
        c_sparql = (bs.mean_latency_ms or bs.observed_mean_ms) + bs.per_result_ms * s_rows
    if x_hist is not None:
        c_xquery = x_hist[0]
    else:
        bs = x_stats or BackendStats()
        c_xquery = (bs.mean_latency_ms or bs.observed_mean_ms) + bs.per_doc_ms * n_docs
    return assemble_estimate(c_sparql, c_xquery, card, settings)
