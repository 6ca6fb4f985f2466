"""Plan execution, result merging and the mediator facade."""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .backends import SparqlBackend, XmlBackend
from .errors import NoXQueryFilter, RowCapExceeded
from .model import ExtendedQuery, Var
from .optimizer import (
    CatalogStats, CostEstimate, EstimateMode, OptimizerSettings, PlanCosts, ProbeCache,
    choose_plan, compute_plan_costs, docs_fingerprint, estimate, fingerprint,
)
from .parser import DecomposedQuery, decompose, parse_extended_query, serialize, to_wire
from .results import BindingTable, XQueryTupleResult
from .rewriter import (
    DEFAULT_CHUNK_LIMIT, PlanKind, chunked, ensure_link_var_selected, normalize_doc_ids,
    plan_queries, rewrite_sparql_xquery_first, rewrite_xquery_parallel,
    rewrite_xquery_sparql_first,
)

DEFAULT_ROW_CAP = 1_000_000


@dataclass
class ExecutionSettings:
    chunk_limit: int = DEFAULT_CHUNK_LIMIT
    row_cap: int = DEFAULT_ROW_CAP
    doc_id_as_iri: bool = False
    prefixes: Optional[dict] = None

    def __post_init__(self):
        if self.chunk_limit < 1:
            raise ValueError("chunk limit must be >= 1")


@dataclass(frozen=True)
class Observation:
    fingerprint: str
    cardinality: int
    elapsed_ms: float
    backend: Optional[str]


@dataclass
class PlanExecution:
    plan: PlanKind
    table: BindingTable
    sparql_ms: float = 0.0
    xquery_ms: float = 0.0
    join_ms: float = 0.0
    total_ms: float = 0.0
    sparql_dispatches: int = 0
    xquery_dispatches: int = 0
    pushed_doc_ids: int = 0
    queries: dict = field(default_factory=dict)
    observations: list = field(default_factory=list)


def _ms_since(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def _check_cap(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise RowCapExceeded(f"{what} has {n} rows, above the in-memory cap of {cap}")


def hash_join(left: BindingTable, right_doc_ids: Iterable[str], key: Var) -> BindingTable:
    """Keep the rows of ``left`` whose ``key`` lexical form is in ``right_doc_ids``."""
    i = left.index(key)
    right = set(right_doc_ids)
    rows = [r for r in left.rows if r[i] is not None and r[i].lexical in right]
    return BindingTable(left.variables, rows)


def distinct_link_values(table: BindingTable, key: Var) -> list[str]:
    i = table.index(key)
    return normalize_doc_ids([r[i].lexical for r in table.rows if r[i] is not None])


class _Dispatcher:
    """Sends canonical texts to the backends and accounts for time and calls."""

    def __init__(self, sparql: SparqlBackend, xml: XmlBackend, settings: ExecutionSettings,
                 execution: PlanExecution, cancel: Optional[threading.Event] = None):
        self.sparql = sparql
        self.xml = xml
        self.settings = settings
        self.ex = execution
        self.cancel = cancel
        self._lock = threading.Lock()

    def select(self, q: ExtendedQuery) -> tuple[BindingTable, float, str]:
        canonical = serialize(q, self.settings.prefixes)
        t0 = time.perf_counter()
        table = self.sparql.select(to_wire(q, self.settings.prefixes), self.cancel)
        ms = _ms_since(t0)
        with self._lock:
            self.ex.sparql_ms += ms
            self.ex.sparql_dispatches += 1
        _check_cap(len(table), self.settings.row_cap, "SPARQL result")
        return table, ms, canonical

    def evaluate(self, x) -> tuple[list[str], float, str]:
        text = serialize(x, self.settings.prefixes)
        t0 = time.perf_counter()
        items = self.xml.evaluate(text, self.cancel)
        ms = _ms_since(t0)
        with self._lock:
            self.ex.xquery_ms += ms
            self.ex.xquery_dispatches += 1
        _check_cap(len(items), self.settings.row_cap, "XQuery result")
        return items, ms, text


def _project(table: BindingTable, d: DecomposedQuery) -> BindingTable:
    return table.project(d.sparql_instance.select_vars)


def execute_parallel(d: DecomposedQuery, sparql: SparqlBackend, xml: XmlBackend,
                     settings: Optional[ExecutionSettings] = None) -> PlanExecution:
    settings = settings or ExecutionSettings()
    link = d.link_variable
    sq = ensure_link_var_selected(d.sparql_instance, link)
    xq = rewrite_xquery_parallel(d.xquery_instance, link, xml.collection_name)
    ex = PlanExecution(PlanKind.PARALLEL, BindingTable.empty(d.sparql_instance.select_vars))
    cancel = threading.Event()
    disp = _Dispatcher(sparql, xml, settings, ex, cancel)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="xqfed") as pool:
        fs = pool.submit(disp.select, sq)
        fx = pool.submit(disp.evaluate, xq)
        first_error = None
        # both requests are already in flight; whichever fails first cancels the other
        for fut in as_completed((fs, fx)):
            exc = fut.exception()
            if exc is not None and first_error is None:
                first_error = exc
                cancel.set()
    if first_error is not None:
        raise first_error
    table, s_ms, s_text = fs.result()
    items, x_ms, x_text = fx.result()
    ex.queries = {"sparql": s_text, "xquery": x_text}
    docs = normalize_doc_ids(items)
    tj = time.perf_counter()
    joined = hash_join(table, docs, link)
    ex.join_ms = _ms_since(tj)
    ex.table = _project(joined, d)
    ex.total_ms = _ms_since(t0)
    fp_s = fingerprint(s_text)
    ex.observations = [
        Observation(fp_s, len(table), s_ms, sparql.id),
        Observation(docs_fingerprint(fp_s), len(distinct_link_values(table, link)), s_ms, None),
        Observation(fingerprint(x_text), len(docs), x_ms, xml.id),
    ]
    return ex


def execute_sparql_first(d: DecomposedQuery, sparql: SparqlBackend, xml: XmlBackend,
                         settings: Optional[ExecutionSettings] = None) -> PlanExecution:
    settings = settings or ExecutionSettings()
    link = d.link_variable
    ex = PlanExecution(PlanKind.SPARQL_FIRST, BindingTable.empty(d.sparql_instance.select_vars))
    disp = _Dispatcher(sparql, xml, settings, ex)
    t0 = time.perf_counter()
    sq = ensure_link_var_selected(d.sparql_instance, link)
    table, s_ms, s_text = disp.select(sq)
    fp_s = fingerprint(s_text)
    doc_ids = distinct_link_values(table, link)
    ex.queries = {"sparql": s_text}
    ex.observations = [Observation(fp_s, len(table), s_ms, sparql.id),
                       Observation(docs_fingerprint(fp_s), len(doc_ids), s_ms, None)]
    ex.pushed_doc_ids = len(doc_ids)
    if not doc_ids:
        ex.total_ms = _ms_since(t0)
        return ex
    true_docs: set[str] = set()
    texts = []
    for chunk in chunked(doc_ids, settings.chunk_limit):
        xq = rewrite_xquery_sparql_first(d.xquery_instance, link, chunk)
        items, x_ms, x_text = disp.evaluate(xq)
        texts.append(x_text)
        result = XQueryTupleResult.parse(items)
        true_docs |= result.true_docs()
        ex.observations.append(Observation(fingerprint(x_text), len(result.entries), x_ms, xml.id))
    ex.queries["xquery"] = "\n".join(texts)
    tj = time.perf_counter()
    joined = hash_join(table, true_docs, link)
    ex.join_ms = _ms_since(tj)
    ex.table = _project(joined, d)
    ex.total_ms = _ms_since(t0)
    return ex


def execute_xquery_first(d: DecomposedQuery, sparql: SparqlBackend, xml: XmlBackend,
                         settings: Optional[ExecutionSettings] = None) -> PlanExecution:
    settings = settings or ExecutionSettings()
    link = d.link_variable
    ex = PlanExecution(PlanKind.XQUERY_FIRST, BindingTable.empty(d.sparql_instance.select_vars))
    disp = _Dispatcher(sparql, xml, settings, ex)
    t0 = time.perf_counter()
    xq = rewrite_xquery_parallel(d.xquery_instance, link, xml.collection_name)
    items, x_ms, x_text = disp.evaluate(xq)
    doc_ids = normalize_doc_ids(items)
    ex.queries = {"xquery": x_text}
    ex.observations = [Observation(fingerprint(x_text), len(doc_ids), x_ms, xml.id)]
    ex.pushed_doc_ids = len(doc_ids)
    if not doc_ids:
        ex.total_ms = _ms_since(t0)
        return ex
    rows = []
    texts = []
    variables = None
    for chunk in chunked(doc_ids, settings.chunk_limit):
        sq = rewrite_sparql_xquery_first(d.sparql_instance, link, chunk,
                                         doc_id_as_iri=settings.doc_id_as_iri)
        table, s_ms, s_text = disp.select(sq)
        texts.append(s_text)
        variables = table.variables
        rows.extend(table.rows)
        _check_cap(len(rows), settings.row_cap, "SPARQL result")
        ex.observations.append(Observation(fingerprint(s_text), len(table), s_ms, sparql.id))
    ex.queries["sparql"] = "\n".join(texts)
    ex.table = _project(BindingTable(variables, rows), d)
    ex.total_ms = _ms_since(t0)
    return ex


EXECUTORS = {
    PlanKind.PARALLEL: execute_parallel,
    PlanKind.SPARQL_FIRST: execute_sparql_first,
    PlanKind.XQUERY_FIRST: execute_xquery_first,
}


def execute_plan(plan: PlanKind, d: DecomposedQuery, sparql: SparqlBackend, xml: XmlBackend,
                 settings: Optional[ExecutionSettings] = None) -> PlanExecution:
    return EXECUTORS[plan](d, sparql, xml, settings)


# ---------------------------------------------------------------------------
# explain report
# ---------------------------------------------------------------------------


@dataclass
class ExplainReport:
    """What the mediator decided and, after execution, what it measured.

    JSON schema (``to_dict``)::

        {"chosenPlan": "Parallel"|"SparqlFirst"|"XqueryFirst"|null,
         "planOverride": bool, "estimateMode": str|null,
         "estimate": {cSparql, cXquery, cJoinParallel, cJoinSparqlFirst,
                      rhoSparql, rhoXquery, unionSurcharge}|null,
         "planCosts": {parallel, sparqlFirst, xqueryFirst}|null,
         "queries": {"sparql": str, "xquery": str},
         "executed": bool, "resultRows": int|null,
         "dispatches": {"sparql": int, "xquery": int},
         "phasesMs": {parse, estimate, sparql, xquery, join, execute}}

    A null ``chosenPlan`` means plain SPARQL passed straight through.
    """

    chosen_plan: Optional[PlanKind]
    plan_override: bool = False
    estimate_mode: Optional[str] = None
    estimate: Optional[CostEstimate] = None
    costs: Optional[PlanCosts] = None
    queries: dict = field(default_factory=dict)
    executed: bool = False
    result_rows: Optional[int] = None
    dispatches: dict = field(default_factory=lambda: {"sparql": 0, "xquery": 0})
    phases_ms: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "chosenPlan": self.chosen_plan.value if self.chosen_plan else None,
            "planOverride": self.plan_override,
            "estimateMode": self.estimate_mode,
            "estimate": self.estimate.as_dict() if self.estimate else None,
            "planCosts": self.costs.as_dict() if self.costs else None,
            "queries": dict(self.queries),
            "executed": self.executed,
            "resultRows": self.result_rows,
            "dispatches": dict(self.dispatches),
        }
        if timings:
            out["phasesMs"] = {k: round(v, 3) for k, v in self.phases_ms.items()}
        return out

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"chosen plan: {self.chosen_plan.value if self.chosen_plan else 'pass-through'}"
                 + (" (override)" if self.plan_override else "")]
        if self.estimate is not None:
            lines.append(f"estimate ({self.estimate_mode}):")
            for k, v in self.estimate.as_dict().items():
                lines.append(f"  {k} = {v:g}")
        if self.costs is not None:
            lines.append("plan costs:")
            for k, v in self.costs.as_dict().items():
                lines.append(f"  {k} = {v:g}")
        for name in ("sparql", "xquery"):
            text = self.queries.get(name)
            if text:
                lines.append(f"{name} query:")
                lines.extend("  " + ln for ln in text.rstrip("\n").split("\n"))
            elif name in self.queries:
                lines.append(f"{name} query: (depends on first-stage results)")
        if self.executed:
            lines.append(f"result rows: {self.result_rows}")
            lines.append("dispatches: " + ", ".join(f"{k}={v}" for k, v in self.dispatches.items()))
        if self.phases_ms:
            lines.append("phases (ms): " + ", ".join(
                f"{k}={v:.3f}" for k, v in self.phases_ms.items()))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# mediator
# ---------------------------------------------------------------------------


class Mediator:
    """Parser, optimizer, executor and catalog wired to one backend pair."""

    def __init__(self, sparql: SparqlBackend, xml: XmlBackend, *,
                 optimizer: Optional[OptimizerSettings] = None,
                 catalog: Optional[CatalogStats] = None,
                 execution: Optional[ExecutionSettings] = None,
                 probe_cache: Optional[ProbeCache] = None):
        self.sparql = sparql
        self.xml = xml
        self.optimizer = optimizer or OptimizerSettings()
        self.catalog = catalog if catalog is not None else CatalogStats()
        self.execution = execution or ExecutionSettings(chunk_limit=self.optimizer.chunk_limit)
        self.probe_cache = probe_cache

    @classmethod
    def from_config(cls, cfg, catalog: Optional[CatalogStats] = None) -> "Mediator":
        from .backends import create_backend
        from .config import build_catalog
        sparql = create_backend(cfg.sparql_backend)
        xml = create_backend(cfg.xml_backend)
        return cls(sparql, xml, optimizer=cfg.optimizer,
                   catalog=catalog if catalog is not None else build_catalog(cfg),
                   execution=ExecutionSettings(cfg.optimizer.chunk_limit, cfg.row_cap,
                                               cfg.doc_id_as_iri, cfg.prefixes))

    @property
    def prefixes(self) -> Optional[dict]:
        return self.execution.prefixes

    def parse(self, text: str) -> ExtendedQuery:
        return parse_extended_query(text, self.prefixes)

    def estimate(self, d: DecomposedQuery, mode: EstimateMode | str | None = None) -> CostEstimate:
        mode = mode or self.optimizer.mode
        return estimate(d, self.catalog, mode, sparql=self.sparql, xml=self.xml,
                        settings=self.optimizer, prefixes=self.prefixes, cache=self.probe_cache)

    def _decide(self, d: DecomposedQuery, plan: Optional[PlanKind], mode, report: ExplainReport):
        t0 = time.perf_counter()
        if plan is None or mode is not None:
            mode = EstimateMode(mode) if isinstance(mode, str) else (mode or self.optimizer.mode)
            e = self.estimate(d, mode)
            report.estimate_mode = mode.value
            report.estimate = e
            report.costs = compute_plan_costs(e)
        report.phases_ms["estimate"] = _ms_since(t0)
        report.plan_override = plan is not None
        report.chosen_plan = plan if plan is not None else choose_plan(report.costs)

    def explain(self, text: str, plan: Optional[PlanKind] = None, *,
                mode: EstimateMode | str | None = None,
                doc_ids: Optional[list[str]] = None) -> ExplainReport:
        """Decide without executing; never touches the catalog."""
        report = ExplainReport(None)
        t0 = time.perf_counter()
        q = self.parse(text)
        report.phases_ms["parse"] = _ms_since(t0)
        try:
            d = decompose(q)
        except NoXQueryFilter:
            report.queries = {"sparql": serialize(q, self.prefixes)}
            return report
        self._decide(d, plan, mode or self.optimizer.mode, report)
        pq = plan_queries(d, report.chosen_plan, collection_name=self.xml.collection_name,
                          doc_ids=doc_ids, prefixes=self.prefixes,
                          doc_id_as_iri=self.execution.doc_id_as_iri)
        report.queries = {"sparql": pq.sparql_text or "", "xquery": pq.xquery_text or ""}
        return report

    def run(self, text: str, plan: Optional[PlanKind] = None, *,
            mode: EstimateMode | str | None = None,
            record: bool = True) -> tuple[BindingTable, ExplainReport]:
        report = ExplainReport(None)
        t0 = time.perf_counter()
        q = self.parse(text)
        report.phases_ms["parse"] = _ms_since(t0)
        try:
            d = decompose(q)
        except NoXQueryFilter:
            t1 = time.perf_counter()
            table = self.sparql.select(to_wire(q, self.prefixes))
            report.phases_ms["sparql"] = report.phases_ms["execute"] = _ms_since(t1)
            report.queries = {"sparql": serialize(q, self.prefixes)}
            report.executed = True
            report.result_rows = len(table)
            report.dispatches = {"sparql": 1, "xquery": 0}
            return table, report
        self._decide(d, plan, mode, report)
        ex = execute_plan(report.chosen_plan, d, self.sparql, self.xml, self.execution)
        report.queries = dict(ex.queries)
        report.executed = True
        report.result_rows = len(ex.table)
        report.dispatches = {"sparql": ex.sparql_dispatches, "xquery": ex.xquery_dispatches}
        report.phases_ms.update(sparql=ex.sparql_ms, xquery=ex.xquery_ms, join=ex.join_ms,
                                execute=ex.total_ms)
        if record:
            for o in ex.observations:
                self.catalog.record_observation(o.fingerprint, o.cardinality, o.elapsed_ms,
                                                backend=o.backend)
        return ex.table, report


def run(query_text: str, cfg, plan_override: Optional[PlanKind] = None
        ) -> tuple[BindingTable, ExplainReport]:
    """Parse, plan, execute and record one query using ``cfg`` (a MediatorConfig)."""
    return Mediator.from_config(cfg).run(query_text, plan_override)
