"""Synthetic benchmark scenarios and plan timing.

A scenario links ``entity_count`` entities to ``doc_count`` XML documents
(entity ``i`` points at document ``i mod doc_count``).  Selectivities are
exact by construction:

* populations are the distinct values ``1000, 2000, ...`` in seeded random
  order, so ``FILTER(?pop > (E - k) * 1000 + 500)`` keeps exactly ``k``
  entities;
* every document has one keyword mail whose date is a distinct day offset,
  plus filler mails without the keyword, so ``leaveDate < base + m days``
  matches exactly ``m`` documents.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import random
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from .backends import BackendConfig, BackendKind, MockSparqlBackend, MockXmlBackend
from .backends.mock_sparql import TripleStore
from .backends.xquery_engine import DocumentStore
from .errors import InfeasibleGrid, XqfedError
from .executor import ExecutionSettings, execute_plan
from .model import XSD_INTEGER, RdfTerm
from .optimizer import CatalogStats, EstimateMode, ProbeCache, choose_plan, compute_plan_costs, estimate
from .parser import DEFAULT_PREFIXES, decompose, parse_extended_query
from .rewriter import PlanKind

SERVICE_IRI = "http://dbpedia.org/sparql"
BASE_DATE = _dt.date(2000, 1, 1)
KEYWORD = "coronavirus"
COLLECTION = "bench"

QUERY_TEMPLATE = """\
SELECT ?entity ?safety
WHERE { ?entity ex:safetyInfo ?safety .
  SERVICE <http://dbpedia.org/sparql> {
     ?entity dbo:populationTotal ?pop .
     FILTER (?pop > _pop_ ) .
  }
  XQueryFILTER (
     LET $d := doc(?safety)//mail[leaveDate < xs:date('_date_')]
     RETURN contains($d, 'coronavirus')
  ) .
}
"""

_FILLER = ("weather advisory", "office closed", "visa update", "election notice",
           "festival traffic", "road works")

CSV_COLUMNS = ("scenario", "plan", "sparql_sel", "xquery_sel", "median_ms", "sparql_ms",
               "xquery_ms", "join_ms", "chosen_by_optimizer")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    doc_count: int
    entity_count: int
    sparql_latency: tuple[float, float]  # (fixed ms, ms per matched triple)
    xml_latency: tuple[float, float]     # (fixed ms, ms per touched document)
    sparql_grid: tuple[int, ...]
    xquery_grid: tuple[int, ...]
    seed: int = 0
    filler_mails: int = 2

    def validate(self) -> "ScenarioSpec":
        if self.doc_count < 1 or self.entity_count < 1:
            raise InfeasibleGrid("scenarios need at least one document and one entity")
        if not self.sparql_grid or not self.xquery_grid:
            raise InfeasibleGrid("selectivity grids must be non-empty")
        for k in self.sparql_grid:
            if not 0 <= k <= self.entity_count:
                raise InfeasibleGrid(f"SPARQL selectivity {k} outside [0, {self.entity_count}]")
        for m in self.xquery_grid:
            if not 0 <= m <= self.doc_count:
                raise InfeasibleGrid(f"XQuery selectivity {m} outside [0, {self.doc_count}]")
        return self

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.name, self.doc_count, self.entity_count, self.sparql_latency,
                            self.xml_latency, self.sparql_grid, self.xquery_grid, seed,
                            self.filler_mails)


# Latency regimes: CS has a slow SPARQL side, DS a slow XML side, LS
# comparable sides with XQuery somewhat dearer than SPARQL.
PRESETS: dict[str, ScenarioSpec] = {
    "CS": ScenarioSpec("CS", 200, 200, (50.0, 0.5), (1.0, 0.02),
                       (10, 50, 100, 200), (5, 20, 50, 150)),
    "LS": ScenarioSpec("LS", 400, 400, (5.0, 0.05), (2.0, 0.15),
                       (10, 50, 100, 200, 400), (40, 200)),
    "DS": ScenarioSpec("DS", 1000, 1000, (2.0, 0.004), (5.0, 0.5),
                       (10, 50, 100, 250), (50, 250, 500)),
}


def low_xquery_points(spec: ScenarioSpec) -> list[int]:
    """Grid points counted as low XQuery selectivity (at most a quarter of the documents)."""
    return [m for m in spec.xquery_grid if m <= spec.doc_count // 4]


def doc_name(j: int) -> str:
    return f"d{j:05d}.xml"


def instantiate(template: str, pop: int, date: _dt.date) -> str:
    return template.replace("_pop_", str(pop)).replace("_date_", date.isoformat())


@dataclass
class Scenario:
    spec: ScenarioSpec
    store: TripleStore
    docs: dict[str, str]
    populations: list[int]
    keyword_offsets: list[int]

    def pop_threshold(self, k: int) -> int:
        return (self.spec.entity_count - k) * 1000 + 500

    def date_threshold(self, m: int) -> _dt.date:
        return BASE_DATE + _dt.timedelta(days=m)

    def query(self, k: int, m: int) -> str:
        return instantiate(QUERY_TEMPLATE, self.pop_threshold(k), self.date_threshold(m))

    def backends(self, *, latency: bool = True) -> tuple[MockSparqlBackend, MockXmlBackend]:
        s_lat = self.spec.sparql_latency if latency else None
        x_lat = self.spec.xml_latency if latency else None
        sparql = MockSparqlBackend(BackendConfig(f"{self.spec.name}-rdf", BackendKind.SPARQL_MOCK,
                                                 simulated_latency=s_lat), self.store)
        docs = DocumentStore()
        docs.add_many(self.docs)
        xml = MockXmlBackend(BackendConfig(f"{self.spec.name}-xml", BackendKind.XML_MOCK,
                                           collection_name=COLLECTION, simulated_latency=x_lat),
                             docs)
        return sparql, xml

    def expected_rows(self, k: int, m: int) -> set[tuple[str, str]]:
        """(entity IRI, document id) pairs satisfying both conditions."""
        out = set()
        thr = self.pop_threshold(k)
        for i, pop in enumerate(self.populations):
            j = i % self.spec.doc_count
            if pop > thr and self.keyword_offsets[j] < m:
                out.add((DEFAULT_PREFIXES["ex"] + f"e{i}", doc_name(j)))
        return out


def _mail(date: _dt.date, body: str) -> str:
    return f"<mail><leaveDate>{date.isoformat()}</leaveDate><body>{body}</body></mail>"


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    spec.validate()
    rng = random.Random(spec.seed)
    n, e = spec.doc_count, spec.entity_count
    populations = [1000 * (i + 1) for i in range(e)]
    rng.shuffle(populations)
    offsets = list(range(n))
    rng.shuffle(offsets)
    docs = {}
    for j in range(n):
        mails = [_mail(BASE_DATE + _dt.timedelta(days=offsets[j]), f"{KEYWORD} notice {j}")]
        for _ in range(spec.filler_mails):
            mails.append(_mail(BASE_DATE + _dt.timedelta(days=rng.randrange(0, n + 1)),
                               rng.choice(_FILLER)))
        rng.shuffle(mails)
        docs[doc_name(j)] = "<messages>" + "".join(mails) + "</messages>"
    store = TripleStore()
    safety = RdfTerm.iri(DEFAULT_PREFIXES["ex"] + "safetyInfo")
    pop_p = RdfTerm.iri(DEFAULT_PREFIXES["dbo"] + "populationTotal")
    for i in range(e):
        ent = RdfTerm.iri(DEFAULT_PREFIXES["ex"] + f"e{i}")
        store.add(ent, safety, RdfTerm.literal(doc_name(i % n)))
        store.add(ent, pop_p, RdfTerm.literal(str(populations[i]), XSD_INTEGER), SERVICE_IRI)
    return Scenario(spec, store, docs, populations, offsets)


@dataclass
class Measurement:
    scenario: str
    plan: PlanKind
    sparql_sel: int
    xquery_sel: int
    median_ms: float = float("nan")
    sparql_ms: float = float("nan")
    xquery_ms: float = float("nan")
    join_ms: float = float("nan")
    chosen_by_optimizer: bool = False
    failed: bool = False
    error: Optional[str] = None
    samples: list[float] = field(default_factory=list)

    def row(self) -> dict:
        return {"scenario": self.scenario, "plan": self.plan.value,
                "sparql_sel": self.sparql_sel, "xquery_sel": self.xquery_sel,
                "median_ms": f"{self.median_ms:.3f}", "sparql_ms": f"{self.sparql_ms:.3f}",
                "xquery_ms": f"{self.xquery_ms:.3f}", "join_ms": f"{self.join_ms:.4f}",
                "chosen_by_optimizer": str(self.chosen_by_optimizer).lower()}


def measure_plan(plan: PlanKind, d, sparql, xml, repetitions: int,
                 settings: Optional[ExecutionSettings] = None) -> tuple[list, object]:
    """One discarded warm-up run, then ``repetitions`` timed runs."""
    execute_plan(plan, d, sparql, xml, settings)
    runs = [execute_plan(plan, d, sparql, xml, settings) for _ in range(repetitions)]
    return runs, runs[-1].table


def run_point(scenario: Scenario, k: int, m: int, repetitions: int = 5, *,
              sparql=None, xml=None, estimate_mode: str = "oracle") -> list[Measurement]:
    if sparql is None or xml is None:
        sparql, xml = scenario.backends()
    d = decompose(parse_extended_query(scenario.query(k, m)))
    chosen = None
    try:
        e = estimate(d, CatalogStats(), EstimateMode(estimate_mode), sparql=sparql, xml=xml,
                     cache=ProbeCache())
        chosen = choose_plan(compute_plan_costs(e))
    except XqfedError:
        chosen = None
    out = []
    for plan in PlanKind:
        meas = Measurement(scenario.spec.name, plan, k, m, chosen_by_optimizer=plan is chosen)
        try:
            runs, _ = measure_plan(plan, d, sparql, xml, repetitions)
        except XqfedError as exc:
            meas.failed = True
            meas.error = f"{type(exc).__name__}: {exc}"
            out.append(meas)
            continue
        meas.samples = [r.total_ms for r in runs]
        meas.median_ms = statistics.median(meas.samples)
        meas.sparql_ms = statistics.median(r.sparql_ms for r in runs)
        meas.xquery_ms = statistics.median(r.xquery_ms for r in runs)
        meas.join_ms = statistics.median(r.join_ms for r in runs)
        out.append(meas)
    return out


def run_benchmark(spec: ScenarioSpec, repetitions: int = 5, *,
                  estimate_mode: str = "oracle") -> list[Measurement]:
    """Time every plan at every grid point; grid points run sequentially."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    scenario = generate_scenario(spec)
    sparql, xml = scenario.backends()
    out = []
    for m in spec.xquery_grid:
        for k in spec.sparql_grid:
            out.extend(run_point(scenario, k, m, repetitions, sparql=sparql, xml=xml,
                                 estimate_mode=estimate_mode))
    return out


def write_csv(measurements: Iterable[Measurement], fh: TextIO) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for meas in measurements:
        w.writerow(meas.row())


def to_csv(measurements: Iterable[Measurement]) -> str:
    buf = io.StringIO()
    write_csv(measurements, buf)
    return buf.getvalue()


def fastest(measurements: Iterable[Measurement], k: int, m: int) -> Optional[PlanKind]:
    cands = [x for x in measurements if x.sparql_sel == k and x.xquery_sel == m and not x.failed]
    return min(cands, key=lambda x: x.median_ms).plan if cands else None


@dataclass
class TrialResult:
    chosen: PlanKind
    medians: dict
    spec: ScenarioSpec
    sparql_sel: int
    xquery_sel: int

    @property
    def fastest(self) -> PlanKind:
        return min(self.medians, key=self.medians.get)

    @property
    def decisive(self) -> bool:
        """False when the two fastest plans are within 10% of each other."""
        a, b = sorted(self.medians.values())[:2]
        return b >= 1.1 * a

    @property
    def correct(self) -> bool:
        return self.chosen is self.fastest


def _log_uniform(rng: random.Random, lo: float, hi: float) -> float:
    return lo * (hi / lo) ** rng.random()


def random_trial_spec(rng: random.Random, max_docs: int = 50) -> tuple[ScenarioSpec, int, int]:
    """A small scenario with random latencies and one random grid point."""
    n = rng.randint(10, max_docs)
    spec = ScenarioSpec(
        "trial", n, n,
        (rng.uniform(0.0, 2.0), _log_uniform(rng, 0.05, 1.5)),
        (rng.uniform(0.0, 2.0), _log_uniform(rng, 0.1, 3.0)),
        (0,), (0,), seed=rng.randrange(2**31))
    return spec, rng.randint(0, n), rng.randint(0, n)


def optimizer_trial(rng: random.Random, repetitions: int = 3) -> TrialResult:
    """Oracle-estimated plan choice versus measured medians of all three plans."""
    spec, k, m = random_trial_spec(rng)
    scenario = generate_scenario(spec)
    sparql, xml = scenario.backends()
    d = decompose(parse_extended_query(scenario.query(k, m)))
    e = estimate(d, CatalogStats(), EstimateMode.ORACLE, sparql=sparql, xml=xml,
                 cache=ProbeCache())
    chosen = choose_plan(compute_plan_costs(e))
    medians = {}
    for plan in PlanKind:
        runs, _ = measure_plan(plan, d, sparql, xml, repetitions)
        medians[plan] = statistics.median(r.total_ms for r in runs)
    return TrialResult(chosen, medians, spec, k, m)
