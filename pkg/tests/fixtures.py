"""Hand-seeded data for the hybrid query shape."""

from pathlib import Path

from xqfed.backends import BackendConfig, BackendKind, MockSparqlBackend, MockXmlBackend
from xqfed.backends.mock_sparql import TripleStore
from xqfed.backends.xquery_engine import DocumentStore
from xqfed.model import XSD_INTEGER, RdfTerm
from xqfed.parser import DEFAULT_PREFIXES

CORPUS = Path(__file__).parent / "corpus"
GOLDENS = Path(__file__).parent / "goldens"
DBPEDIA = "http://dbpedia.org/sparql"
EX = DEFAULT_PREFIXES["ex"]
RDF_TYPE = DEFAULT_PREFIXES["rdf"] + "type"
SAME_AS = DEFAULT_PREFIXES["owl"] + "sameAs"
POP = DEFAULT_PREFIXES["dbo"] + "populationTotal"


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def mail_doc(mails) -> str:
    """``mails``: (leaveDate, body) pairs."""
    parts = ["<safety>"]
    for date, body in mails:
        parts.append(f"<mail><leaveDate>{date}</leaveDate><body>{body}</body></mail>")
    parts.append("</safety>")
    return "".join(parts)


def country_store(countries) -> TripleStore:
    """``countries``: (name, doc id, population) triples."""
    store = TripleStore()
    for name, doc, pop in countries:
        s = RdfTerm.iri(EX + name)
        x = RdfTerm.iri("http://dbpedia.org/resource/" + name)
        store.add(s, RdfTerm.iri(RDF_TYPE), RdfTerm.iri(EX + "Country"))
        store.add(s, RdfTerm.iri(EX + "safetyInfo"), RdfTerm.literal(doc))
        store.add(s, RdfTerm.iri(SAME_AS), x)
        store.add(x, RdfTerm.iri(POP), RdfTerm.literal(str(pop), XSD_INTEGER), DBPEDIA)
    return store


THREE_COUNTRIES = [("c0", "0001.xml", 20_000_000), ("c1", "0002.xml", 5_000_000),
                   ("c2", "0003.xml", 30_000_000)]
THREE_DOCS = {
    "0001.xml": mail_doc([("2020-04-01", "coronavirus warning")]),
    "0002.xml": mail_doc([("2020-05-01", "coronavirus update")]),
    "0003.xml": mail_doc([("2020-01-01", "coronavirus early"), ("2020-06-01", "weather")]),
}


def mock_pair(countries=THREE_COUNTRIES, docs=THREE_DOCS, *, sparql_latency=None,
              xml_latency=None, collection="safety_info"):
    sparql = MockSparqlBackend(
        BackendConfig("rdf", BackendKind.SPARQL_MOCK, simulated_latency=sparql_latency),
        country_store(countries))
    store = DocumentStore()
    store.add_many(docs)
    xml = MockXmlBackend(
        BackendConfig("xml", BackendKind.XML_MOCK, collection_name=collection,
                      simulated_latency=xml_latency), store)
    return sparql, xml


CORPUS_FILES = ("mail_query.xq", "populous_countries.rq", "hybrid_query.rq", "parallel_rewrite.xq",
                "sparql_first_rewrite.xq", "xquery_first_rewrite.rq", "bench_template.rq")

_XQ_VARIANTS = (
    "FOR $m in doc('a.xml')//mail WHERE $m/leaveDate >= xs:date('2021-01-01') RETURN $m/body",
    "FOR $m in doc('a.xml')//mail[1] RETURN not(contains($m, 'x')) or exists($m/@lang)",
    "LET $x := doc('a.xml')/messages/mail[body = 'hi'][2] RETURN count($x) > 1",
    "FOR $a in collection('c'), $b in doc('b.xml')//item LET $t := $a//title "
    "WHERE $t = $b and $a/note != 'n' RETURN <r><x>{$t}</x>text {{braces}}</r>",
    "RETURN true()",
    "FOR $d in ('0001.xml', 'it''s.xml') RETURN base-uri($d)",
    "LET $d := doc('a.xml') RETURN ($d//mail, $d//note)",
)

_SPARQL_VARIANTS = (
    "SELECT ?s WHERE { ?s ?p ?o . }",
    "SELECT ?s ?n WHERE { ?s ex:name ?n , 'alias'@en ; ex:age ?a . "
    "FILTER ( ?a * 2 >= 100 && !(?a = 300) ) }",
    "SELECT ?s WHERE { { ?s rdf:type ex:Country . } UNION { ?s rdf:type ex:City . } "
    "UNION { ?s ex:capital true . } }",
    "SELECT ?s WHERE { ?s ex:value '3.5'^^<http://www.w3.org/2001/XMLSchema#decimal> . "
    "BIND ( ?s AS ?t ) }",
    "SELECT (COUNT(*) AS ?n) WHERE { ?s ex:p ?o . }",
    "SELECT (COUNT(DISTINCT ?s) AS ?n) WHERE { ?s ex:p ?o . }",
    "SELECT ?s WHERE { ?s owl:sameAs ?x . SERVICE <http://dbpedia.org/sparql> "
    "{ ?x dbo:populationTotal ?pop . FILTER (?pop > 1,000) } }",
)

_HYBRID_TEMPLATE = """\
SELECT ?s
WHERE {{ ?s rdf:type ex:Country ; ex:safetyInfo ?doc ; owl:sameAs ?x .
  SERVICE <http://dbpedia.org/sparql> {{
     SELECT ?x WHERE {{ ?x dbo:populationTotal ?pop . FILTER ( ?pop > {pop} ) . }} }}
  XQueryFILTER ( {body} ) .
}}
"""

_BODIES = (
    "LET $x := doc(?doc)//mail[leaveDate > xs:date('{date}')] RETURN contains($x, '{kw}')",
    "FOR $m in doc(?doc)//mail WHERE $m/leaveDate < xs:date('{date}') "
    "RETURN contains($m/body, '{kw}')",
    "LET $t := doc(?doc) RETURN exists($t//mail[contains(body, '{kw}')]) and count($t//mail) >= 1",
)


def corpus_variants() -> list[tuple[str, str, str]]:
    """``(name, kind, text)`` for the generated variants; kind is ``sparql`` or ``xquery``."""
    out = [(f"xq-{i}", "xquery", t) for i, t in enumerate(_XQ_VARIANTS)]
    out += [(f"sparql-{i}", "sparql", t) for i, t in enumerate(_SPARQL_VARIANTS)]
    n = 0
    for pop in ("10,000,000", "5000000", "0"):
        for body in _BODIES:
            for date, kw in (("2020-03-01", "coronavirus"), ("2019-12-31", "it''s")):
                text = _HYBRID_TEMPLATE.format(pop=pop, body=body.format(date=date, kw=kw))
                out.append((f"hybrid-{n}", "sparql", text))
                n += 1
    bench_template = corpus_text("bench_template.rq")
    for pop, date in (("0", "2000-01-01"), ("123456", "2030-12-31")):
        text = bench_template.replace("5000000", pop).replace("2020-06-01", date)
        out.append((f"template-{pop}", "sparql", text))
        out.append((f"template-{pop}-flat", "sparql", " ".join(text.split())))
    return out


# (cSparql, cXquery, cJoinP, cJoinS, rhoS, rhoX) -> (parallel, sparqlFirst, xqueryFirst),
# evaluated by hand with exact fractions
COST_TABLE = [
    ((10, 100, 1, 0.5, 0.05, 0.5), (101.0, 15.5, 105.0)),
    ((0, 0, 0, 0, 0, 0), (0.0, 0.0, 0.0)),
    ((5, 50, 0, 0, 0, 0), (50.0, 5.0, 50.0)),
    ((50, 5, 0, 0, 0, 0), (50.0, 50.0, 5.0)),
    ((7, 7, 0, 0, 0.3, 0.3), (7.0, 9.1, 9.1)),
    ((100, 10, 0.5, 0.25, 1, 0.1), (100.5, 110.25, 20.0)),
    ((1, 1, 1, 1, 1, 1), (2.0, 3.0, 2.0)),
    ((250, 3, 2, 0.125, 0.5, 0.02), (252.0, 251.625, 8.0)),
    ((3, 250, 2, 0.125, 0.02, 0.5), (252.0, 8.125, 251.5)),
    ((12.5, 40, 0.75, 0.5, 0.25, 0.75), (40.75, 23.0, 49.375)),
    ((1000, 1000, 10, 5, 0.001, 0.999), (1010.0, 1006.0, 1999.0)),
    ((0.001, 0.002, 0, 0, 0.5, 0.5), (0.002, 0.002, 0.0025)),
    ((60, 60, 0, 0, 0, 1), (60.0, 60.0, 120.0)),
    ((20, 1, 0.2, 0.02, 0.2, 0.25), (20.2, 20.22, 6.0)),
    ((2, 1000, 0.5, 0.3, 0.01, 1), (1000.5, 12.3, 1002.0)),
    ((400, 40, 0.4, 0.04, 0.9, 0.05), (400.4, 436.04, 60.0)),
    ((33, 66, 3, 1.5, 0.333, 0.666), (69.0, 56.478, 87.978)),
    ((1e6, 2e6, 100, 50, 0.125, 0.0625), (2000100.0, 1250050.0, 2062500.0)),
    ((7.25, 3.5, 0.125, 0.0625, 0.75, 0.0), (7.375, 9.9375, 3.5)),
    ((0, 80, 1, 1, 1, 0), (81.0, 81.0, 80.0)),
    ((80, 0, 1, 1, 0, 1), (81.0, 81.0, 80.0)),
    ((15, 30, 2, 2, 0.5, 0.5), (32.0, 32.0, 37.5)),
]
