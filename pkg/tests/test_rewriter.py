import re

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from xqfed.errors import (
    DocCallAmbiguous, EmptyBindingList, LinkVarNotInDocCall, PlanError, VariableNotInPattern,
)
from xqfed.model import (
    ElementConstructor, Enclosed, GraphPattern, TriplePattern, Var, iter_nodes,
)
from xqfed.parser import decompose, parse_extended_query, parse_flwr, serialize
from xqfed.rewriter import (
    PlanKind, RewrittenPlanQueries, chunked, ensure_link_var_selected, normalize_doc_ids,
    plan_queries, rewrite_sparql_xquery_first, rewrite_xquery_parallel,
    rewrite_xquery_sparql_first,
)

from fixtures import GOLDENS, corpus_text
from generators import extended_queries

HYP = settings(max_examples=100, deadline=None, suppress_health_check=list(HealthCheck))
DOC = Var("doc")
IDS = ["0001.xml", "0002.xml"]
doc_id_lists = st.lists(st.sampled_from(["a.xml", "b.xml", "0001.xml", "it's.xml", "z"]),
                        min_size=1, max_size=5, unique=True)


def hybrid_query():
    return decompose(parse_extended_query(corpus_text("hybrid_query.rq")))


def golden(name: str) -> str:
    return (GOLDENS / name).read_text(encoding="utf-8")


class TestGoldens:
    def test_parallel_rewrite(self):
        out = rewrite_xquery_parallel(hybrid_query().xquery_instance, DOC, "safety_info")
        assert serialize(out) == golden("parallel_rewrite.xq")

    def test_sparql_first_rewrite(self):
        out = rewrite_xquery_sparql_first(hybrid_query().xquery_instance, DOC, IDS)
        assert serialize(out) == golden("sparql_first_rewrite.xq")

    def test_xquery_first_rewrite(self):
        out = rewrite_sparql_xquery_first(hybrid_query().sparql_instance, DOC, IDS)
        assert serialize(out) == golden("xquery_first_rewrite.rq")

    @pytest.mark.parametrize("name", ["parallel_rewrite.xq", "sparql_first_rewrite.xq",
                                      "xquery_first_rewrite.rq"])
    def test_goldens_are_canonical(self, name):
        # the corpus rewrites, with $doc renamed, serialize byte-equal to the goldens
        raw = corpus_text(name).replace("$doc", "$__doc")
        parse = parse_flwr if name.endswith(".xq") else parse_extended_query
        assert serialize(parse(raw)) == golden(name)


class TestEnsureLinkVarSelected:
    def test_appends(self):
        q = ensure_link_var_selected(hybrid_query().sparql_instance, DOC)
        assert q.select_vars == (Var("s"), DOC)
        assert serialize(q).startswith("SELECT ?s ?doc\n")

    def test_idempotent(self):
        q = ensure_link_var_selected(hybrid_query().sparql_instance, DOC)
        assert ensure_link_var_selected(q, DOC) is q

    def test_absent(self):
        with pytest.raises(VariableNotInPattern):
            ensure_link_var_selected(hybrid_query().sparql_instance, Var("nope"))


class TestParallel:
    def test_existing_where_is_conjoined(self):
        x = parse_flwr("FOR $m in doc(?doc)//mail WHERE $m/a = 1 RETURN contains($m, 'k')")
        out = serialize(rewrite_xquery_parallel(x, DOC, "c"))
        assert out == ("FOR $__doc in collection('c')\nFOR $m in $__doc//mail\n"
                       "WHERE $m/a = 1 and contains($m, 'k')\nRETURN base-uri($__doc)\n")

    def test_boolean_where_keeps_grouping(self):
        x = parse_flwr("FOR $m in doc(?doc)//mail WHERE $m/a = 1 or $m/b = 2 "
                       "RETURN $m/c = 3 or $m/d = 4")
        out = rewrite_xquery_parallel(x, DOC, "c")
        assert "WHERE ($m/a = 1 or $m/b = 2) and ($m/c = 3 or $m/d = 4)" in serialize(out)
        assert serialize(parse_flwr(serialize(out))) == serialize(out)

    def test_name_collision(self):
        x = parse_flwr("LET $__doc := doc(?doc) RETURN exists($__doc//mail)")
        out = serialize(rewrite_xquery_parallel(x, DOC, "c"))
        assert out.startswith("FOR $__doc1 in collection('c')\nLET $__doc := $__doc1\n")

    def test_link_var_outside_doc(self):
        with pytest.raises(LinkVarNotInDocCall):
            rewrite_xquery_parallel(parse_flwr("RETURN contains(?doc, 'a')"), DOC, "c")

    def test_two_doc_calls(self):
        x = parse_flwr("RETURN exists(doc(?doc)//a) and exists(doc(?doc)//b)")
        with pytest.raises(DocCallAmbiguous):
            rewrite_xquery_parallel(x, DOC, "c")

    @HYP
    @given(extended_queries(with_filter=True))
    def test_no_sparql_variables_in_output(self, q):
        d = decompose(q)
        out = rewrite_xquery_parallel(d.xquery_instance, d.link_variable, "coll")
        text = serialize(out)
        assert not re.search(r"\?[A-Za-z_]", text)
        assert out.return_expr == parse_flwr("RETURN base-uri($__doc)").return_expr


class TestSparqlFirst:
    def test_single_doc(self):
        out = rewrite_xquery_sparql_first(hybrid_query().xquery_instance, DOC, ["0001.xml"])
        assert serialize(out).startswith("FOR $__doc in ('0001.xml')\n")

    def test_empty(self):
        with pytest.raises(EmptyBindingList):
            rewrite_xquery_sparql_first(hybrid_query().xquery_instance, DOC, [])

    def test_where_preserved(self):
        x = parse_flwr("FOR $m in doc(?doc)//mail WHERE $m/a = 1 RETURN contains($m, 'k')")
        out = rewrite_xquery_sparql_first(x, DOC, ["x"])
        assert serialize(out.where) == "$m/a = 1"

    @HYP
    @given(extended_queries(with_filter=True), doc_id_lists)
    def test_tuple_shape(self, q, ids):
        d = decompose(q)
        out = rewrite_xquery_sparql_first(d.xquery_instance, d.link_variable, ids)
        ret = out.return_expr
        assert isinstance(ret, ElementConstructor) and ret.name == "tuple"
        assert [c.name for c in ret.content] == ["doc", "bool"]
        assert all(isinstance(c.content[0], Enclosed) for c in ret.content)
        assert serialize(parse_flwr(serialize(out))) == serialize(out)


class TestXqueryFirst:
    def test_single_doc_has_no_union(self):
        d = hybrid_query()
        out = serialize(rewrite_sparql_xquery_first(d.sparql_instance, DOC, ["0001.xml"]))
        assert "UNION" not in out
        assert "ex:safetyInfo '0001.xml'" in out

    def test_quote_escaping(self):
        out = rewrite_sparql_xquery_first(hybrid_query().sparql_instance, DOC, ["it's.xml"])
        assert "ex:safetyInfo 'it\\'s.xml'" in serialize(out)
        assert parse_extended_query(serialize(out)) == out

    def test_selected_link_var_rebound(self):
        q = ensure_link_var_selected(hybrid_query().sparql_instance, DOC)
        out = serialize(rewrite_sparql_xquery_first(q, DOC, IDS))
        assert "BIND ( '0001.xml' AS ?doc ) ." in out
        assert "BIND ( '0002.xml' AS ?doc ) ." in out

    def test_iri_doc_ids(self):
        out = rewrite_sparql_xquery_first(hybrid_query().sparql_instance, DOC, ["http://d/1"],
                                          doc_id_as_iri=True)
        assert "ex:safetyInfo <http://d/1>" in serialize(out)

    def test_empty(self):
        with pytest.raises(EmptyBindingList):
            rewrite_sparql_xquery_first(hybrid_query().sparql_instance, DOC, [])

    @HYP
    @given(extended_queries(with_filter=True), doc_id_lists)
    def test_branches_and_substitution(self, q, ids):
        d = decompose(q)
        if any(n.predicate == d.link_variable for n in iter_nodes(q.where)
               if isinstance(n, TriplePattern)):
            with pytest.raises(PlanError):
                rewrite_sparql_xquery_first(d.sparql_instance, d.link_variable, ids)
            return
        out = rewrite_sparql_xquery_first(d.sparql_instance, d.link_variable, ids)
        branches = out.where.unions if len(ids) > 1 else (out.where,)
        assert len(branches) == max(1, len(ids))
        assert all(isinstance(b, GraphPattern) for b in branches)
        if d.link_variable not in d.sparql_instance.select_vars:
            assert d.link_variable not in set(iter_nodes(out.where))
        assert out.select_vars == d.sparql_instance.select_vars


class TestPlanQueries:
    def test_parallel(self):
        p = plan_queries(hybrid_query(), PlanKind.PARALLEL, collection_name="safety_info")
        assert p.xquery_text == golden("parallel_rewrite.xq")
        assert p.join_required and p.join_key_variable == DOC
        assert p.sparql_text.startswith("SELECT ?s ?doc\n")

    def test_sparql_first_without_ids(self):
        p = plan_queries(hybrid_query(), PlanKind.SPARQL_FIRST, collection_name="c")
        assert p.xquery_text is None and p.join_required

    def test_sparql_first_dedupes_and_sorts(self):
        p = plan_queries(hybrid_query(), PlanKind.SPARQL_FIRST, collection_name="c",
                         doc_ids=["0002.xml", "0001.xml", "0002.xml"])
        assert p.xquery_text == golden("sparql_first_rewrite.xq")

    def test_xquery_first(self):
        p = plan_queries(hybrid_query(), PlanKind.XQUERY_FIRST, collection_name="safety_info",
                         doc_ids=IDS)
        assert p.sparql_text == golden("xquery_first_rewrite.rq")
        assert p.xquery_text == golden("parallel_rewrite.xq")
        assert not p.join_required and p.join_key_variable is None

    def test_invariants(self):
        with pytest.raises(ValueError):
            RewrittenPlanQueries(PlanKind.XQUERY_FIRST, "", None, True, DOC)
        with pytest.raises(ValueError):
            RewrittenPlanQueries(PlanKind.PARALLEL, "", None, True, None)

    @pytest.mark.parametrize("plan", list(PlanKind))
    def test_pure(self, plan):
        a = plan_queries(hybrid_query(), plan, collection_name="c", doc_ids=IDS)
        b = plan_queries(hybrid_query(), plan, collection_name="c", doc_ids=IDS)
        assert a == b


def test_normalize_and_chunk():
    assert normalize_doc_ids(["b", "a", "b"]) == ["a", "b"]
    assert chunked([1, 2, 3, 4, 5], 2) == [[1, 2], [3, 4], [5]]
    assert chunked([], 3) == []
    with pytest.raises(ValueError):
        chunked([1], 0)


def test_plan_kind_names():
    assert PlanKind.parse("sparql-first") is PlanKind.SPARQL_FIRST
    assert PlanKind.parse("XqueryFirst") is PlanKind.XQUERY_FIRST
    assert [k.cli_name for k in PlanKind] == ["parallel", "sparql-first", "xquery-first"]
    with pytest.raises(ValueError):
        PlanKind.parse("hybrid")
