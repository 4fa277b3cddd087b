import time

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_bias.dag import (
    CycleError,
    Dag,
    QueryError,
    ancestral_graph,
    cond_independent,
    moralize,
    parse_graph,
    parse_query,
    scheme_dag,
)


def past(t):
    return {f"Y{u}" for u in range(1, t)} | {f"S{u}" for u in range(1, t)}


def test_cycle_rejected():
    with pytest.raises(CycleError):
        Dag(edges=[("a", "b"), ("b", "c"), ("c", "a")])
    with pytest.raises(CycleError):
        Dag(edges=[("a", "a")])


def test_ancestral_graph_examples():
    chain = Dag(edges=[("a", "b"), ("b", "c")])
    assert ancestral_graph(chain, {"c"}) == chain
    assert ancestral_graph(chain, chain.nodes) == chain
    g = scheme_dag("UDr", 3)
    anc = ancestral_graph(g, {"Y2", "Y1", "S2", "S1", "alpha"})
    assert anc.nodes == {"Y2", "Y1", "S2", "S1", "alpha"}
    assert ("S2", "Y2") in anc.edges and ("Y1", "S2") in anc.edges


def test_ancestral_graph_unknown_node():
    with pytest.raises(QueryError):
        ancestral_graph(Dag(edges=[("a", "b")]), {"z"})


def test_moralize_collider_and_edgeless():
    m = moralize(Dag(edges=[("a", "c"), ("b", "c")]))
    assert m.has_edge("a", "b") and m.has_edge("a", "c") and m.has_edge("b", "c")
    assert not moralize(Dag(nodes=["x", "y"])).edges


def test_moralized_window_marries_effect_and_intensity():
    g = ancestral_graph(scheme_dag("UDr", 3), {"Y2", "Y1", "S2", "S1", "alpha"})
    m = moralize(g)
    assert m.has_edge("alpha", "S1") and m.has_edge("alpha", "S2")
    assert m.has_edge("S1", "Y1")  # parents of S2


@pytest.mark.parametrize("scheme,T,n_nodes,n_edges", [("UD", 3, 6, 7), ("FD", 3, 6, 3), ("UDr", 3, 7, 10),
                                                       ("FDr", 3, 7, 6)])
def test_scheme_dag_sizes(scheme, T, n_nodes, n_edges):
    g = scheme_dag(scheme, T)
    assert len(g.nodes) == n_nodes and len(g.edges) == n_edges


@pytest.mark.parametrize("T", [5, 20, 100])
def test_scheme_statements(T):
    t0 = time.perf_counter()
    ud, udr = scheme_dag("UD", T), scheme_dag("UDr", T)
    for t in (3, T):
        assert cond_independent(ud, {f"Y{t}"}, past(t), {f"S{t}"})
        assert cond_independent(udr, {f"Y{t}"}, past(t), {f"S{t}", "alpha"})
        assert cond_independent(udr, {f"S{t}"}, {"alpha"}, past(t))
        assert not cond_independent(udr, {f"S{t}"}, {"alpha"}, set())
    assert time.perf_counter() - t0 < 1.0


def test_future_intensity_depends_on_current_response():
    ud = scheme_dag("UD", 5)
    assert not cond_independent(ud, {"Y3"}, {"S4"}, {"S3"})


def test_fixed_design_pairs():
    fd, fdr = scheme_dag("FD", 6), scheme_dag("FDr", 6)
    for t in range(1, 7):
        for u in range(t + 1, 7):
            assert cond_independent(fd, {f"Y{t}"}, {f"Y{u}"})
            assert not cond_independent(fdr, {f"Y{t}"}, {f"Y{u}"})
            assert cond_independent(fdr, {f"Y{t}"}, {f"Y{u}"}, {"alpha", f"S{t}", f"S{u}"})


def test_overlapping_sets_rejected():
    g = scheme_dag("UD", 3)
    with pytest.raises(QueryError):
        cond_independent(g, {"Y1"}, {"Y1"}, set())
    with pytest.raises(QueryError):
        cond_independent(g, {"Y1"}, {"Y2"}, {"Y2"})


@st.composite
def dag_queries(draw):
    n = draw(st.integers(3, 9))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    order = draw(st.permutations(range(n)))
    roles = draw(st.lists(st.sampled_from("ABCx"), min_size=n, max_size=n))
    A = {order[i] for i in range(n) if roles[i] == "A"} or {order[0]}
    B = {order[i] for i in range(n) if roles[i] == "B"} - A or ({order[1]} - A)
    C = {order[i] for i in range(n) if roles[i] == "C"} - A - B
    return n, edges, A, B, C


@given(dag_queries())
def test_matches_networkx_d_separation(q):
    n, edges, A, B, C = q
    if not B:
        return
    g = Dag(range(n), edges)
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    G.add_edges_from(edges)
    expected = nx.is_d_separator(G, A, B, C)
    assert cond_independent(g, A, B, C) == expected
    assert cond_independent(g, B, A, C) == expected


def test_parse_graph_and_query():
    g = parse_graph("# chain\na -> b\n\nb -> c\nlonely\n")
    assert g.edges == {("a", "b"), ("b", "c")} and "lonely" in g.nodes
    assert parse_query("Y3 | Y1, Y2,S1 | S3") == ({"Y3"}, {"Y1", "Y2", "S1"}, {"S3"})
    assert parse_query("a | b ?") == ({"a"}, {"b"}, set())
    with pytest.raises(QueryError):
        parse_graph("a -> \n")
    with pytest.raises(QueryError):
        parse_graph("a b c\n")
    with pytest.raises(QueryError):
        parse_query("a")
