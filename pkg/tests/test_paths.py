import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbg2dfg.equations import DependencyGraph
from hbg2dfg.paths import (
    CausalPath,
    CycleError,
    break_loops,
    eliminate_superfluous,
    extract_causal_paths,
    reaches,
    select_mediate_variables,
)


def dep(edges, kinds):
    g = nx.DiGraph()
    for n, k in kinds.items():
        g.add_node(n, kind=k)
    g.add_edges_from(edges)
    return DependencyGraph(g)


def test_circuit_contains_third_listed_path(circuit_run):
    paths = {p.nodes for p in circuit_run.paths}
    assert ("C1", "f_4", "f_3", "f_2", "e_2", "e_3", "De1") in paths


def test_paths_sorted_and_arrow_format(circuit_run):
    paths = circuit_run.paths
    assert paths == sorted(paths, key=lambda p: (p.begin, p.steps, p.end))
    assert str(CausalPath("R1", ("e_2", "e_3"), "De1")) == "R1 → e_2 → e_3 → De1"


def test_sps_battery_path(sps_run):
    nodes = {p.nodes for p in sps_run.paths}
    assert any(p[0] == "V_BR" and p[-1] == "D_e" and "f_15" in p and "f_p" in p for p in nodes)
    assert any(p[0] == "c_BR" and p[-1] == "D_e" for p in nodes)


def test_no_sensors_no_paths():
    g = dep([("h", "a"), ("a", "b")], {"h": "hypothesis", "a": "variable", "b": "variable"})
    assert extract_causal_paths(g) == []


def test_cycle_raises():
    g = dep([("h", "a"), ("a", "b"), ("b", "a"), ("b", "s")],
            {"h": "hypothesis", "a": "variable", "b": "variable", "s": "sensor"})
    with pytest.raises(CycleError):
        extract_causal_paths(g)


def test_break_loops_only_cuts_cycle_edges(circuit_run):
    dep_edges = set(circuit_run.dependency.graph.edges)
    assert nx.is_directed_acyclic_graph(circuit_run.dag.graph)
    for u, v in circuit_run.removed:
        assert (u, v) in dep_edges
    assert set(circuit_run.dag.graph.edges) == dep_edges - set(circuit_run.removed)


def test_chain_contracts():
    g = dep([("a", "b"), ("b", "c")], {"a": "hypothesis", "b": "variable", "c": "sensor"})
    r = eliminate_superfluous(g)
    assert r.edges() == [("a", "c")]
    assert select_mediate_variables(r) == set()


def test_fan_in_survives_as_mediate():
    g = dep([("a1", "b"), ("a2", "b"), ("b", "c"), ("c", "s")],
            {"a1": "hypothesis", "a2": "hypothesis", "b": "variable", "c": "variable", "s": "sensor"})
    r = eliminate_superfluous(g)
    assert r.edges() == [("a1", "b"), ("a2", "b"), ("b", "s")]
    assert select_mediate_variables(r) == {"b"}


def test_mode_edges_become_gates():
    g = dep([("h", "x"), ("m", "x"), ("x", "s")],
            {"h": "hypothesis", "m": "mode", "x": "variable", "s": "sensor"})
    r = eliminate_superfluous(g)
    assert set(r.edges()) == {("h", "s"), ("m", "s")}


# --- random DAG properties ------------------------------------------------------

@st.composite
def random_dags(draw):
    n_h = draw(st.integers(1, 3))
    n_v = draw(st.integers(0, 7))
    n_s = draw(st.integers(1, 3))
    nodes = [f"h{i}" for i in range(n_h)] + [f"v{i}" for i in range(n_v)] + [f"s{i}" for i in range(n_s)]
    kinds = {n: {"h": "hypothesis", "v": "variable", "s": "sensor"}[n[0]] for n in nodes}
    edges = []
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if kinds[a] == "sensor" or kinds[b] == "hypothesis":
                continue
            if draw(st.booleans()):
                edges.append((a, b))
    return dep(edges, kinds)


def _snapshot(r):
    return sorted(r.graph.nodes), [(u, v, r.gates(u, v)) for u, v in r.edges()]


@settings(max_examples=150, deadline=None)
@given(random_dags(), st.randoms(use_true_random=False))
def test_reduction_is_order_independent(g, rnd):
    order = sorted(g.graph.nodes)
    rnd.shuffle(order)
    assert _snapshot(eliminate_superfluous(g, order=order)) == _snapshot(eliminate_superfluous(g))


@settings(max_examples=150, deadline=None)
@given(random_dags())
def test_reduction_preserves_reachability(g):
    r = eliminate_superfluous(g)
    hyps = [n for n in g.graph if g.kind(n) == "hypothesis"]
    sensors = [n for n in g.graph if g.kind(n) == "sensor"]
    for h in hyps:
        for s in sensors:
            assert reaches(g.graph, h, s) == reaches(r.graph, h, s)


@settings(max_examples=100, deadline=None)
@given(random_dags())
def test_paths_end_at_sensors(g):
    for p in extract_causal_paths(g):
        assert g.kind(p.begin) == "hypothesis" and g.kind(p.end) == "sensor"
        assert all(g.graph.has_edge(a, b) for a, b in zip(p.nodes, p.nodes[1:]))
