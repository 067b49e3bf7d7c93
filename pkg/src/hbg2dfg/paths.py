"""Causal paths from hypotheses to sensors, and reduction to mediate variables.

The raw dependency graph of a model with algebraic (resistive) loops is
cyclic. ``break_loops`` removes a deterministic set of edges until it is a
DAG, preferring edges that run back toward a source (loading effects),
then edges leaving a virtual resistor's variables, then edges leaving a
sensed variable. The paths and the reduction are computed on the result.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import networkx as nx

from .equations import DependencyGraph
from .model import HybridBondGraph

MAX_PATHS_PER_PAIR = 10_000

HYPOTHESIS = "hypothesis"
MODE = "mode"
EVIDENCE = "evidence"
INTERNAL = "internal"
MEDIATE = "mediate"


class CycleError(ValueError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("dependency cycle: " + " -> ".join(cycle + cycle[:1]))


class PathLimitError(ValueError):
    pass


@dataclass(frozen=True)
class CausalPath:
    begin: str
    steps: tuple[str, ...]
    end: str

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.begin,) + self.steps + (self.end,)

    def __str__(self) -> str:
        return " → ".join(self.nodes)


# --- loop breaking ------------------------------------------------------------

def bond_distances(m: HybridBondGraph) -> dict[int, int]:
    """Hop distance of every bond from the nearest source bond (BFS over shared junctions)."""
    sources = {e.id for e in m.elements if e.kind in ("Se", "Sf")}
    dist: dict[int, int] = {}
    queue: deque[int] = deque()
    for b in m.bonds:
        if b.source in sources or b.target in sources:
            dist[b.id] = 0
            queue.append(b.id)
    while queue:
        bid = queue.popleft()
        b = m.bond(bid)
        for end in (b.source, b.target):
            if not m.is_junction(end):
                continue
            for nb in sorted(m.incident(end), key=lambda x: x.id):
                if nb.id not in dist:
                    dist[nb.id] = dist[bid] + 1
                    queue.append(nb.id)
    return dist


def _var_bond(m: HybridBondGraph) -> dict[str, int]:
    return {v.name: v.bond for v in m.variables()}


def break_loops(g: DependencyGraph, m: HybridBondGraph) -> tuple[DependencyGraph, list[tuple[str, str]]]:
    """Return an acyclic copy of ``g`` and the edges removed, in removal order.

    Only edges lying on a directed cycle are ever removed. Three passes:
    edges whose target bond is closer to a source than their origin bond,
    then edges out of virtual-resistor variables, then edges out of sensed
    variables (those read by a sensor). Anything still cyclic raises
    ``CycleError``.
    """
    h = g.graph.copy()
    var_bond = _var_bond(m)
    dist = bond_distances(m)
    virtual_bonds = {b.id for e in m.elements if e.virtual for b in m.incident(e.id)}
    sensed = {u for s in h if h.nodes[s]["kind"] == "sensor" for u in h.predecessors(s)}

    def on_cycle(u: str, v: str) -> bool:
        return nx.has_path(h, v, u)

    def dist_of(n: str) -> float:
        return dist.get(var_bond.get(n, -1), float("inf"))

    passes = [
        lambda u, v: u in var_bond and v in var_bond and dist_of(u) > dist_of(v),
        lambda u, v: var_bond.get(u) in virtual_bonds and h.nodes[v]["kind"] != "sensor",
        lambda u, v: u in sensed and h.nodes[v]["kind"] != "sensor",
    ]
    removed: list[tuple[str, str]] = []
    for rule in passes:
        if nx.is_directed_acyclic_graph(h):
            break
        for u, v in sorted(h.edges):
            if rule(u, v) and on_cycle(u, v):
                h.remove_edge(u, v)
                removed.append((u, v))
    if not nx.is_directed_acyclic_graph(h):
        raise CycleError([u for u, _ in nx.find_cycle(h)])
    return DependencyGraph(h, g.equations), removed


# --- paths --------------------------------------------------------------------

def extract_causal_paths(g: DependencyGraph, hyps=None, evs=None,
                         limit: int = MAX_PATHS_PER_PAIR) -> list[CausalPath]:
    """All simple paths from each hypothesis or mode node to each sensor."""
    G = g.graph
    if not nx.is_directed_acyclic_graph(G):
        raise CycleError([u for u, _ in nx.find_cycle(G)])
    if hyps is None:
        hyps = [n for n in G if G.nodes[n]["kind"] in (HYPOTHESIS, MODE)]
    if evs is None:
        evs = [n for n in G if G.nodes[n]["kind"] == "sensor"]
    out: list[CausalPath] = []
    for h in sorted(hyps):
        if h not in G:
            continue
        for s in sorted(evs):
            if s not in G:
                continue
            found = []
            for p in nx.all_simple_paths(G, h, s):
                found.append(CausalPath(p[0], tuple(p[1:-1]), p[-1]))
                if len(found) > limit:
                    raise PathLimitError(f"more than {limit} paths from {h} to {s}")
            out += found
    out.sort(key=lambda p: (p.begin, p.steps, p.end))
    return out


# --- reduction ----------------------------------------------------------------

def default_roles(g: DependencyGraph) -> dict[str, str]:
    kinds = {"hypothesis": HYPOTHESIS, "mode": MODE, "sensor": EVIDENCE}
    return {n: kinds.get(g.kind(n), INTERNAL) for n in g.graph}


@dataclass
class ReducedGraph:
    """Dependency graph restricted to hypotheses, modes, evidence and survivors.

    Every edge carries ``gates``: the mode variables switching some equation
    along the contracted chain. Mode nodes keep an edge to each node they
    influence, so reachability from modes is preserved as well.
    """

    graph: nx.DiGraph
    roles: dict[str, str]

    def gates(self, u: str, v: str) -> tuple[str, ...]:
        return tuple(sorted(self.graph.edges[u, v].get("gates", ())))

    def edges(self) -> list[tuple[str, str]]:
        return sorted(self.graph.edges)

    def internal(self) -> list[str]:
        return sorted(n for n in self.graph if self.roles[n] in (INTERNAL, MEDIATE))

    def parents(self, n: str, modes: bool = False) -> list[str]:
        return sorted(p for p in self.graph.predecessors(n) if modes or self.roles[p] != MODE)


def _relevant(G: nx.DiGraph, roles: dict[str, str]) -> set[str]:
    starts = [n for n in G if roles[n] in (HYPOTHESIS, MODE)]
    ends = [n for n in G if roles[n] == EVIDENCE]
    fwd = set(starts)
    for s in starts:
        fwd |= nx.descendants(G, s)
    bwd = set(ends)
    for e in ends:
        bwd |= nx.ancestors(G, e)
    keep = fwd & bwd
    keep |= {n for n in G if roles[n] != INTERNAL}
    return keep


def eliminate_superfluous(g: DependencyGraph, roles: dict[str, str] | None = None,
                          order: list[str] | None = None) -> ReducedGraph:
    """Contract internal nodes with one non-mode predecessor and one successor.

    Nodes lying on no hypothesis-to-sensor path are dropped first. Mode
    edges do not count toward the degree test. When a node is contracted its
    gates and incoming mode edges move to the spliced edge. Internal nodes
    fed only by modes are contracted into their single successor as well.
    ``order`` fixes the scan order (the fixed point does not depend on it).
    """
    roles = dict(roles or default_roles(g))
    G = g.graph.subgraph(_relevant(g.graph, roles)).copy()
    for u, v in G.edges:
        eq = g.equations.get(v)
        G.edges[u, v]["gates"] = frozenset(eq.input_gates(u)) if eq and roles[u] != MODE else frozenset()

    def nonmode_preds(n):
        return [p for p in G.predecessors(n) if roles[p] != MODE]

    def splice(n: str) -> None:
        (w,) = G.successors(n)
        out_gates = G.edges[n, w]["gates"]
        for p in list(G.predecessors(n)):
            if roles[p] == MODE:
                if not G.has_edge(p, w):
                    G.add_edge(p, w, gates=frozenset())
                continue
            gates = G.edges[p, n]["gates"] | out_gates
            if G.has_edge(p, w):
                gates |= G.edges[p, w]["gates"]
            G.add_edge(p, w, gates=gates)
        G.remove_node(n)

    changed = True
    while changed:
        changed = False
        scan = [n for n in (order or sorted(G)) if n in G]
        for n in scan:
            if n not in G or roles[n] != INTERNAL:
                continue
            if len(nonmode_preds(n)) <= 1 and G.out_degree(n) == 1:
                splice(n)
                changed = True
    return ReducedGraph(G, {n: roles[n] for n in G})


def select_mediate_variables(r: ReducedGraph) -> set[str]:
    """Surviving internal nodes with fan-in or fan-out of at least two."""
    out = set()
    for n in r.internal():
        if len(r.parents(n)) >= 2 or r.graph.out_degree(n) >= 2:
            out.add(n)
            r.roles[n] = MEDIATE
    return out


def reaches(G: nx.DiGraph, a: str, b: str) -> bool:
    """Plain BFS reachability, kept independent of networkx path helpers."""
    seen, queue = {a}, deque([a])
    while queue:
        n = queue.popleft()
        if n == b:
            return True
        for nxt in G.successors(n):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False
