"""Directed factor graphs built from a reduced dependency graph.

Every (parent, child) edge of the reduced graph becomes its own link factor
``g(child, parent, gates...)``; a factor whose gate is off evaluates to 1.
Hypotheses and modes get prior factors; a mediate's base factor holds its
leak. A single link into a child is the noisy-OR table P(child abnormal |
parent active) = 1 - (1 - leak)(1 - strength), ``leak`` when inactive.
Several links into one child multiply the child's abnormal odds, scaled so
the product over the child sums to 1 for every configuration with at most
one active parent. A mediate with several links also gets a ``norm``
factor over its parents and gates that makes the product an exact
conditional. Evidence variables keep the bare split form, which is not
normalized when two or more parents are active.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .causality import CausalHbg
from .equations import default_hypotheses
from .paths import EVIDENCE, HYPOTHESIS, MEDIATE, MODE, ReducedGraph, select_mediate_variables

HYPOTHESIS_STATES = ("nominal", "faulty")
EVIDENCE_STATES = ("nominal", "deviant")
EVIDENCE_STATES_3 = ("low", "nominal", "high")
MODE_STATES = ("on", "off")

NOMINAL = {"nominal", "on"}


class DfgError(ValueError):
    pass


@dataclass(frozen=True)
class VariableNode:
    id: str
    role: str
    states: tuple[str, ...]
    prior: tuple[float, ...] | None = None

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise DfgError(f"{state!r} is not a state of {self.id} {self.states}") from None


@dataclass(frozen=True, eq=False)
class FactorNode:
    id: str
    kind: str  # prior | base | link | gated-link | norm
    scope: tuple[str, ...]
    child: str
    gates: tuple[str, ...] = ()
    # P(child | parents), axes ordered as the non-gate part of ``scope``
    table: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def parents(self) -> tuple[str, ...]:
        return tuple(v for v in self.scope if v != self.child)

    @property
    def table_scope(self) -> tuple[str, ...]:
        return tuple(v for v in self.scope if v not in self.gates)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FactorNode):
            return NotImplemented
        return ((self.id, self.kind, self.scope, self.child, self.gates)
                == (other.id, other.kind, other.scope, other.child, other.gates)
                and self.table.shape == other.table.shape
                and bool(np.array_equal(self.table, other.table)))

    def __hash__(self) -> int:
        return hash((self.id, self.scope))


@dataclass(frozen=True)
class DirectedFactorGraph:
    variables: tuple[VariableNode, ...]
    factors: tuple[FactorNode, ...]
    name: str = ""

    def variable(self, vid: str) -> VariableNode:
        for v in self.variables:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def factor(self, fid: str) -> FactorNode:
        for f in self.factors:
            if f.id == fid:
                return f
        raise KeyError(fid)

    def ids(self, role: str) -> list[str]:
        return [v.id for v in self.variables if v.role == role]

    @property
    def states(self) -> dict[str, tuple[str, ...]]:
        return {v.id: v.states for v in self.variables}

    def edges(self) -> list[tuple[str, str]]:
        """parent -> factor and factor -> child edges, factor by factor."""
        out = []
        for f in self.factors:
            out += [(p, f.id) for p in f.parents]
            out.append((f.id, f.child))
        return out

    def potential(self, f: FactorNode) -> np.ndarray:
        """Dense factor values over ``f.scope`` (gates included)."""
        st = self.states
        shape = tuple(len(st[v]) for v in f.scope)
        table = np.asarray(f.table, dtype=float)
        if not f.gates:
            return table.reshape(shape).copy()
        tshape = [1] * len(f.scope)
        for v, n in zip(f.table_scope, table.shape):
            tshape[f.scope.index(v)] = n
        on = np.ones(shape, dtype=bool)
        for gv in f.gates:
            gshape = [1] * len(f.scope)
            gshape[f.scope.index(gv)] = len(st[gv])
            on = on & (np.asarray(st[gv]) == "on").reshape(gshape)
        return np.where(on, table.reshape(tshape), 1.0)

    def factor_value(self, f: FactorNode, assignment: dict[str, str]) -> float:
        return gated_factor_value(f, assignment, self.states)

    def is_tree(self) -> bool:
        """True when the variable/factor bipartite graph has no undirected cycle."""
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(v.id for v in self.variables)
        g.add_nodes_from(f.id for f in self.factors)
        for f in self.factors:
            g.add_edges_from((f.id, v) for v in f.scope)
        return nx.is_forest(g)


def gated_factor_value(f: FactorNode, assignment: dict[str, str],
                       states: dict[str, tuple[str, ...]]) -> float:
    """Value of one factor; exactly 1 when any of its gates is off."""
    for v in f.scope:
        if assignment[v] not in states[v]:
            raise DfgError(f"{assignment[v]!r} is not a state of {v} {states[v]}")
    if any(assignment[gv] == "off" for gv in f.gates):
        return 1.0
    idx = tuple(states[v].index(assignment[v]) for v in f.table_scope)
    return float(f.table[idx])


# --- configuration ------------------------------------------------------------

@dataclass
class CptConfig:
    p_f: float = 0.01
    p_on: float = 0.5
    leak: float = 0.01
    strength: float = 0.9
    three_state: bool = False
    priors: dict[str, tuple[float, ...]] = field(default_factory=dict)
    # "parent->child" -> strength
    strengths: dict[str, float] = field(default_factory=dict)
    # factor scope "child|parent" -> explicit table (nested lists)
    tables: dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p_f", "p_on", "leak", "strength"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise DfgError(f"{name}={x} outside [0, 1]")
        for k, x in self.strengths.items():
            if not 0.0 <= x <= 1.0:
                raise DfgError(f"strength for {k}={x} outside [0, 1]")
        for k, p in self.priors.items():
            if any(not 0.0 <= x <= 1.0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
                raise DfgError(f"prior for {k} is not a distribution")

    @classmethod
    def from_json(cls, text: str) -> "CptConfig":
        data = json.loads(text)
        unknown = set(data) - {"p_f", "p_on", "leak", "strength", "three_state", "priors", "strengths", "tables"}
        if unknown:
            raise DfgError(f"unknown CPT config keys: {sorted(unknown)}")
        data["priors"] = {k: tuple(v) for k, v in data.get("priors", {}).items()}
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> "CptConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())


# --- construction -------------------------------------------------------------

def classify_variables(c: CausalHbg) -> dict[str, str]:
    """Role of every diagnostic variable of a causal HBG (internal ones omitted)."""
    m = c.model
    roles = {h: HYPOTHESIS for h in default_hypotheses(m)}
    roles.update({md: MODE for md in m.modes})
    roles.update({s.id: EVIDENCE for s in m.sensors()})
    return dict(sorted(roles.items()))


def _states(role: str, cfg: CptConfig) -> tuple[str, ...]:
    if role == HYPOTHESIS:
        return HYPOTHESIS_STATES
    if role == MODE:
        return MODE_STATES
    return EVIDENCE_STATES_3 if cfg.three_state else EVIDENCE_STATES


def _prior(vid: str, role: str, cfg: CptConfig) -> tuple[float, ...]:
    if vid in cfg.priors:
        return tuple(cfg.priors[vid])
    if role == MODE:
        return (cfg.p_on, 1.0 - cfg.p_on)
    return (1.0 - cfg.p_f, cfg.p_f)


def _abnormal(states: tuple[str, ...], weight: float) -> np.ndarray:
    """Row over child states: 1 on nominal, ``weight`` spread over the rest."""
    row = np.ones(len(states))
    rest = [i for i, st in enumerate(states) if st not in NOMINAL]
    for i in rest:
        row[i] = weight / len(rest)
    return row


def _link_table(child: VariableNode, parent: VariableNode, cfg: CptConfig,
                k: int, has_base: bool) -> np.ndarray:
    """Odds-product potential for one of ``k`` links into ``child``.

    With a single link this is exactly the noisy-OR table. With several,
    an active parent multiplies the child's abnormal odds by
    ``odds1 / leak_odds``, and each column is scaled so that the child sums
    to 1 whenever at most one parent is active.
    """
    key = f"{child.id}|{parent.id}"
    if key in cfg.tables:
        t = np.asarray(cfg.tables[key], dtype=float)
        if t.shape != (len(child.states), len(parent.states)):
            raise DfgError(f"table for {key} has shape {t.shape}")
        return t
    lam = cfg.strengths.get(f"{parent.id}->{child.id}", cfg.strength)
    lam0 = cfg.leak
    if lam0 >= 1.0:
        raise DfgError("leak must be below 1")
    eps = lam0 / (1.0 - lam0)
    p1 = 1.0 - (1.0 - lam0) * (1.0 - lam)
    ratio = (p1 / (1.0 - p1)) / eps if lam0 > 0 and p1 < 1 else np.inf
    t = np.zeros((len(child.states), len(parent.states)))
    for j, ps in enumerate(parent.states):
        active = ps not in NOMINAL
        if has_base:
            # the base factor carries the leak
            w = ratio if active else 1.0
            scale = 1.0 / ((1.0 - lam0) * (1.0 + eps * ratio)) if active else 1.0
            if active and not np.isfinite(ratio):
                t[:, j] = _abnormal(child.states, 1.0) - _nominal_mask(child.states)
                continue
        else:
            # the leak is shared between the k links
            share = eps ** (1.0 / k)
            w = share * (ratio if active else 1.0)
            scale = (1.0 - lam0) ** (1.0 / k)
            if active:
                scale = (1.0 - lam0) ** (-(k - 1) / k) / (1.0 + eps * ratio) if np.isfinite(ratio) else 0.0
                if not np.isfinite(ratio):
                    t[:, j] = _abnormal(child.states, 1.0) - _nominal_mask(child.states)
                    continue
        t[:, j] = scale * _abnormal(child.states, w)
    return t


def _nominal_mask(states: tuple[str, ...]) -> np.ndarray:
    return np.array([1.0 if st in NOMINAL else 0.0 for st in states])


def build_dfg(r: ReducedGraph, cfg: CptConfig | None = None, name: str = "",
              roles: dict[str, str] | None = None) -> DirectedFactorGraph:
    """One prior per hypothesis and mode, one base factor per mediate, one link per edge.

    ``roles`` may add hypothesis or mode variables absent from the reduced
    graph (they get a prior only). Mode nodes never become link parents;
    they enter factors as gates.
    """
    cfg = cfg or CptConfig()
    if not any(role == MEDIATE for role in r.roles.values()):
        select_mediate_variables(r)
    all_roles = dict(r.roles)
    for vid, role in (roles or {}).items():
        all_roles.setdefault(vid, role)
    keep = {v: role for v, role in all_roles.items() if role in (HYPOTHESIS, MODE, MEDIATE, EVIDENCE)}
    variables = {
        vid: VariableNode(vid, role, _states(role, cfg),
                          _prior(vid, role, cfg) if role in (HYPOTHESIS, MODE) else None)
        for vid, role in sorted(keep.items())
    }
    links = []
    for u, v in r.edges():
        if all_roles.get(u) == MODE:
            continue
        if u not in variables or v not in variables:
            raise DfgError(f"edge {u} -> {v} leaves the diagnostic variables")
        gates = tuple(gv for gv in r.gates(u, v) if gv in variables)
        links.append((v, u, gates))
    links.sort()
    children = {v for v, _, _ in links}
    for vid, node in variables.items():
        if node.role in (MEDIATE, EVIDENCE) and vid not in children:
            raise DfgError(f"{vid} has no parents and no prior")
    factors: list[FactorNode] = []
    fan_in: dict[str, int] = {}
    for child, _, _ in links:
        fan_in[child] = fan_in.get(child, 0) + 1
    for child, parent, gates in links:
        has_base = variables[child].role == MEDIATE
        t = _link_table(variables[child], variables[parent], cfg, fan_in[child], has_base)
        kind = "gated-link" if gates else "link"
        factors.append(FactorNode("", kind, (child, parent) + gates, child, gates, t))
    for vid, node in variables.items():
        if node.role == MEDIATE:
            base = (1.0 - cfg.leak) * _abnormal(node.states, cfg.leak / (1.0 - cfg.leak))
            factors.append(FactorNode("", "base", (vid,), vid, (), base))
    for vid, node in variables.items():
        if node.role == MEDIATE and fan_in[vid] >= 2:
            factors.append(_norm_factor(vid, factors, variables))
    for vid, node in variables.items():
        if node.prior is not None:
            factors.append(FactorNode("", "prior", (vid,), vid, (), np.asarray(node.prior, dtype=float)))
    factors = [FactorNode(f"g{i}", f.kind, f.scope, f.child, f.gates, f.table)
               for i, f in enumerate(factors, start=1)]
    return DirectedFactorGraph(tuple(variables.values()), tuple(factors), name)


def _norm_factor(child: str, factors: list[FactorNode],
                 variables: dict[str, VariableNode]) -> FactorNode:
    """``1 / S`` where S sums the child's base and link factors over the child.

    Together they then form an exact conditional of the child given all its
    parents and gates.
    """
    own = [f for f in factors if f.child == child and f.kind in ("base", "link", "gated-link")]
    others = []
    for f in own:
        others += [v for v in f.scope if v != child and v not in others]
    others.sort()
    scope = (child,) + tuple(others)
    states = {v: variables[v].states for v in scope}
    shape = tuple(len(states[v]) for v in scope)
    table = np.ones(shape)
    for idx in np.ndindex(*shape[1:]):
        a = {v: states[v][i] for v, i in zip(others, idx)}
        total = 0.0
        for cs in states[child]:
            a[child] = cs
            w = 1.0
            for f in own:
                w *= gated_factor_value(f, a, states)
            total += w
        table[(slice(None),) + idx] = 1.0 / total if total > 0 else 1.0
    return FactorNode("", "norm", scope, child, (), table)


def det_dfg(cfg: CptConfig | None = None) -> DirectedFactorGraph:
    """The two-supply module: load current x5 fed by x1 (switch x2) and x3 (switch x4)."""
    import networkx as nx

    g = nx.DiGraph()
    g.add_edge("x1", "x5", gates=frozenset({"x2"}))
    g.add_edge("x3", "x5", gates=frozenset({"x4"}))
    g.add_edge("x2", "x5", gates=frozenset())
    g.add_edge("x4", "x5", gates=frozenset())
    roles = {"x1": HYPOTHESIS, "x3": HYPOTHESIS, "x2": MODE, "x4": MODE, "x5": EVIDENCE}
    return build_dfg(ReducedGraph(g, roles), cfg, name="det")


# --- factorization ------------------------------------------------------------

@dataclass(frozen=True)
class FactorizationDescriptor:
    terms: tuple[tuple[str, tuple[str, ...]], ...]

    def scopes(self) -> list[tuple[str, ...]]:
        return [s for _, s in self.terms]

    def __str__(self) -> str:
        return "·".join(f"{fid}({','.join(scope)})" for fid, scope in self.terms)


def joint_factorization(g: DirectedFactorGraph) -> FactorizationDescriptor:
    return FactorizationDescriptor(tuple((f.id, f.scope) for f in g.factors))
