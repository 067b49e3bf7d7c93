"""Posterior queries on a directed factor graph.

``brute_force_posterior`` sums the full factor product and is the reference.
``sum_product`` passes messages in log space. On a tree a two-pass
schedule (leaves to root and back) is exact. On a cyclic graph the default
conditions on a loop cutset and runs the tree pass for every cutset
assignment in one batch, which stays exact; ``method="loopy"`` runs damped
loopy propagation instead and reports whether it converged.

The factor product need not sum to one (an evidence variable with several
split links does not), so every probability is the product divided by its
own sum.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .dfg import NOMINAL, DirectedFactorGraph
from .paths import HYPOTHESIS, MODE

MAX_STATES = 2 ** 24
MAX_CUTSET = 16


class InferenceError(ValueError):
    pass


class ZeroProbabilityEvidence(InferenceError):
    pass


class ZeroProbabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Evidence:
    observed: dict[str, str] = field(default_factory=dict)
    # commanded switch states, pinned like observations
    modes: dict[str, str] = field(default_factory=dict)

    def clamp(self) -> dict[str, str]:
        return {**self.observed, **self.modes}

    def check(self, g: DirectedFactorGraph) -> None:
        states = g.states
        for vid, s in self.clamp().items():
            if vid not in states:
                raise InferenceError(f"unknown variable {vid!r}")
            if s not in states[vid]:
                raise InferenceError(f"{s!r} is not a state of {vid} {states[vid]}")
        for vid in self.modes:
            if g.variable(vid).role != MODE:
                raise InferenceError(f"{vid} is not a mode variable")

    @classmethod
    def parse(cls, text: str, g: DirectedFactorGraph | None = None) -> "Evidence":
        """``name = state`` per line, ``#`` comments. Mode variables are pinned."""
        observed, modes = {}, {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InferenceError(f"line {lineno}: expected 'name = state'")
            k, v = (x.strip() for x in line.split("=", 1))
            if not k or not v:
                raise InferenceError(f"line {lineno}: expected 'name = state'")
            is_mode = g is not None and k in g.states and g.variable(k).role == MODE
            (modes if is_mode else observed)[k] = v
        e = cls(observed, modes)
        if g is not None:
            e.check(g)
        return e


@dataclass(frozen=True)
class Posterior:
    marginals: dict[str, dict[str, float]]
    log_likelihood: float
    roles: dict[str, str] = field(default_factory=dict)
    clamped: tuple[str, ...] = ()
    method: str = "exact"
    converged: bool = True
    iterations: int = 0

    def __getitem__(self, vid: str) -> dict[str, float]:
        return self.marginals[vid]

    def fault_probability(self, vid: str) -> float:
        return sum(p for s, p in self.marginals[vid].items() if s not in NOMINAL)


def _check_size(g: DirectedFactorGraph) -> None:
    n = math.prod(len(v.states) for v in g.variables)
    if n > MAX_STATES:
        raise InferenceError(f"state space {n} exceeds {MAX_STATES}")


def _joint(g: DirectedFactorGraph, clamp: dict[str, str]) -> tuple[np.ndarray, list[str]]:
    """Unnormalized factor product over all variables, evidence rows zeroed."""
    order = [v.id for v in g.variables]
    axis = {vid: i for i, vid in enumerate(order)}
    states = g.states
    joint = np.ones(tuple(len(states[v]) for v in order))
    for f in g.factors:
        pot = g.potential(f)
        # move the factor's axes into the joint's axis order
        perm = sorted(range(len(f.scope)), key=lambda i: axis[f.scope[i]])
        pot = np.transpose(pot, perm)
        shape = [1] * len(order)
        for i in perm:
            shape[axis[f.scope[i]]] = pot.shape[perm.index(i)]
        joint = joint * pot.reshape(shape)
    for vid, s in clamp.items():
        mask = np.zeros(len(states[vid]))
        mask[states[vid].index(s)] = 1.0
        shape = [1] * len(order)
        shape[axis[vid]] = len(mask)
        joint = joint * mask.reshape(shape)
    return joint, order


@functools.lru_cache(maxsize=16)
def _unclamped(g: DirectedFactorGraph) -> tuple[np.ndarray, tuple[str, ...], float]:
    joint, order = _joint(g, {})
    return joint, tuple(order), float(joint.sum())


def total_mass(g: DirectedFactorGraph) -> float:
    """Sum of the factor product over every assignment."""
    _check_size(g)
    return _unclamped(g)[2]


def _clamped(g: DirectedFactorGraph, clamp: dict[str, str]) -> tuple[np.ndarray, list[str], float]:
    joint, order, z = _unclamped(g)
    states = g.states
    idx = tuple(slice(states[v].index(clamp[v]), states[v].index(clamp[v]) + 1) if v in clamp
                else slice(None) for v in order)
    return joint[idx], list(order), z


def brute_force_posterior(g: DirectedFactorGraph, e: Evidence | None = None) -> Posterior:
    e = e or Evidence()
    e.check(g)
    _check_size(g)
    clamp = e.clamp()
    joint, order, z = _clamped(g, clamp)
    z_e = joint.sum()
    if not z_e > 0:
        raise ZeroProbabilityEvidence("evidence has probability zero")
    marg = {}
    for i, vid in enumerate(order):
        axes = tuple(j for j in range(len(order)) if j != i)
        p = joint.sum(axis=axes)
        if vid in clamp:
            full = np.zeros(len(g.states[vid]))
            full[g.states[vid].index(clamp[vid])] = p[0]
            p = full
        marg[vid] = dict(zip(g.variable(vid).states, map(float, p / z_e)))
    roles = {v.id: v.role for v in g.variables}
    return Posterior(marg, float(np.log(z_e) - np.log(z)), roles, tuple(sorted(clamp)), "exact")


def marginal_likelihood(g: DirectedFactorGraph, e: Evidence | None = None) -> float:
    """P(E=e); 0.0 (with a ``ZeroProbabilityWarning``) for impossible evidence."""
    e = e or Evidence()
    e.check(g)
    _check_size(g)
    joint, _, z = _clamped(g, e.clamp())
    z_e = float(joint.sum())
    if z_e == 0.0:
        warnings.warn("evidence has probability zero", ZeroProbabilityWarning, stacklevel=2)
        return 0.0
    return z_e / z


# --- message passing ----------------------------------------------------------

def _lse(a: np.ndarray, axis) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    return np.squeeze(out, axis=axis)


class _Graph:
    """Log potentials with clamped variables sliced out.

    Variables in ``cut`` are clamped to every joint assignment at once: each
    potential and message carries a leading batch axis over those
    assignments (``self.combos``).
    """

    def __init__(self, g: DirectedFactorGraph, clamp: dict[str, str], cut: list[str] = ()):
        states = g.states
        cut = list(cut)
        self.combos = [dict(zip(cut, c)) for c in itertools.product(*(states[v] for v in cut))]
        B = len(self.combos)
        fixed = set(clamp) | set(cut)
        self.vars = [v.id for v in g.variables if v.id not in fixed]
        self.size = {v: len(states[v]) for v in self.vars}
        self.const = np.zeros(B)  # log of factors left with an empty scope
        self.factors: list[tuple[tuple[str, ...], np.ndarray]] = []
        with np.errstate(divide="ignore"):
            for f in g.factors:
                pot = g.potential(f)
                pot = np.stack([pot[tuple(states[v].index(clamp[v]) if v in clamp
                                          else states[v].index(c[v]) if v in c
                                          else slice(None) for v in f.scope)]
                                for c in self.combos])
                scope = tuple(v for v in f.scope if v not in fixed)
                logp = np.log(pot)
                if scope:
                    self.factors.append((scope, logp))
                else:
                    self.const = self.const + logp
        self.nbrs: dict[str, list[int]] = {v: [] for v in self.vars}
        for i, (scope, _) in enumerate(self.factors):
            for v in scope:
                self.nbrs[v].append(i)

    def _f2v(self, i: int, v: str, v2f: dict) -> np.ndarray:
        scope, logp = self.factors[i]
        acc = logp
        for k, u in enumerate(scope):
            if u == v:
                continue
            shape = [1] * (len(scope) + 1)
            shape[0] = -1
            shape[k + 1] = self.size[u]
            acc = acc + v2f[(u, i)].reshape(shape)
        k = scope.index(v)
        other = tuple(j + 1 for j in range(len(scope)) if j != k)
        return _lse(acc, other) if other else acc

    def _v2f(self, v: str, i: int, f2v: dict) -> np.ndarray:
        acc = np.zeros((len(self.combos), self.size[v]))
        for j in self.nbrs[v]:
            if j != i and (j, v) in f2v:
                acc = acc + f2v[(j, v)]
        return acc

    def flood(self, damping: float = 0.0, normalize: bool = False, tol: float = 1e-8,
              max_iters: int = 500) -> tuple[dict, bool, int]:
        B = len(self.combos)
        f2v = {(i, v): np.zeros((B, self.size[v])) for i, (s, _) in enumerate(self.factors) for v in s}
        v2f = {(v, i): np.zeros((B, self.size[v])) for (i, v) in f2v}
        for it in range(1, max_iters + 1):
            new_v2f = {(v, i): self._v2f(v, i, f2v) for (v, i) in v2f}
            if normalize:
                new_v2f = {k: m - _lse(m, -1)[:, None] for k, m in new_v2f.items()}
            new_f2v = {(i, v): self._f2v(i, v, new_v2f) for (i, v) in f2v}
            if normalize:
                new_f2v = {k: m - _lse(m, -1)[:, None] for k, m in new_f2v.items()}
            if damping:
                new_f2v = {k: np.log((1 - damping) * np.exp(m) + damping * np.exp(f2v[k]))
                           for k, m in new_f2v.items()}
            delta = max((float(np.max(np.abs(np.exp(new_f2v[k]) - np.exp(f2v[k]))))
                         for k in f2v), default=0.0)
            v2f, f2v = new_v2f, new_f2v
            if delta < tol if normalize else delta == 0.0:
                return f2v, True, it
        return f2v, False, max_iters

    def two_pass(self) -> dict:
        """Exact messages on a forest: leaves to root, then root to leaves."""
        h = nx.Graph()
        h.add_nodes_from(self.vars)
        for i, (scope, _) in enumerate(self.factors):
            h.add_edges_from((("f", i), v) for v in scope)
        order = []  # directed (parent, child) tree edges in BFS order
        for comp in sorted(nx.connected_components(h), key=lambda c: min(map(str, c))):
            root = min((n for n in comp if isinstance(n, str)), default=None)
            if root is None:
                continue
            order += list(nx.bfs_edges(h, root))
        f2v: dict = {}
        v2f: dict = {}

        def send(a, b):
            if isinstance(a, str):
                v2f[(a, b[1])] = self._v2f(a, b[1], f2v)
            else:
                f2v[(a[1], b)] = self._f2v(a[1], b, v2f)

        for parent, child in reversed(order):
            send(child, parent)
        for parent, child in order:
            send(parent, child)
        return f2v

    def beliefs(self, f2v: dict) -> dict[str, np.ndarray]:
        out = {}
        for v in self.vars:
            acc = np.zeros((len(self.combos), self.size[v]))
            for j in self.nbrs[v]:
                acc = acc + f2v[(j, v)]
            out[v] = acc
        return out

    def log_z(self, f2v: dict) -> np.ndarray:
        """Exact log partition per batch row on a forest: one belief per component."""
        comp = nx.Graph()
        comp.add_nodes_from(self.vars)
        for scope, _ in self.factors:
            comp.add_edges_from(zip(scope, scope[1:]))
        bel = self.beliefs(f2v)
        total = self.const
        for c in nx.connected_components(comp):
            total = total + _lse(bel[min(c)], -1)
        return total

    def is_forest(self) -> bool:
        h = nx.Graph()
        h.add_nodes_from(self.vars)
        for i, (scope, _) in enumerate(self.factors):
            h.add_edges_from((("f", i), v) for v in scope)
        return nx.is_forest(h)


def loop_cutset(g: DirectedFactorGraph, clamp: dict[str, str]) -> list[str]:
    """Greedy cutset: clamp the highest-degree variable of the 2-core until none is left."""
    h = nx.Graph()
    for f in g.factors:
        scope = [v for v in f.scope if v not in clamp]
        h.add_edges_from((("f", f.id), v) for v in scope)
    cut = []
    while True:
        core = nx.k_core(h, 2)
        cand = sorted(n for n in core if isinstance(n, str))
        if not cand:
            return cut
        v = max(cand, key=lambda n: core.degree(n))
        cut.append(v)
        h.remove_node(v)


def sum_product(g: DirectedFactorGraph, e: Evidence | None = None, method: str = "auto",
                damping: float = 0.5, tol: float = 1e-8, max_iters: int = 500) -> Posterior:
    """Marginals by message passing.

    ``method``: ``"auto"`` (exact: tree pass, cutset conditioning on cycles)
    or ``"loopy"`` (damped flooding, flagged unconverged on failure).
    """
    e = e or Evidence()
    e.check(g)
    clamp = e.clamp()
    roles = {v.id: v.role for v in g.variables}
    if method == "loopy":
        return _loopy(g, clamp, roles, damping, tol, max_iters)
    if method != "auto":
        raise InferenceError(f"unknown method {method!r}")
    cut = loop_cutset(g, clamp)
    if len(cut) > MAX_CUTSET:
        raise InferenceError(f"loop cutset of {len(cut)} variables is too large; use method='loopy'")
    log_z_e, marg = _conditioned(g, clamp, cut)
    if not np.isfinite(log_z_e):
        raise ZeroProbabilityEvidence("evidence has probability zero")
    log_z = _log_total(g) if clamp else log_z_e
    return Posterior(marg, log_z_e - log_z, roles, tuple(sorted(clamp)),
                     "tree" if not cut else "cutset", True, 0)


@functools.lru_cache(maxsize=16)
def _log_total(g: DirectedFactorGraph) -> float:
    return _conditioned(g, {}, loop_cutset(g, {}))[0]


def _conditioned(g: DirectedFactorGraph, clamp: dict[str, str], cut: list[str]):
    states = g.states
    fg = _Graph(g, clamp, cut)
    f2v = fg.two_pass()
    log_zs = fg.log_z(f2v)
    log_z = float(_lse(log_zs, 0))
    if not np.isfinite(log_z):
        return log_z, {}
    w = np.exp(log_zs - log_z)
    acc: dict[str, np.ndarray] = {}
    for vid, b in fg.beliefs(f2v).items():
        p = np.exp(b - _lse(b, -1)[:, None])
        p[w == 0.0] = 0.0
        acc[vid] = w @ p
    for vid, s in clamp.items():
        acc[vid] = np.eye(len(states[vid]))[states[vid].index(s)]
    for vid in cut:
        acc[vid] = np.zeros(len(states[vid]))
        for wb, c in zip(w, fg.combos):
            acc[vid][states[vid].index(c[vid])] += wb
    marg = {v.id: dict(zip(v.states, map(float, acc[v.id] / acc[v.id].sum()))) for v in g.variables}
    return log_z, marg


def _loopy(g, clamp, roles, damping, tol, max_iters) -> Posterior:
    states = g.states
    fg = _Graph(g, clamp)
    f2v, ok, its = fg.flood(damping=damping, normalize=True, tol=tol, max_iters=max_iters)
    marg = {}
    for vid, b in fg.beliefs(f2v).items():
        b = b[0]
        p = np.exp(b - _lse(b, 0))
        marg[vid] = dict(zip(states[vid], map(float, p)))
    for vid, s in clamp.items():
        marg[vid] = {x: float(x == s) for x in states[vid]}
    marg = {v.id: marg[v.id] for v in g.variables}
    # loopy propagation gives no exact evidence probability
    return Posterior(marg, float("nan"), roles, tuple(sorted(clamp)), "loopy", ok, its)


def rank_diagnoses(p: Posterior) -> list[tuple[str, float]]:
    """Unclamped hypothesis and mode variables by fault probability, then id."""
    cand = [v for v, r in p.roles.items() if r in (HYPOTHESIS, MODE) and v not in p.clamped] \
        if p.roles else [v for v in p.marginals if v not in p.clamped]
    ranked = [(v, p.fault_probability(v)) for v in cand]
    ranked.sort(key=lambda t: (-t[1], t[0]))
    return ranked
