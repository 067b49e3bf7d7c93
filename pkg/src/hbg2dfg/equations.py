"""Behaviour and junction equations of a causal HBG, and the dependency graph.

Equations are kept symbolic (sympy). Mode variables only ever multiply a
term; ``d(x)`` stands for the time derivative of ``x`` and ``integ(x)`` for
its time integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import sympy as sp

from .causality import CausalHbg
from .model import Bond, BondVariable, HybridBondGraph

d = sp.Function("d")
integ = sp.Function("integ")


@dataclass(frozen=True)
class Equation:
    output: str
    lhs: sp.Expr
    rhs: sp.Expr
    origin: str
    kind: str  # behavior | junction | sensor
    inputs: tuple[str, ...] = ()
    gates: tuple[str, ...] = ()
    # inputs reached only through d() or integ(); no dependency edge
    stored: tuple[str, ...] = ()
    hypothesis: str | None = None

    def residual(self) -> sp.Expr:
        return sp.expand(self.lhs - self.rhs)

    def __str__(self) -> str:
        return f"{format_expr(self.lhs)} = {format_expr(self.rhs)}"

    def input_gates(self, name: str) -> tuple[str, ...]:
        """Modes that switch the contribution of input ``name`` to the output.

        The modes multiplying the output apply to every input; on the right
        side only the modes in the terms containing ``name`` count.
        """
        if not self.gates:
            return ()
        modes = {sym(g) for g in self.gates}
        out = set(self.lhs.free_symbols & modes)
        x = sym(name)
        for term in sp.Add.make_args(sp.expand(self.rhs)):
            if x in term.free_symbols:
                out |= term.free_symbols & modes
        return tuple(sorted(str(g) for g in out))


class EquationError(ValueError):
    pass


def sym(name: str) -> sp.Symbol:
    return sp.Symbol(name)


def format_expr(expr: sp.Expr) -> str:
    """Render in the arrow-free notation used for listings: ``R1 × f_2``."""
    s = sp.sstr(expr, order="none")
    s = s.replace("**", "^")
    s = s.replace("*", " × ")
    return s


class _Context:
    def __init__(self, c: CausalHbg):
        self.c = c
        self.m: HybridBondGraph = c.model
        self.sensor_bonds = self.m.sensor_bonds()
        gates: dict[int, list[str]] = {}
        for j in self.m.junctions:
            if j.controlled:
                for b in self.m.incident(j.id):
                    if b.id not in self.sensor_bonds:
                        gates.setdefault(b.id, []).append(j.mode)
        self.gates = {k: tuple(sorted(set(v))) for k, v in gates.items()}

    def gate_of(self, var: BondVariable) -> tuple[str, ...]:
        return self.gates.get(var.bond, ())

    def term(self, var: BondVariable) -> sp.Expr:
        """Bond variable as it appears in junction equations (gated)."""
        expr = sym(var.name)
        for mode in self.gate_of(var):
            expr = sym(mode) * expr
        return expr


def _element_equations(ctx: _Context, hypotheses: set[str]) -> list[Equation]:
    c, m = ctx.c, ctx.m
    out: list[Equation] = []
    for e in m.elements:
        if e.is_sensor:
            continue
        bonds = sorted(m.incident(e.id), key=lambda b: b.id)
        p = sym(e.id)
        hyp = e.id if e.id in hypotheses else None
        if e.kind in ("Se", "Sf", "R", "C", "I"):
            (b,) = bonds
            receives_effort = c.effort_receiver(b.id) == e.id
            ev, fv = b.effort, b.flow
            E, F = sym(ev.name), sym(fv.name)
            if e.kind == "Se":
                out.append(Equation(ev.name, E, p, e.id, "behavior", (e.id,), hypothesis=hyp))
            elif e.kind == "Sf":
                out.append(Equation(fv.name, F, p, e.id, "behavior", (e.id,), hypothesis=hyp))
            elif e.kind == "R":
                if receives_effort:
                    out.append(Equation(fv.name, F, E / p, e.id, "behavior", (ev.name, e.id), hypothesis=hyp))
                else:
                    out.append(Equation(ev.name, E, p * F, e.id, "behavior", (e.id, fv.name), hypothesis=hyp))
            elif e.kind == "C":
                if receives_effort:
                    out.append(Equation(fv.name, F, p * d(E), e.id, "behavior", (e.id, ev.name),
                                        stored=(ev.name,), hypothesis=hyp))
                else:
                    out.append(Equation(ev.name, E, integ(F) / p, e.id, "behavior", (fv.name, e.id),
                                        stored=(fv.name,), hypothesis=hyp))
            else:  # I
                if receives_effort:
                    out.append(Equation(fv.name, F, integ(E) / p, e.id, "behavior", (ev.name, e.id),
                                        stored=(ev.name,), hypothesis=hyp))
                else:
                    out.append(Equation(ev.name, E, p * d(F), e.id, "behavior", (e.id, fv.name),
                                        stored=(fv.name,), hypothesis=hyp))
        elif e.kind == "TF":
            # e1 = m e2, f2 = m f1
            b1, b2 = bonds
            e1, f1, e2, f2 = (sym(v.name) for v in (b1.effort, b1.flow, b2.effort, b2.flow))
            if c.effort_receiver(b1.id) == e.id:
                out.append(Equation(b2.effort.name, e2, e1 / p, e.id, "behavior",
                                    (b1.effort.name, e.id), hypothesis=hyp))
                out.append(Equation(b1.flow.name, f1, f2 / p, e.id, "behavior",
                                    (b2.flow.name, e.id), hypothesis=hyp))
            else:
                out.append(Equation(b1.effort.name, e1, p * e2, e.id, "behavior",
                                    (e.id, b2.effort.name), hypothesis=hyp))
                out.append(Equation(b2.flow.name, f2, p * f1, e.id, "behavior",
                                    (e.id, b1.flow.name), hypothesis=hyp))
        elif e.kind == "GY":
            # e1 = r f2, e2 = r f1
            b1, b2 = bonds
            e1, f1, e2, f2 = (sym(v.name) for v in (b1.effort, b1.flow, b2.effort, b2.flow))
            if c.effort_receiver(b1.id) == e.id:
                out.append(Equation(b2.flow.name, f2, e1 / p, e.id, "behavior",
                                    (b1.effort.name, e.id), hypothesis=hyp))
                out.append(Equation(b1.flow.name, f1, e2 / p, e.id, "behavior",
                                    (b2.effort.name, e.id), hypothesis=hyp))
            else:
                out.append(Equation(b1.effort.name, e1, p * f2, e.id, "behavior",
                                    (e.id, b2.flow.name), hypothesis=hyp))
                out.append(Equation(b2.effort.name, e2, p * f1, e.id, "behavior",
                                    (e.id, b1.flow.name), hypothesis=hyp))
        else:
            raise EquationError(f"unsupported element kind {e.kind!r} on {e.id}")
    return out


def derive_behavior_equations(c: CausalHbg, hypotheses: set[str] | None = None) -> list[Equation]:
    """One solved law per element, oriented by its causality."""
    if hypotheses is None:
        hypotheses = default_hypotheses(c.model)
    return _element_equations(_Context(c), hypotheses)


def default_hypotheses(m: HybridBondGraph) -> set[str]:
    return {e.id for e in m.elements
            if e.kind in ("Se", "Sf", "R", "C", "I", "TF", "GY") and not e.virtual}


def _sign(b: Bond, jid: str) -> int:
    return 1 if b.target == jid else -1


def sensor_bond(c: CausalHbg, sensor_id: str) -> Bond:
    """The bond whose variable a sensor reads: its junction's determining bond.

    That is the effort imposer of a 0-junction or the flow imposer of a
    1-junction, so the reading is the value the junction actually shares.
    """
    m = c.model
    jid = m.sensor_junction(sensor_id)
    parallel = m.junction(jid).parallel
    skip = m.sensor_bonds()
    for b in sorted(m.incident(jid), key=lambda b: b.id):
        if b.id not in skip and (c.effort_receiver(b.id) == jid) == parallel:
            return b
    raise EquationError(f"junction {jid} has no determining bond")


def derive_constitutive_equations(c: CausalHbg) -> list[Equation]:
    """Junction laws (shared variable copies plus signed balance) and sensor bindings."""
    ctx = _Context(c)
    m = c.model
    out: list[Equation] = []
    for j in m.junctions:
        bonds = sorted((b for b in m.incident(j.id) if b.id not in ctx.sensor_bonds), key=lambda b: b.id)
        if j.parallel:
            k = next(b for b in bonds if c.effort_receiver(b.id) == j.id)
            share, balance = (lambda b: b.effort), (lambda b: b.flow)
        else:
            k = next(b for b in bonds if c.effort_receiver(b.id) != j.id)
            share, balance = (lambda b: b.flow), (lambda b: b.effort)
        # copies of the shared variable
        for b in bonds:
            if b is k:
                continue
            v, src = share(b), share(k)
            gates = tuple(sorted(set(ctx.gate_of(v)) | set(ctx.gate_of(src))))
            out.append(Equation(v.name, ctx.term(v), ctx.term(src), j.id, "junction",
                                (src.name,) + gates, gates))
        # signed balance solved for the determining bond
        v = balance(k)
        rhs = sum((-_sign(k, j.id) * _sign(b, j.id) * ctx.term(balance(b)) for b in bonds if b is not k),
                  sp.Integer(0))
        ins = tuple(balance(b).name for b in bonds if b is not k)
        gates = tuple(sorted({g for b in bonds for g in ctx.gate_of(balance(b))}))
        out.append(Equation(v.name, ctx.term(v), rhs, j.id, "junction", ins + gates, gates))
    for s in m.sensors():
        b = sensor_bond(c, s.id)
        v = b.effort if s.kind == "De" else b.flow
        out.append(Equation(s.id, sym(s.id), sym(v.name), s.id, "sensor", (v.name,)))
    return out


def derive_equations(c: CausalHbg) -> list[Equation]:
    return derive_behavior_equations(c) + derive_constitutive_equations(c)


# --- dependency graph -------------------------------------------------------

@dataclass
class DependencyGraph:
    graph: nx.DiGraph
    equations: dict[str, Equation] = field(default_factory=dict)

    @property
    def nodes(self) -> list[str]:
        return list(self.graph.nodes)

    def edges(self) -> list[tuple[str, str]]:
        return sorted(self.graph.edges)

    def kind(self, node: str) -> str:
        return self.graph.nodes[node]["kind"]

    def gates(self, node: str) -> tuple[str, ...]:
        eq = self.equations.get(node)
        return eq.gates if eq else ()

    def sources(self) -> list[str]:
        return sorted(n for n in self.graph if self.graph.in_degree(n) == 0)

    def sinks(self) -> list[str]:
        return sorted(n for n in self.graph if self.graph.out_degree(n) == 0)


def build_dependency_graph(eqs: list[Equation], modes: set[str] | None = None) -> DependencyGraph:
    """Directed input -> output graph over all equations.

    Node kinds: ``hypothesis`` (element nodes), ``mode``, ``sensor``,
    ``variable``. Inputs under ``d()``/``integ()`` add no edge, which breaks
    the loops through storage elements.
    """
    g = nx.DiGraph()
    by_output: dict[str, Equation] = {}
    for eq in eqs:
        if eq.output in by_output:
            raise EquationError(f"variable {eq.output} solved by both {by_output[eq.output].origin} and {eq.origin}")
        by_output[eq.output] = eq
    mode_names = set(modes or ()) | {gt for eq in eqs for gt in eq.gates}
    for eq in eqs:
        g.add_node(eq.output, kind="sensor" if eq.kind == "sensor" else "variable")
    for eq in eqs:
        if eq.hypothesis:
            g.add_node(eq.hypothesis, kind="hypothesis")
            g.add_edge(eq.hypothesis, eq.output)
        for name in eq.inputs:
            if name in eq.stored:
                continue
            if name in mode_names:
                g.add_node(name, kind="mode")
            elif name not in by_output:
                # a parameter of a non-hypothesis element (virtual resistor)
                continue
            g.add_edge(name, eq.output)
    return DependencyGraph(g, by_output)
