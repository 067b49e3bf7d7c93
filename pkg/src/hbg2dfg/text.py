"""Line-oriented ``.hbg`` model format, plus DFG export to JSON and DOT.

Grammar, one declaration per line, ``#`` starts a comment::

    model <name>
    element <kind> <id> [key=value ...] [virtual]
    junction <id> <0|1|0c|1c> [mode=<id>]
    bond <n> <from> -> <to> [label=<tag>]

Sensors are ordinary elements of kind ``De``/``Df``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .model import (
    ELEMENT_KINDS,
    IDENT,
    JUNCTION_KINDS,
    REQUIRED_PARAM,
    Bond,
    Element,
    HybridBondGraph,
    Junction,
    validate_model,
)

KIND_ORDER = {k: i for i, k in enumerate(ELEMENT_KINDS)}
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class ModelError(ValueError):
    """Raised for syntax errors and invalid model content."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 expected: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected
        where = f"line {line}, column {column}: " if line is not None else ""
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{where}{message}{hint}")


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end_column: int


@dataclass(frozen=True)
class ModelDocument:
    text: str
    spans: dict[str, Span]


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _number(tok: str, lineno: int, col: int) -> float:
    if not _NUMBER.match(tok):
        raise ModelError(f"invalid number {tok!r}", lineno, col, "decimal real")
    return float(tok)


def _ident(tok: str, lineno: int, col: int, what: str) -> str:
    if not IDENT.match(tok):
        raise ModelError(f"invalid {what} {tok!r}", lineno, col, "identifier")
    return tok


def parse_document(text: str) -> tuple[HybridBondGraph, ModelDocument]:
    name = None
    elements: list[Element] = []
    junctions: list[Junction] = []
    bonds: list[Bond] = []
    spans: dict[str, Span] = {}

    def claim(key: str, lineno: int, col: int, end: int):
        if key in spans:
            raise ModelError(f"duplicate id {key.split(':', 1)[1]!r}", lineno, col)
        spans[key] = Span(lineno, col, end)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]
        end = len(line.rstrip()) + 1
        if head == "model":
            if len(toks) != 2:
                raise ModelError("malformed model declaration", lineno, col, "model <name>")
            if name is not None:
                raise ModelError("duplicate model declaration", lineno, col)
            name = _ident(toks[1][0], lineno, toks[1][1], "model name")
            spans["model:" + name] = Span(lineno, col, end)
        elif head == "element":
            if len(toks) < 3:
                raise ModelError("malformed element declaration", lineno, col,
                                 "element <kind> <id> [key=value ...]")
            kind, kcol = toks[1]
            if kind not in ELEMENT_KINDS:
                raise ModelError(f"unknown element kind {kind!r}", lineno, kcol,
                                 "one of " + ", ".join(ELEMENT_KINDS))
            eid = _ident(toks[2][0], lineno, toks[2][1], "element id")
            params: dict[str, float] = {}
            virtual = False
            for tok, tcol in toks[3:]:
                if tok == "virtual":
                    virtual = True
                    continue
                if "=" not in tok:
                    raise ModelError(f"unexpected token {tok!r}", lineno, tcol, "key=value")
                key, val = tok.split("=", 1)
                _ident(key, lineno, tcol, "parameter name")
                if key in params:
                    raise ModelError(f"duplicate parameter {key!r}", lineno, tcol)
                params[key] = _number(val, lineno, tcol + len(key) + 1)
            need = REQUIRED_PARAM.get(kind)
            if need and need not in params:
                raise ModelError(f"missing required parameter {need!r} on {eid}", lineno, col)
            claim("node:" + eid, lineno, col, end)
            elements.append(Element(eid, kind, tuple(sorted(params.items())), virtual))
        elif head == "junction":
            if len(toks) not in (3, 4):
                raise ModelError("malformed junction declaration", lineno, col,
                                 "junction <id> <kind> [mode=<id>]")
            jid = _ident(toks[1][0], lineno, toks[1][1], "junction id")
            kind, kcol = toks[2]
            if kind not in JUNCTION_KINDS:
                raise ModelError(f"unknown junction kind {kind!r}", lineno, kcol,
                                 "one of " + ", ".join(JUNCTION_KINDS))
            mode = None
            if len(toks) == 4:
                tok, tcol = toks[3]
                if not tok.startswith("mode="):
                    raise ModelError(f"unexpected token {tok!r}", lineno, tcol, "mode=<id>")
                mode = _ident(tok[5:], lineno, tcol + 5, "mode id")
            claim("node:" + jid, lineno, col, end)
            junctions.append(Junction(jid, kind, mode))
        elif head == "bond":
            if len(toks) not in (5, 6) or toks[3][0] != "->":
                raise ModelError("malformed bond declaration", lineno, col,
                                 "bond <n> <from> -> <to> [label=<tag>]")
            num, ncol = toks[1]
            if not num.isdigit() or int(num) <= 0:
                raise ModelError(f"invalid bond number {num!r}", lineno, ncol, "positive integer")
            label = ""
            if len(toks) == 6:
                tok, tcol = toks[5]
                if not tok.startswith("label="):
                    raise ModelError(f"unexpected token {tok!r}", lineno, tcol, "label=<tag>")
                label = tok[6:]
                if not re.match(r"^[A-Za-z0-9_]+$", label):
                    raise ModelError(f"invalid bond label {label!r}", lineno, tcol + 6, "tag")
            src = _ident(toks[2][0], lineno, toks[2][1], "endpoint")
            dst = _ident(toks[4][0], lineno, toks[4][1], "endpoint")
            claim("bond:" + num, lineno, col, end)
            bonds.append(Bond(int(num), src, dst, label))
        else:
            raise ModelError(f"unknown declaration {head!r}", lineno, col,
                             "model, element, junction or bond")

    if name is None:
        raise ModelError("missing model declaration", 1, 1, "model <name>")
    modes = {j.mode for j in junctions if j.mode is not None}
    m = HybridBondGraph(name, tuple(elements), tuple(junctions), tuple(bonds), tuple(modes))
    report = validate_model(m)
    if not report.ok:
        v = report.violations[0]
        span = spans.get("node:" + v.ref) or spans.get("bond:" + v.ref)
        raise ModelError(str(v), span.line if span else None, span.column if span else None)
    return m, ModelDocument(text, spans)


def parse_model(text: str) -> HybridBondGraph:
    return parse_document(text)[0]


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips a float
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def serialize_model(m: HybridBondGraph) -> str:
    lines = [f"model {m.name}"]
    for e in sorted(m.elements, key=lambda e: (KIND_ORDER[e.kind], e.id)):
        parts = ["element", e.kind, e.id] + [f"{k}={_fmt(v)}" for k, v in e.params]
        if e.virtual:
            parts.append("virtual")
        lines.append(" ".join(parts))
    for j in sorted(m.junctions, key=lambda j: (JUNCTION_KINDS.index(j.kind), j.id)):
        lines.append(f"junction {j.id} {j.kind}" + (f" mode={j.mode}" if j.mode else ""))
    for b in m.bonds:
        lines.append(f"bond {b.id} {b.source} -> {b.target}" + (f" label={b.label}" if b.label else ""))
    return "\n".join(lines) + "\n"


# --- DFG interchange -------------------------------------------------------

def dfg_to_dict(g) -> dict:
    nodes = []
    for v in g.variables:
        node = {"id": v.id, "kind": "variable", "role": v.role, "states": list(v.states)}
        if v.prior is not None:
            node["prior"] = list(v.prior)
        nodes.append(node)
    for f in g.factors:
        node = {
            "id": f.id,
            "kind": "factor",
            "role": f.kind,
            "scope": list(f.scope),
            "child": f.child,
            "gates": list(f.gates),
            "table": f.table.tolist(),
        }
        nodes.append(node)
    edges = [{"from": a, "to": b} for a, b in g.edges()]
    return {"name": g.name, "nodes": nodes, "edges": edges} if g.name else {"nodes": nodes, "edges": edges}


def export_dfg_json(g) -> str:
    """Compact JSON; an empty unnamed graph is ``{"nodes":[],"edges":[]}``."""
    return json.dumps(dfg_to_dict(g), separators=(",", ":"))


def import_dfg_json(text: str):
    import numpy as np

    from .dfg import DirectedFactorGraph, FactorNode, VariableNode

    data = json.loads(text)
    variables, factors = [], []
    for n in data["nodes"]:
        if n["kind"] == "variable":
            prior = tuple(n["prior"]) if "prior" in n else None
            variables.append(VariableNode(n["id"], n["role"], tuple(n["states"]), prior))
        else:
            factors.append(FactorNode(n["id"], n["role"], tuple(n["scope"]), n["child"],
                                      tuple(n["gates"]), np.asarray(n["table"], dtype=float)))
    g = DirectedFactorGraph(tuple(variables), tuple(factors), data.get("name", ""))
    if [tuple(e.values()) for e in data["edges"]] != [tuple(e) for e in g.edges()]:
        raise ModelError("edge list does not match factor scopes")
    return g


def export_dfg_dot(g) -> str:
    shapes = {"hypothesis": "ellipse", "mode": "ellipse", "mediate": "ellipse", "evidence": "ellipse"}
    fills = {"hypothesis": "lightyellow", "mode": "lightblue", "mediate": "white", "evidence": "lightgrey"}
    lines = [f'digraph "{g.name or "dfg"}" {{', "  rankdir=LR;"]
    for v in g.variables:
        lines.append(f'  "{v.id}" [shape={shapes[v.role]}, style=filled, fillcolor={fills[v.role]}];')
    for f in g.factors:
        lines.append(f'  "{f.id}" [shape=box, label="{f.id}", width=0.3, height=0.3];')
    for a, b in g.edges():
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
