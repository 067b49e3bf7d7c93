"""Value types for hybrid bond graphs and structural validation."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

ELEMENT_KINDS = ("Se", "Sf", "R", "C", "I", "TF", "GY", "De", "Df")
SENSOR_KINDS = ("De", "Df")
SOURCE_KINDS = ("Se", "Sf")
TWO_PORT_KINDS = ("TF", "GY")
JUNCTION_KINDS = ("0", "1", "0c", "1c")

# parameter each element kind must carry
REQUIRED_PARAM = {
    "Se": "e",
    "Sf": "f",
    "R": "r",
    "C": "c",
    "I": "i",
    "TF": "m",
    "GY": "m",
}
POSITIVE_PARAM_KINDS = ("R", "C", "I")

MODE_STATES = ("off", "on")


@dataclass(frozen=True)
class Element:
    id: str
    kind: str
    params: tuple[tuple[str, float], ...] = ()
    virtual: bool = False

    @property
    def param_map(self) -> dict[str, float]:
        return dict(self.params)

    @property
    def value(self) -> float | None:
        key = REQUIRED_PARAM.get(self.kind)
        return self.param_map.get(key) if key else None

    @property
    def is_sensor(self) -> bool:
        return self.kind in SENSOR_KINDS


@dataclass(frozen=True)
class Junction:
    id: str
    kind: str
    mode: str | None = None

    @property
    def controlled(self) -> bool:
        return self.kind in ("0c", "1c")

    @property
    def parallel(self) -> bool:
        return self.kind in ("0", "0c")


@dataclass(frozen=True)
class BondVariable:
    bond: int
    kind: str  # "e" or "f"
    label: str

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.label}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Bond:
    id: int
    source: str
    target: str
    label: str = ""

    @property
    def tag(self) -> str:
        return self.label or str(self.id)

    @property
    def effort(self) -> BondVariable:
        return BondVariable(self.id, "e", self.tag)

    @property
    def flow(self) -> BondVariable:
        return BondVariable(self.id, "f", self.tag)

    def other(self, end: str) -> str:
        if end == self.source:
            return self.target
        if end == self.target:
            return self.source
        raise KeyError(f"{end} is not an endpoint of bond {self.id}")


@dataclass(frozen=True)
class Violation:
    rule: str
    ref: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.rule} [{self.ref}] {self.detail}".rstrip()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]


@dataclass(frozen=True)
class HybridBondGraph:
    name: str
    elements: tuple[Element, ...] = ()
    junctions: tuple[Junction, ...] = ()
    bonds: tuple[Bond, ...] = ()
    modes: tuple[str, ...] = ()

    def __post_init__(self):
        # canonical ordering makes structural equality order-insensitive
        object.__setattr__(self, "elements", tuple(sorted(self.elements, key=lambda e: e.id)))
        object.__setattr__(self, "junctions", tuple(sorted(self.junctions, key=lambda j: j.id)))
        object.__setattr__(self, "bonds", tuple(sorted(self.bonds, key=lambda b: b.id)))
        object.__setattr__(self, "modes", tuple(sorted(set(self.modes))))

    # lookups -------------------------------------------------------------
    def element(self, eid: str) -> Element:
        for e in self.elements:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def junction(self, jid: str) -> Junction:
        for j in self.junctions:
            if j.id == jid:
                return j
        raise KeyError(jid)

    def bond(self, bid: int) -> Bond:
        for b in self.bonds:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def node_ids(self) -> set[str]:
        return {e.id for e in self.elements} | {j.id for j in self.junctions}

    def is_junction(self, nid: str) -> bool:
        return any(j.id == nid for j in self.junctions)

    def is_element(self, nid: str) -> bool:
        return any(e.id == nid for e in self.elements)

    def incident(self, nid: str) -> list[Bond]:
        return [b for b in self.bonds if nid in (b.source, b.target)]

    def element_bonds(self, eid: str) -> list[Bond]:
        return self.incident(eid)

    def sensor_bonds(self) -> set[int]:
        sensors = {e.id for e in self.elements if e.is_sensor}
        return {b.id for b in self.bonds if b.source in sensors or b.target in sensors}

    def power_bonds(self) -> list[Bond]:
        skip = self.sensor_bonds()
        return [b for b in self.bonds if b.id not in skip]

    def sensors(self) -> list[Element]:
        return [e for e in self.elements if e.is_sensor]

    def sensor_junction(self, sid: str) -> str:
        (b,) = self.incident(sid)
        return b.other(sid)

    def variables(self) -> list[BondVariable]:
        out = []
        for b in self.bonds:
            out += [b.effort, b.flow]
        return out

    def variable(self, name: str) -> BondVariable:
        for v in self.variables():
            if v.name == name:
                return v
        raise KeyError(name)

    def with_elements(self, extra: Iterable[Element], bonds: Iterable[Bond]) -> "HybridBondGraph":
        return replace(self, elements=self.elements + tuple(extra), bonds=self.bonds + tuple(bonds))


@dataclass(frozen=True)
class ModeAssignment:
    states: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __getitem__(self, mode: str) -> str:
        return dict(self.states)[mode]

    def as_dict(self) -> dict[str, str]:
        return dict(self.states)

    def is_on(self, mode: str) -> bool:
        return dict(self.states).get(mode, "on") == "on"

    @classmethod
    def of(cls, **states: str) -> "ModeAssignment":
        return cls(tuple(sorted(states.items())))

    @classmethod
    def from_dict(cls, states: dict[str, str]) -> "ModeAssignment":
        return cls(tuple(sorted(states.items())))


def validate_model(m: HybridBondGraph) -> ValidationReport:
    """Check every structural invariant; violations are returned, never raised."""
    out: list[Violation] = []
    add = lambda rule, ref, detail="": out.append(Violation(rule, str(ref), detail))  # noqa: E731

    if not m.name or not IDENT.match(m.name):
        add("invalid identifier", m.name or "<model>", "model name")

    ids: dict[str, int] = {}
    for nid in [e.id for e in m.elements] + [j.id for j in m.junctions] + list(m.modes):
        ids[nid] = ids.get(nid, 0) + 1
        if not IDENT.match(nid):
            add("invalid identifier", nid)
    for nid, n in sorted(ids.items()):
        if n > 1:
            add("duplicate id", nid)

    for e in m.elements:
        if e.kind not in ELEMENT_KINDS:
            add("unknown element kind", e.id, e.kind)
            continue
        p = e.param_map
        if e.is_sensor:
            if p:
                add("sensor has parameters", e.id)
        else:
            key = REQUIRED_PARAM[e.kind]
            if key not in p:
                add("missing required parameter", e.id, key)
            elif e.kind in POSITIVE_PARAM_KINDS and not p[key] > 0:
                add("non-positive parameter", e.id, f"{key}={p[key]}")
        if e.virtual and e.kind != "R":
            add("virtual non-resistor", e.id)

    for j in m.junctions:
        if j.kind not in JUNCTION_KINDS:
            add("unknown junction kind", j.id, j.kind)
        if j.controlled and j.mode is None:
            add("controlled junction without mode", j.id)
        if not j.controlled and j.mode is not None:
            add("mode on uncontrolled junction", j.id, j.mode)
        if j.mode is not None and j.mode not in m.modes:
            add("unknown mode variable", j.id, j.mode)

    bond_ids: dict[int, int] = {}
    nodes = m.node_ids()
    for b in m.bonds:
        bond_ids[b.id] = bond_ids.get(b.id, 0) + 1
        if b.id <= 0:
            add("non-positive bond id", b.id)
        for end in (b.source, b.target):
            if end not in nodes:
                add("dangling endpoint", b.id, end)
        if b.source == b.target:
            add("self loop", b.id)
    for bid, n in sorted(bond_ids.items()):
        if n > 1:
            add("duplicate bond id", bid)

    for e in m.elements:
        n = len(m.incident(e.id))
        want = 2 if e.kind in TWO_PORT_KINDS else 1
        if n != want:
            add("element port count", e.id, f"{n} bonds, expected {want}")
        for b in m.incident(e.id):
            other = b.other(e.id)
            if other in nodes and not m.is_junction(other):
                add("element bonded to element", e.id, other)
        if e.is_sensor and n == 1:
            j = m.incident(e.id)[0].other(e.id)
            if m.is_junction(j):
                want_parallel = e.kind == "De"
                if m.junction(j).parallel != want_parallel:
                    add("sensor on wrong junction kind", e.id, j)

    for j in m.junctions:
        if len(m.incident(j.id)) < 2:
            add("junction degree", j.id, f"{len(m.incident(j.id))} bonds")

    for mode in m.modes:
        if not any(j.mode == mode for j in m.junctions):
            add("unused mode variable", mode)

    if nodes and not _connected(m):
        add("disconnected graph", m.name)

    return ValidationReport(tuple(out))


def _connected(m: HybridBondGraph) -> bool:
    nodes = m.node_ids()
    adj: dict[str, set[str]] = {n: set() for n in nodes}
    for b in m.bonds:
        if b.source in adj and b.target in adj:
            adj[b.source].add(b.target)
            adj[b.target].add(b.source)
    start = next(iter(sorted(nodes)))
    seen, stack = {start}, [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen == nodes


def enumerate_modes(m: HybridBondGraph) -> list[ModeAssignment]:
    """All 2^k on/off assignments, lexicographic by mode id with off < on."""
    modes = sorted(m.modes)
    return [
        ModeAssignment(tuple(zip(modes, combo)))
        for combo in itertools.product(MODE_STATES, repeat=len(modes))
    ]
