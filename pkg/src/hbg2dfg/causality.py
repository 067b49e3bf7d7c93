"""Virtual resistor insertion and sequential causality assignment.

A bond's causality records which end receives effort. ``"target"`` means the
source end imposes effort on the target end (the causal stroke sits at the
target); ``"source"`` is the reverse.

Storage elements get preferred *derivative* causality (C receives effort, I
receives flow), the usual choice when equations feed residual generation,
since no initial state is needed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .model import Bond, Element, HybridBondGraph, validate_model

DEFAULT_RP = 1e9

EFFORT_TO_TARGET = "target"
EFFORT_TO_SOURCE = "source"


class CausalityConflict(ValueError):
    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"causality conflict at {where}: {message}")


@dataclass(frozen=True)
class CausalHbg:
    model: HybridBondGraph
    assignment: dict[int, str] = field(hash=False)
    # elements whose preferred storage causality could not be honoured
    nonpreferred: tuple[str, ...] = ()

    def effort_receiver(self, bid: int) -> str:
        b = self.model.bond(bid)
        return b.target if self.assignment[bid] == EFFORT_TO_TARGET else b.source

    def imposes_effort_on(self, bid: int, node: str) -> bool:
        """True when the far end of bond ``bid`` imposes effort on ``node``."""
        return self.effort_receiver(bid) == node


# --- virtual resistors ------------------------------------------------------

def _downstream_parallel(m: HybridBondGraph, start: str) -> str | None:
    """First plain or controlled 0-junction reached along power direction."""
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for b in sorted(m.incident(node), key=lambda b: b.id):
            if b.source != node or not m.is_junction(b.target) or b.target in seen:
                continue
            if m.junction(b.target).parallel:
                return b.target
            seen.add(b.target)
            queue.append(b.target)
    return None


def insert_virtual_resistors(m: HybridBondGraph, rp: float = DEFAULT_RP) -> HybridBondGraph:
    """Attach one large virtual resistor downstream of every controlled junction.

    The resistor hangs off the first 0-junction reached from the controlled
    junction along power direction, so the node left floating by an open
    switch keeps a defined effort. Junctions already carrying a virtual
    resistor are not given a second one.
    """
    if not rp > 0:
        raise ValueError("rp must be positive")
    carriers = {
        b.other(e.id)
        for e in m.elements if e.virtual
        for b in m.incident(e.id)
    }
    new_elems: list[Element] = []
    new_bonds: list[Bond] = []
    next_id = max((b.id for b in m.bonds), default=0) + 1
    taken = {e.id for e in m.elements} | {j.id for j in m.junctions}
    for j in m.junctions:
        if not j.controlled:
            continue
        at = _downstream_parallel(m, j.id)
        if at is None:
            at = j.id
        if at in carriers:
            continue
        k = len([e for e in m.elements if e.virtual]) + len(new_elems)
        eid = "Rp" if k == 0 else f"Rp{k + 1}"
        while eid in taken:
            eid += "_"
        label = "p" if k == 0 else f"p{k + 1}"
        new_elems.append(Element(eid, "R", (("r", float(rp)),), virtual=True))
        new_bonds.append(Bond(next_id, at, eid, label))
        taken.add(eid)
        carriers.add(at)
        next_id += 1
    if not new_elems:
        return m
    out = m.with_elements(new_elems, new_bonds)
    assert validate_model(out).ok
    return out


def set_rp(m: HybridBondGraph, rp: float) -> HybridBondGraph:
    """Change the resistance of every virtual resistor."""
    from dataclasses import replace

    elems = tuple(
        replace(e, params=(("r", float(rp)),)) if e.virtual else e for e in m.elements
    )
    return replace(m, elements=elems)


# --- assignment -------------------------------------------------------------

class _Solver:
    def __init__(self, m: HybridBondGraph):
        self.m = m
        self.assign: dict[int, str] = {}
        self.sensor_bonds = m.sensor_bonds()
        self.power = [b for b in m.bonds if b.id not in self.sensor_bonds]

    # which end of ``b`` receives effort if ``node`` is to receive it
    def _dir_for(self, b: Bond, receiver: str) -> str:
        return EFFORT_TO_TARGET if b.target == receiver else EFFORT_TO_SOURCE

    def set(self, b: Bond, receiver: str, where: str):
        want = self._dir_for(b, receiver)
        have = self.assign.get(b.id)
        if have is not None and have != want:
            raise CausalityConflict(where, f"bond {b.id} already has effort toward "
                                           f"{b.target if have == EFFORT_TO_TARGET else b.source}")
        if have is None:
            self.assign[b.id] = want
            return True
        return False

    def receiver(self, b: Bond) -> str | None:
        d = self.assign.get(b.id)
        if d is None:
            return None
        return b.target if d == EFFORT_TO_TARGET else b.source

    def propagate(self):
        changed = True
        while changed:
            changed = False
            for j in self.m.junctions:
                changed |= self._junction(j)
            for e in self.m.elements:
                if e.kind in ("TF", "GY"):
                    changed |= self._two_port(e)

    def _junction(self, j) -> bool:
        bonds = [b for b in self.m.incident(j.id) if b.id not in self.sensor_bonds]
        # 0-junction: exactly one bond imposes effort on j.
        # 1-junction: exactly one bond receives effort from j's partner side,
        # i.e. exactly one bond where j imposes effort outward... inverted below.
        into = [b for b in bonds if self.receiver(b) == j.id]
        out = [b for b in bonds if self.receiver(b) not in (None, j.id)]
        free = [b for b in bonds if self.receiver(b) is None]
        if j.parallel:
            single, rest = into, out
            to_single = j.id  # the single bond delivers effort into j
        else:
            single, rest = out, into
            to_single = None
        if len(single) > 1:
            what = "effort" if j.parallel else "flow"
            raise CausalityConflict(j.id, f"bonds {[b.id for b in single]} all impose {what}")
        changed = False
        if len(single) == 1:
            for b in free:
                # every other bond takes the opposite role
                changed |= self.set(b, b.other(j.id) if j.parallel else j.id, j.id)
        elif not free:
            what = "effort" if j.parallel else "flow"
            raise CausalityConflict(j.id, f"no bond imposes {what}")
        elif len(free) == 1:
            b = free[0]
            rec = to_single if to_single else b.other(j.id)
            changed |= self.set(b, rec, j.id)
        return changed

    def _two_port(self, e) -> bool:
        b1, b2 = sorted(self.m.incident(e.id), key=lambda b: b.id)
        r1, r2 = self.receiver(b1), self.receiver(b2)
        in1 = None if r1 is None else r1 == e.id
        in2 = None if r2 is None else r2 == e.id
        changed = False
        # TF: effort enters on exactly one port; GY: on both or neither
        same = e.kind == "GY"
        if in1 is not None and in2 is not None:
            if (in1 == in2) != same:
                raise CausalityConflict(e.id, f"{e.kind} ports inconsistent")
        elif in1 is not None:
            want = in1 if same else not in1
            changed |= self.set(b2, e.id if want else b2.other(e.id), e.id)
        elif in2 is not None:
            want = in2 if same else not in2
            changed |= self.set(b1, e.id if want else b1.other(e.id), e.id)
        return changed

    def fix_element(self, e: Element, receives_effort: bool, mandatory: bool) -> None:
        (b,) = self.m.incident(e.id)
        if self.receiver(b) is not None and not mandatory:
            return
        self.set(b, e.id if receives_effort else b.other(e.id), e.id)
        self.propagate()


def assign_causality(m: HybridBondGraph) -> CausalHbg:
    """Sequential causality assignment.

    Order: sources (mandatory), sensors, storage (preferred derivative),
    virtual resistors (resistance form: the resistor imposes effort), other
    resistors by ascending bond id (resistance form preferred), then any
    still-free bond by ascending id. Each step is followed by constraint
    propagation over junctions and two-ports.
    """
    s = _Solver(m)
    elems = sorted(m.elements, key=lambda e: min(b.id for b in m.incident(e.id)))
    for e in elems:
        if e.kind == "Se":
            s.fix_element(e, receives_effort=False, mandatory=True)
        elif e.kind == "Sf":
            s.fix_element(e, receives_effort=True, mandatory=True)
    for e in elems:
        if e.is_sensor:
            (b,) = m.incident(e.id)
            # De reads effort, Df reads flow; neither loads the junction
            s.set(b, e.id if e.kind == "De" else b.other(e.id), e.id)
    s.propagate()
    nonpref = []
    for e in elems:
        if e.kind in ("C", "I"):
            (b,) = m.incident(e.id)
            want = e.kind == "C"
            if s.receiver(b) is not None:
                if (s.receiver(b) == e.id) != want:
                    nonpref.append(e.id)
                continue
            s.fix_element(e, receives_effort=want, mandatory=False)
    for virtual_pass in (True, False):
        for e in elems:
            if e.kind == "R" and e.virtual == virtual_pass:
                s.fix_element(e, receives_effort=False, mandatory=False)
    for b in s.power:
        if b.id not in s.assign:
            s.set(b, b.target, "bond %d" % b.id)
            s.propagate()
    result = CausalHbg(m, dict(sorted(s.assign.items())), tuple(nonpref))
    report = check_causality(result)
    if report:
        raise CausalityConflict(report[0].where, report[0].message)
    return result


# --- checking ---------------------------------------------------------------

@dataclass(frozen=True)
class Conflict:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


def check_causality(c: CausalHbg) -> list[Conflict]:
    """List every violated causality constraint (empty when consistent)."""
    m = c.model
    out: list[Conflict] = []
    missing = [b.id for b in m.bonds if b.id not in c.assignment]
    for bid in missing:
        out.append(Conflict(f"bond {bid}", "unassigned bond"))
    if missing:
        return out
    sensor_bonds = m.sensor_bonds()
    for j in m.junctions:
        bonds = [b for b in m.incident(j.id) if b.id not in sensor_bonds]
        into = [b.id for b in bonds if c.effort_receiver(b.id) == j.id]
        if j.parallel and len(into) != 1:
            out.append(Conflict(j.id, f"{len(into)} bonds impose effort on 0-junction"))
        if not j.parallel and len(bonds) - len(into) != 1:
            out.append(Conflict(j.id, f"{len(bonds) - len(into)} bonds impose flow on 1-junction"))
    for e in m.elements:
        bonds = sorted(m.incident(e.id), key=lambda b: b.id)
        rec = [c.effort_receiver(b.id) == e.id for b in bonds]
        if e.kind == "Se" and rec[0]:
            out.append(Conflict(e.id, "effort source must impose effort"))
        elif e.kind == "Sf" and not rec[0]:
            out.append(Conflict(e.id, "flow source must impose flow"))
        elif e.kind == "De" and not rec[0]:
            out.append(Conflict(e.id, "effort sensor must receive effort"))
        elif e.kind == "Df" and rec[0]:
            out.append(Conflict(e.id, "flow sensor must receive flow"))
        elif e.kind == "TF" and rec[0] == rec[1]:
            out.append(Conflict(e.id, "transformer needs effort in on exactly one port"))
        elif e.kind == "GY" and rec[0] != rec[1]:
            out.append(Conflict(e.id, "gyrator needs matching port causalities"))
    return out


def element_output(c: CausalHbg, e: Element, bond: Bond) -> str:
    """``"e"`` if the element computes the effort on ``bond``, else ``"f"``."""
    return "f" if c.effort_receiver(bond.id) == e.id else "e"
