"""Numeric evaluation of a model: steady state, transients, and discretized evidence.

All fixtures are linear, so for a given mode assignment the bond variables
are the solution of one linear system. Storage elements contribute their
state (charge ``q = C e``, momentum ``p = I f``) to the right-hand side; in
steady state their flow (C) or effort (I) is zero instead. A controlled
junction that is off forces zero flow on every bond it touches, an open
switch.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .causality import DEFAULT_RP, insert_virtual_resistors
from .inference import Evidence
from .model import HybridBondGraph, ModeAssignment

OVERFLOW = 1e12
DEFAULT_DELTA = 0.05


class ScenarioError(ValueError):
    pass


class SingularSystem(ScenarioError):
    def __init__(self, undetermined: list[str]):
        self.undetermined = undetermined
        super().__init__("singular system; undetermined: " + ", ".join(undetermined))


class InstabilityError(ScenarioError):
    pass


@dataclass(frozen=True)
class FaultInjection:
    multipliers: dict[str, float] = field(default_factory=dict)

    def check(self, m: HybridBondGraph) -> None:
        ids = {e.id for e in m.elements}
        for eid, k in self.multipliers.items():
            if eid not in ids:
                raise ScenarioError(f"fault on unknown element {eid!r}")
            if not k >= 0:
                raise ScenarioError(f"multiplier for {eid} must be >= 0")
            if m.element(eid).is_sensor:
                raise ScenarioError(f"{eid} is a sensor and has no parameter")

    def apply(self, m: HybridBondGraph) -> HybridBondGraph:
        self.check(m)
        elems = []
        for e in m.elements:
            k = self.multipliers.get(e.id)
            if k is None:
                elems.append(e)
                continue
            key = dict(e.params)
            name = {"Se": "e", "Sf": "f", "R": "r", "C": "c", "I": "i", "TF": "m", "GY": "m"}[e.kind]
            key[name] = key[name] * k
            elems.append(replace(e, params=tuple(sorted(key.items()))))
        return replace(m, elements=tuple(elems))


@dataclass(frozen=True)
class SensorReadings:
    values: dict[str, float]
    mode: ModeAssignment = ModeAssignment()
    time: float = math.inf


class _System:
    """A x = B s + u for bond variables x, storage states s and source inputs u."""

    def __init__(self, m: HybridBondGraph, mode: ModeAssignment, steady: bool):
        self.m = m
        skip = m.sensor_bonds()
        self.bonds = [b for b in m.bonds if b.id not in skip]
        self.names = [v for b in self.bonds for v in (b.effort.name, b.flow.name)]
        self.ix = {n: i for i, n in enumerate(self.names)}
        self.storage = [e for e in m.elements if e.kind in ("C", "I")]
        n, k = len(self.names), len(self.storage)
        self.A = np.zeros((n, n))
        self.B = np.zeros((n, k))
        self.u = np.zeros(n)
        self.ds = np.zeros((k, n))  # d state / dt = ds @ x
        row = 0

        def eq(coeffs: dict[str, float], rhs: float = 0.0, state: tuple[int, float] | None = None):
            nonlocal row
            for name, c in coeffs.items():
                self.A[row, self.ix[name]] += c
            self.u[row] = rhs
            if state is not None:
                self.B[row, state[0]] = state[1]
            row += 1

        for e in m.elements:
            if e.is_sensor:
                continue
            bonds = sorted(m.incident(e.id), key=lambda b: b.id)
            val = e.value
            if e.kind in ("TF", "GY"):
                b1, b2 = bonds
                if e.kind == "TF":
                    eq({b1.effort.name: 1.0, b2.effort.name: -val})
                    eq({b2.flow.name: 1.0, b1.flow.name: -val})
                else:
                    eq({b1.effort.name: 1.0, b2.flow.name: -val})
                    eq({b2.effort.name: 1.0, b1.flow.name: -val})
                continue
            (b,) = bonds
            s = 1.0 if b.target == e.id else -1.0
            E, F = b.effort.name, b.flow.name
            if e.kind == "Se":
                eq({E: 1.0}, val)
            elif e.kind == "Sf":
                eq({F: 1.0}, val)
            elif e.kind == "R":
                eq({E: 1.0, F: -s * val})
            elif e.kind == "C":
                i = self.storage.index(e)
                self.ds[i, self.ix[F]] = s
                if steady:
                    eq({F: 1.0})
                else:
                    eq({E: 1.0}, state=(i, 1.0 / val))
            elif e.kind == "I":
                i = self.storage.index(e)
                self.ds[i, self.ix[E]] = s
                if steady:
                    eq({E: 1.0})
                else:
                    eq({F: 1.0}, state=(i, s / val))
        for j in m.junctions:
            bs = sorted((b for b in m.incident(j.id) if b.id not in skip), key=lambda b: b.id)
            if j.controlled and not mode.is_on(j.mode):
                for b in bs:
                    eq({b.flow.name: 1.0})
                continue
            share = (lambda b: b.effort.name) if j.parallel else (lambda b: b.flow.name)
            bal = (lambda b: b.flow.name) if j.parallel else (lambda b: b.effort.name)
            for b in bs[1:]:
                eq({share(b): 1.0, share(bs[0]): -1.0})
            eq({bal(b): (1.0 if b.target == j.id else -1.0) for b in bs})
        assert row == n
        self._factor()

    def _factor(self):
        n = len(self.names)
        # row equilibration keeps a 1e9 virtual resistor from hiding the rank
        scale = 1.0 / np.max(np.abs(self.A), axis=1)
        self.A, self.B, self.u = self.A * scale[:, None], self.B * scale[:, None], self.u * scale
        sv = np.linalg.svd(self.A, compute_uv=False)
        rank = int(np.sum(sv > sv[0] * 1e-14))
        if rank < n:
            _, _, vt = np.linalg.svd(self.A)
            null = vt[rank:]
            bad = [self.names[i] for i in range(n) if np.max(np.abs(null[:, i])) > 1e-9]
            raise SingularSystem(bad)
        self.Ainv = np.linalg.inv(self.A)

    def solve(self, state: np.ndarray) -> np.ndarray:
        return self.Ainv @ (self.B @ state + self.u)

    def deriv(self, state: np.ndarray) -> np.ndarray:
        return self.ds @ self.solve(state)

    def read(self, x: np.ndarray) -> dict[str, float]:
        out = {}
        skip = self.m.sensor_bonds()
        for s in self.m.sensors():
            jid = self.m.sensor_junction(s.id)
            b = min((b for b in self.m.incident(jid) if b.id not in skip), key=lambda b: b.id)
            name = b.effort.name if s.kind == "De" else b.flow.name
            out[s.id] = float(x[self.ix[name]])
        return dict(sorted(out.items()))


def _prepare(m: HybridBondGraph, fault: FaultInjection | None, rp: float) -> HybridBondGraph:
    m = insert_virtual_resistors(m, rp)
    return (fault or FaultInjection()).apply(m)


def _mode(mode) -> ModeAssignment:
    if mode is None:
        return ModeAssignment()
    if isinstance(mode, dict):
        return ModeAssignment.from_dict(mode)
    return mode


def steady_state(m: HybridBondGraph, mode=None, fault: FaultInjection | None = None,
                 rp: float = DEFAULT_RP) -> SensorReadings:
    """Sensor values with every storage element at equilibrium."""
    mode = _mode(mode)
    sys_ = _System(_prepare(m, fault, rp), mode, steady=True)
    x = sys_.solve(np.zeros(len(sys_.storage)))
    return SensorReadings(sys_.read(x), mode)


def default_dt(m: HybridBondGraph, mode=None, fault: FaultInjection | None = None,
               rp: float = DEFAULT_RP) -> float:
    """Fastest time constant of the linear dynamics divided by 50."""
    sys_ = _System(_prepare(m, fault, rp), _mode(mode), steady=False)
    if not sys_.storage:
        return 1.0
    K = sys_.ds @ sys_.Ainv @ sys_.B
    rates = [abs(z.real) for z in np.linalg.eigvals(K) if abs(z.real) > 1e-12]
    return (1.0 / max(rates)) / 50 if rates else 1.0


def simulate_transient(m: HybridBondGraph, schedule, horizon: float, dt: float | None = None,
                       fault: FaultInjection | None = None, rp: float = DEFAULT_RP,
                       initial: dict[str, float] | None = None) -> list[SensorReadings]:
    """Fixed-step RK4 from zero stored energy (or ``initial`` states by element id).

    A shorter last step makes the trace end exactly at ``horizon``.

    ``schedule`` is a mode assignment, or a list of ``(t_start, mode)`` pairs
    applied piecewise-constant.
    """
    if isinstance(schedule, (ModeAssignment, dict)) or schedule is None:
        schedule = [(0.0, _mode(schedule))]
    schedule = sorted(((float(t), _mode(md)) for t, md in schedule), key=lambda p: p[0])
    if horizon < 0:
        raise ScenarioError("horizon must be >= 0")
    mm = _prepare(m, fault, rp)
    if dt is None:
        dt = default_dt(m, schedule[0][1], fault, rp)
    if not dt > 0:
        raise ScenarioError("dt must be positive")
    systems = {}

    def system_at(t: float):
        mode = schedule[0][1]
        for t0, md in schedule:
            if t0 <= t + 1e-12:
                mode = md
        if mode not in systems:
            systems[mode] = _System(mm, mode, steady=False)
        return systems[mode], mode

    sys0, mode0 = system_at(0.0)
    state = np.zeros(len(sys0.storage))
    for i, e in enumerate(sys0.storage):
        state[i] = (initial or {}).get(e.id, 0.0)
    trace = [SensorReadings(sys0.read(sys0.solve(state)), mode0, 0.0)]
    dt = float(dt)
    steps = int(math.floor(horizon / dt + 1e-9))
    sizes = [dt] * steps
    if horizon - steps * dt > 1e-9 * dt:
        sizes.append(horizon - steps * dt)  # land exactly on the horizon
    t = 0.0
    for k, h in enumerate(sizes):
        s, mode = system_at(t)
        k1 = s.deriv(state)
        k2 = s.deriv(state + h / 2 * k1)
        k3 = s.deriv(state + h / 2 * k2)
        k4 = s.deriv(state + h * k3)
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = horizon if k == len(sizes) - 1 and k >= steps else (k + 1) * dt
        s, mode = system_at(t)
        x = s.solve(state)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > OVERFLOW:
            raise InstabilityError(f"values exceed {OVERFLOW:g} at t={t:g}; reduce dt")
        trace.append(SensorReadings(s.read(x), mode, t))
    return trace


def trace_csv(trace: list[SensorReadings]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ids = list(trace[0].values) if trace else []
    w.writerow(["time"] + ids)
    for r in trace:
        w.writerow([repr(float(r.time))] + [repr(float(r.values[i])) for i in ids])
    return buf.getvalue()


def discretize_readings(r: SensorReadings, ref: SensorReadings | dict[str, float],
                        delta: float = DEFAULT_DELTA, three_state: bool = False,
                        pin_modes: bool = False, atol: float = 1e-9) -> Evidence:
    """Nominal inside the band ``|x - ref| <= delta |ref|`` (boundary included).

    ``atol`` absorbs round-off, so a zero reference accepts values within it.
    """
    if not delta > 0:
        raise ScenarioError("delta must be positive")
    refs = ref.values if isinstance(ref, SensorReadings) else ref
    obs = {}
    for sid, x in r.values.items():
        x0 = refs[sid]
        band = delta * abs(x0) * (1 + 1e-12) + atol
        if abs(x - x0) <= band:
            obs[sid] = "nominal"
        elif three_state:
            obs[sid] = "high" if x > x0 else "low"
        else:
            obs[sid] = "deviant"
    modes = r.mode.as_dict() if pin_modes else {}
    return Evidence(obs, modes)
