"""The construction procedure end to end: model text in, factor graph out."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .causality import DEFAULT_RP, CausalHbg, assign_causality, insert_virtual_resistors
from .dfg import CptConfig, DirectedFactorGraph, build_dfg, classify_variables
from .equations import DependencyGraph, Equation, build_dependency_graph, derive_equations
from .model import HybridBondGraph
from .paths import (
    CausalPath,
    ReducedGraph,
    break_loops,
    eliminate_superfluous,
    extract_causal_paths,
    select_mediate_variables,
)
from .text import parse_model

STAGES = ("parse", "causality", "equations", "paths", "build-dfg", "infer")


class StageError(Exception):
    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        super().__init__(f"[{stage}] {error}")


def fixture_text(name: str) -> str:
    """Text of a bundled fixture model (``circuit`` or ``sps``)."""
    return resources.files("hbg2dfg.fixtures").joinpath(f"{name}.hbg").read_text()


def load_fixture(name: str) -> HybridBondGraph:
    return parse_model(fixture_text(name))


@dataclass
class Construction:
    model: HybridBondGraph
    causal: CausalHbg
    equations: list[Equation]
    dependency: DependencyGraph
    dag: DependencyGraph
    removed: list[tuple[str, str]]
    paths: list[CausalPath]
    reduced: ReducedGraph
    mediates: set[str]
    dfg: DirectedFactorGraph
    roles: dict[str, str] = field(default_factory=dict)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-tagged with the stage name
        raise StageError(name, exc) from exc


def construct(m: HybridBondGraph, cfg: CptConfig | None = None, rp: float = DEFAULT_RP,
              with_paths: bool = True) -> Construction:
    """Virtual resistors, causality, equations, paths, reduction and DFG."""
    mv = _stage("causality", insert_virtual_resistors, m, rp)
    c = _stage("causality", assign_causality, mv)
    eqs = _stage("equations", derive_equations, c)
    dep = _stage("equations", build_dependency_graph, eqs, set(mv.modes))
    dag, removed = _stage("paths", break_loops, dep, mv)
    paths = _stage("paths", extract_causal_paths, dag) if with_paths else []
    reduced = _stage("paths", eliminate_superfluous, dag)
    mediates = _stage("paths", select_mediate_variables, reduced)
    roles = classify_variables(c)
    dfg = _stage("build-dfg", build_dfg, reduced, cfg, m.name, roles)
    return Construction(mv, c, eqs, dep, dag, removed, paths, reduced, mediates, dfg, roles)


def construct_text(text: str, cfg: CptConfig | None = None, rp: float = DEFAULT_RP) -> Construction:
    m = _stage("parse", parse_model, text)
    return construct(m, cfg, rp)
