"""Command-line front end: ``hbg2dfg <subcommand> ...``.

Exit status is 0 on success, 1 when a pipeline stage fails (the message
names the stage) and 2 for usage or file errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .causality import DEFAULT_RP, EFFORT_TO_TARGET
from .dfg import CptConfig, DirectedFactorGraph, joint_factorization
from .inference import Evidence, Posterior, brute_force_posterior, rank_diagnoses, sum_product
from .pipeline import Construction, StageError, _stage, construct
from .scenario import (
    DEFAULT_DELTA,
    FaultInjection,
    discretize_readings,
    simulate_transient,
    steady_state,
    trace_csv,
)
from .text import export_dfg_dot, export_dfg_json, import_dfg_json, parse_model, serialize_model


class UsageError(Exception):
    pass


@dataclass
class PipelineRun:
    path: str
    options: dict
    construction: Construction | None = None
    evidence: Evidence = field(default_factory=Evidence)
    posterior: Posterior | None = None
    dfg: DirectedFactorGraph | None = None


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(out: str | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {Path(out) / name}: {exc.strerror or exc}") from exc


def _model(args):
    return _stage("parse", parse_model, _read(args.model))


def _cpt(args) -> CptConfig | None:
    if not getattr(args, "cpt", None):
        return None
    return _stage("build-dfg", CptConfig.from_json, _read(args.cpt))


def _construct(args) -> Construction:
    return construct(_model(args), _cpt(args), args.rp)


def _evidence(args, g: DirectedFactorGraph) -> Evidence:
    if not args.evidence:
        return Evidence()
    return _stage("infer", Evidence.parse, _read(args.evidence), g)


def _infer(args, g: DirectedFactorGraph, e: Evidence) -> Posterior:
    if args.exact:
        return _stage("infer", brute_force_posterior, g, e)
    if args.bp:
        return _stage("infer", sum_product, g, e, method="loopy", damping=args.damping,
                      max_iters=args.max_iters)
    return _stage("infer", sum_product, g, e)


def _stem(path: str) -> str:
    name = Path(path).name
    for suffix in (".dfg.json", ".hbg", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


# --- reports ------------------------------------------------------------------

def ranked_table(p: Posterior, g: DirectedFactorGraph) -> str:
    rows = [f"{'rank':>4}  {'variable':<12} {'role':<10} {'P(fault)':>10}  prior"]
    prior = {v.id: v.prior for v in g.variables}
    for i, (vid, pf) in enumerate(rank_diagnoses(p), start=1):
        pr = prior.get(vid)
        base = f"{1 - pr[0]:.4f}" if pr else "-"
        rows.append(f"{i:>4}  {vid:<12} {p.roles.get(vid, ''):<10} {pf:>10.6f}  {base}")
    return "\n".join(rows) + "\n"


def print_report(run: PipelineRun) -> str:
    """Model summary, paths, factorization, evidence and ranked diagnoses."""
    out = []
    c = run.construction
    g = run.dfg if run.dfg is not None else c.dfg
    if c is not None:
        m = c.model
        out.append(f"model: {m.name or _stem(run.path)}")
        out.append(f"  elements {len(m.elements)}, junctions {len(m.junctions)}, "
                   f"bonds {len(m.bonds)}, modes {len(m.modes)}")
        out.append(f"causal paths ({len(c.paths)}):")
        out += [f"  {p}" for p in c.paths]
        out.append("mediate variables: " + (", ".join(sorted(c.mediates)) or "none"))
    out.append(f"factorization: {joint_factorization(g)}")
    if run.evidence.clamp():
        out.append("evidence:")
        out += [f"  {k} = {v}" for k, v in sorted(run.evidence.clamp().items())]
    else:
        out.append("evidence: none (posteriors equal priors)")
    p = run.posterior
    if p is not None:
        if p.converged:
            out.append(f"inference: {p.method}, converged")
        else:
            out.append(f"inference: {p.method}, unconverged after {p.iterations} iterations; "
                       "the exact oracle is available with --exact")
        out.append("diagnoses:")
        out.append(ranked_table(p, g).rstrip("\n"))
    return "\n".join(out) + "\n"


def posterior_json(p: Posterior) -> str:
    data = {
        "method": p.method,
        "converged": p.converged,
        "iterations": p.iterations,
        "log_likelihood": None if p.log_likelihood != p.log_likelihood else p.log_likelihood,
        "clamped": list(p.clamped),
        "ranking": [[v, pf] for v, pf in rank_diagnoses(p)],
        "marginals": p.marginals,
    }
    return json.dumps(data, indent=1) + "\n"


# --- subcommands --------------------------------------------------------------

def cmd_parse(args) -> None:
    _write(args.out, _stem(args.model) + ".hbg", serialize_model(_model(args)))


def cmd_causality(args) -> None:
    c = _construct(args).causal
    lines = []
    for b in sorted(c.model.bonds, key=lambda b: b.id):
        recv = b.target if c.assignment[b.id] == EFFORT_TO_TARGET else b.source
        lines.append(f"bond {b.id}: {b.source} -> {b.target}, effort into {recv}")
    for eid in c.nonpreferred:
        lines.append(f"non-preferred causality: {eid}")
    _write(args.out, _stem(args.model) + ".causality.txt", "\n".join(lines) + "\n")


def cmd_equations(args) -> None:
    eqs = _construct(args).equations
    _write(args.out, _stem(args.model) + ".equations.txt", "".join(f"{e}\n" for e in eqs))


def cmd_paths(args) -> None:
    paths = _construct(args).paths
    _write(args.out, _stem(args.model) + ".paths.txt", "".join(f"{p}\n" for p in paths))


def cmd_build_dfg(args) -> None:
    c = _construct(args)
    text = export_dfg_json(c.dfg) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return
    _write(args.out, _stem(args.model) + ".dfg.json", text)
    ev = ", ".join(c.dfg.ids("evidence"))
    print(f"wrote {Path(args.out) / (_stem(args.model) + '.dfg.json')} (evidence: {ev})")


def cmd_infer(args) -> None:
    g = _stage("infer", import_dfg_json, _read(args.dfg))
    e = _evidence(args, g)
    p = _infer(args, g, e)
    run = PipelineRun(args.dfg, vars(args), None, e, p, g)
    sys.stdout.write(print_report(run))
    if args.out is not None:
        _write(args.out, _stem(args.dfg) + ".posterior.json", posterior_json(p))


def cmd_diagnose(args) -> None:
    c = _construct(args)
    e = _evidence(args, c.dfg)
    p = _infer(args, c.dfg, e)
    run = PipelineRun(args.model, vars(args), c, e, p)
    report = print_report(run)
    sys.stdout.write(report)
    if args.out is not None:
        stem = _stem(args.model)
        _write(args.out, stem + ".report.txt", report)
        _write(args.out, stem + ".dfg.json", export_dfg_json(c.dfg) + "\n")
        _write(args.out, stem + ".posterior.json", posterior_json(p))


def _pairs(items: list[str], what: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        for part in item.split(","):
            if "=" not in part:
                raise UsageError(f"{what} must look like name=value, got {part!r}")
            k, v = (x.strip() for x in part.split("=", 1))
            out[k] = v
    return out


def cmd_simulate(args) -> None:
    m = _model(args)
    mode = _pairs(args.mode, "--mode")
    try:
        fault = FaultInjection({k: float(v) for k, v in _pairs(args.fault, "--fault").items()})
    except ValueError as exc:
        raise UsageError(f"--fault multiplier is not a number: {exc}") from exc

    def run(f):
        if args.steady:
            return [_stage("infer", steady_state, m, mode, f, args.rp)]
        return _stage("infer", simulate_transient, m, mode, args.horizon, args.dt, f, args.rp)

    trace = run(fault)
    _write(args.out, _stem(args.model) + ".trace.csv", trace_csv(trace))
    if args.evidence_out:
        ref = run(FaultInjection())[-1]
        e = discretize_readings(trace[-1], ref, args.delta, pin_modes=True)
        text = "".join(f"{k} = {v}\n" for k, v in sorted(e.clamp().items()))
        try:
            Path(args.evidence_out).write_text(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.evidence_out}: {exc.strerror or exc}") from exc


def cmd_export_dot(args) -> None:
    if args.model.endswith(".json"):
        g = _stage("build-dfg", import_dfg_json, _read(args.model))
    else:
        g = _construct(args).dfg
    _write(args.out, _stem(args.model) + ".dot", export_dfg_dot(g))


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hbg2dfg",
                                 description="Build diagnosis factor graphs from hybrid bond graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, model=True, build=True):
        p = sub.add_parser(name, help=help_)
        if model:
            p.add_argument("model", help="model file (.hbg)")
        if build:
            p.add_argument("--rp", type=float, default=DEFAULT_RP, help="virtual resistor value")
            p.add_argument("--cpt", help="CPT configuration (.cpt.json)")
        p.add_argument("--out", help="directory for written artifacts (default: stdout)")
        p.set_defaults(fn=fn)
        return p

    def infer_flags(p):
        p.add_argument("--evidence", help="evidence file, one 'name = state' per line")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--exact", action="store_true", help="brute-force enumeration")
        g.add_argument("--bp", action="store_true", help="loopy belief propagation")
        p.add_argument("--damping", type=float, default=0.5)
        p.add_argument("--max-iters", type=int, default=500)

    add("parse", cmd_parse, "validate and print the canonical model text", build=False)
    add("causality", cmd_causality, "print the causal assignment per bond")
    add("equations", cmd_equations, "print the derived equations")
    add("paths", cmd_paths, "print causal paths from hypotheses to sensors")
    add("build-dfg", cmd_build_dfg, "write the factor graph as JSON")
    p = add("infer", cmd_infer, "posterior diagnoses for a saved factor graph", model=False, build=False)
    p.add_argument("--dfg", required=True, help="factor graph file (.dfg.json)")
    infer_flags(p)
    p = add("diagnose", cmd_diagnose, "run the whole pipeline and report diagnoses")
    infer_flags(p)
    p = add("simulate", cmd_simulate, "simulate sensor readings as CSV")
    p.add_argument("--mode", action="append", help="mode states, e.g. c=on,d=off")
    p.add_argument("--fault", action="append", help="parameter multipliers, e.g. R1=10")
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--steady", action="store_true", help="steady state instead of a transient")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="relative nominal band")
    p.add_argument("--evidence-out", help="write discretized final readings here")
    add("export-dot", cmd_export_dot, "write Graphviz DOT for a model or a .dfg.json")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except UsageError as exc:
        print(f"hbg2dfg: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"hbg2dfg: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
