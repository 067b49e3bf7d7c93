import json
import math
import random
import warnings
from pathlib import Path

import pytest

from hbg2dfg.dfg import CptConfig
from hbg2dfg.inference import (
    Evidence,
    InferenceError,
    Posterior,
    ZeroProbabilityEvidence,
    ZeroProbabilityWarning,
    brute_force_posterior,
    marginal_likelihood,
    rank_diagnoses,
    sum_product,
)
from hbg2dfg.pipeline import construct

GOLDEN = Path(__file__).parent / "golden"


def _max_diff(a, b):
    return max(abs(a[v][s] - b[v][s]) for v in a.marginals for s in a[v])


def _prior_fault(g, vid):
    return 1.0 - g.variable(vid).prior[0]


@pytest.mark.xfail(strict=True, reason="split evidence factors shift the DET marginals away from "
                                       "the prior factors; see the notes on normalization")
def test_det_no_evidence_marginals_equal_priors(det):
    p = brute_force_posterior(det)
    for v in ("x1", "x2", "x3", "x4"):
        assert p.fault_probability(v) == pytest.approx(_prior_fault(det, v), abs=1e-9)


def test_det_gate_off_restores_prior(det):
    p = brute_force_posterior(det, Evidence({"x5": "deviant"}, {"x2": "off"}))
    assert p.fault_probability("x1") == pytest.approx(_prior_fault(det, "x1"), abs=1e-12)


def test_circuit_golden(circuit_run):
    expected = json.loads((GOLDEN / "circuit_De1_deviant.json").read_text())
    e = Evidence({"De1": "deviant", "De2": "nominal"})
    for p in (brute_force_posterior(circuit_run.dfg, e), sum_product(circuit_run.dfg, e)):
        for v, dist in expected.items():
            for s, x in dist.items():
                assert p[v][s] == pytest.approx(x, abs=1e-9)


def test_tree_pass_matches_oracle(det):
    for e in (Evidence(), Evidence({"x5": "deviant"}), Evidence({"x5": "nominal"}, {"x4": "off"})):
        p = sum_product(det, e)
        assert p.method == "tree"
        assert _max_diff(brute_force_posterior(det, e), p) < 1e-9


@pytest.mark.parametrize("name", ["circuit_run", "sps_run"])
def test_cutset_matches_oracle(name, request):
    g = request.getfixturevalue(name).dfg
    rng = random.Random(7)
    for _ in range(10):
        obs = {v.id: rng.choice(v.states) for v in g.variables
               if v.role in ("evidence", "mode") and rng.random() < 0.5}
        e = Evidence(obs)
        a, b = brute_force_posterior(g, e), sum_product(g, e)
        assert _max_diff(a, b) < 1e-9
        assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-9)


def test_uniform_priors_give_uniform_posteriors(circuit):
    g = construct(circuit, CptConfig(p_f=0.5, p_on=0.5)).dfg
    p = sum_product(g)
    for v in g.ids("hypothesis") + g.ids("mode"):
        assert p.fault_probability(v) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.xfail(strict=True, reason="the shunt resistors reach only D_e in the fixture's causal "
                                       "graph, so they gain slightly more than the battery branch")
def test_sps_bus_deviation_implicates_battery(sps_run):
    g = sps_run.dfg
    e = Evidence({"D_e": "deviant", "D_Af": "nominal", "D_Bf": "nominal"})
    post, prior = brute_force_posterior(g, e), brute_force_posterior(g)
    gain = {v: post.fault_probability(v) - prior.fault_probability(v)
            for v in g.ids("hypothesis") + g.ids("mode")}
    top = sorted(gain, key=lambda v: -gain[v])[:3]
    assert set(top) <= {"V_BR", "R_BR", "c_BR"}


@pytest.mark.xfail(strict=True, reason="unpinned switch modes keep a 0.5 prior and outrank "
                                       "every component hypothesis")
def test_sps_bus_deviation_ranking(sps_run):
    e = Evidence({"D_e": "deviant", "D_Af": "nominal", "D_Bf": "nominal"})
    top = [v for v, _ in rank_diagnoses(sum_product(sps_run.dfg, e))[:3]]
    assert set(top) <= {"V_BR", "R_BR", "c_BR"}


def test_rank_order_and_ties():
    p = Posterior({"A": {"nominal": 0.3, "faulty": 0.7}, "B": {"nominal": 0.8, "faulty": 0.2}}, 0.0)
    assert [v for v, _ in rank_diagnoses(p)] == ["A", "B"]
    same = {"nominal": 0.5, "faulty": 0.5}
    p = Posterior({"b": same, "a": same, "c": same}, 0.0)
    assert [v for v, _ in rank_diagnoses(p)] == ["a", "b", "c"]


def test_marginal_likelihood(det, circuit_run):
    assert marginal_likelihood(det) == pytest.approx(1.0)
    x = marginal_likelihood(circuit_run.dfg, Evidence({"De1": "deviant"}))
    assert 0.0 < x < 1.0
    assert math.log(x) == pytest.approx(
        brute_force_posterior(circuit_run.dfg, Evidence({"De1": "deviant"})).log_likelihood)


def test_impossible_evidence(circuit):
    g = construct(circuit, CptConfig(p_f=0.0, leak=0.0)).dfg
    e = Evidence({"De1": "deviant"})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert marginal_likelihood(g, e) == 0.0
    assert any(issubclass(w.category, ZeroProbabilityWarning) for w in caught)
    with pytest.raises(ZeroProbabilityEvidence):
        sum_product(g, e)
    with pytest.raises(ZeroProbabilityEvidence):
        brute_force_posterior(g, e)


def test_loopy_reports_convergence(circuit_run):
    e = Evidence({"De1": "deviant"})
    ok = sum_product(circuit_run.dfg, e, method="loopy")
    assert ok.converged and ok.method == "loopy"
    stuck = sum_product(circuit_run.dfg, e, method="loopy", max_iters=1)
    assert not stuck.converged and stuck.iterations == 1


def test_loopy_exact_on_tree(det):
    e = Evidence({"x5": "deviant"})
    assert _max_diff(brute_force_posterior(det, e), sum_product(det, e, method="loopy")) < 1e-8


def test_evidence_parse(circuit_run):
    g = circuit_run.dfg
    e = Evidence.parse("# header\nDe1 = deviant  # reading\n\nc = on\n", g)
    assert e.observed == {"De1": "deviant"} and e.modes == {"c": "on"}
    with pytest.raises(InferenceError, match="line 1"):
        Evidence.parse("De1 deviant\n", g)
    with pytest.raises(InferenceError, match="unknown"):
        Evidence.parse("Dx = deviant\n", g)
    with pytest.raises(InferenceError, match="not a state"):
        Evidence.parse("De1 = high\n", g)


def test_clamped_variables_are_certain(circuit_run):
    p = sum_product(circuit_run.dfg, Evidence({"De2": "deviant"}, {"c": "off"}))
    assert p["c"] == {"on": 0.0, "off": 1.0}
    assert p["De2"]["deviant"] == 1.0


def test_deterministic(sps_run):
    e = Evidence({"D_e": "deviant"})
    assert sum_product(sps_run.dfg, e) == sum_product(sps_run.dfg, e)
