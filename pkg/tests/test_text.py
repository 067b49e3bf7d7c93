import json

import pytest

from hbg2dfg.causality import insert_virtual_resistors
from hbg2dfg.dfg import DirectedFactorGraph, VariableNode
from hbg2dfg.text import ModelError, export_dfg_dot, export_dfg_json, import_dfg_json, parse_model, serialize_model


def test_circuit_contents(circuit):
    assert {(e.kind, e.id) for e in circuit.elements} == {
        ("Se", "V"), ("R", "R1"), ("R", "R2"), ("C", "C1"), ("C", "C2"), ("De", "De1"), ("De", "De2")}
    assert len(circuit.junctions) == 4
    assert [j.id for j in circuit.junctions if j.controlled] == ["J3"]


def test_sps_sensors(sps):
    assert {(s.kind, s.id) for s in sps.sensors()} == {("Df", "D_Af"), ("Df", "D_Bf"), ("De", "D_e")}


def test_missing_parameter_reports_position():
    with pytest.raises(ModelError, match="missing required parameter") as err:
        parse_model("model m\nelement Se S e=1\nelement R R1\njunction J 1\nbond 1 S -> J\nbond 2 J -> R1\n")
    assert err.value.line == 3


def test_syntax_error_position():
    with pytest.raises(ModelError) as err:
        parse_model("model m\nbond x A -> B\n")
    assert err.value.line == 2


@pytest.mark.parametrize("name", ["circuit", "sps"])
def test_round_trip(name, request):
    m = request.getfixturevalue(name)
    text = serialize_model(m)
    assert parse_model(text) == m
    assert serialize_model(parse_model(text)) == text


def test_virtual_flag_serialized(circuit):
    text = serialize_model(insert_virtual_resistors(circuit))
    assert any(ln.endswith(" virtual") and ln.startswith("element R ") for ln in text.splitlines())
    assert parse_model(text) == insert_virtual_resistors(circuit)


def test_empty_dfg_json():
    g = DirectedFactorGraph((), (), "")
    assert export_dfg_json(g) == '{"nodes":[],"edges":[]}'
    assert import_dfg_json(export_dfg_json(g)) == g


def test_det_json_shape(det):
    data = json.loads(export_dfg_json(det))
    kinds = [n["kind"] for n in data["nodes"]]
    assert kinds.count("variable") == 5 and kinds.count("factor") == 6


def test_dfg_json_round_trip(det, circuit_run, sps_run):
    for g in (det, circuit_run.dfg, sps_run.dfg):
        assert import_dfg_json(export_dfg_json(g)) == g


def test_tampered_edges_rejected(det):
    data = json.loads(export_dfg_json(det))
    data["edges"] = data["edges"][1:]
    with pytest.raises(ModelError):
        import_dfg_json(json.dumps(data))


def _dot_nodes(dot):
    return [ln for ln in dot.splitlines() if "[" in ln and "->" not in ln]


def test_det_dot_has_eleven_nodes(det):
    assert len(_dot_nodes(export_dfg_dot(det))) == 11


def test_single_variable_dot():
    g = DirectedFactorGraph((VariableNode("x1", "hypothesis", ("nominal", "faulty"), (0.5, 0.5)),), ())
    assert len(_dot_nodes(export_dfg_dot(g))) == 1


def test_sps_dot_sinks(sps_run):
    dot = export_dfg_dot(sps_run.dfg)
    tails = {ln.split("->")[0].strip().strip('"') for ln in dot.splitlines() if "->" in ln}
    variables = {v.id for v in sps_run.dfg.variables}
    assert variables - tails == {"D_Af", "D_Bf", "D_e"}
