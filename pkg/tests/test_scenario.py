import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbg2dfg.model import enumerate_modes
from hbg2dfg.scenario import (
    FaultInjection,
    InstabilityError,
    ScenarioError,
    SensorReadings,
    default_dt,
    discretize_readings,
    simulate_transient,
    steady_state,
    trace_csv,
)

V = 10.0


def test_steady_on_both_nodes_at_source(circuit):
    r = steady_state(circuit, {"c": "on"}).values
    assert r["De1"] == pytest.approx(V, rel=1e-6)
    assert r["De2"] == pytest.approx(V, rel=1e-6)


def test_steady_off_second_node_empty(circuit):
    r = steady_state(circuit, {"c": "off"}).values
    assert r["De1"] == pytest.approx(V, rel=1e-9)
    assert r["De2"] == pytest.approx(0.0, abs=1e-9)


def test_off_transient_decays(circuit):
    trace = simulate_transient(circuit, {"c": "off"}, 5.0, initial={"C2": 4.0})
    d = [r.values["De2"] for r in trace]
    assert d[0] == pytest.approx(4.0)
    assert all(b <= a for a, b in zip(d, d[1:]))


def test_source_loss_zeroes_sensors(circuit):
    r = steady_state(circuit, None, FaultInjection({"V": 0.0}))
    assert all(x == pytest.approx(0.0, abs=1e-12) for x in r.values.values())


def test_source_loss_all_sources(sps):
    f = FaultInjection({e.id: 0.0 for e in sps.elements if e.kind == "Se"})
    assert all(x == pytest.approx(0.0, abs=1e-12) for x in steady_state(sps, None, f).values.values())


def test_charging_is_monotone(circuit):
    trace = simulate_transient(circuit, {"c": "on"}, 10.0)
    d = [r.values["De2"] for r in trace]
    assert all(b >= a for a, b in zip(d, d[1:]))
    assert 0.9 * V < d[-1] < V


def test_halving_dt_agrees(circuit):
    dt = default_dt(circuit, {"c": "on"})
    a = simulate_transient(circuit, {"c": "on"}, 2.0, dt=dt)[-1]
    b = simulate_transient(circuit, {"c": "on"}, 2.0, dt=dt / 2)[-1]
    assert a.time == pytest.approx(b.time)
    for k in a.values:
        assert a.values[k] == pytest.approx(b.values[k], abs=dt)


def test_horizon_zero_echoes_initial(circuit):
    (r,) = simulate_transient(circuit, {"c": "on"}, 0.0, initial={"C1": 2.0, "C2": 3.0})
    assert r.time == 0.0
    assert r.values == pytest.approx({"De1": 2.0, "De2": 3.0})


def test_mode_schedule_switches(circuit):
    trace = simulate_transient(circuit, [(0.0, {"c": "off"}), (1.0, {"c": "on"})], 2.0)
    early = [r for r in trace if r.time < 1.0]
    assert all(r.values["De2"] == pytest.approx(0.0, abs=1e-9) for r in early)
    assert trace[-1].values["De2"] > 1.0


def test_large_dt_is_unstable(circuit):
    with pytest.raises(InstabilityError):
        simulate_transient(circuit, {"c": "on"}, 200.0, dt=10.0)


def test_fault_checks(circuit):
    with pytest.raises(ScenarioError):
        steady_state(circuit, None, FaultInjection({"nope": 2.0}))
    with pytest.raises(ScenarioError):
        steady_state(circuit, None, FaultInjection({"R1": -1.0}))
    with pytest.raises(ScenarioError):
        steady_state(circuit, None, FaultInjection({"De1": 2.0}))


def test_trace_csv_header(circuit):
    text = trace_csv(simulate_transient(circuit, {"c": "on"}, 0.1))
    assert text.splitlines()[0] == "time,De1,De2"


def _reading(x, ref):
    return SensorReadings({"D": x}), {"D": ref}


def test_discretize_bands():
    assert discretize_readings(*_reading(V, V)).observed == {"D": "nominal"}
    assert discretize_readings(*_reading(V * 1.05, V), delta=0.05).observed == {"D": "nominal"}
    assert discretize_readings(*_reading(0.0, V), delta=0.05).observed == {"D": "deviant"}
    r, ref = _reading(V * 1.2, V)
    assert discretize_readings(r, ref, three_state=True).observed == {"D": "high"}
    r, ref = _reading(V * 0.5, V)
    assert discretize_readings(r, ref, three_state=True).observed == {"D": "low"}
    with pytest.raises(ScenarioError):
        discretize_readings(r, ref, delta=0.0)


def test_discretize_pins_modes(circuit):
    r = steady_state(circuit, {"c": "off"})
    e = discretize_readings(r, steady_state(circuit, {"c": "on"}), pin_modes=True)
    assert e.modes == {"c": "off"} and e.observed["De2"] == "deviant"


@pytest.mark.parametrize("name", ["circuit", "sps"])
def test_rp_insensitivity(name, request):
    m = request.getfixturevalue(name)
    for mode in enumerate_modes(m):
        a = steady_state(m, mode, rp=1e6).values
        b = steady_state(m, mode, rp=1e9).values
        for k in a:
            assert abs(a[k] - b[k]) <= 1e-4 * max(abs(b[k]), 1e-9) + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 50.0), st.sampled_from(["circuit", "sps"]))
def test_linearity(k, name):
    from hbg2dfg.pipeline import load_fixture

    m = load_fixture(name)
    base = steady_state(m).values
    f = FaultInjection({e.id: k for e in m.elements if e.kind in ("Se", "Sf")})
    scaled = steady_state(m, None, f).values
    for s in base:
        assert scaled[s] == pytest.approx(k * base[s], rel=1e-9, abs=1e-9)
