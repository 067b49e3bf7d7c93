import json

import pytest

from hbg2dfg.cli import main
from hbg2dfg.inference import Evidence, brute_force_posterior
from hbg2dfg.pipeline import fixture_text


@pytest.fixture
def files(tmp_path):
    for name in ("circuit", "sps"):
        (tmp_path / f"{name}.hbg").write_text(fixture_text(name))
    (tmp_path / "ev.txt").write_text("# both nodes off nominal\nDe1 = deviant\nDe2 = deviant\n")
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _table(report):
    rows = report.split("diagnoses:\n", 1)[1].splitlines()[1:]
    return {r.split()[1]: float(r.split()[3]) for r in rows if r.strip()}


def test_diagnose_matches_oracle(files, capsys, circuit_run):
    code, out, _ = run(capsys, "diagnose", files / "circuit.hbg", "--evidence", files / "ev.txt")
    assert code == 0
    oracle = brute_force_posterior(circuit_run.dfg, Evidence({"De1": "deviant", "De2": "deviant"}))
    for vid, pf in _table(out).items():
        assert pf == pytest.approx(oracle.fault_probability(vid), abs=1e-6)


def test_report_lists_paths_in_arrow_notation(files, capsys, circuit_run):
    _, out, _ = run(capsys, "diagnose", files / "circuit.hbg")
    for p in circuit_run.paths:
        assert f"  {p}\n" in out
    assert "posteriors equal priors" in out


def test_unconverged_is_flagged(files, capsys):
    _, out, _ = run(capsys, "diagnose", files / "circuit.hbg", "--evidence", files / "ev.txt",
                    "--bp", "--max-iters", "1")
    assert "unconverged" in out and "--exact" in out


def test_build_dfg_sps_sinks(files, capsys):
    code, out, _ = run(capsys, "build-dfg", files / "sps.hbg", "--out", files / "o")
    assert code == 0
    data = json.loads((files / "o" / "sps.dfg.json").read_text())
    tails = {e["from"] for e in data["edges"]}
    variables = {n["id"] for n in data["nodes"] if n["kind"] == "variable"}
    assert variables - tails == {"D_Af", "D_Bf", "D_e"}


def test_artifacts_byte_identical(files, capsys):
    for d in ("a", "b"):
        assert run(capsys, "diagnose", files / "circuit.hbg", "--evidence", files / "ev.txt",
                   "--out", files / d)[0] == 0
    for name in ("circuit.dfg.json", "circuit.posterior.json", "circuit.report.txt"):
        assert (files / "a" / name).read_bytes() == (files / "b" / name).read_bytes()


def test_infer_on_saved_dfg(files, capsys):
    run(capsys, "build-dfg", files / "circuit.hbg", "--out", files)
    code, out, _ = run(capsys, "infer", "--dfg", files / "circuit.dfg.json", "--evidence", files / "ev.txt",
                       "--exact", "--out", files)
    assert code == 0 and "inference: exact" in out
    assert json.loads((files / "circuit.posterior.json").read_text())["ranking"][0][0] == "V"


def test_missing_file_exit_2(files, capsys):
    code, _, err = run(capsys, "paths", files / "absent.hbg")
    assert code == 2 and "absent.hbg" in err


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_stage_error_exit_1(files, capsys):
    (files / "bad.hbg").write_text("model bad\nelement R R1\n")
    code, _, err = run(capsys, "equations", files / "bad.hbg")
    assert code == 1 and err.startswith("hbg2dfg: [parse]")
    (files / "ev_bad.txt").write_text("Dx = deviant\n")
    code, _, err = run(capsys, "diagnose", files / "circuit.hbg", "--evidence", files / "ev_bad.txt")
    assert code == 1 and "[infer]" in err


def test_paths_and_equations_output(files, capsys):
    _, out, _ = run(capsys, "paths", files / "circuit.hbg")
    assert "C1 → f_4 → f_3 → f_2 → e_2 → e_3 → De1" in out.splitlines()
    _, out, _ = run(capsys, "equations", files / "circuit.hbg")
    assert "e_1 = V" in out.splitlines()


def test_simulate_and_evidence_out(files, capsys):
    code, out, _ = run(capsys, "simulate", files / "circuit.hbg", "--mode", "c=on", "--fault", "R1=10",
                       "--horizon", "2", "--evidence-out", files / "sim.txt")
    assert code == 0 and out.splitlines()[0] == "time,De1,De2"
    assert (files / "sim.txt").read_text() == "De1 = deviant\nDe2 = deviant\nc = on\n"


def test_export_dot_and_parse(files, capsys):
    code, out, _ = run(capsys, "export-dot", files / "circuit.hbg")
    assert code == 0 and out.startswith('digraph "circuit"')
    code, out, _ = run(capsys, "parse", files / "sps.hbg")
    assert code == 0 and out.startswith("model sps")
    code, out, _ = run(capsys, "causality", files / "circuit.hbg")
    assert code == 0 and out.startswith("bond 1: V -> J1")
