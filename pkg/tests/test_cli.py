import json

import pytest

from csmadelay.cli import main

CFG = """
graph: {kind: path, links: 3}
job_types:
  - {id: 0, size: 1, deadline: 400, arrival_max: 1}
V: 10
beta: 2
T: 3
W: 4
horizon: 1500
seed: 7
verify: {weight_vectors: 2, transitions: 100000, weight_range: [0, 1], slots: 1500}
sweep: {V: [5, 10], seeds: 2, horizon: 500}
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(CFG)
    return p


def test_simulate_outputs(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--horizon", "300", "--seed", "7", "--out", str(out)]) == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "slot,link,type,A,r,eta,d,mu,z,x,Q,Y,Z,w"
    assert len(lines) == 1 + 300 * 3
    assert (out / "jobs.csv").read_text().startswith("job_id,link,type,admit_slot,depart_slot,outcome\n")
    assert json.loads((out / "summary.json").read_text())["horizon"] == 300


def test_simulate_is_byte_identical(cfg, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "jobs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_trace_off(cfg, tmp_path):
    assert main(["simulate", "--config", str(cfg), "--trace", "off", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "trace.csv").exists()


def test_config_errors(tmp_path, cfg):
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["simulate", "--config", str(cfg), "--bogus"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text(CFG + "extra_key: 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(cfg), "--W", "1", "--out", str(tmp_path)]) == 1


def test_verify_dtmc_pass_and_fail(cfg, tmp_path, capsys):
    assert main(["verify-dtmc", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "balance_residual" in capsys.readouterr().out
    broken = tmp_path / "broken.yaml"
    broken.write_text(CFG.replace("slots: 1500}", "slots: 1500, tv_tolerance: 0.0}"))
    assert main(["verify-dtmc", "--config", str(broken), "--out", str(tmp_path)]) == 2


def test_verify_drift(cfg, tmp_path):
    assert main(["verify-drift", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_drift.json").read_text())
    assert rep["drift_holds"] == "1500/1500" and rep["exact_replay"] == "match"


def test_audit_delay_pass_and_fail(cfg, tmp_path):
    assert main(["audit-delay", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    tight = tmp_path / "tight.yaml"
    # a too-short deadline with a tiny explicit epsilon makes late jobs certain
    tight.write_text(CFG.replace("deadline: 400, arrival_max: 1", "deadline: 3, arrival_max: 1, epsilon: 0.01"))
    assert main(["audit-delay", "--config", str(tight), "--horizon", "3000", "--out", str(tmp_path)]) == 2


def test_offline_bound(cfg, tmp_path):
    assert main(["offline-bound", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "offline_bound.json").read_text())
    assert rep["optimum"] == pytest.approx(3 * 0.4054651081, abs=1e-6)


def test_sweep(cfg, tmp_path):
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2
