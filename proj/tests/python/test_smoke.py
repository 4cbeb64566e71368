import math
import os
from pathlib import Path

import pytest

import incoqkd

SCENARIOS = Path(os.environ.get("INCOQKD_SCENARIOS", Path(__file__).resolve().parents[2] / "scenarios"))


def test_budget_and_threshold():
    assert incoqkd.launch_power_dbm(0.1, 1e8, 1581.0) == pytest.approx(-89.009, abs=1e-3)
    assert incoqkd.headroom_db(-69.8, 0.1, 1e9, 1581.0) == pytest.approx(9.209, abs=1e-3)
    assert incoqkd.qber_threshold() == pytest.approx(0.110028, abs=1e-6)
    assert incoqkd.secure_fraction(0.0) == 1.0
    assert incoqkd.binary_entropy(0.5) == pytest.approx(1.0)
    assert incoqkd.degree_of_polarization(1, 0.6, 0, 0) == pytest.approx(0.6)


def test_scenario_round_trip():
    s = incoqkd.Scenario.load(str(SCENARIOS / "ase_ob.ini"))
    back = incoqkd.Scenario.from_text(s.text())
    assert back.hash() == s.hash()
    s.optical_budget_db = 3.0
    assert s.hash() != back.hash()


def test_errors_are_typed():
    with pytest.raises(incoqkd.ConfigError):
        incoqkd.Scenario.from_text("[protocol]\nmu = -1\n")
    with pytest.raises(incoqkd.IoError):
        incoqkd.Scenario.load(str(SCENARIOS / "missing.ini"))
    with pytest.raises(incoqkd.DomainError):
        incoqkd.binary_entropy(2.0)
    assert issubclass(incoqkd.SyncError, incoqkd.Error)


def test_noiseless_run():
    s = incoqkd.Scenario.load(str(SCENARIOS / "ideal.ini"))
    s.symbols = 2_000_000
    r = incoqkd.run_single(s)
    assert r["qber"] == 0.0
    assert r["sifted_count"] > 0
    e = incoqkd.expected_rates(s)
    assert e["qber"] == pytest.approx(0.0, abs=1e-12)


def test_sweep_and_determinism():
    s = incoqkd.Scenario.load(str(SCENARIOS / "ase_ob.ini"))
    s.symbols = 20_000_000
    a = incoqkd.sweep_ob(s, [0.0, 6.0], threads=1)
    b = incoqkd.sweep_ob(s, [0.0, 6.0], threads=2)
    assert a == b
    assert len(a["reports"]) == 2


def test_drift_trace_and_spearman():
    s = incoqkd.Scenario.load(str(SCENARIOS / "drift.ini"))
    rows = incoqkd.drift_trace(s)
    assert len(rows) == 2 * 61
    for _, _, s1, s2, s3 in rows:
        assert math.isclose(s1 * s1 + s2 * s2 + s3 * s3, 1.0, rel_tol=1e-9)
    assert incoqkd.spearman([1, 2, 3], [3, 5, 9]) == pytest.approx(1.0)


def test_calibrate_returns_log():
    s = incoqkd.Scenario.load(str(SCENARIOS / "calibration" / "ase_ob.ini"))
    pinned, log = incoqkd.calibrate(s)
    assert any("extinction" in line for line in log)
    assert incoqkd.expected_rates(pinned)["qber"] == pytest.approx(0.042, abs=1e-4)
