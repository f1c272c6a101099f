import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decaylab.errors import ConfigError, InsufficientDataError, UsageError
from decaylab.harness import (SUMMARY_COLUMNS, ExperimentConfig, acceptance_config_dir, fit_decay,
                              load_configs, run_experiment, shipped_config_dir, sweep)
from decaylab.waves import EnergyTrace


def small_config(**over):
    cfg = {"id": "small", "system": {"model": "wave_interior", "n": 60, "sigma_mask": 1.0},
           "feedback": {"kind": "linear"}, "alpha": {"kind": "constant", "value": 1.0},
           "envelope": {"T": 2.0}, "run": {"t_end": 30.0, "dt": 0.02, "sample_every": 5}}
    for k, v in over.items():
        cfg[k] = v
    return cfg


def synthetic(t, E):
    return EnergyTrace(t=np.asarray(t, float), E=np.asarray(E, float), D=np.zeros(len(t)), dt=t[1] - t[0])


class TestConfig:
    def test_roundtrip_bit_exact(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config(run={"t_end": 0.1 + 0.2, "dt": 1 / 3}))
        path = tmp_path / "c.json"
        cfg.dump(path)
        back = ExperimentConfig.load(path)
        assert back.to_dict() == cfg.to_dict()
        assert back.dumps() == cfg.dumps()
        assert back.run["t_end"] == 0.1 + 0.2

    def test_shipped_configs_load(self):
        cfgs = load_configs(shipped_config_dir())
        assert len(cfgs) == 27
        assert all(isinstance(c, ExperimentConfig) for c in cfgs)
        assert len(load_configs(acceptance_config_dir())) == 6

    @pytest.mark.parametrize("bad", [
        {"envelope": {"regime": "NonDecreasing"}, "alpha": {"kind": "power_decay", "sigma": 0.5}},
        {"run": {"dt": -1.0}},
        {"envelope": {"T": 0.0}},
        {"envelope": {"calibration": "magic"}},
        {"feedback": {"kind": "power_saturated", "gamma": 2.0}},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(small_config(**bad))

    def test_missing_block_and_unknown_key(self):
        d = small_config()
        del d["alpha"]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(d)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(small_config(extra=1))


class TestFit:
    def test_exponential_exact(self):
        t = np.linspace(0, 10, 501)
        f = fit_decay(synthetic(t, np.exp(-2 * t)), "exponential")
        assert f.L == pytest.approx(2.0, rel=1e-6) and f.goodness > 0.9999
        assert f.window[0] >= 5.0 - 1e-9 and f.window[1] == 10.0

    def test_power_exact(self):
        t = np.linspace(0, 100, 1001)
        f = fit_decay(synthetic(t, 1 / (1 + t)), "power")
        assert f.r == pytest.approx(1.0, rel=1e-6)

    @given(st.floats(0.1, 1.0), st.floats(0.1, 3.0))
    def test_stretched_recovers(self, sigma, L):
        t = np.linspace(0, 60, 1201)
        E = 3.0 * np.exp(-L * ((1 + t) ** sigma))
        if E[-1] < 1e-12 * E[0]:
            t = t[E > 1e-11 * E[0]]
            E = E[: t.size]
        f = fit_decay(synthetic(t, E), "stretched", sigma=sigma)
        assert f.L == pytest.approx(L, rel=1e-6)

    def test_free_sigma_search(self):
        t = np.linspace(0, 100, 2001)
        f = fit_decay(synthetic(t, np.exp(-0.5 * (1 + t) ** 0.5)), "stretched")
        assert f.sigma == pytest.approx(0.5, abs=0.005)

    def test_insufficient(self):
        t = np.linspace(0, 1, 30)
        with pytest.raises(InsufficientDataError):
            fit_decay(synthetic(t, np.exp(-t)), "exponential")

    def test_bad_model_and_clock(self):
        t = np.linspace(0, 10, 100)
        tr = synthetic(t, np.exp(-t))
        with pytest.raises(UsageError):
            fit_decay(tr, "logistic")
        with pytest.raises(UsageError):
            fit_decay(tr, "exponential", clock=lambda s: -s)


class TestRunExperiment:
    def test_linear_constant(self, tmp_path):
        rep = run_experiment(small_config(), tmp_path)
        assert rep["status"] == "ok" and rep["exit_code"] == 0
        assert rep["fitted"]["model"] == "exponential"
        assert rep["dominance"]["ok"]
        assert rep["ledger_residual"] < 1e-10
        for key in ("trace", "envelope", "report"):
            assert (tmp_path / f"small_{key}.{'json' if key == 'report' else 'csv'}").exists()
        head = (tmp_path / "small_envelope.csv").read_text().splitlines()[0]
        assert head == "t,envelope_value,clock_value"

    def test_deterministic_csv(self, tmp_path):
        run_experiment(small_config(), tmp_path / "a")
        run_experiment(small_config(), tmp_path / "b")
        for name in ("small_trace.csv", "small_envelope.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_backend_independent_trace(self, tmp_path):
        a = run_experiment(small_config(), tmp_path / "a", backend="numba")
        b = run_experiment(small_config(), tmp_path / "b", backend="numpy")
        ta = EnergyTrace.from_csv(a["artifacts"]["trace"])
        tb = EnergyTrace.from_csv(b["artifacts"]["trace"])
        np.testing.assert_allclose(ta.E, tb.E, rtol=1e-9, atol=1e-14 * ta.E0)

    def test_stage_failure_recorded(self):
        rep = run_experiment(small_config(run={"t_end": 1.0, "dt": 1.0}))
        assert rep["status"] == "failed" and rep["stage"] == "simulate" and rep["exit_code"] == 2

    def test_config_failure(self):
        rep = run_experiment(small_config(system={"model": "nope"}))
        assert rep["status"] == "failed" and rep["stage"] == "config" and rep["exit_code"] == 2

    def test_underdamping_stretched(self):
        cfg = small_config(feedback={"kind": "power_saturated", "gamma": 1, "p": 1},
                           alpha={"kind": "power_decay", "sigma": 0.5}, run={"t_end": 120.0, "dt": 0.02})
        rep = run_experiment(cfg)
        assert rep["predicted"]["model"] == "stretched"
        assert rep["fitted_free_sigma"] == pytest.approx(0.5, abs=0.05)

    def test_overdamping_power(self):
        cfg = small_config(feedback={"kind": "power_saturated", "gamma": 1, "p": 1},
                           alpha={"kind": "power_growth", "sigma": 1.0}, run={"t_end": 120.0, "dt": 0.02})
        rep = run_experiment(cfg)
        assert rep["predicted"]["model"] == "power" and rep["fitted"]["model"] == "power"
        assert rep["fitted"]["r"] > 0


class TestSweep:
    def test_empty(self, tmp_path):
        assert sweep([], tmp_path) == []
        rows = list(csv.reader(open(tmp_path / "summary.csv")))
        assert rows == [SUMMARY_COLUMNS]

    def test_failures_isolated(self, tmp_path):
        good = small_config(run={"t_end": 10.0, "dt": 0.02})
        bad = small_config(id="bad", run={"t_end": 1.0, "dt": 1.0})
        (tmp_path / "cfgs").mkdir()
        (tmp_path / "cfgs" / "a.json").write_text(json.dumps(good))
        (tmp_path / "cfgs" / "b.json").write_text(json.dumps(bad))
        (tmp_path / "cfgs" / "c.json").write_text("{not json")
        rows = sweep(load_configs(tmp_path / "cfgs"), tmp_path / "out")
        assert [r["status"] for r in rows] == ["ok", "failed", "failed"]
        assert len(list(csv.DictReader(open(tmp_path / "out" / "summary.csv")))) == 3

    def test_sigma_grid_underdamping(self, tmp_path):
        configs = [small_config(id=f"s{s}", feedback={"kind": "power_saturated", "gamma": 1, "p": 1},
                                alpha={"kind": "power_decay", "sigma": s}, run={"t_end": 150.0, "dt": 0.02})
                   for s in (0.25, 0.5, 0.75)]
        rows = sweep(configs, tmp_path, workers=2)
        for s, row in zip((0.25, 0.5, 0.75), rows):
            assert row["fitted_model"] == "stretched"
            assert float(row["fitted_exponent"]) == pytest.approx(1 - s, abs=0.06)
