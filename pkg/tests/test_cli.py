import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obsinfer import __version__
from obsinfer.cli import (
    ExperimentConfig,
    config_from_mapping,
    load_config,
    main,
    run_are_curve,
    run_info_hierarchy,
    run_interval_study,
    run_simulate,
    summarise,
)
from obsinfer.errors import ConfigError

SMALL_SIM = """
experiment = "simulate"
n = 50
replications = 40
seed = 99
estimators = ["mean", "median", "weak", {name = "sinusoidal", c = 0.5}]

[[models]]
family = "student"
nu = 3

[operator]
variant = "point"
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    lines = open(path).read().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    return header, body


class TestConfig:
    def test_defaults_and_estimators(self):
        cfg = config_from_mapping({"models": [{"family": "cauchy"}], "estimators": ["weak", "sinusoidal"], "u": 0.7, "c": 2.0}, "simulate")
        assert cfg.estimators[0] == {"name": "weak", "u": 0.7}
        assert cfg.estimators[1]["c"] == 2.0

    @pytest.mark.parametrize(
        "raw",
        [
            {"experiment": "simulate", "n": 1},
            {"experiment": "simulate", "replications": 0},
            {"experiment": "simulate", "estimators": [{"name": "weak", "u": -1.0}]},
            {"experiment": "simulate", "estimators": ["bogus"]},
            {"experiment": "nonsense"},
        ],
    )
    def test_invalid(self, raw):
        with pytest.raises(ConfigError):
            config_from_mapping(raw)

    def test_subcommand_conflict(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"experiment": "simulate"}, "are-curve")

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "n = = 3"), "simulate")

    def test_digest_ignores_workers_and_output(self):
        a = config_from_mapping({"experiment": "simulate", "workers": 1, "output_path": "a.csv"})
        b = config_from_mapping({"experiment": "simulate", "workers": 4, "output_path": "b.csv"})
        c = config_from_mapping({"experiment": "simulate", "seed": 5})
        assert a.digest() == b.digest() != c.digest()


class TestSummaries:
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=60), st.floats(-1, 1))
    def test_mse_identity(self, xs, truth):
        row = summarise("f", "e", xs, truth, [], 0)
        R = row.replications_used
        assert row.mse - (row.bias**2 + row.variance * (R - 1) / R) == pytest.approx(0.0, abs=1e-12 * max(1.0, row.mse))
        assert row.mad >= 0

    def test_mad_around_truth(self):
        row = summarise("f", "e", [1.0, 2.0, 10.0], 1.0, [], 0)
        assert row.mad == 1.0

    def test_empty(self):
        row = summarise("f", "e", [], 0.0, [], 3)
        assert row.replications_used == 0 and row.failures == 3 and math.isnan(row.variance)


class TestSimulate:
    def test_workers_bitwise_identical(self, tmp_path):
        cfg = write(tmp_path, SMALL_SIM)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--config", cfg, "--workers", "1", "--out", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--workers", "2", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write(tmp_path, SMALL_SIM)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--config", cfg, "--out", str(a)])
        main(["simulate", "--config", cfg, "--seed", "100", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()
        assert "seed=100" in b.read_text()

    def test_header_and_rows(self, tmp_path):
        cfg = write(tmp_path, SMALL_SIM)
        out = tmp_path / "o.csv"
        main(["simulate", "--config", cfg, "--out", str(out)])
        header, rows = read_csv(out)
        assert header[0] == f"# obsinfer {__version__}"
        assert "config_sha256=" in header[1] and "seed=99" in header[1]
        assert "variance divisor R-1" in header[2]
        assert [r["estimator"] for r in rows] == ["mean", "median", "weak(u=1)", "sinusoidal(c=0.5)"]
        for r in rows:
            R = int(r["replications_used"])
            bias, var, mse = float(r["bias"]), float(r["variance"]), float(r["mse"])
            assert R + int(r["failures"]) == 40
            assert abs(mse - (bias**2 + var * (R - 1) / R)) < 1e-12
        assert math.isnan(float(rows[1]["mean_sandwich_variance"]))

    def test_csv_format(self, tmp_path):
        cfg = write(tmp_path, SMALL_SIM)
        out = tmp_path / "o.csv"
        main(["simulate", "--config", cfg, "--out", str(out)])
        raw = out.read_bytes()
        assert b"\r\n" not in raw
        assert b";" not in raw.split(b"\n", 3)[3]

    def test_kernel_weighted_operator(self):
        cfg = config_from_mapping({
            "experiment": "simulate", "n": 200, "replications": 5, "seed": 1, "estimators": ["sinusoidal"],
            "models": [{"family": "gaussian"}], "operator": {"variant": "kernel_weighted", "sigma_phi": 2.0},
        })
        rows = run_simulate(cfg, 1)
        assert rows[0].replications_used + rows[0].failures == 5

    def test_env_workers(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OBSINFER_WORKERS", "2")
        cfg = config_from_mapping({"experiment": "simulate", "n": 30, "replications": 6, "estimators": ["median"],
                                   "models": [{"family": "cauchy"}]})
        assert [r.variance for r in run_simulate(cfg)] == [r.variance for r in run_simulate(cfg, 1)]


class TestIntervalStudy:
    def test_degenerate_grid_all_fail(self):
        # every draw lands in the lower open tail bin
        cfg = config_from_mapping({
            "experiment": "interval-study", "n": 50, "replications": 7, "seed": 3,
            "models": [{"family": "gaussian"}],
            "operator": {"grids": [{"left_edge": 50.0, "bin_width": 1.0, "n_bins": 2}]},
        })
        rows = run_interval_study(cfg, 1)
        assert len(rows) == 2
        assert all(r.failures == 7 and r.replications_used == 0 for r in rows)

    def test_reference_variance(self):
        cfg = config_from_mapping({
            "experiment": "interval-study", "n": 100, "replications": 3, "seed": 3,
            "models": [{"family": "gaussian"}], "operator": {"bin_widths": [1.0], "half_width": 6.0},
        })
        rows = run_interval_study(cfg, 1)
        assert 1 / 100 < rows[0].reference_variance < 1 / 90
        assert "width=1" in rows[0].family

    def test_missing_grids(self):
        cfg = config_from_mapping({"experiment": "interval-study", "models": [{"family": "gaussian"}]})
        with pytest.raises(ConfigError):
            run_interval_study(cfg, 1)


class TestInfoHierarchy:
    def test_gaussian_rows(self):
        cfg = config_from_mapping({
            "experiment": "info-hierarchy", "models": [{"family": "gaussian"}],
            "operator": {"kernels": ["classical"], "bin_widths": [2.0, 1.0, 0.5], "functionals": ["score"]},
        })
        rows = run_info_hierarchy(cfg, 1)
        assert rows[0]["I_classical"] == pytest.approx(1.0) and rows[0]["G"] == pytest.approx(1.0)
        io_vals = [r["I_O"] for r in rows[1:]]
        assert io_vals == sorted(io_vals) and io_vals[-1] < 1.0
        assert all(r["ok"] for r in rows)


class TestAreCurve:
    def test_gaussian_unit_u(self):
        cfg = config_from_mapping({"experiment": "are-curve", "models": [{"family": "gaussian"}], "c_grid": [0.5, 1.0, 2.0]})
        rows = run_are_curve(cfg, 1)
        grid = {r["c"]: r["ARE"] for r in rows if r["row"] == "grid"}
        assert grid[1.0] == pytest.approx(1 / math.sinh(1.0), abs=1e-12)

    def test_cauchy_argmax_note(self, tmp_path):
        cfg = write(tmp_path, 'experiment = "are-curve"\n[[models]]\nfamily = "cauchy"\n[c_grid]\nstart = 0.05\nstop = 3.0\nnum = 60\n')
        out = tmp_path / "a.csv"
        assert main(["are-curve", "--config", cfg, "--out", str(out)]) == 0
        _, rows = read_csv(out)
        arg = [r for r in rows if r["row"] == "argmax"]
        assert len(arg) == 1 and float(arg[0]["c"]) == pytest.approx(0.8)
        assert "0.56" in arg[0]["note"]


class TestEstimate:
    def test_prints_estimates(self, tmp_path, capsys):
        cfg = write(tmp_path, 'experiment = "estimate"\nn = 2000\nseed = 4\nestimators = ["weak", "median"]\n[[models]]\nfamily = "cauchy"\ntheta = 1.0\n')
        out = tmp_path / "e.csv"
        assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "weak(u=1):" in printed and "+/-" in printed

    def test_numerical_failure_exit(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text(f"0\n{math.pi}\n")
        cfg = write(tmp_path, f'experiment = "estimate"\ndata_path = "{data}"\nestimators = ["weak"]\n[[models]]\nfamily = "cauchy"\n')
        assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 3
        assert "DegenerateError" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        cfg = write(tmp_path, 'experiment = "estimate"\ndata_path = "/nonexistent/x.csv"\n[[models]]\nfamily = "cauchy"\n')
        assert main(["estimate", "--config", cfg]) == 2


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, 'experiment = "simulate"\nn = 1\n')
    assert main(["simulate", "--config", cfg]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2
