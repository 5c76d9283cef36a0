from __future__ import annotations

import json
import math

import numpy as np
import pytest

from decorrvi.errors import UnsupportedParameterError
from decorrvi.simlab import (
    CoverageReport,
    GeneratorConfig,
    StudyConfig,
    generate,
    mc_psi0,
    mc_psi_L,
    run_coverage,
    true_psi,
)

N = 10**5


def raw(example, delta=0.0, seed=0):
    return generate(GeneratorConfig(example, n=N, delta=delta, seed=seed, basis_expand=False))


def within_3se(samples: np.ndarray, expected: float) -> bool:
    se = samples.std() / math.sqrt(samples.shape[0])
    return abs(samples.mean() - expected) <= 3 * se


class TestGenerators:
    def test_independent_at_delta_zero(self):
        d = raw(1)
        assert abs(np.corrcoef(d.x_block[:, 0], d.z_block[:, 0])[0, 1]) < 0.01

    def test_delta_three_correlation(self):
        d = raw(1, 3.0)
        assert np.corrcoef(d.x_block[:, 0], d.z_block[:, 0])[0, 1] == pytest.approx(3 / math.sqrt(10), abs=0.01)

    def test_example4_ranges(self):
        d = raw(4)
        assert np.all(np.abs(d.x_block) <= 1) and np.all(np.abs(d.z_block) <= 1)

    # closed-form (Var Y, Cov(X_1, Z_1)) per example
    @pytest.mark.parametrize("example,delta,var_y,cov_xz", [
        (1, 0.0, 5.0, 0.0), (1, 2.0, 5.0, 2.0), (2, 0.0, 61.0, 1.0), (3, 0.0, 101.0, 2.0),
        (4, 0.0, 1 / 7 + 1.96 / 5 - (1.4 / 3) ** 2 + (625 / 81) * (4 / 45) + 1, 0.0),
        (5, 0.0, 19.16, 1.0)])
    def test_second_moments(self, example, delta, var_y, cov_xz):
        d = raw(example, delta, seed=example)
        y, x, z = d.y, d.x_block[:, 0], d.z_block[:, 0]
        assert within_3se((y - y.mean()) ** 2, var_y)
        assert within_3se((x - x.mean()) * (z - z.mean()), cov_xz)

    def test_defaults_and_expansion(self):
        cfg = GeneratorConfig(2)
        assert cfg.n == 10_000 and cfg.h == 5 and cfg.expands
        d = generate(GeneratorConfig(2, n=500))
        assert d.g == 3 and d.h == 5
        assert generate(GeneratorConfig(3, n=50)).g == 2

    def test_seeded(self):
        a, b = generate(GeneratorConfig(5, n=100, seed=4)), generate(GeneratorConfig(5, n=100, seed=4))
        np.testing.assert_array_equal(a.y, b.y)

    def test_bad_example(self):
        with pytest.raises(ValueError):
            GeneratorConfig(6)


class TestOracle:
    @pytest.mark.parametrize("example,value", [(1, 4.0), (2, 60.0), (3, 100.0), (5, 9.16)])
    def test_closed_forms(self, example, value):
        assert true_psi(example, "psi_0") == pytest.approx(value, rel=1e-12)

    def test_example4_value(self):
        assert true_psi(4, "psi_0") == pytest.approx(0.31708, abs=1e-5)
        assert true_psi(4, "psi_L") == true_psi(4, "psi_0")

    @pytest.mark.parametrize("delta", [0.0, 0.5, 1.0, 2.0, 3.0])
    def test_example1_loco(self, delta):
        assert true_psi(1, "psi_L", delta) == pytest.approx(4 / (1 + delta**2))

    def test_monte_carlo_small(self):
        # a cheap version of the 10^6-draw agreement check
        assert mc_psi0(5, draws=2**16) == pytest.approx(true_psi(5, "psi_0"), rel=0.02)
        assert mc_psi_L(1, 2.0, draws=2**16) == pytest.approx(0.8, rel=0.02)
        assert mc_psi_L(3, draws=2**16) == pytest.approx(36.0, rel=0.02)

    def test_undefined(self):
        with pytest.raises(UnsupportedParameterError):
            true_psi(2, "psi_L")
        with pytest.raises(UnsupportedParameterError):
            true_psi(7, "psi_0")


class TestCoverage:
    SMALL = StudyConfig(examples=(1,), parameters=("psi_L", "psi_2"), n=300, replicates=4, deltas=(0.0, 3.0))

    def test_rows_and_ranges(self):
        rep = run_coverage(self.SMALL, seed=1, workers=1)
        assert len(rep.rows) == 4
        for row in rep.rows:
            assert 0 <= row["coverage"] <= 1 and row["replicates"] == 4
            assert row["true_value"] == 4.0
        assert rep.row(1, "linear", "psi_2", 3.0)["parameter"] == "psi_2"

    def test_deterministic_and_schedule_free(self):
        a = run_coverage(self.SMALL, seed=2, workers=1)
        b = run_coverage(self.SMALL, seed=2, workers=2)
        assert a.to_json() == b.to_json()
        assert a.replicate_csv() == b.replicate_csv() and a.plot_csv() == b.plot_csv()

    def test_outputs(self, tmp_path):
        rep = run_coverage(self.SMALL, seed=0, workers=1)
        paths = rep.write(tmp_path)
        assert set(paths) >= {"report", "replicates", "plot_data"}
        header = (tmp_path / "plot_data.csv").read_text().splitlines()[0]
        assert header == "example,nuisance,parameter,delta,ci_low_mean,ci_high_mean,coverage"
        assert len((tmp_path / "replicates.csv").read_text().splitlines()) == 1 + 16
        assert json.loads((tmp_path / "report.json").read_text())["config"]["n"] == 300

    def test_empty_study(self):
        rep = run_coverage(StudyConfig(parameters=(), replicates=1), seed=0, workers=1)
        assert rep.rows == []

    def test_own_target(self):
        cfg = StudyConfig(examples=(1,), parameters=("psi_L",), n=200, replicates=2, deltas=(2.0,), target="own")
        assert run_coverage(cfg, workers=1).rows[0]["true_value"] == pytest.approx(0.8)

    def test_failures_recorded(self):
        # rho_0 needs scalar X and example 2 is basis-expanded, so every replicate fails
        cfg = StudyConfig(examples=(2,), parameters=("rho_0", "psi_2"), n=200, replicates=2)
        rep = run_coverage(cfg, workers=1)
        bad, good = rep.row(2, "linear", "rho_0"), rep.row(2, "linear", "psi_2")
        assert bad["failed"] == 2 and bad["failed_cell"] and math.isnan(bad["coverage"])
        assert good["failed"] == 0 and not good["failed_cell"]
        assert "UnsupportedParameterError" in rep.replicate_csv()

    def test_unknown_truth_rejected(self):
        cfg = StudyConfig(examples=(2,), parameters=("psi_L",), n=200, replicates=2, target="own")
        with pytest.raises(UnsupportedParameterError):
            run_coverage(cfg, workers=1)

    def test_config_roundtrip(self):
        cfg = StudyConfig(examples=(3,), families=("additive",), replicates=7)
        assert StudyConfig.from_json(json.dumps(cfg.to_dict())) == cfg
        with pytest.raises(ValueError):
            StudyConfig.from_dict({"bogus": 1})

    def test_report_type(self):
        assert isinstance(run_coverage(StudyConfig(parameters=(), replicates=1), workers=1), CoverageReport)
