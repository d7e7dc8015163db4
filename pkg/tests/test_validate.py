import json
import os

import numpy as np
import pytest

from metaswarm import validate
from metaswarm.validate import (
    DEFAULT_CONFIG,
    EXPERIMENTS,
    _merge,
    _metastability_grid,
    particle_equilibration_experiment,
    worker_count,
)


class TestHelpers:
    def test_merge_is_deep_and_nondestructive(self):
        defaults = {"a": 1, "nested": {"x": 1.0, "y": 2.0}}
        merged = _merge(defaults, {"nested": {"y": 5.0}})
        assert merged == {"a": 1, "nested": {"x": 1.0, "y": 5.0}}
        assert defaults["nested"]["y"] == 2.0

    def test_merge_none_override(self):
        defaults = {"a": 1}
        assert _merge(defaults, None) == defaults

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("METASWARM_THREADS", "4")
        assert worker_count() == 4
        monkeypatch.setenv("METASWARM_THREADS", "not a number")
        assert worker_count() == 1
        monkeypatch.setenv("METASWARM_THREADS", "-2")
        assert worker_count() == 1

    def test_metastability_grid_resolution(self):
        eps = float(np.sqrt(0.001))
        grid = _metastability_grid([0.0, 4.0], eps, 8)
        assert grid.dx <= eps / 8.0
        assert grid.x_left == 0.0
        assert grid.x_right == 4.0

    def test_experiment_registry(self):
        assert list(EXPERIMENTS) == ["gaussian", "quasisteady",
                                     "metastability",
                                     "particle_equilibration"]
        assert set(EXPERIMENTS) == set(DEFAULT_CONFIG)


class TestParticleEquilibration:
    SHORT = {"t_end": 20.0, "record_stride": 200}

    def test_report_structure_and_artifacts(self, tmp_path):
        rep = particle_equilibration_experiment(
            seed=0, config=self.SHORT, output_dir=str(tmp_path))
        assert rep.name == "particle_equilibration"
        for key in ("initial_M1", "initial_M2", "initial_window_d",
                    "final_window_d", "control_constant"):
            assert key in rep.metrics
        # the 80/120 start splits as (0.4, 0.6)
        assert rep.metrics["initial_M1"] == pytest.approx(0.4)
        assert rep.metrics["initial_M2"] == pytest.approx(0.6)
        assert rep.metrics["control_constant"] == 1.0
        for path in rep.artifacts:
            assert os.path.exists(path)
        payload = json.load(open(
            os.path.join(tmp_path, "particle_equilibration_report.json")))
        assert payload["name"] == "particle_equilibration"

    def test_reproducible_from_seed(self):
        a = particle_equilibration_experiment(seed=1, config=self.SHORT)
        b = particle_equilibration_experiment(seed=1, config=self.SHORT)
        assert a.metrics == b.metrics

    def test_seed_changes_windows(self):
        a = particle_equilibration_experiment(seed=1, config=self.SHORT)
        b = particle_equilibration_experiment(seed=2, config=self.SHORT)
        assert a.metrics["final_window_d"] != b.metrics["final_window_d"]


class TestConfigEcho:
    def test_gaussian_defaults_carry_tolerances(self):
        cfg = DEFAULT_CONFIG["gaussian"]
        assert cfg["pde_linf_tol"] == 0.02
        assert cfg["particle_l1_tol"] == 0.1
        assert cfg["residual_tol"] == 1e-8

    def test_metastability_defaults(self):
        cfg = DEFAULT_CONFIG["metastability"]
        assert cfg["eps2_list"] == [0.002, 0.001, 0.0008]
        assert cfg["masses"] == [0.35, 0.65]
        assert cfg["d_window"] == [0.1, 0.25]
        assert cfg["slope_dev_factor"] == 5.0
        assert cfg["ratio_range"] == [1.5, 2.7]
