"""Unit tests for pipeline.py."""

import json

import numpy as np
import pandas as pd
import pytest


def _config(**overrides):
    data = {
        "output_dir": "out",
        "seeds": [0],
        "bands": [12],
        "rig": {"preset": "uniform", "count": 12},
        "scenes": [
            {
                "name": "ball",
                "material": "green_plastic",
                "shape": {"type": "sphere", "resolution": 32},
            }
        ],
        "estimator": {"method": "factorize"},
        "solver": {"method": "robust"},
        "ablation": True,
        "integrate": True,
    }
    data.update(overrides)
    return data


def _scenes(*scenes):
    return {"scenes": [{"name": "x", "material": "gray_plastic", **scene} for scene in scenes]}


def _write(tmp_path, data, name="experiment.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestValidateConfig:
    """Tests for validate_config and load_config functions."""

    def test_valid_config(self, tmp_path):
        """Test a complete config resolves its rig, scenes and methods."""
        from pipeline import load_config

        cfg = load_config(_write(tmp_path, _config()))

        assert cfg.output_dir == tmp_path / "out"
        assert cfg.rig.count == 12
        assert cfg.scenes[0].name == "ball"
        assert cfg.scenes[0].jitter_range == (0.1, 1.0)
        assert cfg.estimator == "factorize"
        assert cfg.solver == "robust"

    @pytest.mark.parametrize(
        ("overrides", "field"),
        [
            ({"colour": "red"}, "colour"),
            ({"output_dir": ""}, "output_dir"),
            ({"seeds": [0, -1]}, "seeds[1]"),
            ({"bands": [13]}, "bands[0]"),
            ({"scenes": []}, "scenes"),
            (_scenes({"material": "velvet"}), "scenes[0].material"),
            (_scenes({"noise_sigma": -1}), "scenes[0].noise_sigma"),
            (_scenes({"jitter_range": [0, 1]}), "scenes[0].jitter_range"),
            (_scenes({"shape": {"type": "cube"}}), "scenes[0].shape"),
            (_scenes({}, {"material": "blue_paper"}), "scenes[1].name"),
            (_scenes({"name": ""}), "scenes[0].name"),
            ({"estimator": {"method": "guess"}}, "estimator.method"),
            ({"estimator": {"method": "factorize", "opts": {"max_iters": 2.5}}}, "estimator.opts.max_iters"),
            ({"solver": {"method": "robust", "opts": {"max_iters": 3}}}, "solver.opts.max_iters"),
            ({"rig": "missing_rig.json"}, "rig"),
            ({"ablation": "yes"}, "ablation"),
        ],
    )
    def test_invalid_field_is_named(self, tmp_path, overrides, field):
        """Test schema violations raise ConfigError naming the offending field."""
        from pipeline import ConfigError, load_config

        with pytest.raises(ConfigError) as exc_info:
            load_config(_write(tmp_path, _config(**overrides)))

        assert exc_info.value.field == field

    def test_invalid_json(self, tmp_path):
        """Test unparsable files are reported at the root."""
        from pipeline import ConfigError, load_config

        path = tmp_path / "broken.json"
        path.write_text("{ not json")

        with pytest.raises(ConfigError) as exc_info:
            load_config(path)

        assert exc_info.value.field == "<root>"

    def test_missing_file(self, tmp_path):
        """Test a missing config file raises FileNotFoundError."""
        from pipeline import load_config

        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.json")


class TestRunPipeline:
    """Tests for run_pipeline and run_single functions."""

    def test_writes_outputs(self, tmp_path):
        """Test one run writes its estimate, normals, depth and the report files."""
        from pipeline import REPORT_COLUMNS, load_config, run_pipeline

        cfg = load_config(_write(tmp_path, _config()))

        report = run_pipeline(cfg, quiet=True)

        run_dir = tmp_path / "out" / "ball_t12_s0"
        for name in ("est.json", "normals.pfm", "normals_ones.pfm", "depth.pfm", "stack/meta.json"):
            assert (run_dir / name).exists(), name
        written = pd.read_csv(tmp_path / "out" / "report.csv")
        assert list(written.columns) == REPORT_COLUMNS
        assert len(report) == 1
        assert 0 < written["coverage"][0] <= 1
        summary = pd.read_csv(tmp_path / "out" / "summary.csv")
        assert summary["runs"].tolist() == [1]

    def test_deterministic_across_threads(self, tmp_path):
        """Test the report is byte-identical for 1 and 3 worker threads."""
        from pipeline import load_config, run_pipeline

        first = load_config(_write(tmp_path, _config(output_dir="one"), "one.json"))
        second = load_config(_write(tmp_path, _config(output_dir="three"), "three.json"))

        run_pipeline(first, threads=1, quiet=True)
        run_pipeline(second, threads=3, quiet=True)

        for name in ("report.csv", "ball_t12_s0/normals.pfm", "ball_t12_s0/est.json"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "three" / name).read_bytes(), name

    def test_estimated_intensities_beat_ablation(self, tmp_path):
        """Test normalizing by estimated intensities beats assuming equal lights on every seed."""
        from pipeline import load_config, run_pipeline

        cfg = load_config(_write(tmp_path, _config(seeds=[0, 1, 2, 3, 4])))

        report = run_pipeline(cfg, quiet=True)

        assert len(report) == 5
        assert np.all(report["mae_deg"] < report["mae_deg_ones"])

    def test_oracle_matches_ground_truth(self, tmp_path):
        """Test the oracle estimator reproduces the stored ground-truth intensities."""
        from pipeline import load_config, run_pipeline

        cfg = load_config(_write(tmp_path, _config(estimator={"method": "oracle"}, ablation=False)))

        report = run_pipeline(cfg, quiet=True)

        assert report["intensity_l2"][0] < 1e-20
        assert np.isnan(report["mae_deg_ones"][0])

    def test_failing_stage_is_named(self, tmp_path, mocker):
        """Test an estimator failure surfaces as a StageError for the estimate stage."""
        from intensity import UnderConstrainedError
        from pipeline import StageError, load_config, run_pipeline

        mocker.patch("pipeline.estimate_factorize", side_effect=UnderConstrainedError("too dark"))
        cfg = load_config(_write(tmp_path, _config()))

        with pytest.raises(StageError) as exc_info:
            run_pipeline(cfg, quiet=True)

        assert exc_info.value.stage == "estimate"
        assert "too dark" in str(exc_info.value)

    def test_non_convergence_uses_last_iterate(self, tmp_path, mocker):
        """Test a diverged estimate is logged and its last iterate is used."""
        from intensity import IntensityEstimate, NonConvergenceError
        from pipeline import load_config, run_pipeline
        from render import EquivalentIntensities

        last = IntensityEstimate(EquivalentIntensities(np.ones(12)), "factorize", 3, 0.5)
        mocker.patch("pipeline.estimate_factorize", side_effect=NonConvergenceError("diverged", last))
        cfg = load_config(_write(tmp_path, _config(ablation=False, integrate=False)))

        report = run_pipeline(cfg, quiet=True)

        estimate = json.loads((tmp_path / "out" / "ball_t12_s0" / "est.json").read_text())
        assert estimate["iterations"] == 3
        assert report["integration_dropped"][0] == 0
        assert not (tmp_path / "out" / "ball_t12_s0" / "depth.pfm").exists()
