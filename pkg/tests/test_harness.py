import hashlib
import json

import numpy as np
import pytest

from beamlab.errors import InvalidTrajectoryError
from beamlab.harness import (
    ExperimentConfig,
    config_from_doc,
    config_to_doc,
    emit_report,
    load_config,
    over_optimism_experiment_config,
    run_experiment,
    save_config,
    train_run,
    value_gap_series,
)
import beamlab.harness as harness
from beamlab.mdp import Trajectory
from beamlab.model import InitSpec, LogitModel, init_model
from beamlab.objectives import TrainConfig
from beamlab.oracle import optimal_policy, soft_q_backward
from beamlab.tasks import generate_task

GAUSS = InitSpec("gaussian", 2.0, 0)


def tiny_config(**kwargs):
    defaults = dict(
        family="branchy-trap",
        params={"depth": 4, "vocab_size": 3, "branches": 1},
        seeds=(0, 1, 2),
        train=(
            TrainConfig(0.0, 0.5, 12, GAUSS),
            TrainConfig(0.2, 0.5, 12, GAUSS),
        ),
        widths=(1, 2),
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class TestValueGapSeries:
    def test_constant_logits_have_zero_gaps(self):
        mdp, demos = generate_task("single-path", 0, {"depth": 4, "vocab_size": 3})
        gaps = value_gap_series(init_model(mdp, "zeros"), demos.trajectories[0])
        assert gaps == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)

    def test_matches_oracle_table(self):
        mdp, demos = generate_task("single-path", 1, {"depth": 3, "vocab_size": 2})
        table = soft_q_backward(mdp)
        model = optimal_policy(table, mdp)
        traj = demos.trajectories[0]
        gaps = value_gap_series(model, traj)
        keys = [c.tokens for c in traj.contexts if not mdp.is_terminal(c)]
        expected = [abs(table.v[keys[t]] - table.v[keys[t + 1]]) for t in range(len(keys) - 1)]
        assert gaps == pytest.approx(expected, abs=1e-10)

    def test_invalid_trajectory_rejected(self):
        mdp, demos = generate_task("single-path", 0, {"depth": 3, "vocab_size": 2})
        traj = demos.trajectories[0]
        bad = Trajectory(traj.contexts, traj.actions, 0)
        with pytest.raises(InvalidTrajectoryError):
            value_gap_series(init_model(mdp, "zeros"), bad)


class TestTrainRun:
    def test_logs_every_epoch_plus_init(self):
        mdp, demos = generate_task("single-path", 0, {"depth": 3, "vocab_size": 2})
        model = LogitModel(mdp, GAUSS)
        trained, log = train_run(model, demos, TrainConfig(0.2, 0.5, 7, GAUSS))
        assert [e.epoch for e in log] == list(range(8))
        assert log[-1].sft < log[0].sft
        for e in log:
            assert e.overall == pytest.approx(e.sft + 0.2 * e.v, abs=1e-12)
            assert e.mean_soft_value_supervised == pytest.approx(-e.v, abs=1e-12)


class TestRunExperiment:
    def test_row_layout_and_width1_equals_greedy(self):
        report = run_experiment(tiny_config())
        assert len(report.rows) == 3 * 2 * 2  # seeds x variants x widths
        for row in report.rows:
            if row.width == 1:
                assert row.beam_accuracy == row.greedy_accuracy

    def test_unsupervised_error_untouched_by_plain_training(self):
        report = run_experiment(tiny_config())
        for row in report.rows:
            if row.v_weight == 0.0:
                assert row.est_err_unsupervised == row.est_err_unsupervised_init

    def test_aggregates_equal_recomputation(self):
        report = run_experiment(tiny_config())
        for agg in report.aggregates():
            group = [
                r
                for r in report.rows
                if (r.v_weight, r.width) == (agg["v_weight"], agg["width"])
            ]
            assert agg["n_seeds"] == 3
            assert agg["mean_beam_accuracy"] == pytest.approx(
                float(np.mean([r.beam_accuracy for r in group])), abs=1e-12
            )
            assert agg["mean_value_gap"] == pytest.approx(
                float(np.mean([r.value_gap for r in group])), abs=1e-12
            )

    def test_deterministic_bytes_and_worker_independence(self, tmp_path):
        digests = []
        for i, workers in enumerate((1, 2, 1)):
            out = tmp_path / f"run{i}"
            emit_report(run_experiment(tiny_config(), workers=workers), out)
            digests.append(hashlib.sha256((out / "rows.csv").read_bytes()).hexdigest())
        assert digests[0] == digests[1] == digests[2]

    def test_golden_digest(self, tmp_path):
        # Frozen on the first verified run of this fixed config.
        emit_report(run_experiment(tiny_config()), tmp_path)
        digest = hashlib.sha256((tmp_path / "rows.csv").read_bytes()).hexdigest()
        assert digest == "4ee2c8e27d1350f763376d535765d79727ecf492048dd6a8dceb9f211309fa82"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            tiny_config(seeds=())
        with pytest.raises(ValueError):
            tiny_config(widths=(0,))
        with pytest.raises(ValueError):
            tiny_config(train=())
        with pytest.raises(ValueError):
            tiny_config(seeds=(-1,))

    def test_failure_flushes_partial_rows_and_marker(self, tmp_path, monkeypatch):
        real = harness._run_seed

        def boom(cfg, seed):
            if seed == 2:
                raise RuntimeError("synthetic failure")
            return real(cfg, seed)

        monkeypatch.setattr(harness, "_run_seed", boom)
        with pytest.raises(RuntimeError):
            harness.run_experiment(tiny_config(), out_dir=tmp_path)
        marker = json.loads((tmp_path / "failure.json").read_text())
        assert "synthetic failure" in marker["error"]
        rows = (tmp_path / "rows.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2 * 2  # header + two completed seeds


class TestEmitReport:
    def test_files_written(self, tmp_path):
        report = run_experiment(tiny_config())
        paths = emit_report(report, tmp_path)
        assert paths["rows"].exists()
        assert paths["summary"].exists()
        assert paths["training_log"].exists()
        summary = json.loads(paths["summary"].read_text())
        assert summary["config"] == report.config
        assert len(summary["aggregates"]) == 4

    def test_training_log_shape(self, tmp_path):
        report = run_experiment(tiny_config())
        emit_report(report, tmp_path)
        lines = (tmp_path / "training_log.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["seed", "v_weight", "epoch"]
        assert "mean_soft_value_supervised" in header
        # 3 seeds x 2 variants x (12 epochs + init row)
        assert len(lines) == 1 + 3 * 2 * 13


class TestConfigSerialization:
    def test_roundtrip(self, tmp_path):
        cfg = tiny_config()
        path = tmp_path / "cfg.json"
        save_config(path, cfg)
        loaded = load_config(path)
        assert config_to_doc(loaded) == config_to_doc(cfg)

    def test_defaults_fill_in(self):
        doc = {
            "family": "single-path",
            "params": {"depth": 3},
            "seeds": [0],
            "train": [{"v_weight": 0.1}],
        }
        cfg = config_from_doc(doc)
        assert cfg.widths == (1, 2, 5, 10)
        assert cfg.train[0].epochs == 100


class TestValueGapTrend:
    @pytest.mark.xfail(
        strict=True,
        reason=(
            "With one independent logit row per state, the value-boost raises all "
            "supervised values at asymptotically equal rates, so adjacent-state "
            "gaps keep their init-driven spread; the >=90% shrink fraction is not "
            "reached (measured ~0.35 at the calibrated regime)."
        ),
    )
    def test_gap_shrinks_in_ninety_percent_of_seeds(self):
        cfg = over_optimism_experiment_config(n_seeds=20, v_weights=(0.2,), widths=(5,))
        report = run_experiment(cfg)
        shrunk = [r.value_gap <= r.value_gap_init for r in report.rows]
        assert float(np.mean(shrunk)) >= 0.9
