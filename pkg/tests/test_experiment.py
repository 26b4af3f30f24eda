import numpy as np

from mblbfgs import StepSchedule, constant
from mblbfgs.experiment import (
    CSV_HEADER,
    ExperimentSpec,
    cell_filename,
    run_experiment,
)


def small_spec(out_dir, **overrides):
    base = dict(
        synthetic=(120, 8, 4, 0.5), data_seed=3, objective="logistic_l2",
        mode="strategy1", methods=["robust_lbfgs"], batch_fracs=[0.1],
        overlap_fracs=[0.2], schedules=[constant(0.2)], seeds=[0, 1],
        epochs=2.0, out_dir=str(out_dir),
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestGrid:
    def test_two_seeds_two_csvs_plus_manifest(self, tmp_path):
        result = run_experiment(small_spec(tmp_path / "out"))
        assert len(result.csv_paths) == 2
        assert result.manifest_path.exists()
        names = [p.name for p in result.csv_paths]
        assert names == [
            "robust_lbfgs_r0.1_o0.2_a0.2_p0_s0.csv",
            "robust_lbfgs_r0.1_o0.2_a0.2_p0_s1.csv",
        ]

    def test_figure_grid_shape(self, tmp_path):
        # 2 alphas x 3 batch fractions, o = 20%: six files per method
        spec = small_spec(
            tmp_path / "out",
            methods=["robust_lbfgs", "multibatch_gd"],
            batch_fracs=[0.05, 0.1, 0.2],
            schedules=[constant(1.0), constant(0.1)],
            seeds=[0],
            epochs=1.0,
        )
        result = run_experiment(spec)
        per_method = {}
        for p in result.csv_paths:
            per_method.setdefault(p.name.split("_r")[0], []).append(p)
        assert {k: len(v) for k, v in per_method.items()} == {
            "robust_lbfgs": 6, "multibatch_gd": 6}

    def test_manifest_covers_grid(self, tmp_path):
        spec = small_spec(tmp_path / "out", seeds=[4, 5, 6])
        result = run_experiment(spec)
        lines = result.manifest_path.read_text().strip().splitlines()
        assert lines[0].startswith("# mblbfgs-v")
        assert lines[1] == "filename,method,mode,r,o,alpha,p,seed,status"
        assert len(lines) == 2 + 3
        for line, cfg in zip(lines[2:], spec.cells()):
            assert line.startswith(cell_filename(cfg))
            assert line.endswith(",ok")


class TestCsvContract:
    def test_header_and_finiteness(self, tmp_path):
        result = run_experiment(small_spec(tmp_path / "out"))
        text = result.csv_paths[0].read_text().splitlines()
        assert text[0] == CSV_HEADER
        rows = np.array([line.split(",") for line in text[1:]], dtype=np.float64)
        assert rows.shape[1] == 10
        assert np.all(np.isfinite(rows))
        epochs = rows[:, 1]
        assert np.all(np.diff(epochs) >= 0)
        ks = rows[:, 0]
        assert np.array_equal(ks, np.arange(rows.shape[0]))

    def test_rerun_byte_identical(self, tmp_path):
        r1 = run_experiment(small_spec(tmp_path / "a"))
        r2 = run_experiment(small_spec(tmp_path / "b"))
        for p1, p2 in zip(r1.csv_paths, r2.csv_paths):
            assert p1.read_bytes() == p2.read_bytes()
        assert r1.manifest_path.read_bytes() == r2.manifest_path.read_bytes()

    def test_aborted_cell_recorded_and_others_continue(self, tmp_path):
        spec = small_spec(
            tmp_path / "out", objective="quadratic",
            schedules=[constant(50.0), constant(0.2)], seeds=[0],
            mode="strategy2", batch_fracs=[1.0], epochs=50.0,
        )
        result = run_experiment(spec)
        statuses = dict(result.statuses)
        assert len(statuses) == 2
        assert any(s.startswith("aborted") for s in statuses.values())
        assert any(s == "ok" for s in statuses.values())
        assert result.aborted_cells >= 1
        for p in result.csv_paths:
            assert p.exists() and p.stat().st_size > 0

    def test_env_var_overrides_out_dir(self, tmp_path, monkeypatch):
        override = tmp_path / "env_out"
        monkeypatch.setenv("MBLBFGS_OUT", str(override))
        result = run_experiment(small_spec(tmp_path / "ignored"))
        assert result.out_dir == override
        assert all(p.parent == override for p in result.csv_paths)


class TestNaming:
    def test_schedule_labels(self, tmp_path):
        spec = small_spec(
            tmp_path / "out",
            schedules=[StepSchedule("diminishing", 0.5),
                       StepSchedule("sqrt_horizon", 2.0, 100)],
            seeds=[0], epochs=0.5,
        )
        result = run_experiment(spec)
        names = sorted(p.name for p in result.csv_paths)
        assert names == [
            "robust_lbfgs_r0.1_o0.2_adim0.5_p0_s0.csv",
            "robust_lbfgs_r0.1_o0.2_asqrt2-100_p0_s0.csv",
        ]

    def test_fault_grid_includes_p(self, tmp_path):
        spec = small_spec(tmp_path / "out", mode="fault",
                          fail_probs=[0.1, 0.4], seeds=[0], epochs=1.0,
                          batch_fracs=[0.1])
        spec.nodes = 4
        result = run_experiment(spec)
        names = sorted(p.name for p in result.csv_paths)
        assert names == [
            "robust_lbfgs_r0.1_o0.2_a0.2_p0.1_s0.csv",
            "robust_lbfgs_r0.1_o0.2_a0.2_p0.4_s0.csv",
        ]
