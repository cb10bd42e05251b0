"""Experiment driver plumbing and the allocation-accounting hook."""

import numpy as np
import pytest

from cpwopt import SparseSamples, accounting
from cpwopt.bench import (
    ExperimentSpec,
    cumulative_best_fms,
    format_report,
    instance_seed,
    run_bench,
    run_instance,
)
from cpwopt.datagen import make_instance


class TestSeeds:
    def test_deterministic_and_distinct(self):
        a = instance_seed(0, 0, 1, 2)
        assert a == instance_seed(0, 0, 1, 2)
        assert a != instance_seed(0, 0, 1, 3)
        assert a != instance_seed(0, 0, 2, 2)
        assert a != instance_seed(1, 0, 1, 2)


class TestCumulativeBest:
    def test_tracks_lowest_objective(self):
        recs = [
            {"start": 0, "usable": True, "f": 2.0, "fms": 0.5},
            {"start": 1, "usable": True, "f": 1.0, "fms": 0.9},
            {"start": 2, "usable": True, "f": 1.5, "fms": 0.2},
        ]
        assert cumulative_best_fms(recs, 3) == [0.5, 0.9, 0.9]

    def test_skips_unusable(self):
        recs = [
            {"start": 0, "usable": False, "f": 0.1, "fms": 0.99},
            {"start": 1, "usable": True, "f": 5.0, "fms": 0.4},
        ]
        series = cumulative_best_fms(recs, 2)
        assert np.isnan(series[0])
        assert series[1] == 0.4


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentSpec(sizes=[], rank=2, missing=[0.5])
        with pytest.raises(ValueError):
            ExperimentSpec(sizes=[(4, 4, 4)], rank=2, missing=[0.5],
                           methods=("nope",))
        with pytest.raises(ValueError):
            ExperimentSpec(sizes=[(4, 4, 4)], rank=2, missing=[0.5],
                           sparse=True, methods=("em-als",))


class TestRun:
    def test_shared_starts_and_records(self):
        inst = make_instance((8, 7, 6), 2, 0.3, 0.05, seed=11)
        recs = run_instance(inst, ("cpwopt-dense", "em-als"), 2, seed=11)
        assert len(recs) == 4
        by_method = {m: [r for r in recs if r["method"] == m]
                     for m in ("cpwopt-dense", "em-als")}
        for rows in by_method.values():
            assert [r["init"] for r in rows] == ["nvecs", "random"]
            assert all(0 <= r["fms"] <= 1 for r in rows)

    def test_run_bench_report_shape(self):
        spec = ExperimentSpec(
            sizes=[(6, 5, 4)], rank=2, missing=[0.2, 0.4], noise=0.05,
            instances=2, starts=2, methods=("cpwopt-dense",), seed=3,
        )
        report = run_bench(spec)
        assert len(report["cells"]) == 2
        table = format_report(report)
        assert "median FMS" in table
        assert "6x5x4" in table


class TestAccounting:
    def test_notes_only_inside_tracker(self):
        accounting.note_scratch(10**9)  # no-op outside a tracking block
        with accounting.track() as log:
            accounting.note_scratch(100)
            accounting.note_scratch(40)
            accounting.note_dense(7)
        assert log.peak_scratch_elems >= 100
        assert log.dense_allocations == [7]

    def test_sparse_objective_reports_no_dense(self):
        from cpwopt import SparseObjective

        rng = np.random.default_rng(0)
        shape = (6, 5, 4)
        keep = rng.random(shape) < 0.3
        keep.flat[0] = True
        idx = np.stack(np.nonzero(keep), axis=1).astype(np.int64)
        s = SparseSamples.from_coords(shape, idx, rng.standard_normal(idx.shape[0]))
        obj = SparseObjective(s, 2)
        vec = rng.standard_normal(sum(shape) * 2)
        with accounting.track() as log:
            obj.value_grad_vec(vec)
        assert log.dense_allocations == []
        assert log.peak_scratch_elems > 0
