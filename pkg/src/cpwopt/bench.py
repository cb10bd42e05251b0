"""Experiment sweep driver: generate, fit with shared starts, score, aggregate."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .baselines import EmAlsConfig, em_als_fit
from .core import SparseSamples
from .datagen import ProblemInstance, gen_large_sparse, make_instance
from .evaluation import fms
from .objective import FitConfig, StartRecord, fit_cpwopt, make_starts
from .optimize import OptConfig

METHODS = ("cpwopt-dense", "cpwopt-sparse", "em-als")


@dataclass
class ExperimentSpec:
    sizes: list[tuple[int, ...]]
    rank: int
    missing: list[float]
    pattern: str = "entries"
    noise: float = 0.1
    instances: int = 30
    starts: int = 5
    methods: tuple[str, ...] = ("cpwopt-dense", "em-als")
    seed: int = 0
    sparse: bool = False
    opt: OptConfig = field(default_factory=OptConfig)

    def __post_init__(self):
        if not self.sizes or not self.missing:
            raise ValueError("sizes and missing lists must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.sparse and any(m != "cpwopt-sparse" for m in self.methods):
            raise ValueError("sparse-only generation supports only cpwopt-sparse")


def instance_seed(base: int, size_idx: int, m_idx: int, inst_idx: int) -> int:
    seq = np.random.SeedSequence([int(base), size_idx, m_idx, inst_idx])
    return int(seq.generate_state(1)[0])


def _sparse_view(instance: ProblemInstance) -> SparseSamples:
    if instance.is_sparse:
        return instance.observed
    x, w = instance.observed
    known = w.reshape(-1, order="F") > 0
    lin = np.nonzero(known)[0]
    indices = np.stack(np.unravel_index(lin, instance.shape, order="F"), axis=1)
    return SparseSamples(instance.shape, indices, x.reshape(-1, order="F")[lin])


def run_instance(
    instance: ProblemInstance,
    methods: tuple[str, ...],
    starts: int,
    seed: int,
    opt: OptConfig | None = None,
) -> list[dict]:
    """Fit every method from the same start sequence; one record per start."""
    opt = opt or OptConfig()
    inits = make_starts(instance.observed, instance.rank, starts, seed)
    records = []
    for method in methods:
        if method == "cpwopt-dense":
            if instance.is_sparse:
                raise ValueError("dense method on sparse-only instance")
            data = instance.observed
            _, start_recs = fit_cpwopt(
                data, FitConfig(instance.rank, starts, seed, opt), inits=inits
            )
            records.extend(
                _record(method, instance, rec, opt) for rec in start_recs
            )
        elif method == "cpwopt-sparse":
            data = _sparse_view(instance)
            _, start_recs = fit_cpwopt(
                data, FitConfig(instance.rank, starts, seed, opt), inits=inits
            )
            records.extend(
                _record(method, instance, rec, opt) for rec in start_recs
            )
        elif method == "em-als":
            if instance.is_sparse:
                raise ValueError("em-als requires dense data")
            x, w = instance.observed
            cfg = EmAlsConfig(
                instance.rank, max_iters=10000, rel_f_tol=opt.rel_f_tol, seed=seed
            )
            for idx, (kind, init) in enumerate(inits):
                model, result = em_als_fit(x, w, cfg, init)
                rec = StartRecord(index=idx, init_kind=kind, result=result, model=model)
                records.append(_record(method, instance, rec))
    return records


def _record(
    method: str,
    instance: ProblemInstance,
    rec: StartRecord,
    opt: OptConfig | None = None,
) -> dict:
    out = {
        "method": method,
        "start": rec.index,
        "init": rec.init_kind,
        "usable": rec.usable,
        "error": rec.error,
    }
    if rec.result is not None:
        out.update(
            f=rec.result.f,
            gnorm_scaled=rec.result.gnorm_scaled,
            iterations=rec.result.iterations,
            fevals=rec.result.fevals,
            stop_reason=rec.result.stop_reason,
            seconds=rec.result.seconds,
        )
        if opt is not None and rec.result.wolfe_log:
            # worst-case condition margins over all accepted steps:
            # sufficient decrease slack (should be <= 0 up to rounding)
            # and the curvature ratio |phi'(a)| / |phi'(0)| (should be <= c2)
            armijo = max(
                (fa - f0 - opt.ls_c1 * a * d0) / max(1.0, abs(f0))
                for f0, d0, a, fa, _ in rec.result.wolfe_log
            )
            curv = max(
                abs(da) / abs(d0) for _, d0, _, _, da in rec.result.wolfe_log
            )
            out["wolfe_armijo_slack"] = float(armijo)
            out["wolfe_curvature_ratio"] = float(curv)
    if rec.model is not None:
        out["fms"] = fms(instance.truth, rec.model).fms
    return out


def cumulative_best_fms(records: list[dict], starts: int) -> list[float]:
    """FMS of the lowest-objective usable start so far, per start count."""
    series = []
    best = None
    by_start = {r["start"]: r for r in records}
    for k in range(starts):
        rec = by_start.get(k)
        if rec is not None and rec["usable"]:
            if best is None or rec["f"] < best["f"]:
                best = rec
        series.append(best["fms"] if best is not None else float("nan"))
    return series


def run_cell(
    shape,
    missing: float,
    spec: ExperimentSpec,
    size_idx: int = 0,
    m_idx: int = 0,
) -> dict:
    """All instances for one (size, missing-fraction) cell."""
    per_instance = []
    for inst_idx in range(spec.instances):
        seed = instance_seed(spec.seed, size_idx, m_idx, inst_idx)
        if spec.sparse:
            instance = gen_large_sparse(shape, missing, spec.rank, spec.noise, seed)
        else:
            instance = make_instance(
                shape, spec.rank, missing, spec.noise, spec.pattern, seed
            )
        recs = run_instance(instance, spec.methods, spec.starts, seed, spec.opt)
        per_instance.append({"seed": seed, "records": recs})
    return {
        "shape": list(shape),
        "missing": missing,
        "pattern": spec.pattern,
        "records": per_instance,
        "aggregates": aggregate_cell(per_instance, spec.methods, spec.starts),
    }


def aggregate_cell(per_instance: list[dict], methods, starts: int) -> dict:
    """Median/quartiles of cumulative-best FMS per method, plus timing."""
    out = {}
    for method in methods:
        series = []
        seconds = []
        stop_reasons = []
        for inst in per_instance:
            recs = [r for r in inst["records"] if r["method"] == method]
            series.append(cumulative_best_fms(recs, starts))
            seconds.append(sum(r.get("seconds", 0.0) for r in recs))
            stop_reasons.extend(r.get("stop_reason") for r in recs if "stop_reason" in r)
        arr = np.array(series)
        out[method] = {
            "fms_median": [float(v) for v in np.nanmedian(arr, axis=0)],
            "fms_q25": [float(v) for v in np.nanpercentile(arr, 25, axis=0)],
            "fms_q75": [float(v) for v in np.nanpercentile(arr, 75, axis=0)],
            "final_fms": [float(v) for v in arr[:, -1]],
            "seconds_total": float(np.sum(seconds)),
            "seconds_median": float(np.median(seconds)),
            "stop_reasons": stop_reasons,
        }
    return out


def run_bench(spec: ExperimentSpec) -> dict:
    """Full sweep over sizes x missing fractions; deterministic given the spec."""
    cells = []
    for size_idx, shape in enumerate(spec.sizes):
        for m_idx, missing in enumerate(spec.missing):
            cells.append(run_cell(shape, missing, spec, size_idx, m_idx))
    report = {
        "spec": {
            **{k: v for k, v in asdict(spec).items() if k != "opt"},
            "sizes": [list(s) for s in spec.sizes],
        },
        "cells": cells,
    }
    return report


def format_report(report: dict) -> str:
    """Plain-text table of per-cell medians."""
    lines = []
    header = f"{'size':>16} {'missing':>8} {'method':>14} {'median FMS':>11} {'q25':>7} {'q75':>7} {'sec':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for cell in report["cells"]:
        size = "x".join(str(s) for s in cell["shape"])
        for method, agg in cell["aggregates"].items():
            lines.append(
                f"{size:>16} {cell['missing']:>8.2f} {method:>14} "
                f"{agg['fms_median'][-1]:>11.4f} {agg['fms_q25'][-1]:>7.4f} "
                f"{agg['fms_q75'][-1]:>7.4f} {agg['seconds_total']:>9.1f}"
            )
    return "\n".join(lines)
