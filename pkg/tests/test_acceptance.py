"""End-to-end acceptance checks.

Each numbered check prints one PASS/FAIL line (on the real stderr, and
again in the terminal summary so the lines survive output capture) and
then asserts.  The recovery sweep
and the large sparse runs are expensive; they execute once per session in
fixtures and are shared by the checks that consume them.
"""

import itertools
import sys
import time

import numpy as np
import pytest

import conftest
from cpwopt import (
    DenseObjective,
    FitConfig,
    KruskalModel,
    OptConfig,
    SparseObjective,
    SparseSamples,
    accounting,
    fit_cpwopt,
    fms,
    ktensor_full,
    make_instance,
    rho,
    tcs,
)
from cpwopt.bench import ExperimentSpec, instance_seed, run_bench, run_cell
from cpwopt.core import normalize_model
from cpwopt.datagen import gen_large_sparse, init_nvecs
from cpwopt.evaluation import ScoreReport
from cpwopt.objective import objective_grad_dense, objective_grad_sparse

SHAPE = (50, 40, 30)
RANK = 5
NOISE = 0.1

# iteration budget for the recovery sweeps: sized so that runs reach a
# tolerance-based stop instead of the cap (the alternating baseline
# likewise runs under its own 10000-sweep cap)
RECOVERY_OPT = OptConfig(max_iters=2000, record_wolfe=True)


def verdict(num, name, ok, detail=""):
    line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line, file=sys.__stderr__, flush=True)
    conftest.verdict_lines.append(line)
    assert ok, line


def small_instances(count):
    """Seeded mix of 3- and 4-way problems with varying rank and missing data."""
    shapes = [(6, 5, 4), (5, 4, 3), (6, 5, 4, 3), (4, 4, 3, 3)]
    missing = [0.0, 0.3, 0.6]
    out = []
    for i in range(count):
        shape = shapes[i % len(shapes)]
        rank = 1 + i % 3
        m = missing[i % len(missing)]
        rng = np.random.default_rng(1000 + i)
        truth = KruskalModel(
            [rng.standard_normal((s, rank)) for s in shape], np.ones(rank)
        )
        x = ktensor_full(truth) + 0.1 * rng.standard_normal(shape)
        w = (rng.random(shape) >= m).astype(float)
        w.flat[0] = 1.0
        model = KruskalModel(
            [rng.standard_normal((s, rank)) for s in shape], np.ones(rank)
        )
        out.append((x, w, model))
    return out


def to_samples(x, w):
    keep = w > 0
    idx = np.stack(np.nonzero(keep), axis=1).astype(np.int64)
    return SparseSamples.from_coords(x.shape, idx, x[keep])


@pytest.fixture(scope="session")
def recovery_report():
    spec = ExperimentSpec(
        sizes=[SHAPE],
        rank=RANK,
        missing=[0.6, 0.7, 0.8, 0.9],
        noise=NOISE,
        instances=30,
        starts=5,
        methods=("cpwopt-dense", "em-als"),
        seed=0,
        opt=RECOVERY_OPT,
    )
    return run_bench(spec)


@pytest.fixture(scope="session")
def sparse_runs():
    shape = (200, 200, 200)
    runs = []
    t_start = time.perf_counter()
    for i in range(10):
        seed = instance_seed(0, 0, 0, i)
        with accounting.track() as log:
            inst = gen_large_sparse(shape, 0.99, RANK, NOISE, seed)
            inits = [("nvecs", init_nvecs(inst.observed, RANK, seed=seed))]
            model, recs = fit_cpwopt(
                inst.observed,
                FitConfig(RANK, 1, seed, OptConfig(max_iters=3000)),
                inits=inits,
            )
        result = recs[0].result
        runs.append({
            "fms": fms(inst.truth, model).fms,
            "stop_reason": result.stop_reason,
            "q": inst.observed.values.size,
            "peak_scratch": log.peak_scratch_elems,
            "dense_allocations": log.dense_allocations,
        })
    return {"runs": runs, "seconds": time.perf_counter() - t_start}


class TestGradients:
    def test_criterion_1_finite_differences(self):
        h = 1e-6
        worst = 0.0
        for x, w, model in small_instances(20):
            for grads in (
                objective_grad_dense(x, w, model)[1],
                objective_grad_sparse(to_samples(x, w), model)[1],
            ):
                for n, g in enumerate(grads):
                    fd = np.zeros_like(g)
                    for pos in np.ndindex(*g.shape):
                        up = model.copy()
                        dn = model.copy()
                        up.factors[n][pos] += h
                        dn.factors[n][pos] -= h
                        fd[pos] = (
                            objective_grad_dense(x, w, up)[0]
                            - objective_grad_dense(x, w, dn)[0]
                        ) / (2 * h)
                    rel = np.abs(g - fd) / np.maximum(1.0, np.abs(g))
                    worst = max(worst, float(rel.max()))
        verdict(1, "gradient vs central differences", worst <= 1e-6,
                f"worst relative error {worst:.2e}")

    def test_criterion_2_dense_sparse_equivalence(self):
        worst_f = 0.0
        worst_g = 0.0
        for x, w, model in small_instances(20):
            fd, gd = objective_grad_dense(x, w, model)
            fs, gs = objective_grad_sparse(to_samples(x, w), model)
            worst_f = max(worst_f, abs(fd - fs) / (1 + abs(fd)))
            for a, b in zip(gd, gs):
                worst_g = max(
                    worst_g,
                    np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)),
                )
        verdict(2, "dense/sparse oracle equivalence",
                worst_f <= 1e-12 and worst_g <= 1e-10,
                f"df {worst_f:.2e}, dg {worst_g:.2e}")


class TestRecovery:
    def test_criterion_3_recovery_at_scale(self, recovery_report):
        details = []
        ok = True
        for cell in recovery_report["cells"]:
            agg = cell["aggregates"]
            med_cw = agg["cpwopt-dense"]["fms_median"][-1]
            med_em = agg["em-als"]["fms_median"][-1]
            gap = abs(med_cw - med_em)
            ok &= med_cw >= 0.95 and med_em >= 0.95 and gap <= 0.02
            details.append(
                f"M={cell['missing']:.0%}: {med_cw:.3f}/{med_em:.3f} gap {gap:.3f}"
            )
        verdict(3, "recovery medians and method gap", ok, "; ".join(details))

    def test_criterion_4_hard_regime_report(self):
        spec = ExperimentSpec(
            sizes=[SHAPE], rank=RANK, missing=[0.95], noise=NOISE,
            instances=10, starts=3, methods=("cpwopt-dense",), seed=0,
            opt=OptConfig(max_iters=2000),
        )
        cell = run_cell(SHAPE, 0.95, spec, size_idx=0, m_idx=4)
        final = cell["aggregates"]["cpwopt-dense"]["final_fms"]
        q = np.percentile(final, [25, 50, 75])
        ratio = rho(SHAPE, RANK, 0.95)
        verdict(4, "hard-regime report and difficulty ratio",
                abs(ratio - 5.03) <= 0.01,
                f"rho {ratio:.4f}; FMS quartiles "
                f"{q[0]:.3f}/{q[1]:.3f}/{q[2]:.3f} (report only)")

    def test_criterion_5_fibers_harder_than_entries(self, recovery_report):
        spec = ExperimentSpec(
            sizes=[SHAPE], rank=RANK, missing=[0.9], pattern="fibers",
            noise=NOISE, instances=30, starts=5, methods=("cpwopt-dense",),
            seed=0, opt=RECOVERY_OPT,
        )
        fiber_cell = run_cell(SHAPE, 0.9, spec, size_idx=0, m_idx=3)
        med_fibers = fiber_cell["aggregates"]["cpwopt-dense"]["fms_median"][-1]
        entries_cell = recovery_report["cells"][3]
        assert entries_cell["missing"] == 0.9
        med_entries = entries_cell["aggregates"]["cpwopt-dense"]["fms_median"][-1]
        verdict(5, "structured missing data harder", med_fibers <= med_entries,
                f"fibers {med_fibers:.3f} <= entries {med_entries:.3f}")

    def test_criterion_6_large_sparse(self, sparse_runs):
        runs = sparse_runs["runs"]
        hits = sum(r["fms"] >= 0.99 for r in runs)
        q = runs[0]["q"]
        elem_budget = 8 * (q + RANK * 600)
        mem_ok = all(
            r["peak_scratch"] <= elem_budget and not r["dense_allocations"]
            for r in runs
        )
        time_ok = sparse_runs["seconds"] < 600
        verdict(6, "large sparse recovery within budget",
                hits >= 9 and mem_ok and time_ok,
                f"{hits}/10 runs FMS>=0.99, peak scratch "
                f"{max(r['peak_scratch'] for r in runs)}/{elem_budget} elems, "
                f"{sparse_runs['seconds']:.0f}s")


class TestCompletion:
    def test_criterion_7_completion_scores(self):
        scores = {}
        for m_idx, m in enumerate([0.5, 0.95, 0.99]):
            inst = make_instance((23, 23, 500), 2, m, NOISE, seed=77)
            x, w = inst.observed
            model, _ = fit_cpwopt(
                (x, w), FitConfig(2, starts=3, seed=0,
                                  opt=OptConfig(max_iters=2000))
            )
            scores[m] = tcs(x, w, model)
        diff = abs(scores[0.5] - scores[0.95])
        verdict(7, "completion scores across missing levels",
                diff <= 0.05 and scores[0.99] > scores[0.95],
                f"TCS {scores[0.5]:.3f}/{scores[0.95]:.3f}/{scores[0.99]:.3f}")


class TestMetricProperties:
    def test_criterion_8_metric_invariances(self):
        rng = np.random.default_rng(88)
        failures = 0
        # permutation/sign invariance, randomized
        for _ in range(10_000):
            rank = int(rng.integers(1, 5))
            shape = tuple(rng.integers(3, 6, size=3))
            model = KruskalModel(
                [rng.standard_normal((s, rank)) for s in shape],
                rng.uniform(0.5, 2.0, rank),
            )
            perm = rng.permutation(rank)
            factors = [a[:, perm].copy() for a in model.factors]
            signs = rng.choice([-1.0, 1.0], rank)
            factors[0] *= signs
            factors[1] *= signs
            other = KruskalModel(factors, model.weights[perm])
            if abs(fms(model, other).fms - 1.0) > 1e-8:
                failures += 1

        # assignment solution equals exhaustive maximization for R <= 6
        def exhaustive(a, b):
            a, _ = normalize_model(a)
            b, _ = normalize_model(b)
            best = -np.inf
            for perm in itertools.permutations(range(a.rank)):
                tot = 0.0
                for i, j in enumerate(perm):
                    lt, lc = a.weights[i], b.weights[j]
                    s = 1.0 - abs(lt - lc) / max(lt, lc) if max(lt, lc) else 1.0
                    for at, ac in zip(a.factors, b.factors):
                        s *= abs(np.dot(at[:, i], ac[:, j]))
                    tot += s
                best = max(best, tot / a.rank)
            return best

        assign_ok = True
        for trial in range(150):
            rank = 2 + trial % 5  # up to 6
            shape = (5, 4, 6)
            a = KruskalModel(
                [rng.standard_normal((s, rank)) for s in shape],
                rng.uniform(0.5, 2.0, rank),
            )
            b = KruskalModel(
                [rng.standard_normal((s, rank)) for s in shape],
                rng.uniform(0.5, 2.0, rank),
            )
            if abs(fms(a, b).fms - exhaustive(a, b)) > 1e-10:
                assign_ok = False

        # completion score anchors on a noise-free instance
        inst = make_instance((8, 7, 6), 2, 0.4, 0.0, seed=5)
        x, w = inst.observed
        zero = KruskalModel([np.zeros((s, 2)) for s in (8, 7, 6)], np.zeros(2))
        tcs_zero = tcs(x, w, zero)
        tcs_truth = tcs(x, w, inst.truth)
        anchors_ok = abs(tcs_zero - 1.0) < 1e-12 and tcs_truth < 1e-10
        verdict(8, "metric properties",
                failures == 0 and assign_ok and anchors_ok,
                f"{failures} invariance failures; assignment==exhaustive: "
                f"{assign_ok}; TCS anchors {tcs_zero:.3f}/{tcs_truth:.2e}")


class TestOptimizerContract:
    def test_criterion_9_wolfe_and_termination(self, recovery_report, sparse_runs):
        armijo_worst = -np.inf
        curv_worst = 0.0
        stops = []
        for cell in recovery_report["cells"]:
            for inst in cell["records"]:
                for rec in inst["records"]:
                    if "stop_reason" in rec:
                        stops.append(rec["stop_reason"])
                    if "wolfe_armijo_slack" in rec:
                        armijo_worst = max(armijo_worst, rec["wolfe_armijo_slack"])
                        curv_worst = max(curv_worst, rec["wolfe_curvature_ratio"])
        stops.extend(r["stop_reason"] for r in sparse_runs["runs"])
        converged = sum(s in ("f_tol", "g_tol") for s in stops) / len(stops)
        wolfe_ok = (
            armijo_worst <= 1e-10
            and curv_worst <= RECOVERY_OPT.ls_c2 * (1 + 1e-8)
        )
        verdict(9, "optimizer contract", wolfe_ok and converged >= 0.90,
                f"armijo slack {armijo_worst:.1e}, curvature ratio "
                f"{curv_worst:.3e}, tolerance-stop fraction {converged:.1%} "
                f"of {len(stops)} starts")
