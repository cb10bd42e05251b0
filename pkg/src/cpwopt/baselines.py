"""EM-ALS baseline: iterative imputation plus alternating least squares.

Dense-only by design; sparse inputs must be densified by the caller, which
forfeits any sparsity advantage.  The stopping test tracks the weighted
objective on the known entries so it is comparable with the direct method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import KruskalModel, ktensor_full, mttkrp_dense, normalize_model
from .optimize import STOP_F_TOL, STOP_MAX_ITERS, OptResult


@dataclass
class EmAlsConfig:
    rank: int
    max_iters: int = 10000
    rel_f_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1 or self.max_iters < 1 or self.rel_f_tol <= 0:
            raise ValueError("invalid EM-ALS configuration")


def impute(x: np.ndarray, w: np.ndarray, model: KruskalModel) -> np.ndarray:
    """Known entries copied from ``x``, missing entries filled from the model."""
    if x.shape != w.shape or x.shape != model.shape:
        raise ValueError("shape mismatch")
    return w * x + (1.0 - w) * ktensor_full(model)


def als_sweep(xbar: np.ndarray, model: KruskalModel) -> KruskalModel:
    """One pass of alternating least-squares updates on a complete tensor.

    Each mode solves the normal equations against the Hadamard product of
    the other modes' Gram matrices, via pseudo-inverse so rank-deficient
    systems cannot blow up.  Later modes see the already-updated earlier
    ones.  Column weights are folded into the factors (kept at one).
    """
    n_modes = model.ndim
    rank = model.rank
    work = KruskalModel([a.copy() for a in model.factors], np.ones(rank))
    grams = [a.T @ a for a in work.factors]
    for n in range(n_modes):
        gamma = np.ones((rank, rank))
        for m in range(n_modes):
            if m != n:
                gamma *= grams[m]
        work.factors[n] = mttkrp_dense(xbar, work, n) @ np.linalg.pinv(gamma)
        grams[n] = work.factors[n].T @ work.factors[n]
    return work


def _known_objective(x, w, model):
    resid = w * (x - ktensor_full(model))
    return 0.5 * float(np.vdot(resid, resid))


def em_als_fit(
    x: np.ndarray,
    w: np.ndarray,
    cfg: EmAlsConfig,
    init: KruskalModel,
) -> tuple[KruskalModel, OptResult]:
    """Alternate imputation and ALS sweeps until the known-entry objective stalls."""
    t_start = time.perf_counter()
    model = init.copy()
    # fold incoming weights so sweeps can keep them at one
    model.factors[0] = model.factors[0] * model.weights[None, :]
    model.weights = np.ones(cfg.rank)
    f = None
    stop = STOP_MAX_ITERS
    sweeps = 0
    for sweeps in range(1, cfg.max_iters + 1):
        # one model evaluation serves both this sweep's imputation and
        # the known-entry objective of the previous sweep's model
        full = ktensor_full(model)
        resid = w * (x - full)
        f_new = 0.5 * float(np.vdot(resid, resid))
        if f is not None and abs(f - f_new) / max(1.0, abs(f)) <= cfg.rel_f_tol:
            f = f_new
            stop = STOP_F_TOL
            break
        f = f_new
        xbar = full + resid
        model = als_sweep(xbar, model)
    else:
        f = _known_objective(x, w, model)
    normalized, _ = normalize_model(model)
    result = OptResult(
        f=f,
        gnorm_scaled=float("nan"),
        iterations=sweeps,
        fevals=sweeps,
        stop_reason=stop,
        seconds=time.perf_counter() - t_start,
    )
    return normalized, result
