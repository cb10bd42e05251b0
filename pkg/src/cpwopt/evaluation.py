"""Scoring of computed factorizations against truth or held-out data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .core import KruskalModel, ktensor_full, normalize_model


@dataclass
class ScoreReport:
    fms: float
    permutation: list[int]
    congruences: list[float] = field(default_factory=list)
    tcs: float | None = None
    rho: float | None = None


def _component_scores(truth: KruskalModel, computed: KruskalModel) -> np.ndarray:
    """Pairwise match scores: weight agreement times per-mode congruence product."""
    lam_t = truth.weights
    lam_c = computed.weights
    r_t, r_c = truth.rank, computed.rank
    lam_max = np.maximum.outer(lam_t, lam_c)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight_term = 1.0 - np.abs(np.subtract.outer(lam_t, lam_c)) / lam_max
    weight_term = np.where(lam_max > 0, weight_term, 1.0)
    congr = np.ones((r_t, r_c))
    for a_t, a_c in zip(truth.factors, computed.factors):
        congr *= np.abs(a_t.T @ a_c)
    return weight_term * congr


def fms(truth: KruskalModel, computed: KruskalModel) -> ScoreReport:
    """Factor match score: best component matching, averaged over truth components.

    Both models are renormalized internally (unit columns, nonnegative
    weights).  If the computed model has fewer components than the truth,
    it is padded with zero-weight components, which contribute a zero
    match score.  The maximization over matchings is solved as a linear
    assignment problem on the pairwise score matrix.
    """
    if truth.ndim != computed.ndim or truth.shape != computed.shape:
        raise ValueError("models must have matching mode count and dimensions")
    truth, _ = normalize_model(truth)
    computed, _ = normalize_model(computed)
    scores = _component_scores(truth, computed)
    r_t, r_c = scores.shape
    if r_c < r_t:
        # zero components match nothing: weight term 1 - |lam|/lam = 0
        scores = np.hstack([scores, np.zeros((r_t, r_t - r_c))])
    rows, cols = scipy.optimize.linear_sum_assignment(scores, maximize=True)
    per_component = scores[rows, cols]
    return ScoreReport(
        fms=float(per_component.sum() / r_t),
        permutation=[int(c) for c in cols],
        congruences=[float(s) for s in per_component],
    )


def tcs(x_true: np.ndarray, w: np.ndarray, model: KruskalModel) -> float:
    """Relative reconstruction error restricted to the missing entries."""
    if x_true.shape != w.shape or x_true.shape != model.shape:
        raise ValueError("shape mismatch")
    missing = 1.0 - w
    if not missing.any():
        raise ValueError("no missing entries to score")
    denom = np.linalg.norm((missing * x_true).ravel())
    if denom == 0:
        raise ValueError("true values on the missing entries are all zero")
    resid = missing * (x_true - ktensor_full(model))
    return float(np.linalg.norm(resid.ravel()) / denom)


def rho(shape, rank: int, missing: float) -> float:
    """Known-entry count divided by model degrees of freedom.

    For 3-way data the denominator is R(I+J+K-1)+1; for general N the
    analogous R(sum(I_n) - N + 2) + 1 is used.
    """
    shape = tuple(int(s) for s in shape)
    if not 0 <= missing < 1:
        raise ValueError("missing fraction must be in [0, 1)")
    n = len(shape)
    dof = rank * (sum(shape) - n + 2) + 1
    return float((1.0 - missing) * np.prod(shape) / dof)
