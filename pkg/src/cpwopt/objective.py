"""Weighted CP objective and gradient, dense and sparse, plus the fit driver.

The objective is half the squared error over the known entries between
the data and the CP model.  Both variants share one gradient convention:
G[n] = -mttkrp(T, n) with T the residual on the known entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accounting, datagen
from .core import (
    KruskalModel,
    SparseSamples,
    fold,
    kr_excluding,
    ktensor_values_at,
    mttkrp_sparse,
    normalize_model,
    unfold,
)
from .optimize import STOP_LS_FAILURE, OptConfig, OptResult, ncg_minimize


def _check_binary(w: np.ndarray) -> None:
    if not np.isin(w.ravel(), (0.0, 1.0)).all():
        raise ValueError("weight tensor must be binary")


def pack_factors(factors: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in factors])


def unpack_factors(vec: np.ndarray, shape: tuple[int, ...], rank: int) -> list[np.ndarray]:
    factors = []
    offset = 0
    for extent in shape:
        size = extent * rank
        factors.append(vec[offset : offset + size].reshape(extent, rank))
        offset += size
    if offset != vec.size:
        raise ValueError("variable vector length inconsistent with shape/rank")
    return factors


class DenseObjective:
    """Workspace for the dense variant: caches Y = W * X and gamma = ||Y||^2."""

    def __init__(self, x: np.ndarray, w: np.ndarray, rank: int):
        if x.shape != w.shape:
            raise ValueError("data/weight shape mismatch")
        _check_binary(w)
        self.shape = x.shape
        self.rank = rank
        self.y = w * x
        self.w = w
        self.gamma = float(np.dot(self.y.ravel(), self.y.ravel()))

    def value_grad_factors(self, factors, weights=None):
        r = self.rank
        n_modes = len(self.shape)
        kr = [kr_excluding(factors, n) for n in range(n_modes)]
        if weights is not None:
            kr = [k * weights[None, :] for k in kr]
        full0 = factors[0] @ kr[0].T
        z0 = unfold(self.w, 0) * full0
        y0 = unfold(self.y, 0)
        f = 0.5 * self.gamma - float(np.vdot(y0, z0)) + 0.5 * float(np.vdot(z0, z0))
        t = y0 - z0
        t_tensor = fold(t, 0, self.shape)
        grads = [-(unfold(t_tensor, n) @ kr[n]) for n in range(n_modes)]
        return f, grads

    def value_grad_vec(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        factors = unpack_factors(vec, self.shape, self.rank)
        f, grads = self.value_grad_factors(factors)
        return f, pack_factors(grads)


class SparseObjective:
    """Workspace for the sparse variant: indices, values, and gamma only.

    Never allocates storage proportional to the full tensor size.
    """

    def __init__(self, samples: SparseSamples, rank: int):
        self.samples = samples
        self.shape = samples.shape
        self.rank = rank
        self.gamma = float(np.dot(samples.values, samples.values))

    def value_grad_factors(self, factors, weights=None):
        if weights is None:
            weights = np.ones(self.rank)
        model = KruskalModel(factors, weights)
        s = self.samples
        z = ktensor_values_at(model, s.indices)
        f = 0.5 * self.gamma - float(np.dot(s.values, z)) + 0.5 * float(np.dot(z, z))
        t = s.values - z
        accounting.note_scratch(2 * t.size)
        grads = [
            -mttkrp_sparse(s.indices, t, model, n) for n in range(len(self.shape))
        ]
        return f, grads

    def value_grad_vec(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        factors = unpack_factors(vec, self.shape, self.rank)
        f, grads = self.value_grad_factors(factors)
        return f, pack_factors(grads)


def objective_grad_dense(
    x: np.ndarray, w: np.ndarray, model: KruskalModel
) -> tuple[float, list[np.ndarray]]:
    """Objective and per-mode gradient matrices for dense data with mask."""
    if x.shape != model.shape:
        raise ValueError("data/model shape mismatch")
    return DenseObjective(x, w, model.rank).value_grad_factors(
        model.factors, model.weights
    )


def objective_grad_sparse(
    samples: SparseSamples, model: KruskalModel
) -> tuple[float, list[np.ndarray]]:
    """Objective and gradient from known entries only."""
    if samples.shape != model.shape:
        raise ValueError("data/model shape mismatch")
    return SparseObjective(samples, model.rank).value_grad_factors(
        model.factors, model.weights
    )


@dataclass
class FitConfig:
    rank: int
    starts: int = 1
    seed: int = 0
    opt: OptConfig = field(default_factory=OptConfig)

    def __post_init__(self):
        if self.rank < 1 or self.starts < 1:
            raise ValueError("rank and starts must be >= 1")


@dataclass
class StartRecord:
    index: int
    init_kind: str
    result: OptResult | None = None
    model: KruskalModel | None = None
    error: str | None = None

    @property
    def usable(self) -> bool:
        return (
            self.error is None
            and self.result is not None
            and np.isfinite(self.result.f)
            and self.result.stop_reason != STOP_LS_FAILURE
        )


def _full_norm(model: KruskalModel) -> float:
    gram = np.ones((model.rank, model.rank))
    for a in model.factors:
        gram *= a.T @ a
    lam = model.weights
    return float(np.sqrt(max(lam @ gram @ lam, 0.0)))


def make_starts(data, rank: int, starts: int, seed: int) -> list[tuple[str, KruskalModel]]:
    """Shared start sequence: n-mode singular vectors first, then seeded random.

    Random starting models are column-normalized and then rescaled so the
    model's norm matches the norm of the observed entries.  Raw random
    factors put the initial model orders of magnitude above the data; with
    most entries missing, an oversized start also dominates the imputation
    step of the alternating baseline, which then barely moves.  Matching
    the data scale leaves both optimizers a sensible first step while the
    random directions still diversify the starts.
    """
    out = [("nvecs", datagen.init_nvecs(data, rank, seed=seed))]
    if isinstance(data, SparseSamples):
        shape = data.shape
        target = float(np.linalg.norm(data.values))
    else:
        x, w = data
        shape = x.shape
        target = float(np.linalg.norm((w * x).ravel()))
    for j in range(1, starts):
        raw = datagen.init_random(shape, rank, seed, stream_index=j)
        unit, _ = normalize_model(raw)
        unit.weights = np.ones(rank)
        norm = _full_norm(unit)
        scale = (target / norm) ** (1.0 / len(shape)) if norm > 0 else 1.0
        out.append(
            ("random", KruskalModel([a * scale for a in unit.factors], np.ones(rank)))
        )
    return out


def fit_cpwopt(
    data,
    cfg: FitConfig,
    inits: list[tuple[str, KruskalModel]] | None = None,
) -> tuple[KruskalModel, list[StartRecord]]:
    """Multi-start weighted CP fit.

    ``data`` is either a ``(x, w)`` dense pair or a :class:`SparseSamples`.
    Start 1 uses the n-mode singular-vector initialization; the remaining
    starts use seeded random factors.  Per-start breakdowns (NaN objective,
    line-search failure) are recorded and that start is excluded from best
    selection; the fit raises only if every start fails.
    """
    if isinstance(data, SparseSamples):
        objective = SparseObjective(data, cfg.rank)
    else:
        x, w = data
        objective = DenseObjective(x, w, cfg.rank)

    if inits is None:
        inits = make_starts(data, cfg.rank, cfg.starts, cfg.seed)

    records: list[StartRecord] = []
    for idx, (kind, init) in enumerate(inits):
        rec = StartRecord(index=idx, init_kind=kind)
        try:
            x0 = pack_factors(init.factors)
            x_star, result = ncg_minimize(objective.value_grad_vec, x0, cfg.opt)
            factors = [a.copy() for a in unpack_factors(x_star, objective.shape, cfg.rank)]
            model, _ = normalize_model(KruskalModel(factors, np.ones(cfg.rank)))
            rec.result = result
            rec.model = model
        except (FloatingPointError, ValueError) as exc:
            rec.error = str(exc)
        records.append(rec)

    usable = [r for r in records if r.usable]
    if not usable:
        raise RuntimeError("all starts failed")
    best = min(usable, key=lambda r: r.result.f)
    return best.model, records
