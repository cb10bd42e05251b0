"""Seeded generation of synthetic test problems and starting points.

RNG discipline: every artifact draws from its own stream keyed by
``[STREAM_CONSTANT, seed, index]`` through ``numpy.random.default_rng``,
so e.g. changing the missing fraction never perturbs the truth factors
generated for the same seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import accounting
from .core import KruskalModel, SparseSamples, ktensor_full, ktensor_values_at, unfold

STREAM_FACTORS = 11
STREAM_NOISE = 12
STREAM_MASK = 13
STREAM_INIT = 14
STREAM_SAMPLES = 15

_MASK_RETRIES = 100


def _rng(stream: int, seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([stream, int(seed), int(index)])


@dataclass
class ProblemInstance:
    """One generated test problem: truth model plus observed data."""

    truth: KruskalModel
    observed: object  # (x, w) dense pair or SparseSamples
    shape: tuple[int, ...]
    rank: int
    noise: float
    missing: float
    pattern: str
    seed: int

    @property
    def is_sparse(self) -> bool:
        return isinstance(self.observed, SparseSamples)


def gen_factors(shape, rank: int, seed: int) -> KruskalModel:
    """Random truth model: i.i.d. standard normal factors, unit columns."""
    shape = tuple(int(s) for s in shape)
    if rank > min(shape):
        warnings.warn(
            f"rank {rank} exceeds the smallest extent {min(shape)}; "
            "uniqueness of the decomposition is not guaranteed"
        )
    rng = _rng(STREAM_FACTORS, seed)
    factors = []
    for extent in shape:
        a = rng.standard_normal((extent, rank))
        a /= np.linalg.norm(a, axis=0, keepdims=True)
        factors.append(a)
    return KruskalModel(factors, np.ones(rank))


def add_noise_dense(clean: np.ndarray, eta: float, seed: int) -> np.ndarray:
    """clean + eta * (||clean|| / ||noise||) * noise, elementwise normal noise."""
    if eta < 0:
        raise ValueError("noise parameter must be nonnegative")
    if eta == 0:
        return clean.copy()
    nrm = np.linalg.norm(clean.ravel())
    if nrm == 0:
        raise ValueError("cannot scale noise against a zero tensor")
    rng = _rng(STREAM_NOISE, seed)
    noise = rng.standard_normal(clean.shape)
    return clean + eta * (nrm / np.linalg.norm(noise.ravel())) * noise


def add_noise_sparse(values: np.ndarray, eta: float, seed: int) -> np.ndarray:
    """Sparse-path noise: drawn on the known entries only, scaled by their norm."""
    if eta < 0:
        raise ValueError("noise parameter must be nonnegative")
    if eta == 0:
        return values.copy()
    nrm = np.linalg.norm(values)
    if nrm == 0:
        raise ValueError("cannot scale noise against zero values")
    rng = _rng(STREAM_NOISE, seed)
    noise = rng.standard_normal(values.shape)
    return values + eta * (nrm / np.linalg.norm(noise)) * noise


def _slices_covered(known: np.ndarray) -> bool:
    axes = tuple(range(known.ndim))
    for mode in axes:
        others = tuple(a for a in axes if a != mode)
        if not known.any(axis=others).all():
            return False
    return True


def gen_missing_random(shape, missing: float, seed: int) -> np.ndarray:
    """Boolean known-mask with exactly floor(missing * total) entries missing.

    Resamples the whole mask (up to a bounded number of tries) until every
    slice in every mode contains at least one known entry.
    """
    shape = tuple(int(s) for s in shape)
    if not 0 <= missing < 1:
        raise ValueError("missing fraction must be in [0, 1)")
    total = int(np.prod(shape))
    n_missing = int(np.floor(missing * total))
    rng = _rng(STREAM_MASK, seed)
    for _ in range(_MASK_RETRIES):
        flat = np.ones(total, dtype=bool)
        flat[rng.choice(total, size=n_missing, replace=False)] = False
        known = flat.reshape(shape, order="F")
        if _slices_covered(known):
            return known
    raise RuntimeError(
        f"no mask with full slice coverage found in {_MASK_RETRIES} tries "
        f"(missing={missing}, shape={shape})"
    )


def gen_missing_fibers(shape, missing: float, seed: int) -> np.ndarray:
    """Known-mask with whole mode-3 fibers missing.

    A 2-D pattern of size I x J with exactly floor(missing * I * J) zeros
    and no zero row or column is replicated along the third mode.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3:
        raise ValueError("fiber masks are defined for 3-way tensors")
    if not 0 <= missing < 1:
        raise ValueError("missing fraction must be in [0, 1)")
    i, j, k = shape
    n_missing = int(np.floor(missing * i * j))
    rng = _rng(STREAM_MASK, seed)
    for _ in range(_MASK_RETRIES):
        flat = np.ones(i * j, dtype=bool)
        flat[rng.choice(i * j, size=n_missing, replace=False)] = False
        pattern = flat.reshape((i, j), order="F")
        if pattern.any(axis=1).all() and pattern.any(axis=0).all():
            return np.repeat(pattern[:, :, None], k, axis=2)
    raise RuntimeError(
        f"no fiber pattern without zero rows/columns found in {_MASK_RETRIES} "
        f"tries (missing={missing}, shape={shape})"
    )


def _sample_distinct_indices(total: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct uniform draws from range(total) using O(count) memory."""
    if count > total:
        raise ValueError("cannot draw more distinct indices than exist")
    chosen = np.array([], dtype=np.int64)
    while chosen.size < count:
        need = count - chosen.size
        extra = rng.integers(0, total, size=need + need // 4 + 16, dtype=np.int64)
        chosen = np.unique(np.concatenate([chosen, extra]))
    if chosen.size > count:
        keep = rng.choice(chosen.size, size=count, replace=False)
        chosen = np.sort(chosen[keep])
    return chosen


def gen_large_sparse(shape, missing: float, rank: int, eta: float, seed: int) -> ProblemInstance:
    """Large sparse instance: truth evaluated only at the sampled known indices.

    Never materializes a dense tensor; peak auxiliary storage is
    proportional to the number of known entries.
    """
    shape = tuple(int(s) for s in shape)
    total = int(np.prod(shape))
    q = int(round((1 - missing) * total))
    truth = gen_factors(shape, rank, seed)
    rng = _rng(STREAM_SAMPLES, seed)
    lin = _sample_distinct_indices(total, q, rng)
    accounting.note_scratch(lin.size * (len(shape) + 2))
    indices = np.stack(np.unravel_index(lin, shape, order="F"), axis=1)
    clean = ktensor_values_at(truth, indices)
    values = add_noise_sparse(clean, eta, seed)
    observed = SparseSamples(shape, indices, values)
    return ProblemInstance(
        truth=truth,
        observed=observed,
        shape=shape,
        rank=rank,
        noise=eta,
        missing=missing,
        pattern="entries",
        seed=seed,
    )


def make_instance(
    shape,
    rank: int,
    missing: float,
    eta: float,
    pattern: str = "entries",
    seed: int = 0,
) -> ProblemInstance:
    """Dense synthetic instance: truth, full noisy tensor, and known-mask."""
    shape = tuple(int(s) for s in shape)
    truth = gen_factors(shape, rank, seed)
    clean = ktensor_full(truth)
    noisy = add_noise_dense(clean, eta, seed)
    if pattern == "entries":
        known = gen_missing_random(shape, missing, seed)
    elif pattern == "fibers":
        known = gen_missing_fibers(shape, missing, seed)
    else:
        raise ValueError(f"unknown missing-data pattern: {pattern!r}")
    return ProblemInstance(
        truth=truth,
        observed=(noisy, known.astype(float)),
        shape=shape,
        rank=rank,
        noise=eta,
        missing=missing,
        pattern=pattern,
        seed=seed,
    )


def _gram_eigvecs(gram: np.ndarray, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Leading eigenvectors of a PSD Gram matrix, random unit columns as padding."""
    extent = gram.shape[0]
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    take = min(rank, extent)
    cols = []
    tol = max(eigvals[0], 0.0) * extent * np.finfo(float).eps
    for r in range(take):
        if eigvals[r] > tol:
            cols.append(eigvecs[:, r])
        else:
            v = rng.standard_normal(extent)
            cols.append(v / np.linalg.norm(v))
    for _ in range(rank - take):
        v = rng.standard_normal(extent)
        cols.append(v / np.linalg.norm(v))
    return np.stack(cols, axis=1)


def init_nvecs(data, rank: int, seed: int = 0) -> KruskalModel:
    """Per-mode leading singular vectors of the zero-filled tensor.

    The singular vectors are obtained from the small per-mode Gram matrix,
    so the sparse path never builds a dense unfolding.  Columns beyond the
    available numerical rank (or beyond the mode extent) are filled with
    seeded random unit vectors.
    """
    rng = _rng(STREAM_INIT, seed)
    factors = []
    if isinstance(data, SparseSamples):
        shape = data.shape
        lin_all = data.linear_indices()
        strides = np.cumprod((1,) + shape[:-1])
        for mode, extent in enumerate(shape):
            rows = data.indices[:, mode]
            # collapse the removed mode out of the linear index
            below = lin_all % strides[mode]
            above = lin_all // (strides[mode] * extent)
            cols = below + above * strides[mode]
            mat = scipy.sparse.csr_matrix(
                (data.values, (rows, cols)),
                shape=(extent, int(np.prod(shape)) // extent),
            )
            gram = (mat @ mat.T).toarray()
            factors.append(_gram_eigvecs(gram, rank, rng))
    else:
        x, w = data
        shape = x.shape
        filled = x * w
        for mode in range(len(shape)):
            mat = unfold(filled, mode)
            gram = mat @ mat.T
            factors.append(_gram_eigvecs(gram, rank, rng))
    return KruskalModel(factors, np.ones(rank))


def init_random(shape, rank: int, seed: int, stream_index: int = 0) -> KruskalModel:
    """I.i.d. standard normal factor matrices, unit weights."""
    rng = _rng(STREAM_INIT, seed, stream_index)
    factors = [rng.standard_normal((int(s), rank)) for s in shape]
    return KruskalModel(factors, np.ones(rank))
