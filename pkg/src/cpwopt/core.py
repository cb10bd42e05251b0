"""Dense and sparse multilinear algebra kernels.

Layout conventions used throughout the package:

* Dense tensors are plain ``numpy`` arrays.  The canonical linearization
  is mode-1-fastest, i.e. ``x.reshape(-1, order="F")``.
* ``unfold(x, n)`` arranges the mode-n fibers as columns, with the
  remaining modes ordered ascending and lower modes varying fastest.
* ``khatri_rao`` takes its argument list with the *first* matrix varying
  slowest, so that ``unfold(ktensor_full(M), n)`` equals
  ``A[n] @ diag(w) @ khatri_rao([A[N-1], ..., skip n ..., A[0]]).T``.
* Sparse sample indices are 0-based internally and kept sorted by the
  canonical linear index (mode-1 fastest), with no duplicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accounting


def _require_same_shape(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")


def tensor_norm(x: np.ndarray) -> float:
    """Frobenius norm sqrt(sum of squared entries)."""
    return float(np.linalg.norm(np.asarray(x).ravel()))


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """Inner product: sum of products of corresponding entries."""
    _require_same_shape(x, y)
    return float(np.dot(x.ravel(), y.ravel()))


def hadamard(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise product of two same-shaped tensors."""
    _require_same_shape(x, y)
    return x * y


def weighted_norm(x: np.ndarray, w: np.ndarray) -> float:
    """Norm of the elementwise product ``w * x``."""
    _require_same_shape(x, w)
    return tensor_norm(w * x)


def unfold(x: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n matricization: mode-n fibers become columns.

    Column ordering follows the standard convention (remaining modes
    ascending, lower modes fastest).
    """
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for {x.ndim}-way tensor")
    return np.moveaxis(x, mode, 0).reshape(x.shape[mode], -1, order="F")


def fold(mat: np.ndarray, mode: int, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`unfold` for the given mode and full shape."""
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    moved = (shape[mode],) + tuple(s for i, s in enumerate(shape) if i != mode)
    return np.moveaxis(mat.reshape(moved, order="F"), 0, mode)


def khatri_rao(matrices: list[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product.

    The row index of the result varies fastest with the *last* matrix in
    the list.  All matrices must share the same column count.
    """
    if not matrices:
        raise ValueError("need at least one matrix")
    ncols = matrices[0].shape[1]
    for m in matrices[1:]:
        if m.shape[1] != ncols:
            raise ValueError("column count mismatch in Khatri-Rao product")
    out = matrices[0]
    for m in matrices[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, ncols)
    return out


def kr_excluding(factors: list[np.ndarray], mode: int) -> np.ndarray:
    """Khatri-Rao product of all factors but ``mode``, highest mode slowest."""
    mats = [factors[m] for m in reversed(range(len(factors))) if m != mode]
    return khatri_rao(mats)


@dataclass
class KruskalModel:
    """CP model: per-mode factor matrices plus nonnegative column weights."""

    factors: list[np.ndarray]
    weights: np.ndarray

    def __post_init__(self):
        self.factors = [np.asarray(a, dtype=float) for a in self.factors]
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        r = self.rank
        for a in self.factors:
            if a.ndim != 2 or a.shape[1] != r:
                raise ValueError("factor matrices must share one column count")

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.factors)

    def copy(self) -> "KruskalModel":
        return KruskalModel([a.copy() for a in self.factors], self.weights.copy())


def ktensor_full(model: KruskalModel) -> np.ndarray:
    """Dense tensor represented by a Kruskal model."""
    cols = khatri_rao(list(reversed(model.factors)))
    vec = cols @ model.weights
    return vec.reshape(model.shape, order="F")


def ktensor_values_at(model: KruskalModel, indices: np.ndarray) -> np.ndarray:
    """Model values at the given index tuples (0-based, shape Q x N).

    Column weights are applied explicitly.  Accumulates one rank-one term
    at a time over per-mode gathered vectors, so transient storage is O(Q).
    """
    indices = np.asarray(indices)
    q = indices.shape[0]
    shape = model.shape
    if q and (indices.min() < 0 or (indices >= np.array(shape)).any()):
        raise IndexError("sample index out of range")
    accounting.note_scratch(2 * q)
    z = np.zeros(q)
    for r in range(model.rank):
        u = np.full(q, model.weights[r])
        for n, a in enumerate(model.factors):
            u *= a[indices[:, n], r]
        z += u
    return z


def mttkrp_dense(t: np.ndarray, model: KruskalModel, mode: int) -> np.ndarray:
    """Matricized-tensor-times-Khatri-Rao-product for a dense tensor."""
    if t.shape != model.shape:
        raise ValueError(f"tensor shape {t.shape} != model shape {model.shape}")
    return unfold(t, mode) @ kr_excluding(model.factors, mode)


def mttkrp_sparse(
    indices: np.ndarray,
    values: np.ndarray,
    model: KruskalModel,
    mode: int,
) -> np.ndarray:
    """MTTKRP against values living on a sparse index set.

    Equivalent to ``mttkrp_dense`` applied to the zero-filled densification
    of ``(indices, values)``.  Uses gathered per-mode vectors and a
    fixed-order scatter-add, one rank term at a time.
    """
    indices = np.asarray(indices)
    values = np.asarray(values, dtype=float)
    shape = model.shape
    if indices.size and (indices.min() < 0 or (indices >= np.array(shape)).any()):
        raise IndexError("sample index out of range")
    i_n = shape[mode]
    r_count = model.rank
    accounting.note_scratch(values.size + i_n * r_count)
    g = np.zeros((i_n, r_count))
    for r in range(r_count):
        u = values * model.weights[r]
        for m, a in enumerate(model.factors):
            if m == mode:
                continue
            u = u * a[indices[:, m], r]
        g[:, r] = np.bincount(indices[:, mode], weights=u, minlength=i_n)
    return g


def normalize_model(model: KruskalModel) -> tuple[KruskalModel, list[int]]:
    """Rescale every factor column to unit two-norm, absorbing scale into weights.

    Sign convention: each column is flipped so its largest-magnitude entry
    is positive.  If the flips for a component multiply to -1 (including
    the sign absorbed from a negative incoming weight), the column of the
    last mode is flipped back so the represented tensor is unchanged and
    weights stay nonnegative.

    Returns the normalized model and the indices of components whose
    columns were all zero in some mode; those get weight 0 and a canonical
    first-unit-vector column.
    """
    factors = [a.copy() for a in model.factors]
    weights = model.weights.copy()
    degenerate: list[int] = []
    for r in range(model.rank):
        for a in factors:
            nrm = np.linalg.norm(a[:, r])
            if nrm == 0.0:
                if r not in degenerate:
                    degenerate.append(r)
                a[:, r] = 0.0
                a[0, r] = 1.0
            else:
                a[:, r] /= nrm
                weights[r] *= nrm
        if r in degenerate:
            weights[r] = 0.0
        sign = 1.0
        if weights[r] < 0:
            weights[r] = -weights[r]
            sign = -1.0
        for a in factors:
            col = a[:, r]
            if col[np.argmax(np.abs(col))] < 0:
                col *= -1.0
                sign *= -1.0
        if sign < 0:
            factors[-1][:, r] *= -1.0
    return KruskalModel(factors, weights), degenerate


@dataclass
class SparseSamples:
    """Known entries of a tensor: sorted unique index tuples plus values.

    Index presence doubles as the binary weight tensor (stored index
    means weight one).  Indices are 0-based, shape (Q, N), sorted by the
    canonical mode-1-fastest linear index.
    """

    shape: tuple[int, ...]
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if any(s < 1 for s in self.shape):
            raise ValueError("tensor extents must be positive")
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.indices.ndim != 2 or self.indices.shape[1] != len(self.shape):
            raise ValueError("indices must be Q x N")
        if self.indices.shape[0] != self.values.size:
            raise ValueError("index/value count mismatch")
        if not np.isfinite(self.values).all():
            raise ValueError("sample values must be finite")
        if self.indices.size:
            if self.indices.min() < 0 or (self.indices >= np.array(self.shape)).any():
                raise IndexError("sample index out of range")
            lin = self.linear_indices()
            if not (np.diff(lin) > 0).all():
                raise ValueError("indices must be strictly sorted with no duplicates")

    @property
    def nnz(self) -> int:
        return self.values.size

    def linear_indices(self) -> np.ndarray:
        return np.ravel_multi_index(self.indices.T, self.shape, order="F")

    @classmethod
    def from_coords(cls, shape, indices, values) -> "SparseSamples":
        """Build from possibly-unsorted coordinates; duplicates are an error."""
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=float).ravel()
        if indices.size:
            if indices.min() < 0 or (indices >= np.array(shape)).any():
                raise IndexError("sample index out of range")
            lin = np.ravel_multi_index(indices.T, tuple(shape), order="F")
            order = np.argsort(lin, kind="stable")
            lin = lin[order]
            if (np.diff(lin) == 0).any():
                raise ValueError("duplicate sample indices")
            indices = indices[order]
            values = values[order]
        return cls(tuple(shape), indices, values)

    def densify(self) -> tuple[np.ndarray, np.ndarray]:
        """Zero-filled dense tensor and binary weight tensor."""
        lin = self.linear_indices()
        size = int(np.prod(self.shape))
        xf = np.zeros(size)
        wf = np.zeros(size)
        xf[lin] = self.values
        wf[lin] = 1.0
        return xf.reshape(self.shape, order="F"), wf.reshape(self.shape, order="F")

    def with_values(self, values: np.ndarray) -> "SparseSamples":
        return SparseSamples(self.shape, self.indices, values)


def center_ignore_missing(
    samples: SparseSamples, mode: int
) -> tuple[SparseSamples, np.ndarray]:
    """Center across ``mode`` using means of the known entries only.

    Subtracts from every known entry the mean of the known entries that
    share its mode-``mode`` index.  Returns the centered samples and the
    per-slab means (for un-centering).
    """
    if not 0 <= mode < len(samples.shape):
        raise ValueError(f"mode {mode} out of range")
    i_n = samples.shape[mode]
    idx = samples.indices[:, mode]
    counts = np.bincount(idx, minlength=i_n)
    if (counts == 0).any():
        raise ValueError("every slab must contain at least one known entry")
    sums = np.bincount(idx, weights=samples.values, minlength=i_n)
    means = sums / counts
    return samples.with_values(samples.values - means[idx]), means
