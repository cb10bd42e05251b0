"""Text file formats for tensors, models, and result records.

Coordinate tensor file::

    ndims 3
    dims 50 40 30
    1 1 1 0.123
    ...

with 1-based indices and missing entries simply absent.  A dense tensor
file carries a ``dense`` marker line after ``dims`` and then streams all
values in the mode-1-fastest linearization, whitespace separated.

Model files are JSON: shape, rank, lambda array, per-mode factor
matrices stored row-major, plus a format version.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import KruskalModel, SparseSamples

MODEL_FORMAT_VERSION = 1


class FileFormatError(ValueError):
    pass


def write_sparse_tensor(path, samples: SparseSamples) -> None:
    with open(path, "w") as fh:
        fh.write(f"ndims {len(samples.shape)}\n")
        fh.write("dims " + " ".join(str(s) for s in samples.shape) + "\n")
        for idx, val in zip(samples.indices, samples.values):
            # repr of a Python float round-trips exactly
            fh.write(" ".join(str(i + 1) for i in idx) + f" {float(val)!r}\n")


def write_dense_tensor(path, x: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(f"ndims {x.ndim}\n")
        fh.write("dims " + " ".join(str(s) for s in x.shape) + "\n")
        fh.write("dense\n")
        for val in x.reshape(-1, order="F"):
            fh.write(f"{float(val)!r}\n")


def read_tensor(path) -> SparseSamples | np.ndarray:
    """Read a tensor file; returns SparseSamples or a dense array."""
    path = Path(path)
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("ndims"):
        raise FileFormatError(f"{path}: expected an 'ndims' header line")
    try:
        ndims = int(lines[0].split()[1])
        dims = tuple(int(t) for t in lines[1].split()[1:])
    except (IndexError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad header: {exc}") from exc
    if not lines[1].startswith("dims") or len(dims) != ndims:
        raise FileFormatError(f"{path}: dims line inconsistent with ndims")
    body = lines[2:]
    if body and body[0] == "dense":
        tokens = " ".join(body[1:]).split()
        total = int(np.prod(dims))
        if len(tokens) != total:
            raise FileFormatError(f"{path}: expected {total} values, got {len(tokens)}")
        values = np.array([float(t) for t in tokens])
        return values.reshape(dims, order="F")
    indices = []
    values = []
    for ln in body:
        tokens = ln.split()
        if len(tokens) != ndims + 1:
            raise FileFormatError(f"{path}: bad coordinate line: {ln!r}")
        indices.append([int(t) - 1 for t in tokens[:ndims]])
        values.append(float(tokens[ndims]))
    if not indices:
        raise FileFormatError(f"{path}: no entries")
    try:
        return SparseSamples.from_coords(dims, np.array(indices), np.array(values))
    except (ValueError, IndexError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_model(path, model: KruskalModel) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "shape": list(model.shape),
        "rank": model.rank,
        "lambda": [float(v) for v in model.weights],
        "factors": [[[float(v) for v in row] for row in a] for a in model.factors],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_model(path) -> KruskalModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
    try:
        if payload["format_version"] != MODEL_FORMAT_VERSION:
            raise FileFormatError(
                f"{path}: unsupported format version {payload['format_version']}"
            )
        factors = [np.array(a, dtype=float) for a in payload["factors"]]
        model = KruskalModel(factors, np.array(payload["lambda"], dtype=float))
        if list(model.shape) != payload["shape"] or model.rank != payload["rank"]:
            raise FileFormatError(f"{path}: factor dimensions disagree with header")
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing field {exc}") from exc
    return model


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
