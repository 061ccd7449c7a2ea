"""CP reconstruction and the count-tensor objectives shared by all fitters.

The reconstruction of cell c is sum_k prod_m factors[m][c_m, k].  Both
objectives run over every cell of the tensor (or of a masked region), but
cost only O(nnz * K + sum_m shape[m] * K): the sum of the reconstruction
over all cells factorizes into per-mode column sums.
"""

from __future__ import annotations

from math import prod
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .errors import IngestionError
from .masking import Region
from .tensors import SparseCountTensor, load_labels, save_labels


class FactorSet:
    """Non-negative CP factors: one (mode size x K) matrix per mode."""

    __slots__ = ("factors", "k")

    def __init__(self, factors):
        factors = [np.ascontiguousarray(f, dtype=np.float64) for f in factors]
        if not factors:
            raise ValueError("factor set needs at least one mode")
        k = factors[0].shape[1] if factors[0].ndim == 2 else -1
        for m, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != k:
                raise ValueError(f"mode {m}: every factor matrix needs K columns")
            if not np.all(np.isfinite(f)):
                raise ValueError(f"mode {m}: factors must be finite")
            if f.min(initial=0.0) < 0.0:
                raise ValueError(f"mode {m}: factors must be non-negative")
            f.setflags(write=False)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "k", k)

    def __setattr__(self, name, value):
        raise AttributeError("FactorSet is immutable; build a new one")

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)

    def replace_mode(self, mode: int, matrix) -> "FactorSet":
        mats = [f for f in self.factors]
        mats[mode] = matrix
        return FactorSet(mats)

    def column_sums(self) -> list[np.ndarray]:
        return [f.sum(axis=0) for f in self.factors]


def reconstruct(f: FactorSet, coord) -> float:
    """Reconstruction at one coordinate: sum over components of the factor product."""
    coord = tuple(int(c) for c in coord)
    if len(coord) != f.ndim:
        raise IndexError(f"coordinate has {len(coord)} modes, factors have {f.ndim}")
    for m, c in enumerate(coord):
        if not 0 <= c < f.factors[m].shape[0]:
            raise IndexError(f"coordinate {coord} out of range in mode {m}")
    parts = f.factors[0][coord[0]].copy()
    for m in range(1, f.ndim):
        parts *= f.factors[m][coord[m]]
    return float(parts.sum())


def reconstruct_entries(f: FactorSet, coords) -> np.ndarray:
    """Vectorized reconstruction at an (n, M) array of coordinates."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.size == 0:
        return np.zeros(0)
    parts = f.factors[0][coords[:, 0]].copy()
    for m in range(1, f.ndim):
        parts *= f.factors[m][coords[:, m]]
    return parts.sum(axis=1)


def reconstruct_dense(f: FactorSet) -> np.ndarray:
    """Materialize the full reconstruction; only for small shapes."""
    out = np.zeros(f.shape)
    for k in range(f.k):
        term = f.factors[0][:, k]
        for m in range(1, f.ndim):
            term = np.multiply.outer(term, f.factors[m][:, k])
        out += term
    return out


def total_recon_mass(f: FactorSet, region: Region | None = None) -> float:
    """Sum of the reconstruction over all cells (or over a masked region).

    ``region`` may be a Region, whose block structure gives a closed form,
    or a vectorized coordinate predicate (an (n, M) integer array in, an
    (n,) boolean array out), which falls back to explicit enumeration of
    every cell and is only sensible for small shapes.
    """
    if region is None:
        total = 0.0
        for k in range(f.k):
            total += prod(cs[k] for cs in f.column_sums())
        return float(total)
    if callable(region):
        total = 0.0
        for block in _iter_cells(f.shape):
            keep = np.asarray(region(block), dtype=bool)
            if keep.any():
                total += float(reconstruct_entries(f, block[keep]).sum())
        return total
    return region.sum_recon(f.factors)


def _iter_cells(shape, max_cells: int = 262144):
    """Chunked enumeration of every coordinate of a dense shape."""
    total = prod(shape)
    for lo in range(0, total, max_cells):
        flat = np.arange(lo, min(lo + max_cells, total))
        yield np.stack(np.unravel_index(flat, shape), axis=1)


def _entry_recon_and_values(f: FactorSet, t: SparseCountTensor, region):
    if region is None:
        coords, values = t.coords, t.values
    elif callable(region):
        keep = (
            np.asarray(region(t.coords), dtype=bool)
            if t.nnz
            else np.zeros(0, dtype=bool)
        )
        coords, values = t.coords[keep], t.values[keep]
    else:
        coords, values = region.filter_entries(t)
    return reconstruct_entries(f, coords), values.astype(np.float64)


def poisson_log_likelihood(f: FactorSet, t: SparseCountTensor, region=None) -> float:
    """Poisson log likelihood of the counts under the reconstruction.

    Every cell contributes y*log(yhat) - yhat - log(y!); zero cells reduce
    to -yhat, so their total is the closed-form reconstruction mass.  A zero
    reconstruction under a positive count makes the result -inf (reported
    as a value, not an exception).  ``region`` restricts the sum to a cell
    region: a Region keeps the closed-form mass, a coordinate predicate
    falls back to enumeration (see total_recon_mass).
    """
    if f.shape != t.shape:
        raise ValueError(f"factor shape {f.shape} != tensor shape {t.shape}")
    yhat, y = _entry_recon_and_values(f, t, region)
    if np.any(yhat == 0.0):
        return float("-inf")
    ll = float(np.dot(y, np.log(yhat)) - gammaln(y + 1.0).sum())
    return ll - total_recon_mass(f, region)


def generalized_kl(t: SparseCountTensor, f: FactorSet, region=None) -> float:
    """Generalized KL divergence of the reconstruction from the counts.

    D = sum over cells of y*log(y/yhat) - y + yhat, with 0*log 0 taken as 0.
    Non-negative, zero only for a perfect reconstruction; +inf if some
    positive count sits on a zero reconstruction.  ``region`` is handled
    as in poisson_log_likelihood.
    """
    if f.shape != t.shape:
        raise ValueError(f"factor shape {f.shape} != tensor shape {t.shape}")
    yhat, y = _entry_recon_and_values(f, t, region)
    if np.any(yhat == 0.0):
        return float("inf")
    entry_part = float(np.dot(y, np.log(y) - np.log(yhat)) - y.sum())
    return entry_part + total_recon_mass(f, region)


# ---------------------------------------------------------------------------
# Factor files: per-mode delimited matrices plus a small manifest
# ---------------------------------------------------------------------------

_FLOAT_FMT = "%.17g"


def save_matrix(matrix, path) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=np.float64), fmt=_FLOAT_FMT)


def load_matrix(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=2)


def write_manifest(path, pairs) -> None:
    with Path(path).open("w") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    out = {}
    with Path(path).open() as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise IngestionError(f"{path}: line {ln}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def save_factors(f: FactorSet, directory, mode_labels=None) -> Path:
    """Write a factor set as a directory bundle: manifest + one matrix per mode."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs = [
        ("modes", f.ndim),
        ("k", f.k),
        ("shape", " ".join(str(s) for s in f.shape)),
    ]
    for m, mat in enumerate(f.factors):
        name = f"factors_mode{m}.txt"
        save_matrix(mat, directory / name)
        pairs.append((f"matrix_{m}", name))
    if mode_labels is not None:
        save_labels(mode_labels, directory / "labels.txt")
        pairs.append(("labels", "labels.txt"))
    write_manifest(directory / "manifest.txt", pairs)
    return directory


def load_factors(directory):
    """Read a factor bundle; returns (FactorSet, mode_labels or None)."""
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.txt")
    n_modes = int(manifest["modes"])
    mats = [load_matrix(directory / manifest[f"matrix_{m}"]) for m in range(n_modes)]
    f = FactorSet(mats)
    shape = tuple(int(s) for s in manifest["shape"].split())
    if f.shape != shape or f.k != int(manifest["k"]):
        raise IngestionError(f"{directory}: manifest disagrees with matrix files")
    labels = None
    if "labels" in manifest:
        labels = load_labels(directory / manifest["labels"], shape)
    return f, labels
