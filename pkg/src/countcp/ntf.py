"""Non-negative CP baselines via multiplicative updates.

Two costs are supported: generalized KL divergence (the maximum-likelihood
Poisson fit) and squared Euclidean distance.  Both updates multiply a
mode's factors by a ratio whose numerator touches only stored entries;
the denominators use column-sum or Gram products so the zero cells never
cost anything.  Factors are floored at a small epsilon after every sweep
so that a zero that the multiplicative rule cannot escape (an inadmissible
zero) only occurs when the floor is explicitly set to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cp import FactorSet, generalized_kl, reconstruct_entries, total_recon_mass
from .errors import DegenerateUpdateError, EmptyRegionError, InadmissibleZeroError
from .masking import CellMask, Region, apply_mask
from .tensors import SparseCountTensor

COSTS = ("kl", "ls")


@dataclass(frozen=True)
class NtfConfig:
    """Controls for a multiplicative-update fit."""

    k: int
    max_iterations: int = 200
    relative_objective_tolerance: float = 1e-5
    seed: int = 0
    cost: str = "kl"
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.relative_objective_tolerance > 0:
            raise ValueError("relative_objective_tolerance must be positive")
        if self.cost not in COSTS:
            raise ValueError(f"cost must be one of {COSTS}, got {self.cost!r}")
        if self.epsilon_floor < 0:
            raise ValueError("epsilon_floor must be non-negative")


@dataclass
class ObjectiveTrace:
    values: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iterations(self) -> int:
        return len(self.values)


def squared_error(
    t: SparseCountTensor, f: FactorSet, region: Region | None = None
) -> float:
    """Squared Euclidean cost over all cells (or a region), zeros included.

    Expands to sum(y^2) - 2*sum(y*yhat) + sum(yhat^2); the first two terms
    run over stored entries and the last is a Gram-product identity, so the
    cost is independent of the number of zero cells.
    """
    if f.shape != t.shape:
        raise ValueError(f"factor shape {f.shape} != tensor shape {t.shape}")
    if region is None:
        coords, values = t.coords, t.values
        gram = np.ones((f.k, f.k))
        for mat in f.factors:
            gram = gram * (mat.T @ mat)
        sq_mass = float(gram.sum())
    else:
        coords, values = region.filter_entries(t)
        sq_mass = region.sum_sq_recon(f.factors)
    y = values.astype(np.float64)
    yhat = reconstruct_entries(f, coords)
    return float(np.dot(y, y) - 2.0 * np.dot(y, yhat)) + sq_mass


def _entry_other_products(f: FactorSet, coords, mode: int) -> np.ndarray:
    parts = None
    for m in range(f.ndim):
        if m == mode:
            continue
        rows = f.factors[m][coords[:, m]]
        parts = rows.copy() if parts is None else parts * rows
    return parts


def _scatter_rows(size: int, k: int, index, rows) -> np.ndarray:
    out = np.zeros((size, k))
    np.add.at(out, index, rows)
    return out


def ntf_kl_sweep(
    f: FactorSet,
    t: SparseCountTensor,
    mode: int,
    region: Region | None = None,
    epsilon_floor: float = 1e-12,
) -> FactorSet:
    """One generalized-KL multiplicative update of one mode's factors.

    Numerator: sum over stored entries of the other modes' factor product
    times y/yhat.  Denominator: the same product summed over every cell
    (column-sum products).  A zero reconstruction under a stored count is
    an inadmissible zero and raises.
    """
    if region is None:
        coords, values = t.coords, t.values
    else:
        coords, values = region.filter_entries(t)
    n, k = f.factors[mode].shape
    if coords.shape[0]:
        other = _entry_other_products(f, coords, mode)
        yhat = (other * f.factors[mode][coords[:, mode]]).sum(axis=1)
        dead = yhat == 0.0
        if dead.any():
            coord = tuple(int(c) for c in coords[np.nonzero(dead)[0][0]])
            raise InadmissibleZeroError(
                f"zero reconstruction under count at entry {coord}"
            )
        numer = _scatter_rows(n, k, coords[:, mode], other * (values / yhat)[:, None])
    else:
        numer = np.zeros((n, k))
    if region is None:
        denom = np.ones(k)
        for m in range(f.ndim):
            if m != mode:
                denom = denom * f.factors[m].sum(axis=0)
        denom = np.broadcast_to(denom, (n, k))
    else:
        denom = region.other_mode_sums(f.factors, mode)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0.0, numer / np.where(denom > 0.0, denom, 1.0), 0.0)
    updated = np.maximum(f.factors[mode] * ratio, epsilon_floor)
    return f.replace_mode(mode, updated)


def ntf_ls_sweep(
    f: FactorSet,
    t: SparseCountTensor,
    mode: int,
    region: Region | None = None,
    epsilon_floor: float = 1e-12,
) -> FactorSet:
    """One Euclidean multiplicative update of one mode's factors.

    Numerator: other-mode factor products times y over stored entries.
    Denominator: the same products times the reconstruction, computed with
    the Gram-product identity.
    """
    if region is None:
        coords, values = t.coords, t.values
    else:
        coords, values = region.filter_entries(t)
    n, k = f.factors[mode].shape
    if coords.shape[0]:
        other = _entry_other_products(f, coords, mode)
        numer = _scatter_rows(n, k, coords[:, mode], other * values[:, None])
    else:
        numer = np.zeros((n, k))
    if region is None:
        gram = np.ones((k, k))
        for m in range(f.ndim):
            if m != mode:
                gram = gram * (f.factors[m].T @ f.factors[m])
        denom = f.factors[mode] @ gram
    else:
        denom = region.gram_denominator(f.factors, mode)
    if np.any((denom == 0.0) & (numer > 0.0)):
        raise DegenerateUpdateError(f"zero Euclidean denominator in mode {mode}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0.0, numer / np.where(denom > 0.0, denom, 1.0), 0.0)
    updated = np.maximum(f.factors[mode] * ratio, epsilon_floor)
    return f.replace_mode(mode, updated)


def _objective(t, f, cost, region=None):
    return generalized_kl(t, f, region) if cost == "kl" else squared_error(t, f, region)


def init_factors(t: SparseCountTensor, config: NtfConfig) -> FactorSet:
    """Uniform factors rescaled so the initial reconstruction mass matches
    the total observed count."""
    rng = np.random.default_rng(config.seed)
    mats = [rng.uniform(0.0, 1.0, size=(s, config.k)) for s in t.shape]
    f = FactorSet(mats)
    mass = total_recon_mass(f)
    total = float(t.values.sum())
    if mass > 0.0 and total > 0.0:
        scale = (total / mass) ** (1.0 / t.ndim)
        f = FactorSet([m * scale for m in mats])
    return f


def fit_ntf(t: SparseCountTensor, config: NtfConfig):
    """Multiplicative-update fit; returns (FactorSet, ObjectiveTrace).

    Sweeps the modes in ascending order and stops when the relative change
    of the cost drops below the tolerance or max_iterations is reached.
    """
    sweep = ntf_kl_sweep if config.cost == "kl" else ntf_ls_sweep
    f = init_factors(t, config)
    trace = ObjectiveTrace()
    previous = None
    for _ in range(config.max_iterations):
        for mode in range(t.ndim):
            f = sweep(f, t, mode, epsilon_floor=config.epsilon_floor)
        value = _objective(t, f, config.cost)
        trace.values.append(value)
        if previous is not None and abs(value - previous) <= (
            config.relative_objective_tolerance * abs(previous)
        ):
            trace.converged = True
            break
        previous = value
    return f, trace


def infer_heldout_time_factors_ntf(
    trained: FactorSet,
    test_slice: SparseCountTensor,
    mask: CellMask,
    config: NtfConfig,
):
    """Point-estimate time factors for unseen slices from the observed region.

    All non-time modes stay frozen at the trained factors; only the time
    mode is updated, with both the numerator and denominator restricted to
    the observed region.  Returns (FactorSet, ObjectiveTrace) where the
    factor set's time matrix holds one row per test step.
    """
    n_modes = trained.ndim
    time_mode = n_modes - 1
    if test_slice.ndim != n_modes or test_slice.shape[:-1] != trained.shape[:-1]:
        raise ValueError("test slice shape disagrees with the trained factors")
    observed_region = Region.from_mask(test_slice.shape, mask)
    if observed_region.n_cells == 0:
        raise EmptyRegionError("mask leaves no observed cells")
    observed, _ = apply_mask(test_slice, mask)

    rng = np.random.default_rng(config.seed)
    time0 = rng.uniform(0.0, 1.0, size=(test_slice.shape[time_mode], config.k))
    f = FactorSet(list(trained.factors[:time_mode]) + [time0])
    mass = observed_region.sum_recon(f.factors)
    total = float(observed.values.sum())
    if mass > 0.0 and total > 0.0:
        f = f.replace_mode(time_mode, time0 * (total / mass))

    sweep = ntf_kl_sweep if config.cost == "kl" else ntf_ls_sweep
    trace = ObjectiveTrace()
    previous = None
    for _ in range(config.max_iterations):
        f = sweep(f, observed, time_mode, region=observed_region,
                  epsilon_floor=config.epsilon_floor)
        value = _objective(observed, f, config.cost, region=observed_region)
        trace.values.append(value)
        if previous is not None and abs(value - previous) <= (
            config.relative_objective_tolerance * abs(previous)
        ):
            trace.converged = True
            break
        previous = value
    return f, trace
