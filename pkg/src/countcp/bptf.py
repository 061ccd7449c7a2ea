"""Mean-field variational inference for Bayesian Poisson CP factorization.

Every latent factor gets an independent Gamma variational distribution with
shape ``gamma`` and rate ``delta``.  Coordinate ascent cycles through the
modes updating shapes from allocated counts and rates from the other modes'
arithmetic expectations; hyperparameter rate multipliers can be re-fit by
empirical Bayes between sweeps.  The evidence lower bound uses the standard
auxiliary-count tightening, so the count term needs only the stored entries
and the reconstruction mass has a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammaln

from .cp import (
    FactorSet,
    load_matrix,
    read_manifest,
    save_matrix,
    write_manifest,
)
from .errors import EmptyRegionError, NumericalDegeneracyError, NumericalError
from .masking import CellMask, Region, apply_mask
from .tensors import SparseCountTensor


@dataclass(frozen=True)
class Hyperparameters:
    """Shared Gamma shape ``alpha`` plus per-mode rate multipliers ``beta``.

    Each factor's prior is Gamma(alpha, alpha * beta[m]), so the prior mean
    is 1 / beta[m] and small alpha (default 0.1) induces sparsity.
    """

    alpha: float
    beta: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if any(b <= 0 for b in self.beta):
            raise ValueError("every beta must be positive")

    @classmethod
    def default(cls, n_modes: int, alpha: float = 0.1, beta: float = 1.0):
        return cls(alpha=alpha, beta=(beta,) * n_modes)

    def rate(self, mode: int) -> float:
        return self.alpha * self.beta[mode]


@dataclass(frozen=True)
class FitConfig:
    """Controls for a variational fit."""

    k: int
    max_iterations: int = 500
    relative_elbo_tolerance: float = 1e-5
    seed: int = 0
    learn_beta: bool = True
    fixed_modes: tuple = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.relative_elbo_tolerance > 0:
            raise ValueError("relative_elbo_tolerance must be positive")
        object.__setattr__(self, "fixed_modes", tuple(int(m) for m in self.fixed_modes))


@dataclass
class FitTrace:
    """Per-sweep ELBO values plus the hyperparameters in force at each sweep."""

    elbos: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iterations(self) -> int:
        return len(self.elbos)


class VariationalState:
    """Per-mode Gamma variational parameters with cached expectations.

    ``expect`` holds the arithmetic expectations gamma / delta and
    ``gexpect`` the geometric expectations exp(digamma(gamma)) / delta.
    Callers that pass caches explicitly are trusted (the warm-start path
    seeds both caches from a point estimate); ``refresh`` restores cache
    consistency for one mode after its parameters change.
    """

    __slots__ = ("gamma", "delta", "expect", "gexpect")

    def __init__(self, gamma, delta, expect=None, gexpect=None):
        gamma = [np.ascontiguousarray(g, dtype=np.float64) for g in gamma]
        delta = [np.ascontiguousarray(d, dtype=np.float64) for d in delta]
        if len(gamma) != len(delta):
            raise ValueError("need one gamma and one delta matrix per mode")
        for m, (g, d) in enumerate(zip(gamma, delta)):
            if g.shape != d.shape or g.ndim != 2:
                raise ValueError(f"mode {m}: gamma/delta shape mismatch")
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(d))):
                raise ValueError(f"mode {m}: non-finite variational parameters")
            if g.min() <= 0 or d.min() <= 0:
                raise ValueError(f"mode {m}: variational parameters must be positive")
        self.gamma = gamma
        self.delta = delta
        if expect is None or gexpect is None:
            self.expect = [None] * len(gamma)
            self.gexpect = [None] * len(gamma)
            for m in range(len(gamma)):
                self.refresh(m)
        else:
            self.expect = [np.ascontiguousarray(e, dtype=np.float64) for e in expect]
            self.gexpect = [np.ascontiguousarray(g, dtype=np.float64) for g in gexpect]

    @property
    def n_modes(self) -> int:
        return len(self.gamma)

    @property
    def k(self) -> int:
        return self.gamma[0].shape[1]

    @property
    def shape(self) -> tuple:
        return tuple(g.shape[0] for g in self.gamma)

    def refresh(self, mode: int) -> None:
        g, d = self.gamma[mode], self.delta[mode]
        self.expect[mode] = g / d
        self.gexpect[mode] = np.exp(digamma(g)) / d

    def copy(self) -> "VariationalState":
        return VariationalState(
            [g.copy() for g in self.gamma],
            [d.copy() for d in self.delta],
            [e.copy() for e in self.expect],
            [g.copy() for g in self.gexpect],
        )

    @classmethod
    def from_point_estimate(cls, factors: FactorSet, rate: float = 1.0):
        """Seed both expectation caches directly from a positive factor set.

        The caches deliberately coincide (arithmetic == geometric), which no
        exact Gamma satisfies; the next refresh restores consistency.  This
        is how a multiplicative-update solution warm-starts a Bayesian fit.
        """
        gamma = [np.maximum(f, 1e-300) * rate for f in factors.factors]
        delta = [np.full_like(f, rate) for f in factors.factors]
        caches = [f.copy() for f in factors.factors]
        return cls(gamma, delta, expect=caches, gexpect=[c.copy() for c in caches])


def init_state(shape, config: FitConfig, hyper: Hyperparameters, jitter: float = 1.0):
    """Fresh state: gamma = alpha plus uniform jitter in (0, jitter * alpha).

    The jitter breaks component symmetry (a symmetric start never separates
    components); delta starts at the prior rate alpha * beta[m].  With
    ``jitter=0`` the state sits exactly at the prior, where the arithmetic
    expectation is the prior mean 1 / beta[m].  Deterministic per seed.
    """
    rng = np.random.default_rng(config.seed)
    gamma, delta = [], []
    for m, size in enumerate(shape):
        gamma.append(
            hyper.alpha + rng.uniform(0.0, hyper.alpha * jitter, size=(size, config.k))
        )
        delta.append(np.full((size, config.k), hyper.rate(m)))
    return VariationalState(gamma, delta)


def _entry_geo_products(state: VariationalState, coords) -> np.ndarray:
    parts = state.gexpect[0][coords[:, 0]].copy()
    for m in range(1, state.n_modes):
        parts *= state.gexpect[m][coords[:, m]]
    return parts


def update_gamma(
    state: VariationalState, t: SparseCountTensor, mode: int, hyper: Hyperparameters
):
    """Shape update for one mode: alpha plus this mode's allocated counts.

    Each stored entry splits its count across components proportionally to
    the geometric-expectation products; zero cells allocate nothing, so the
    sweep touches only stored entries.  Refreshes the mode's caches.
    """
    n, k = state.gamma[mode].shape
    new = np.full((n, k), hyper.alpha)
    if t.nnz:
        parts = _entry_geo_products(state, t.coords)
        totals = parts.sum(axis=1)
        bad = ~np.isfinite(totals) | (totals <= 0.0)
        if bad.any():
            coord = tuple(int(c) for c in t.coords[np.nonzero(bad)[0][0]])
            raise NumericalDegeneracyError(
                f"all-component geometric mass vanished at entry {coord}"
            )
        alloc = (t.values / totals)[:, None] * parts
        np.add.at(new, t.coords[:, mode], alloc)
    state.gamma[mode] = new
    state.refresh(mode)
    return state


def update_delta(
    state: VariationalState,
    t: SparseCountTensor,
    mode: int,
    hyper: Hyperparameters,
    region: Region | None = None,
):
    """Rate update for one mode: prior rate plus the other modes' mass.

    Unmasked, the sum over all other-mode coordinates collapses to the
    product of the other modes' expectation column sums, identical for
    every row.  Under a cell region the sum ranges over observed cells
    only.  Refreshes the mode's caches.
    """
    n, k = state.delta[mode].shape
    if region is None:
        other = np.ones(k)
        for m in range(state.n_modes):
            if m != mode:
                other = other * state.expect[m].sum(axis=0)
        new = np.broadcast_to(hyper.rate(mode) + other, (n, k)).copy()
    else:
        new = hyper.rate(mode) + region.other_mode_sums(state.expect, mode)
    if not np.all(np.isfinite(new)):
        raise NumericalDegeneracyError(f"rate update overflowed in mode {mode}")
    state.delta[mode] = new
    state.refresh(mode)
    return state


def update_beta(
    state: VariationalState,
    mode: int,
    hyper: Hyperparameters,
    mean_normalized: bool = False,
) -> Hyperparameters:
    """Empirical-Bayes update of one rate multiplier.

    The plain update sets beta[m] to the inverse of the summed arithmetic
    expectations of the mode's factors.  With ``mean_normalized`` the
    inverse mean is used instead, which is the exact ELBO maximizer in
    beta[m] and therefore the variant the fitting loop uses.
    """
    total = float(state.expect[mode].sum())
    if total <= 0.0:
        raise NumericalDegeneracyError(f"expectation sum vanished in mode {mode}")
    value = state.expect[mode].size / total if mean_normalized else 1.0 / total
    beta = list(hyper.beta)
    beta[mode] = value
    return Hyperparameters(alpha=hyper.alpha, beta=tuple(beta))


def _gamma_prior_terms(state: VariationalState, hyper: Hyperparameters, mode: int):
    """Expected log prior plus entropy, summed over one mode's factors."""
    g, d = state.gamma[mode], state.delta[mode]
    rate = hyper.rate(mode)
    alpha = hyper.alpha
    elog = digamma(g) - np.log(d)
    cross = (
        alpha * np.log(rate)
        - gammaln(alpha)
        + (alpha - 1.0) * elog
        - rate * (g / d)
    )
    entropy = g - np.log(d) + gammaln(g) + (1.0 - g) * digamma(g)
    return float(cross.sum()), float(entropy.sum())


def compute_elbo(
    state: VariationalState,
    t: SparseCountTensor,
    hyper: Hyperparameters,
    region: Region | None = None,
) -> float:
    """Evidence lower bound of the current state.

    Uses the auxiliary-count tightening: the count term is the stored
    entries' counts times the log of their summed geometric-expectation
    products, the reconstruction mass is the closed-form sum of arithmetic
    expectation products, and each factor adds its Gamma prior cross-entropy
    and entropy.  Raises if any named term goes non-finite.
    """
    count_term = 0.0
    if t.nnz:
        parts = _entry_geo_products(state, t.coords)
        totals = parts.sum(axis=1)
        if np.any(totals <= 0.0) or not np.all(np.isfinite(totals)):
            raise NumericalError("ELBO count term is non-finite (zero geometric mass)")
        y = t.values.astype(np.float64)
        count_term = float(np.dot(y, np.log(totals)) - gammaln(y + 1.0).sum())
    if region is None:
        mass = np.ones(state.k)
        for m in range(state.n_modes):
            mass = mass * state.expect[m].sum(axis=0)
        mass = float(mass.sum())
    else:
        mass = region.sum_recon(state.expect)
    prior = 0.0
    for m in range(state.n_modes):
        cross, entropy = _gamma_prior_terms(state, hyper, m)
        for name, value in (("prior cross-entropy", cross), ("entropy", entropy)):
            if not np.isfinite(value):
                raise NumericalError(f"ELBO {name} term is non-finite in mode {m}")
        prior += cross + entropy
    elbo = count_term - mass + prior
    if not np.isfinite(elbo):
        raise NumericalError("ELBO reconstruction-mass term is non-finite")
    return elbo


def fit(
    t: SparseCountTensor,
    config: FitConfig,
    hyper: Hyperparameters | None = None,
    state: VariationalState | None = None,
    region: Region | None = None,
):
    """Coordinate-ascent variational fit.

    Each sweep updates, for every non-frozen mode in ascending order, the
    shape then the rate parameters; with ``learn_beta`` the rate multipliers
    are then re-fit.  Stops when the relative ELBO change drops below the
    tolerance or after ``max_iterations`` sweeps; non-convergence is
    reported in the trace, not raised.  Returns (state, hyper, trace).
    """
    if hyper is None:
        hyper = Hyperparameters.default(t.ndim)
    if state is None:
        state = init_state(t.shape, config, hyper)
    if state.shape != t.shape:
        raise ValueError(f"state shape {state.shape} != tensor shape {t.shape}")
    free_modes = [m for m in range(t.ndim) if m not in config.fixed_modes]
    trace = FitTrace()
    previous = None
    for _ in range(config.max_iterations):
        for mode in free_modes:
            update_gamma(state, t, mode, hyper)
            update_delta(state, t, mode, hyper, region=region)
        if config.learn_beta:
            for mode in free_modes:
                hyper = update_beta(state, mode, hyper, mean_normalized=True)
        elbo = compute_elbo(state, t, hyper, region=region)
        trace.elbos.append(elbo)
        trace.betas.append(hyper.beta)
        if previous is not None and abs(elbo - previous) <= (
            config.relative_elbo_tolerance * abs(previous)
        ):
            trace.converged = True
            break
        previous = elbo
    return state, hyper, trace


def point_estimate(state: VariationalState, kind: str) -> FactorSet:
    """Factor point estimates from the variational distribution.

    ``kind`` selects the arithmetic expectations gamma/delta or the
    geometric expectations exp(digamma(gamma))/delta; the geometric ones
    are never larger and are the recommended choice for prediction.
    """
    if kind == "arithmetic":
        return FactorSet([e.copy() for e in state.expect])
    if kind == "geometric":
        return FactorSet([g.copy() for g in state.gexpect])
    raise ValueError(f"kind must be 'arithmetic' or 'geometric', got {kind!r}")


def infer_heldout_time_factors(
    trained: VariationalState,
    hyper: Hyperparameters,
    test_slice: SparseCountTensor,
    mask: CellMask,
    config: FitConfig,
):
    """Infer time-mode variational parameters for unseen slices.

    All non-time modes stay frozen at the trained parameters (bit for bit);
    only the observed region of the test slices feeds the time-mode shape
    and rate sums.  Returns the fitted state (its last-mode gamma/delta are
    the per-test-step parameters) and the fit trace.
    """
    n_modes = trained.n_modes
    time_mode = n_modes - 1
    if test_slice.ndim != n_modes or test_slice.shape[:-1] != trained.shape[:-1]:
        raise ValueError("test slice shape disagrees with the trained state")
    observed_region = Region.from_mask(test_slice.shape, mask)
    if observed_region.n_cells == 0:
        raise EmptyRegionError("mask leaves no observed cells")
    observed, _ = apply_mask(test_slice, mask)

    run_config = replace(
        config,
        k=trained.k,
        fixed_modes=tuple(range(time_mode)),
        learn_beta=False,
    )
    state = init_state(test_slice.shape, run_config, hyper)
    for m in range(time_mode):
        state.gamma[m] = trained.gamma[m].copy()
        state.delta[m] = trained.delta[m].copy()
        state.expect[m] = trained.expect[m].copy()
        state.gexpect[m] = trained.gexpect[m].copy()
    state, _, trace = fit(
        observed, run_config, hyper, state=state, region=observed_region
    )
    return state, trace


# ---------------------------------------------------------------------------
# State files and traces
# ---------------------------------------------------------------------------


def save_state(state: VariationalState, hyper: Hyperparameters, directory) -> Path:
    """Write a state bundle: manifest, per-mode gamma and delta matrices."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs = [
        ("modes", state.n_modes),
        ("k", state.k),
        ("shape", " ".join(str(s) for s in state.shape)),
        ("alpha", f"{hyper.alpha:.17g}"),
        ("beta", " ".join(f"{b:.17g}" for b in hyper.beta)),
    ]
    for m in range(state.n_modes):
        gname, dname = f"gamma_mode{m}.txt", f"delta_mode{m}.txt"
        save_matrix(state.gamma[m], directory / gname)
        save_matrix(state.delta[m], directory / dname)
        pairs.append((f"gamma_{m}", gname))
        pairs.append((f"delta_{m}", dname))
    write_manifest(directory / "manifest.txt", pairs)
    return directory


def load_state(directory):
    """Read a state bundle; caches are recomputed from gamma and delta."""
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.txt")
    n_modes = int(manifest["modes"])
    gamma = [load_matrix(directory / manifest[f"gamma_{m}"]) for m in range(n_modes)]
    delta = [load_matrix(directory / manifest[f"delta_{m}"]) for m in range(n_modes)]
    hyper = Hyperparameters(
        alpha=float(manifest["alpha"]),
        beta=tuple(float(b) for b in manifest["beta"].split()),
    )
    return VariationalState(gamma, delta), hyper


def write_trace(trace: FitTrace, path) -> None:
    """Delimited trace: iteration, ELBO, then the rate multipliers."""
    path = Path(path)
    with path.open("w") as fh:
        for i, (elbo, betas) in enumerate(zip(trace.elbos, trace.betas), start=1):
            beta_text = " ".join(f"{b:.17g}" for b in betas)
            fh.write(f"{i} {elbo:.17g} {beta_text}\n")
