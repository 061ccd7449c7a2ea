"""Strong-generalization heldout evaluation for count-tensor factorizations.

The protocol: sort actors by overall activity, split time steps into train
and test, fit each model on the training tensor, infer time factors for
each test slice from the observed part of an actor-pair mask, then score
the reconstruction of the heldout part.  Scores are averaged over several
random splits.  Zero cells of the heldout region are never materialized:
the absolute-error mass over zeros has a closed form and the thresholded
zero count streams over the region in blocks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bptf as _bptf
from . import ntf as _ntf
from .cp import FactorSet, reconstruct_entries
from .errors import SpecValidationError, UndefinedStatisticError
from .masking import Region, top_block_mask
from .tensors import SparseCountTensor, sort_by_activity, split_time, vmr_of_counts

MODEL_NAMES = ("ntf-ls", "ntf-kl", "bptf-geo", "bptf-ari")
METRIC_NAMES = ("mae", "mae_nz", "ham_z")


# ---------------------------------------------------------------------------
# Point metrics
# ---------------------------------------------------------------------------


def mae(predictions, truth) -> float:
    """Mean absolute error over every cell of a region, zeros included."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.size == 0:
        raise SpecValidationError("MAE over an empty region is undefined")
    return float(np.abs(predictions - truth).mean())


def mae_nz(predictions, truth) -> float:
    """Mean absolute error restricted to cells with a non-zero true count.

    Returns NaN (an undefined-metric marker, not an error) when the region
    holds no non-zero cells.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    keep = truth > 0
    if not keep.any():
        return math.nan
    return float(np.abs(predictions[keep] - truth[keep]).mean())


def ham_z(predictions, truth) -> float:
    """Fraction of truly zero cells predicted strictly above 0.5.

    Returns NaN when the region holds no zero cells.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    zero = truth == 0
    if not zero.any():
        return math.nan
    return float((predictions[zero] > 0.5).mean())


def region_metrics(
    f: FactorSet,
    truth: SparseCountTensor,
    region: Region,
    block_cells: int = 262144,
) -> dict:
    """MAE, MAE-NZ and HAM-Z of a factor set's reconstruction over a region.

    The absolute error over zero cells is the region's reconstruction mass
    minus the mass on non-zero cells; only the 0.5-threshold count streams
    over the region's cells, in blocks, so nothing dense is ever built.
    """
    n_cells = region.n_cells
    if n_cells == 0:
        raise SpecValidationError("metrics over an empty region are undefined")
    coords, values = region.filter_entries(truth)
    y = values.astype(np.float64)
    yhat_nz = reconstruct_entries(f, coords)
    nz_err = float(np.abs(yhat_nz - y).sum())
    # closed form, clamped against rounding when the region is all non-zero
    zero_mass = max(0.0, region.sum_recon(f.factors) - float(yhat_nz.sum()))
    n_zero = n_cells - coords.shape[0]

    over_total = 0
    for block in region.iter_cell_blocks(block_cells):
        over_total += int((reconstruct_entries(f, block) > 0.5).sum())
    over_zero = over_total - int((yhat_nz > 0.5).sum())

    return {
        "mae": (nz_err + zero_mass) / n_cells,
        "mae_nz": nz_err / coords.shape[0] if coords.shape[0] else math.nan,
        "ham_z": over_zero / n_zero if n_zero else math.nan,
    }


# ---------------------------------------------------------------------------
# Experiment specification and report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """One heldout-prediction scenario.

    ``n_prime`` sizes the upper-left actor block after activity sorting.
    With ``predict_complement`` False the block itself is predicted and its
    complement observed; with True the roles swap and the (sparser)
    complement is predicted.
    """

    n_prime: int
    predict_complement: bool = False
    test_fraction: float = 0.2
    seeds: tuple = (0, 1, 2)
    k: int = 50
    models: tuple = MODEL_NAMES
    alpha: float = 0.1
    max_iterations: int = 200
    tolerance: float = 1e-4
    epsilon_floor: float = 1e-12
    source: str = ""
    date_range: str = ""
    bin_width: str = ""

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "models", tuple(self.models))
        if not self.seeds:
            raise SpecValidationError("at least one split seed is required")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise SpecValidationError(f"unknown models {unknown}")
        if not self.models:
            raise SpecValidationError("at least one model is required")

    def scenario_label(self) -> str:
        base = f"top-{self.n_prime}"
        if self.predict_complement:
            base += "c"
        return f"{self.source}-{base}" if self.source else base


@dataclass
class SplitScores:
    seed: int
    density: float
    vmr: float
    model_metrics: dict
    failures: dict = field(default_factory=dict)


@dataclass
class ScenarioResult:
    label: str
    density: float
    vmr: float
    model_metrics: dict
    splits: list
    failures: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    scenarios: list

    def to_dict(self) -> dict:
        out = {"scenarios": []}
        for sc in self.scenarios:
            out["scenarios"].append(
                {
                    "label": sc.label,
                    "density": sc.density,
                    "vmr": sc.vmr,
                    "models": {m: dict(v) for m, v in sc.model_metrics.items()},
                    "failures": dict(sc.failures),
                    "splits": [
                        {
                            "seed": sp.seed,
                            "density": sp.density,
                            "vmr": sp.vmr,
                            "models": {m: dict(v) for m, v in sp.model_metrics.items()},
                            "failures": dict(sp.failures),
                        }
                        for sp in sc.splits
                    ],
                }
            )
        return out


# ---------------------------------------------------------------------------
# Running experiments
# ---------------------------------------------------------------------------


def _validate_spec(spec: ExperimentSpec, t: SparseCountTensor) -> None:
    if t.ndim < 3:
        raise SpecValidationError("the harness needs actor, actor and time modes")
    n = t.shape[0]
    if t.shape[1] != n:
        raise SpecValidationError("actor modes must have equal size")
    if not 1 <= spec.n_prime <= n:
        raise SpecValidationError(f"n_prime must be in [1, {n}], got {spec.n_prime}")
    observed = Region(
        t.shape, range(spec.n_prime), range(spec.n_prime), not spec.predict_complement
    )
    if observed.n_cells == 0:
        raise SpecValidationError("mask leaves no observed cells")
    if observed.invert().n_cells == 0:
        raise SpecValidationError("mask leaves an empty heldout region")


def _bptf_predictions(train, test, observed_mask, spec, seed, kinds):
    config = _bptf.FitConfig(
        k=spec.k,
        max_iterations=spec.max_iterations,
        relative_elbo_tolerance=spec.tolerance,
        seed=seed,
    )
    hyper = _bptf.Hyperparameters.default(train.ndim, alpha=spec.alpha)
    state, learned_hyper, _ = _bptf.fit(train, config, hyper)
    heldout_state, _ = _bptf.infer_heldout_time_factors(
        state, learned_hyper, test, observed_mask, config
    )
    out = {}
    for kind in kinds:
        out[kind] = _bptf.point_estimate(heldout_state, kind)
    return out


def _ntf_predictions(train, test, observed_mask, spec, seed, cost):
    config = _ntf.NtfConfig(
        k=spec.k,
        max_iterations=spec.max_iterations,
        relative_objective_tolerance=spec.tolerance,
        seed=seed,
        cost=cost,
        epsilon_floor=spec.epsilon_floor,
    )
    factors, _ = _ntf.fit_ntf(train, config)
    heldout_factors, _ = _ntf.infer_heldout_time_factors_ntf(
        factors, test, observed_mask, config
    )
    return heldout_factors


def _run_split(spec: ExperimentSpec, sorted_t, observed_mask, seed: int) -> SplitScores:
    ts = split_time(sorted_t, spec.test_fraction, seed)
    heldout_region = Region.from_mask(ts.test.shape, observed_mask).invert()
    _, heldout_values = heldout_region.filter_entries(ts.test)
    try:
        vmr = vmr_of_counts(heldout_values)
    except UndefinedStatisticError:
        vmr = math.nan
    split = SplitScores(
        seed=seed,
        density=heldout_region.density(ts.test),
        vmr=vmr,
        model_metrics={},
    )

    bptf_kinds = [m.split("-")[1] for m in spec.models if m.startswith("bptf-")]
    if bptf_kinds:
        kind_names = {"geo": "geometric", "ari": "arithmetic"}
        try:
            estimates = _bptf_predictions(
                ts.train, ts.test, observed_mask, spec, seed,
                [kind_names[k] for k in bptf_kinds],
            )
            for short, kind in kind_names.items():
                if short in bptf_kinds:
                    split.model_metrics[f"bptf-{short}"] = region_metrics(
                        estimates[kind], ts.test, heldout_region
                    )
        except Exception as exc:  # recorded, not fatal for other models
            for short in bptf_kinds:
                split.failures[f"bptf-{short}"] = f"{type(exc).__name__}: {exc}"
    for cost in ("kl", "ls"):
        name = f"ntf-{cost}"
        if name not in spec.models:
            continue
        try:
            factors = _ntf_predictions(
                ts.train, ts.test, observed_mask, spec, seed, cost
            )
            split.model_metrics[name] = region_metrics(
                factors, ts.test, heldout_region
            )
        except Exception as exc:
            split.failures[name] = f"{type(exc).__name__}: {exc}"
    return split


def run_experiment(
    spec: ExperimentSpec, t: SparseCountTensor, max_workers: int = 1
) -> EvalReport:
    """Run one scenario: split, fit, infer, score, average over splits.

    A model failure is recorded per model and per split; the remaining
    models are still reported.  Splits are independent and may run on
    worker threads; results are assembled in seed order, so identical
    spec, tensor and seeds give a bit-identical report either way.
    """
    _validate_spec(spec, t)
    sorted_t, _ = sort_by_activity(t)
    observed_mask = top_block_mask(
        spec.n_prime, complement=not spec.predict_complement
    )

    if max_workers > 1 and len(spec.seeds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            splits = list(
                pool.map(
                    lambda seed: _run_split(spec, sorted_t, observed_mask, seed),
                    spec.seeds,
                )
            )
    else:
        splits = [_run_split(spec, sorted_t, observed_mask, s) for s in spec.seeds]

    averaged = {}
    failures = {}
    for name in spec.models:
        rows = [sp.model_metrics[name] for sp in splits if name in sp.model_metrics]
        if rows:
            averaged[name] = {
                metric: float(np.mean([row[metric] for row in rows]))
                for metric in METRIC_NAMES
            }
        messages = [sp.failures[name] for sp in splits if name in sp.failures]
        if messages:
            failures[name] = messages[0]
    scenario = ScenarioResult(
        label=spec.scenario_label(),
        density=float(np.mean([sp.density for sp in splits])),
        vmr=float(np.mean([sp.vmr for sp in splits])),
        model_metrics=averaged,
        splits=splits,
        failures=failures,
    )
    return EvalReport(scenarios=[scenario])


def run_table(
    base_spec: ExperimentSpec,
    tensors: dict,
    n_primes,
    scenarios=("block", "complement"),
    max_workers: int = 1,
) -> EvalReport:
    """Build a multi-row report: one row per source, block size and side.

    ``tensors`` maps a source label to its tensor; ``scenarios`` selects
    whether the dense block, its complement, or both are predicted.
    """
    rows = []
    for source, tensor in tensors.items():
        for n_prime in n_primes:
            for side in scenarios:
                spec = replace(
                    base_spec,
                    source=source,
                    n_prime=n_prime,
                    predict_complement=(side == "complement"),
                )
                rows.extend(
                    run_experiment(spec, tensor, max_workers=max_workers).scenarios
                )
    return EvalReport(scenarios=rows)


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def write_report_text(report: EvalReport, path, models=MODEL_NAMES) -> None:
    """Delimited report, one row per scenario: density, VMR, then the
    MAE / MAE-NZ / HAM-Z triple for each model column group."""
    path = Path(path)
    present = [
        m for m in models if any(m in sc.model_metrics for sc in report.scenarios)
    ]
    header = ["scenario", "density", "vmr"]
    for m in present:
        header += [f"{m}:mae", f"{m}:mae_nz", f"{m}:ham_z"]
    lines = ["\t".join(header)]
    for sc in report.scenarios:
        row = [sc.label, _fmt(sc.density), _fmt(sc.vmr)]
        for m in present:
            scores = sc.model_metrics.get(m)
            if scores is None:
                row += ["failed"] * 3
            else:
                row += [_fmt(scores[k]) for k in METRIC_NAMES]
        lines.append("\t".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
