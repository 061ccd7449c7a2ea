"""Sparse M-way count tensors built from dyadic event records.

A tensor is stored in coordinate form: an (nnz, M) integer coordinate array
plus an (nnz,) array of positive counts; zero cells are implicit.  The
canonical four-way layout is sender x receiver x action x time, with the
time mode last, but all operations here work for any M >= 1 unless they
explicitly involve the actor or time modes.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTensorError,
    IngestionError,
    LabelMismatchError,
    SplitError,
    UndefinedStatisticError,
)

BIN_WIDTHS = ("day", "week", "month")


@dataclass(frozen=True)
class EventRecord:
    """One dyadic event: sender took an action of some type toward receiver.

    All label fields must be non-empty strings; the timestamp is a parsed
    date-time interpreted in UTC (naive timestamps are taken as UTC).
    """

    sender: str
    receiver: str
    action: str
    timestamp: _dt.datetime

    def __post_init__(self):
        for name in ("sender", "receiver", "action"):
            if not getattr(self, name):
                raise IngestionError(f"event record has empty {name!r} field")
        if not isinstance(self.timestamp, _dt.datetime):
            raise IngestionError("event record timestamp must be a datetime")

    def utc_date(self) -> _dt.date:
        ts = self.timestamp
        if ts.tzinfo is not None:
            ts = ts.astimezone(_dt.timezone.utc)
        return ts.date()


class SparseCountTensor:
    """Immutable M-way tensor of positive integer counts in coordinate form.

    Parameters
    ----------
    shape : sequence of int
        Per-mode sizes, all positive.
    coords : array-like, (nnz, M)
        Integer coordinates of the stored (non-zero) cells.
    values : array-like, (nnz,)
        Positive integer counts, one per coordinate row.
    mode_labels : list of list of str
        One label per index per mode; lengths must match ``shape``.

    Entries are kept sorted in lexicographic coordinate order so that two
    tensors with the same content compare and serialize identically.
    """

    __slots__ = ("shape", "coords", "values", "mode_labels")

    def __init__(self, shape, coords, values, mode_labels):
        shape = tuple(int(s) for s in shape)
        if len(shape) < 1 or any(s <= 0 for s in shape):
            raise ValueError(f"invalid tensor shape {shape}")
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(shape))
        values = np.asarray(values, dtype=np.int64).reshape(-1)
        if coords.shape[0] != values.shape[0]:
            raise ValueError("coords and values disagree on entry count")
        if values.size:
            if values.min() < 1:
                raise ValueError("stored counts must be >= 1 (zeros are implicit)")
            if coords.min() < 0 or np.any(coords >= np.asarray(shape)):
                raise ValueError("coordinate out of range for shape")
            flat = np.ravel_multi_index(coords.T, shape)
            order = np.argsort(flat, kind="stable")
            flat = flat[order]
            if flat.size > 1 and np.any(flat[1:] == flat[:-1]):
                dup = coords[order][np.nonzero(flat[1:] == flat[:-1])[0][0]]
                raise ValueError(f"duplicate coordinate {tuple(dup)}")
            coords = coords[order]
            values = values[order]
        if len(mode_labels) != len(shape):
            raise ValueError("need one label list per mode")
        mode_labels = [list(map(str, lab)) for lab in mode_labels]
        for m, lab in enumerate(mode_labels):
            if len(lab) != shape[m]:
                raise ValueError(f"mode {m}: {len(lab)} labels for size {shape[m]}")
        coords.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mode_labels", mode_labels)

    def __setattr__(self, name, value):
        raise AttributeError("SparseCountTensor is immutable")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def total_count(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other):
        return (
            isinstance(other, SparseCountTensor)
            and self.shape == other.shape
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.values, other.values)
            and self.mode_labels == other.mode_labels
        )

    def __repr__(self):
        return f"SparseCountTensor(shape={self.shape}, nnz={self.nnz})"

    def todense(self) -> np.ndarray:
        """Materialize the full tensor; only sensible for small shapes."""
        dense = np.zeros(self.shape, dtype=np.int64)
        if self.nnz:
            dense[tuple(self.coords.T)] = self.values
        return dense

    @classmethod
    def from_entries(cls, shape, entries, mode_labels=None, sum_duplicates=False):
        """Build from an iterable of (coordinate, count) pairs.

        With ``sum_duplicates`` repeated coordinates are aggregated, which is
        the convention used when loading tensor files.
        """
        entries = list(entries)
        coords = np.asarray([e[0] for e in entries], dtype=np.int64).reshape(
            -1, len(shape)
        )
        values = np.asarray([e[1] for e in entries], dtype=np.int64)
        if sum_duplicates and coords.shape[0]:
            flat = np.ravel_multi_index(coords.T, shape)
            uniq, inv = np.unique(flat, return_inverse=True)
            summed = np.bincount(inv, weights=values.astype(np.float64))
            coords = np.stack(np.unravel_index(uniq, shape), axis=1)
            values = summed.astype(np.int64)
        if mode_labels is None:
            mode_labels = default_labels(shape)
        return cls(shape, coords, values, mode_labels)


def default_labels(shape) -> list[list[str]]:
    """Index-number labels, shared between the two actor modes."""
    return [[str(i) for i in range(s)] for s in shape]


# ---------------------------------------------------------------------------
# Event ingestion
# ---------------------------------------------------------------------------


def _parse_timestamp(text: str) -> _dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return _dt.datetime.fromisoformat(text)
    except ValueError as exc:
        raise IngestionError(f"unparseable timestamp {text!r}") from exc


def _bin_index(day: _dt.date, start: _dt.date, bin_width: str) -> int:
    if bin_width == "day":
        return (day - start).days
    if bin_width == "week":
        return (day - start).days // 7
    if bin_width == "month":
        return (day.year - start.year) * 12 + (day.month - start.month)
    raise ValueError(f"bin_width must be one of {BIN_WIDTHS}, got {bin_width!r}")


def _time_labels(start: _dt.date, n_bins: int, bin_width: str) -> list[str]:
    if bin_width == "month":
        months = start.year * 12 + (start.month - 1)
        out = []
        for t in range(n_bins):
            y, m = divmod(months + t, 12)
            out.append(f"{y:04d}-{m + 1:02d}")
        return out
    step = 1 if bin_width == "day" else 7
    return [(start + _dt.timedelta(days=step * t)).isoformat() for t in range(n_bins)]


def ingest_events(records, bin_width, date_range, drop_self_actions=True):
    """Aggregate dyadic event records into a four-way count tensor.

    Parameters
    ----------
    records : list of EventRecord
    bin_width : {"day", "week", "month"}
        Time-step granularity.  Bins are anchored at the first day of
        ``date_range``; "month" means calendar month.
    date_range : (date, date)
        Inclusive start and end dates; records outside are dropped.
    drop_self_actions : bool
        Drop records whose sender equals their receiver, leaving the
        diagonal of every sender-receiver slice empty.

    Returns
    -------
    SparseCountTensor
        Shape (actors, actors, actions, time steps).  The actor modes share
        one label set: the union of senders and receivers observed in the
        retained records, in sorted order.  Counts are exact multiplicities.
    """
    if bin_width not in BIN_WIDTHS:
        raise ValueError(f"bin_width must be one of {BIN_WIDTHS}, got {bin_width!r}")
    start, end = date_range
    if isinstance(start, _dt.datetime):
        start = start.date()
    if isinstance(end, _dt.datetime):
        end = end.date()
    if start > end:
        raise ValueError(f"empty date range {start}..{end}")
    if not records:
        raise EmptyTensorError("no event records supplied")

    kept = []
    for rec in records:
        day = rec.utc_date()
        if day < start or day > end:
            continue
        if drop_self_actions and rec.sender == rec.receiver:
            continue
        kept.append((rec, day))
    if not kept:
        raise EmptyTensorError("no event records remain after filtering")

    actors = sorted({r.sender for r, _ in kept} | {r.receiver for r, _ in kept})
    actions = sorted({r.action for r, _ in kept})
    actor_ix = {a: i for i, a in enumerate(actors)}
    action_ix = {a: i for i, a in enumerate(actions)}
    n_bins = _bin_index(end, start, bin_width) + 1

    raw = np.empty((len(kept), 4), dtype=np.int64)
    for row, (rec, day) in enumerate(kept):
        raw[row, 0] = actor_ix[rec.sender]
        raw[row, 1] = actor_ix[rec.receiver]
        raw[row, 2] = action_ix[rec.action]
        raw[row, 3] = _bin_index(day, start, bin_width)

    shape = (len(actors), len(actors), len(actions), n_bins)
    coords, counts = np.unique(raw, axis=0, return_counts=True)
    labels = [actors, list(actors), actions, _time_labels(start, n_bins, bin_width)]
    return SparseCountTensor(shape, coords, counts, labels)


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------


def density(t: SparseCountTensor) -> float:
    """Fraction of cells that are non-zero."""
    return t.nnz / float(np.prod([float(s) for s in t.shape]))


def vmr_of_counts(values) -> float:
    """Population variance-to-mean ratio of a vector of counts."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise UndefinedStatisticError("VMR needs at least two counts")
    return float(values.var() / values.mean())


def vmr_nonzero(t: SparseCountTensor) -> float:
    """Variance-to-mean ratio of the stored (non-zero) counts.

    Values well above 1 indicate overdispersion relative to a Poisson.
    """
    return vmr_of_counts(t.values)


# ---------------------------------------------------------------------------
# Actor sorting, time splitting, concatenation
# ---------------------------------------------------------------------------


def sort_by_activity(t: SparseCountTensor):
    """Jointly permute the actor modes by descending overall activity.

    Activity of an actor is its total count summed over both the sender and
    receiver roles; ties break by lexicographic label order.  Returns the
    permuted tensor and the permutation ``perm`` where ``perm[new] = old``.
    """
    if t.ndim < 2 or t.mode_labels[0] != t.mode_labels[1]:
        raise LabelMismatchError("modes 0 and 1 must share one actor label set")
    n = t.shape[0]
    totals = np.zeros(n, dtype=np.float64)
    if t.nnz:
        totals += np.bincount(t.coords[:, 0], weights=t.values, minlength=n)
        totals += np.bincount(t.coords[:, 1], weights=t.values, minlength=n)
    labels = t.mode_labels[0]
    perm = np.array(
        sorted(range(n), key=lambda i: (-totals[i], labels[i])), dtype=np.int64
    )
    inverse = np.empty(n, dtype=np.int64)
    inverse[perm] = np.arange(n)

    coords = t.coords.copy()
    if t.nnz:
        coords[:, 0] = inverse[coords[:, 0]]
        coords[:, 1] = inverse[coords[:, 1]]
    new_labels = [labels[i] for i in perm]
    mode_labels = [new_labels, list(new_labels)] + [
        list(lab) for lab in t.mode_labels[2:]
    ]
    return SparseCountTensor(t.shape, coords, t.values, mode_labels), perm


@dataclass(frozen=True)
class TimeSplit:
    """A train/test partition of the time steps of one tensor."""

    train: SparseCountTensor
    test: SparseCountTensor
    train_steps: np.ndarray
    test_steps: np.ndarray


def _take_time_steps(t: SparseCountTensor, steps: np.ndarray) -> SparseCountTensor:
    """Restrict to the given (sorted) time steps, reindexed chronologically."""
    time_mode = t.ndim - 1
    remap = -np.ones(t.shape[time_mode], dtype=np.int64)
    remap[steps] = np.arange(len(steps))
    keep = remap[t.coords[:, time_mode]] >= 0
    coords = t.coords[keep].copy()
    coords[:, time_mode] = remap[coords[:, time_mode]]
    shape = t.shape[:time_mode] + (len(steps),)
    labels = [list(lab) for lab in t.mode_labels[:time_mode]]
    labels.append([t.mode_labels[time_mode][s] for s in steps])
    return SparseCountTensor(shape, coords, t.values[keep], labels)


def split_time(t: SparseCountTensor, test_fraction: float, seed: int) -> TimeSplit:
    """Randomly partition the time steps into train and test sets.

    The test set holds ``round(test_fraction * T)`` steps (at least one);
    both sides keep their slices in original chronological order and record
    which original steps they map to.  Reproducible for a given seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_time = t.shape[-1]
    n_test = max(1, int(np.floor(test_fraction * n_time + 0.5)))
    if n_test >= n_time:
        raise SplitError(
            f"test_fraction {test_fraction} leaves no training steps (T={n_time})"
        )
    rng = np.random.default_rng(seed)
    test_steps = np.sort(rng.choice(n_time, size=n_test, replace=False))
    mask = np.ones(n_time, dtype=bool)
    mask[test_steps] = False
    train_steps = np.nonzero(mask)[0]
    return TimeSplit(
        train=_take_time_steps(t, train_steps),
        test=_take_time_steps(t, test_steps),
        train_steps=train_steps,
        test_steps=test_steps,
    )


def concat_time(a: SparseCountTensor, b: SparseCountTensor) -> SparseCountTensor:
    """Concatenate two tensors along the time mode (disjoint step ranges)."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ValueError("non-time mode sizes must match")
    if a.mode_labels[:-1] != b.mode_labels[:-1]:
        raise LabelMismatchError("non-time mode labels must match")
    shape = a.shape[:-1] + (a.shape[-1] + b.shape[-1],)
    coords_b = b.coords.copy()
    if b.nnz:
        coords_b[:, -1] += a.shape[-1]
    coords = np.vstack([a.coords, coords_b]) if (a.nnz or b.nnz) else a.coords
    values = np.concatenate([a.values, b.values])
    labels = [list(lab) for lab in a.mode_labels[:-1]]
    labels.append(list(a.mode_labels[-1]) + list(b.mode_labels[-1]))
    return SparseCountTensor(shape, coords, values, labels)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

EVENT_COLUMNS = ("sender", "receiver", "action", "timestamp")


def read_event_file(path) -> list[EventRecord]:
    """Read a delimited event file: header row, then one record per line.

    Required columns: sender, receiver, action, timestamp (ISO-8601).
    Errors identify the offending line number.
    """
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestionError(f"{path}: empty event file")
        missing = [c for c in EVENT_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise IngestionError(f"{path}: header is missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                records.append(
                    EventRecord(
                        sender=(row["sender"] or "").strip(),
                        receiver=(row["receiver"] or "").strip(),
                        action=(row["action"] or "").strip(),
                        timestamp=_parse_timestamp(row["timestamp"] or ""),
                    )
                )
            except IngestionError as exc:
                raise IngestionError(f"{path}: line {line}: {exc}") from exc
    return records


def write_event_file(records, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.sender, rec.receiver, rec.action, rec.timestamp.isoformat()]
            )


def save_tensor(t: SparseCountTensor, path) -> None:
    """Write the coordinate-list text format.

    First line holds the mode sizes; each further line is one entry as
    0-based coordinates followed by its count.  Round-trips exactly.
    """
    path = Path(path)
    with path.open("w") as fh:
        fh.write(" ".join(str(s) for s in t.shape) + "\n")
        for row, v in zip(t.coords, t.values):
            fh.write(" ".join(str(c) for c in row) + f" {v}\n")


def load_tensor(path, labels_path=None) -> SparseCountTensor:
    """Read the coordinate-list format; duplicate coordinates are summed."""
    path = Path(path)
    with path.open() as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise IngestionError(f"{path}: empty tensor file")
    try:
        shape = tuple(int(tok) for tok in lines[0].split())
        entries = []
        for ln in lines[1:]:
            toks = [int(tok) for tok in ln.split()]
            if len(toks) != len(shape) + 1:
                raise ValueError(f"expected {len(shape) + 1} fields, got {len(toks)}")
            entries.append((toks[:-1], toks[-1]))
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    labels = load_labels(labels_path, shape) if labels_path else None
    return SparseCountTensor.from_entries(shape, entries, labels, sum_duplicates=True)


def save_labels(mode_labels, path) -> None:
    """Write per-mode labels as tab-delimited (mode, index, label) lines."""
    path = Path(path)
    with path.open("w") as fh:
        for m, labels in enumerate(mode_labels):
            for i, lab in enumerate(labels):
                fh.write(f"{m}\t{i}\t{lab}\n")


def load_labels(path, shape) -> list[list[str]]:
    path = Path(path)
    labels = [[""] * s for s in shape]
    seen = [np.zeros(s, dtype=bool) for s in shape]
    with path.open() as fh:
        for ln, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}: line {ln}: expected 3 tab-separated fields")
            m, i, lab = int(parts[0]), int(parts[1]), parts[2]
            if not (0 <= m < len(shape)) or not (0 <= i < shape[m]):
                raise IngestionError(f"{path}: line {ln}: index out of range")
            labels[m][i] = lab
            seen[m][i] = True
    for m, s in enumerate(seen):
        if not s.all():
            raise IngestionError(f"{path}: mode {m} is missing labels")
    return labels
