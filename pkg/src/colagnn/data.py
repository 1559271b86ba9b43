"""Series and adjacency ingestion, min-max scaling, date splits and windowing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed input file or an impossible windowing request."""


@dataclass(frozen=True)
class EpiDataset:
    locations: tuple[str, ...]
    values: np.ndarray  # (N, T) weekly counts
    weeks: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != len(self.locations):
            raise DataError(f"values shape {values.shape} does not match {len(self.locations)} locations")
        if values.shape[1] != len(self.weeks):
            raise DataError(f"values have {values.shape[1]} weeks but {len(self.weeks)} labels")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "weeks", tuple(self.weeks))

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    @property
    def n_weeks(self) -> int:
        return self.values.shape[1]

    def slice_weeks(self, start: int, stop: int) -> "EpiDataset":
        return EpiDataset(self.locations, self.values[:, start:stop], self.weeks[start:stop])

    def with_values(self, values: np.ndarray) -> "EpiDataset":
        return EpiDataset(self.locations, values, self.weeks)


def _parse_number(cell: str, row: int, col: int, path) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col}: non-numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: row {row}, column {col}: non-finite value {cell!r}")
    return value


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def load_series(path) -> EpiDataset:
    """Read ``week,<loc1>,<loc2>,...`` rows; column order fixes location indexing."""
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise DataError(f"{path}: header needs a week column and at least one location")
    locations = [h.strip() for h in header[1:]]
    seen = set()
    for col, name in enumerate(locations, start=2):
        if name in seen:
            raise DataError(f"{path}: row 1, column {col}: duplicate location name {name!r}")
        seen.add(name)
    weeks, values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r}: expected {len(header)} columns, found {len(row)}")
        counts = []
        for c, cell in enumerate(row[1:], start=2):
            v = _parse_number(cell.strip(), r, c, path)
            if v < 0:
                raise DataError(f"{path}: row {r}, column {c}: negative count {cell!r}")
            counts.append(v)
        weeks.append(row[0].strip())
        values.append(counts)
    arr = np.array(values, dtype=np.float64).reshape(len(weeks), len(locations)).T
    return EpiDataset(tuple(locations), arr, tuple(weeks))


def format_number(value: float) -> str:
    """Shortest text that parses back to the identical float."""
    v = float(value)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def dump_series(ds: EpiDataset, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["week", *ds.locations])
    for t, week in enumerate(ds.weeks):
        w.writerow([week, *(format_number(v) for v in ds.values[:, t])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass(frozen=True)
class AdjacencyMatrix:
    locations: tuple[str, ...]
    raw: np.ndarray
    degree: np.ndarray = field(init=False)
    normalized: np.ndarray = field(init=False)

    def __post_init__(self):
        raw = np.array(self.raw, dtype=np.float64)
        n = len(self.locations)
        if raw.shape != (n, n):
            raise DataError(f"adjacency shape {raw.shape} does not match {n} locations")
        if not np.isin(raw, (0.0, 1.0)).all():
            raise DataError("adjacency entries must be 0 or 1")
        if not np.array_equal(raw, raw.T):
            i, j = np.argwhere(raw != raw.T)[0]
            raise DataError(f"adjacency is not symmetric at ({self.locations[i]}, {self.locations[j]})")
        np.fill_diagonal(raw, 1.0)
        degree = raw.sum(axis=1)
        inv_sqrt = 1.0 / np.sqrt(degree)
        normalized = inv_sqrt[:, None] * raw * inv_sqrt[None, :]
        for arr in (raw, degree, normalized):
            arr.flags.writeable = False
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "normalized", normalized)

    @classmethod
    def identity(cls, locations: Sequence[str]) -> "AdjacencyMatrix":
        return cls(tuple(locations), np.eye(len(locations)))


def load_adjacency(path, locations: Sequence[str]) -> AdjacencyMatrix:
    """Read a named 0/1 matrix and reorder it to ``locations``.

    The diagonal is forced to one; every location is its own neighbour.
    """
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [h.strip() for h in rows[0]]
    # the header may carry a corner cell above the row-name column
    if len(rows) > 1 and len(names) == len(rows[1]):
        names = names[1:]
    if sorted(names) != sorted(locations) or len(set(names)) != len(names):
        raise DataError(f"{path}: adjacency locations {names} do not match dataset locations {list(locations)}")
    n = len(names)
    if len(rows) - 1 != n:
        raise DataError(f"{path}: expected {n} matrix rows, found {len(rows) - 1}")
    mat = np.zeros((n, n))
    row_names = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != n + 1:
            raise DataError(f"{path}: row {r}: expected {n + 1} columns, found {len(row)}")
        row_names.append(row[0].strip())
        for c, cell in enumerate(row[1:], start=2):
            v = _parse_number(cell.strip(), r, c, path)
            if v not in (0.0, 1.0):
                raise DataError(f"{path}: row {r}, column {c}: entry must be 0 or 1, got {cell!r}")
            mat[r - 2, c - 2] = v
    if row_names != names:
        raise DataError(f"{path}: row names {row_names} differ from header order {names}")
    order = [names.index(loc) for loc in locations]
    return AdjacencyMatrix(tuple(locations), mat[np.ix_(order, order)])


def dump_adjacency(adj: AdjacencyMatrix, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *adj.locations])
    for name, row in zip(adj.locations, adj.raw):
        w.writerow([name, *(format_number(v) for v in row)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def split_bounds(n_weeks: int, ratios: Sequence[float] = (0.5, 0.2, 0.3)) -> tuple[int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise DataError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    # the tolerance keeps e.g. 360 * 0.7 = 251.99999... from flooring to 251
    a = math.floor(n_weeks * ratios[0] + 1e-9)
    b = math.floor(n_weeks * (ratios[0] + ratios[1]) + 1e-9)
    return a, b


def split_by_time(ds: EpiDataset, ratios: Sequence[float] = (0.5, 0.2, 0.3)):
    """Contiguous train | val | test slices cut at fixed dates."""
    a, b = split_bounds(ds.n_weeks, ratios)
    return ds.slice_weeks(0, a), ds.slice_weeks(a, b), ds.slice_weeks(b, ds.n_weeks)


@dataclass(frozen=True)
class Normalizer:
    """Per-location min-max scaling fitted on the training split.

    A location with max == min maps to 0 and inverts to its constant.
    """

    min: np.ndarray
    max: np.ndarray

    @property
    def span(self) -> np.ndarray:
        span = self.max - self.min
        return np.where(span > 0, span, 1.0)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Scale an ``(N, T)`` array (or a length-N vector)."""
        values = np.asarray(values, dtype=np.float64)
        lo, span, live = self._align(values)
        return np.where(live, (values - lo) / span, 0.0)

    def invert(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        lo, span, _ = self._align(values)
        return values * span + lo

    def invert_targets(self, values: np.ndarray) -> np.ndarray:
        """Inverse for arrays whose last axis indexes locations, e.g. ``(n, N)`` predictions."""
        return np.asarray(values, dtype=np.float64) * self.span + self.min

    def _align(self, values: np.ndarray):
        live = (self.max - self.min) > 0
        if values.ndim >= 2:
            return self.min[:, None], self.span[:, None], live[:, None]
        return self.min, self.span, live

    def apply_dataset(self, ds: EpiDataset) -> EpiDataset:
        return ds.with_values(self.apply(ds.values))


def fit_normalizer(train: EpiDataset, global_extrema: bool = False) -> Normalizer:
    """Fit min/max per location on ``train``.

    ``global_extrema`` uses one min/max over all locations instead; it is
    the alternative reading of the scaling rule and is off by default.
    """
    if train.n_weeks == 0:
        raise DataError("cannot fit a normalizer on an empty training split")
    if global_extrema:
        lo = np.full(train.n_locations, train.values.min())
        hi = np.full(train.n_locations, train.values.max())
    else:
        lo = train.values.min(axis=1)
        hi = train.values.max(axis=1)
    return Normalizer(lo.copy(), hi.copy())


@dataclass(frozen=True)
class WindowSet:
    """Direct h-step samples from one split.

    ``inputs`` is ``(n, N, W)``, ``targets`` is ``(n, N)``.  ``target_index``
    holds each target's week index within the source split and
    ``offset`` that split's first week in the full series.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_index: np.ndarray
    window: int
    horizon: int
    offset: int = 0
    weeks: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_locations(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.inputs[idx], self.targets[idx], self.target_index[idx],
                         self.window, self.horizon, self.offset, self.weeks)


def n_windows(n_weeks: int, window: int, horizon: int) -> int:
    return n_weeks - window - horizon + 1


def make_windows(ds: EpiDataset, window: int, horizon: int, split: str = "series",
                 offset: int = 0) -> WindowSet:
    """One sample per start offset: input weeks ``[s, s+W)``, target week ``s+W+h-1``."""
    if window < 1 or horizon < 1:
        raise DataError(f"window and horizon must be >= 1, got W={window}, h={horizon}")
    n = n_windows(ds.n_weeks, window, horizon)
    if n < 1:
        raise DataError(f"{split} split has {ds.n_weeks} weeks; needs at least W+h = {window + horizon}")
    X = ds.values
    view = np.lib.stride_tricks.sliding_window_view(X, window, axis=1)[:, :n]  # (N, n, W)
    inputs = np.ascontiguousarray(view.transpose(1, 0, 2))
    tidx = np.arange(n) + window + horizon - 1
    targets = np.ascontiguousarray(X[:, tidx].T)
    return WindowSet(inputs, targets, tidx, window, horizon, offset, ds.weeks)


@dataclass(frozen=True)
class PreparedData:
    """Everything a run needs for one (W, h): normalizer, the three window sets
    and the normalized training weeks themselves."""

    normalizer: Normalizer
    train: WindowSet
    val: WindowSet
    test: WindowSet
    bounds: tuple[int, int]
    train_split: EpiDataset


def prepare(ds: EpiDataset, window: int, horizon: int,
            ratios: Sequence[float] = (0.5, 0.2, 0.3), global_extrema: bool = False) -> PreparedData:
    a, b = split_bounds(ds.n_weeks, ratios)
    train, val, test = ds.slice_weeks(0, a), ds.slice_weeks(a, b), ds.slice_weeks(b, ds.n_weeks)
    norm = fit_normalizer(train, global_extrema)
    parts = []
    for name, part, off in (("train", train, 0), ("validation", val, a), ("test", test, b)):
        parts.append(make_windows(norm.apply_dataset(part), window, horizon, name, off))
    return PreparedData(norm, *parts, bounds=(a, b), train_split=norm.apply_dataset(train))
