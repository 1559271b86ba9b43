"""Pooled RMSE / MAE / PCC on count-scale predictions, and seed aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Normalizer, WindowSet

METRICS = ("rmse", "mae", "pcc")


def _pair(y_pred, y_true) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_pred, dtype=np.float64).ravel()
    b = np.asarray(y_true, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} predictions vs {b.size} targets")
    if a.size == 0:
        raise ValueError("metrics need at least one value")
    return a, b


def rmse(y_pred, y_true) -> float:
    a, b = _pair(y_pred, y_true)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mae(y_pred, y_true) -> float:
    a, b = _pair(y_pred, y_true)
    return float(np.mean(np.abs(a - b)))


def pcc(y_pred, y_true) -> float:
    """Sample Pearson correlation; ``nan`` (missing) when either side is constant."""
    a, b = _pair(y_pred, y_true)
    if a.size < 2:
        raise ValueError("PCC needs at least two values")
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.sum(da * da))) * math.sqrt(float(np.sum(db * db)))
    if denom == 0.0:
        return math.nan
    return float(np.clip(np.sum(da * db) / denom, -1.0, 1.0))


def predict_windows(model, windows: WindowSet | np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Normalized-space predictions ``(n, N)`` in eval mode."""
    inputs = windows.inputs if isinstance(windows, WindowSet) else np.asarray(windows)
    out = [model.predict_array(inputs[i:i + batch_size]) for i in range(0, len(inputs), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, inputs.shape[1]))


def denormalize(pred: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """Back to counts; negative counts are clipped to zero."""
    return np.maximum(normalizer.invert_targets(pred), 0.0)


@dataclass
class Evaluation:
    rmse: float
    mae: float
    pcc: float
    y_true: np.ndarray  # (n, N) counts
    y_pred: np.ndarray

    def metrics(self) -> dict[str, float]:
        return {"rmse": self.rmse, "mae": self.mae, "pcc": self.pcc}


def evaluate(model, test: WindowSet, normalizer: Normalizer, per_region: bool = False):
    """Metrics on predictions pooled across every location and test window.

    With ``per_region`` a second dict maps each location index to its own
    metrics; pooling stays the default.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    y_pred = denormalize(predict_windows(model, test), normalizer)
    y_true = normalizer.invert_targets(test.targets)
    ev = Evaluation(rmse(y_pred, y_true), mae(y_pred, y_true), pcc(y_pred, y_true), y_true, y_pred)
    if not per_region:
        return ev
    regions = {i: {"rmse": rmse(y_pred[:, i], y_true[:, i]), "mae": mae(y_pred[:, i], y_true[:, i]),
                   "pcc": pcc(y_pred[:, i], y_true[:, i]) if len(test) > 1 else math.nan}
               for i in range(y_true.shape[1])}
    return ev, regions


def write_predictions(path, test: WindowSet, ev: Evaluation, locations: Sequence[str]) -> None:
    """``week,location,y_true,y_pred`` rows, week being the target week label."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["week", "location", "y_true", "y_pred"])
        for m, t in enumerate(test.target_index):
            week = test.weeks[t] if test.weeks else str(t + test.offset)
            for i, loc in enumerate(locations):
                w.writerow([week, loc, repr(float(ev.y_true[m, i])), repr(float(ev.y_pred[m, i]))])


def summarize(values: Sequence[float]) -> dict:
    """Mean and population SD over seeds, ignoring missing (nan) entries."""
    vals = [float(v) for v in values]
    finite = [v for v in vals if not math.isnan(v)]
    if finite:
        mean = float(np.mean(finite))
        sd = float(np.std(finite))
    else:
        mean = sd = math.nan
    return {"per_seed": vals, "mean": mean, "sd": sd}


@dataclass
class MetricsReport:
    """``{horizon: {metric: {per_seed, mean, sd}}}``."""

    results: dict[int, dict[str, dict]] = field(default_factory=dict)

    def add(self, horizon: int, per_seed: Sequence[dict[str, float]]) -> None:
        self.results[int(horizon)] = {m: summarize([s[m] for s in per_seed]) for m in METRICS}

    def mean(self, horizon: int, metric: str) -> float:
        return self.results[int(horizon)][metric]["mean"]

    def to_json(self) -> dict:
        return {str(h): {m: {k: _nan_to_none(v) for k, v in cell.items()} for m, cell in ms.items()}
                for h, ms in sorted(self.results.items())}

    @classmethod
    def from_json(cls, doc: dict) -> "MetricsReport":
        res = {}
        for h, ms in doc.items():
            res[int(h)] = {m: {k: _none_to_nan(v) for k, v in cell.items()} for m, cell in ms.items()}
        return cls(res)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _nan_to_none(v):
    if isinstance(v, list):
        return [_nan_to_none(x) for x in v]
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def _none_to_nan(v):
    if isinstance(v, list):
        return [_none_to_nan(x) for x in v]
    return math.nan if v is None else v
