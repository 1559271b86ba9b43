"""Flat ``.npz`` checkpoints: named row-major float64 arrays plus a JSON header.

The header (stored under ``__meta__``) records the model kind and
configuration, the location names and the horizon.  The normalizer and,
for Cola-GNN, the normalized adjacency are stored as arrays.  Loading
never unpickles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import ArmaModel, DirectLinearModel, RNNBaseline
from .data import Normalizer
from .diffcore import Tensor
from .model import ColaGNN, ColaGnnConfig

FORMAT = "colagnn-checkpoint/1"


@dataclass
class Checkpoint:
    model: object
    normalizer: Normalizer
    locations: tuple[str, ...]
    horizon: int
    meta: dict


def save_checkpoint(path, model, normalizer: Normalizer, locations, horizon: int, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {"format": FORMAT, "model": model.metadata(), "locations": list(locations),
            "horizon": int(horizon), "extra": extra or {}}
    arrays = {f"param/{k}": np.array(v, dtype=np.float64, order="C") for k, v in model.state_arrays().items()}
    arrays["normalizer/min"] = normalizer.min
    arrays["normalizer/max"] = normalizer.max
    if isinstance(model, ColaGNN):
        arrays["buffer/adjacency"] = model.adjacency
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: not a {FORMAT} file")
        params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
        normalizer = Normalizer(z["normalizer/min"].copy(), z["normalizer/max"].copy())
        adjacency = z["buffer/adjacency"].copy() if "buffer/adjacency" in z.files else None
    info = meta["model"]
    kind = info["kind"]
    if kind == "cola-gnn":
        cfg = ColaGnnConfig.from_dict(info["config"])
        tensors = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
        model = ColaGNN(cfg, adjacency, info["window"], params=tensors)
    elif kind == "rnn":
        tensors = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
        model = RNNBaseline(info["hidden"], info["window"], dropout=info["dropout"], params=tensors)
    elif kind in ("gar", "ar", "var"):
        model = DirectLinearModel(kind, params[f"{kind}_coef"], params[f"{kind}_intercept"], info["window"])
    elif kind == "arma":
        model = ArmaModel(params["arma_long_coef"], params["arma_long_intercept"], params["arma_ar_coef"],
                          params["arma_ma_coef"], params["arma_intercept"], info["window"], info["q"],
                          info["horizon"])
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return Checkpoint(model, normalizer, tuple(meta["locations"]), int(meta["horizon"]), meta)
