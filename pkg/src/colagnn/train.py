"""L1 objective, Adam with coupled weight decay, early-stopped training and multi-seed trials."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from .data import PreparedData, WindowSet
from .diffcore import Tensor
from .evaluate import MetricsReport, evaluate
from .model import glorot_init, is_bias  # noqa: F401  (glorot_init re-exported)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    weight_decay: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 1500
    patience: int = 200
    seed: int = 0
    trials: int = 10

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")

    def to_dict(self) -> dict:
        return asdict(self)


def l1_loss(y_pred: Tensor, y_true) -> Tensor:
    """Sum of absolute residuals over the whole batch."""
    y_true = np.asarray(y_true.data if isinstance(y_true, Tensor) else y_true, dtype=np.float64)
    if y_pred.shape != y_true.shape:
        raise dc.ShapeError(f"l1_loss: prediction shape {y_pred.shape} vs target shape {y_true.shape}")
    return dc.sum_abs(dc.add(y_pred, Tensor(-y_true)))


def l2_penalty(params: dict[str, Tensor], weight_decay: float) -> Tensor:
    """``weight_decay / 2 * sum(theta**2)`` over non-bias parameters.

    Its gradient is exactly the decay term ``adam_step`` adds, so training
    with coupled decay minimizes ``l1_loss + l2_penalty``.
    """
    total = Tensor(0.0)
    for name, p in params.items():
        if _decays(name):
            total = dc.add(total, dc.tsum(dc.mul(p, p)))
    return dc.scale(total, 0.5 * weight_decay)


def regularized_loss(model, x, y_true, weight_decay: float) -> Tensor:
    """The training objective in eval mode: summed L1 plus the L2 penalty."""
    return dc.add(l1_loss(model.forward(x), y_true), l2_penalty(model.params, weight_decay))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0, decay: Callable[[str], bool] | None = None,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, in place.

    Weight decay is coupled: ``weight_decay * theta`` is added to the
    gradient before the moment updates, for names where ``decay`` is true
    (every parameter when ``decay`` is None).
    """
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p.data) if g is None else g
        if weight_decay and (decay is None or decay(name)):
            g = g + weight_decay * p.data
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def _decays(name: str) -> bool:
    return not is_bias(name)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def best_val(self) -> float:
        return self.val_loss[self.best_epoch]


def mean_l1(model, ws: WindowSet, batch_size: int = 256) -> float:
    """Mean absolute error in normalized units, eval mode."""
    total = 0.0
    for i in range(0, len(ws), batch_size):
        pred = model.predict_array(ws.inputs[i:i + batch_size])
        total += float(np.abs(pred - ws.targets[i:i + batch_size]).sum())
    return total / (len(ws) * ws.n_locations)


def train_model(model, train: WindowSet, val: WindowSet, cfg: TrainConfig,
                rng: np.random.Generator | None = None, log_path=None) -> TrainReport:
    """Mini-batch Adam on the summed L1 loss with early stopping on validation L1.

    Training stops once validation loss has failed to improve (strictly)
    for ``patience`` consecutive epochs, or after ``max_epochs``.  The
    best-validation parameters are restored into ``model`` on return.
    Reported losses are mean absolute errors per (sample, location).
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation sets must be nonempty")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    params = model.params
    state = AdamState.zeros_like(params)
    report = TrainReport()
    best = math.inf
    best_params = {k: p.data.copy() for k, p in params.items()}
    stale = 0
    n = len(train)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                for p in params.values():
                    p.zero_grad()
                loss = l1_loss(model.forward(train.inputs[idx], training=True, rng=rng), train.targets[idx])
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch}; try a smaller learning rate than {cfg.lr}")
                loss.backward()
                adam_step(params, {k: p.grad for k, p in params.items()}, state,
                          cfg.lr, cfg.weight_decay, _decays)
                total += value
            train_l1 = total / (n * train.n_locations)
            val_l1 = mean_l1(model, val)
            if not math.isfinite(val_l1):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}; lower the learning rate")
            elapsed = time.perf_counter() - t0
            report.train_loss.append(train_l1)
            report.val_loss.append(val_l1)
            report.seconds.append(elapsed)
            if log_fh:
                log_fh.write(f"{epoch},{train_l1!r},{val_l1!r},{elapsed:.6f}\n")
            if val_l1 < best:
                best, stale = val_l1, 0
                report.best_epoch = epoch
                best_params = {k: p.data.copy() for k, p in params.items()}
            else:
                stale += 1
                if stale >= max(cfg.patience, 1):
                    break
    finally:
        if log_fh:
            log_fh.close()
    report.stopped_epoch = len(report.val_loss) - 1
    for k, p in params.items():
        p.data = best_params[k]
    report.params = {k: v.copy() for k, v in best_params.items()}
    log.debug("stopped at epoch %d, best %d (val %.5f)", report.stopped_epoch, report.best_epoch, best)
    return report


@dataclass
class TrialResult:
    seed: int
    metrics: dict[str, float]
    report: TrainReport | None


def run_trials(build: Callable[[int], object], data: PreparedData, cfg: TrainConfig,
               seeds: Sequence[int], trainable: bool = True) -> tuple[dict[str, dict], list[TrialResult]]:
    """Train one model per seed and evaluate each on the test windows.

    ``build(seed)`` returns a fresh model.  Models that are not trained by
    gradient descent (``trainable=False``) are only fitted inside ``build``.
    Returns the aggregated ``{metric: {per_seed, mean, sd}}`` and the per-seed results.
    """
    if not seeds:
        raise ValueError("run_trials needs at least one seed")
    results = []
    for seed in seeds:
        model = build(seed)
        report = None
        if trainable:
            report = train_model(model, data.train, data.val, _with_seed(cfg, seed))
        ev = evaluate(model, data.test, data.normalizer)
        results.append(TrialResult(seed, ev.metrics(), report))
    agg = MetricsReport()
    agg.add(data.train.horizon, [r.metrics for r in results])
    return agg.results[data.train.horizon], results


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    d = cfg.to_dict()
    d["seed"] = seed
    return TrainConfig(**d)
