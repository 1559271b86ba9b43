"""Statistical baselines as direct h-step regressors, plus the global RNN.

GAR pools every location into one regression on its own W lags, AR fits
one regression per location, VAR regresses each location on all N*W lagged
values.  ARMA is a two-stage (Hannan-Rissanen) fit.  Everything works in
normalized units; callers denormalize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .data import EpiDataset, WindowSet, make_windows
from .diffcore import Tensor
from .model import Params, _dropout, init_params, rnn_encode

RIDGE_JITTER = 1e-8
VARIANTS = ("gar", "ar", "var")


class NumericalError(ArithmeticError):
    pass


def solve_least_squares(X: np.ndarray, y: np.ndarray, jitter: float = RIDGE_JITTER) -> tuple[np.ndarray, float]:
    """Normal equations with ``jitter`` on the diagonal; returns (coef, intercept)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    with np.errstate(over="ignore", invalid="ignore"):
        A = Z.T @ Z + jitter * np.eye(Z.shape[1])
        rhs = Z.T @ y
    if not (np.isfinite(A).all() and np.isfinite(rhs).all()):
        raise NumericalError("normal equations overflowed; condition estimate inf (check the input scale)")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"normal equations are singular even with jitter {jitter}; condition estimate {np.linalg.cond(A):.3e}"
        ) from None
    beta = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return beta[:-1], float(beta[-1]) if beta.ndim == 1 else beta[-1]


def direct_linear_param_count(variant: str, n_locations: int, window: int) -> int:
    N, W = n_locations, window
    return {"gar": W + 1, "ar": N * (W + 1), "var": N * (N * W + 1)}[variant]


@dataclass(frozen=True)
class DirectLinearModel:
    """Fitted GAR / AR / VAR coefficients.

    ``coef`` is ``(W,)`` for GAR, ``(N, W)`` for AR and ``(N, N*W)`` for
    VAR (flattened location-major window); ``intercept`` is a scalar for
    GAR and ``(N,)`` otherwise.
    """

    variant: str
    coef: np.ndarray
    intercept: np.ndarray
    window: int

    @property
    def n_params(self) -> int:
        return int(np.size(self.coef) + np.size(self.intercept))

    def predict_array(self, inputs: np.ndarray) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.shape[-1] != self.window:
            raise dc.ShapeError(f"{self.variant}: window width {x.shape[-1]} != {self.window}")
        if self.variant == "gar":
            return x @ self.coef + self.intercept
        if self.variant == "ar":
            return np.einsum("niw,iw->ni", x, self.coef) + self.intercept
        return x.reshape(x.shape[0], -1) @ self.coef.T + self.intercept

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"{self.variant}_coef": self.coef, f"{self.variant}_intercept": np.asarray(self.intercept)}

    def metadata(self) -> dict:
        return {"kind": self.variant, "window": self.window, "n_locations": _n_loc(self)}


def _n_loc(model: DirectLinearModel) -> int | None:
    return None if model.variant == "gar" else int(model.coef.shape[0])


def fit_direct_linear(train: WindowSet, variant: str) -> DirectLinearModel:
    X, Y = train.inputs, train.targets  # (n, N, W), (n, N)
    n, N, W = X.shape
    variant = variant.lower()
    if variant == "gar":
        coef, b = solve_least_squares(X.reshape(n * N, W), Y.reshape(n * N))
        return DirectLinearModel("gar", coef, np.asarray(b), W)
    if variant == "ar":
        coefs, bs = zip(*(solve_least_squares(X[:, i, :], Y[:, i]) for i in range(N)))
        return DirectLinearModel("ar", np.stack(coefs), np.array(bs), W)
    if variant == "var":
        coef, b = solve_least_squares(X.reshape(n, N * W), Y)
        return DirectLinearModel("var", coef.T.copy(), np.asarray(b), W)
    raise ValueError(f"unknown linear variant {variant!r}; expected one of {VARIANTS}")


# --- ARMA ---------------------------------------------------------------------

@dataclass(frozen=True)
class ArmaModel:
    """Per-location direct ARMA(W, q) via two-stage least squares.

    Stage one fits a one-step AR of order ``long_order`` whose residuals
    stand in for the unobserved shocks.  Stage two regresses the h-step
    target on the last ``window`` values and the last ``q`` stage-one
    residuals.  Predictions need ``history = max(window, long_order + q)``
    weeks so the residuals can be recomputed from the observed data.
    """

    long_coef: np.ndarray       # (N, long_order)
    long_intercept: np.ndarray  # (N,)
    ar_coef: np.ndarray         # (N, window)
    ma_coef: np.ndarray         # (N, q)
    intercept: np.ndarray       # (N,)
    window: int
    q: int
    horizon: int

    @property
    def long_order(self) -> int:
        return self.long_coef.shape[1]

    @property
    def history(self) -> int:
        return max(self.window, self.long_order + self.q)

    @property
    def n_params(self) -> int:
        return sum(int(a.size) for a in (self.long_coef, self.long_intercept, self.ar_coef,
                                         self.ma_coef, self.intercept))

    def residuals(self, inputs: np.ndarray) -> np.ndarray:
        """One-step residuals for the last ``q`` weeks of each window, newest first: ``(n, N, q)``."""
        x = np.asarray(inputs, dtype=np.float64)
        H, m = x.shape[-1], self.long_order
        out = np.zeros(x.shape[:-1] + (self.q,))
        for k in range(self.q):
            t = H - 1 - k
            lags = x[..., t - m:t]
            fitted = np.einsum("niw,iw->ni", lags, self.long_coef) + self.long_intercept
            out[..., k] = x[..., t] - fitted
        return out

    def predict_array(self, inputs: np.ndarray) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.shape[-1] != self.history:
            raise dc.ShapeError(f"arma: window width {x.shape[-1]} != required history {self.history}")
        lags = x[..., -self.window:]
        pred = np.einsum("niw,iw->ni", lags, self.ar_coef) + self.intercept
        if self.q:
            pred = pred + np.einsum("niq,iq->ni", self.residuals(x), self.ma_coef)
        return pred

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"arma_long_coef": self.long_coef, "arma_long_intercept": self.long_intercept,
                "arma_ar_coef": self.ar_coef, "arma_ma_coef": self.ma_coef,
                "arma_intercept": self.intercept}

    def metadata(self) -> dict:
        return {"kind": "arma", "window": self.window, "q": self.q, "horizon": self.horizon,
                "n_locations": int(self.ar_coef.shape[0])}


def fit_arma(train: EpiDataset | np.ndarray, window: int, horizon: int, q: int = 2,
             long_order: int | None = None) -> ArmaModel:
    """Fit on a normalized training split (``EpiDataset`` or ``(N, T)`` array).

    ``long_order`` defaults to ``window``, so predictions need ``window + q`` weeks.
    """
    values = train.values if isinstance(train, EpiDataset) else np.asarray(train, dtype=np.float64)
    N, T = values.shape
    # a long AR no shorter than the window keeps the residual terms from being
    # linear combinations of the stage-two lags (which would make ARMA == AR)
    m = long_order if long_order is not None else window
    history = max(window, m + q)
    if T < history + horizon:
        raise ValueError(f"arma needs at least {history + horizon} weeks, got {T}")
    long_c, long_b = [], []
    for i in range(N):
        lagged = np.lib.stride_tricks.sliding_window_view(values[i], m)[:-1]  # rows end at t-1
        c, b = solve_least_squares(lagged, values[i, m:])
        long_c.append(c)
        long_b.append(b)
    long_coef, long_intercept = np.stack(long_c), np.array(long_b)
    stub = ArmaModel(long_coef, long_intercept, np.zeros((N, window)), np.zeros((N, q)),
                     np.zeros(N), window, q, horizon)
    ds = EpiDataset(tuple(str(i) for i in range(N)), values, tuple(str(t) for t in range(T)))
    ws = make_windows(ds, history, horizon)
    lags = ws.inputs[..., -window:]
    resid = stub.residuals(ws.inputs) if q else np.zeros(lags.shape[:-1] + (0,))
    ar, ma, icpt = [], [], []
    for i in range(N):
        feats = np.hstack([lags[:, i, :], resid[:, i, :]])
        c, b = solve_least_squares(feats, ws.targets[:, i])
        ar.append(c[:window])
        ma.append(c[window:])
        icpt.append(b)
    return ArmaModel(long_coef, long_intercept, np.stack(ar), np.stack(ma).reshape(N, q),
                     np.array(icpt), window, q, horizon)


# --- global RNN -------------------------------------------------------------

class RNNBaseline:
    """Shared tanh RNN with a linear head on the final state; parameters shared by all locations."""

    def __init__(self, hidden: int, window: int, rng: np.random.Generator | int | None = None,
                 dropout: float = 0.2, params: Params | None = None):
        self.hidden = hidden
        self.window = window
        self.dropout = dropout
        self.shapes = {"rnn_w": (hidden,), "rnn_U": (hidden, hidden), "rnn_b": (hidden,),
                       "out_theta": (hidden,), "out_b": ()}
        if params is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            params = init_params(self.shapes, rng)
        self.params = params

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        x = dc._lift(x)
        if x.shape[-1] != self.window:
            raise dc.ShapeError(f"rnn: window width {x.shape[-1]} != {self.window}")
        H = rnn_encode(x, self.params)
        if training:
            H = _dropout(H, self.dropout, rng)
        theta = self.params["out_theta"]
        y = dc.matmul(H, dc.reshape(theta, (self.hidden, 1)))
        return dc.add(dc.reshape(y, y.shape[:-1]), self.params["out_b"])

    __call__ = forward

    def predict_array(self, inputs: np.ndarray) -> np.ndarray:
        with dc.no_grad():
            return self.forward(inputs).data

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def metadata(self) -> dict:
        return {"kind": "rnn", "hidden": self.hidden, "window": self.window, "dropout": self.dropout}


def rnn_param_count(hidden: int) -> int:
    return hidden + hidden * hidden + hidden + hidden + 1


def fit_rnn_baseline(train: WindowSet, val: WindowSet, hidden: int, cfg, dropout: float = 0.2) -> tuple[RNNBaseline, object]:
    from .train import train_model

    rng = np.random.default_rng(cfg.seed)
    model = RNNBaseline(hidden, train.window, rng, dropout)
    report = train_model(model, train, val, cfg, rng=rng)
    return model, report


def predict_baseline(model, window: np.ndarray) -> np.ndarray:
    """Direct h-step prediction for one ``(N, W)`` window, normalized units."""
    return model.predict_array(np.asarray(window, dtype=np.float64)[None])[0]
