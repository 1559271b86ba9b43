"""Cola-GNN forward computation.

Pipeline per sample: an RNN encodes each location's window, additive
attention between the encodings gives a location-by-location influence
matrix, a learned elementwise gate mixes it with the normalized geographic
adjacency, temporal convolution features are propagated over the mixed
matrix by message passing, and a linear head reads out the forecast from
the RNN state concatenated with the graph features.

All functions accept a leading batch axis; inputs are ``(B, N, W)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

Params = dict[str, Tensor]

BIAS_NAMES = ("rnn_b", "attn_bs", "attn_bv", "gate_bm", "out_b")
ATTENTION_NAMES = ("attn_Ws", "attn_Wt", "attn_v", "attn_bs", "attn_bv", "gate_Wm", "gate_bm")


@dataclass(frozen=True)
class ColaGnnConfig:
    hidden: int = 20                      # RNN state size D
    attn_dim: int | None = None           # d_a, defaults to hidden // 2
    n_filters: int = 10                   # K
    filter_len: int | None = None         # Q, defaults to the window length
    graph_dims: tuple[int, ...] | None = None  # F^(1..L), defaults to (K,) * n_layers
    n_layers: int = 2
    norm_p: float = 2.0
    norm_eps: float = 1e-12
    dropout: float = 0.2
    use_temporal_conv: bool = True
    use_location_attention: bool = True

    def __post_init__(self):
        if self.attn_dim is None:
            object.__setattr__(self, "attn_dim", max(1, self.hidden // 2))
        if self.graph_dims is None:
            object.__setattr__(self, "graph_dims", (self.n_filters,) * self.n_layers)
        else:
            dims = tuple(int(d) for d in self.graph_dims)
            object.__setattr__(self, "graph_dims", dims)
            object.__setattr__(self, "n_layers", len(dims))
        for name in ("hidden", "attn_dim", "n_filters", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(d < 1 for d in self.graph_dims):
            raise ValueError(f"graph widths must be >= 1, got {self.graph_dims}")
        if self.filter_len is not None and self.filter_len < 1:
            raise ValueError(f"filter_len must be >= 1, got {self.filter_len}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.norm_p < 1 or self.norm_eps <= 0:
            raise ValueError("norm_p must be >= 1 and norm_eps > 0")

    def q(self, window: int) -> int:
        q = window if self.filter_len is None else self.filter_len
        if q > window:
            raise dc.ShapeError(f"filter length {q} exceeds window {window}")
        return q

    def graph_input_width(self, window: int) -> int:
        return self.n_filters if self.use_temporal_conv else window

    def to_dict(self) -> dict:
        d = asdict(self)
        d["graph_dims"] = list(self.graph_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColaGnnConfig":
        d = dict(d)
        if d.get("graph_dims") is not None:
            d["graph_dims"] = tuple(d["graph_dims"])
        return cls(**d)


def parameter_shapes(config: ColaGnnConfig, n_locations: int, window: int) -> dict[str, tuple[int, ...]]:
    D, da, K = config.hidden, config.attn_dim, config.n_filters
    shapes: dict[str, tuple[int, ...]] = {
        "rnn_w": (D,), "rnn_U": (D, D), "rnn_b": (D,),
    }
    if config.use_location_attention:
        shapes.update({
            "attn_Ws": (da, D), "attn_Wt": (da, D), "attn_v": (da,), "attn_bs": (da,), "attn_bv": (),
            "gate_Wm": (n_locations, n_locations), "gate_bm": (),
        })
    if config.use_temporal_conv:
        shapes["conv_filters"] = (K, config.q(window))
    widths = (config.graph_input_width(window), *config.graph_dims)
    for l in range(config.n_layers):
        shapes[f"graph_W{l}"] = (widths[l + 1], widths[l])
        shapes[f"graph_b{l}"] = (widths[l + 1],)
    shapes["out_theta"] = (D + widths[-1],)
    shapes["out_b"] = ()
    return shapes


def parameter_count(config: ColaGnnConfig, n_locations: int, window: int) -> int:
    """Closed-form count: the sum of every trainable tensor's size."""
    return sum(int(np.prod(s)) for s in parameter_shapes(config, n_locations, window).values())


def is_bias(name: str) -> bool:
    return name in BIAS_NAMES or name.startswith("graph_b")


def glorot_init(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-a, a]`` with ``a = sqrt(6 / (fan_in + fan_out))``.

    A matrix of shape ``(out, in)`` has ``fan_in = in``; a vector of length
    n uses ``fan_in = n, fan_out = 1``.
    """
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    elif len(shape) == 2:
        fan_out, fan_in = shape
    else:
        raise ValueError(f"glorot_init supports 1-D or 2-D shapes, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(shapes: dict[str, tuple[int, ...]], rng: np.random.Generator) -> Params:
    params = {}
    for name, shape in shapes.items():
        if is_bias(name) or len(shape) == 0:
            data = np.zeros(shape)
        else:
            data = glorot_init(shape, rng)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


# --- components -----------------------------------------------------------

def rnn_encode(x: Tensor, params: Params) -> Tensor:
    """Vanilla tanh RNN over the window of each location; returns final states ``(..., N, D)``."""
    x = dc._lift(x)
    w, U, b = params["rnn_w"], params["rnn_U"], params["rnn_b"]
    D = w.shape[0]
    Ut = dc.transpose(U)
    h = None
    for t in range(x.shape[-1]):
        xt = dc.take(x, (..., slice(t, t + 1)))      # (..., N, 1)
        pre = dc.add(dc.mul(xt, w), b)
        if h is not None:
            pre = dc.add(pre, dc.matmul(h, Ut))
        h = dc.tanh(pre)
    if h is None:
        raise dc.ShapeError("rnn_encode needs a window of at least one week")
    assert h.shape[-1] == D
    return h


def attention_scores(H: Tensor, params: Params) -> Tensor:
    """Additive attention ``a_ij = v . elu(Ws h_i + Wt h_j + bs) + bv``; asymmetric."""
    Ws, Wt, v = params["attn_Ws"], params["attn_Wt"], params["attn_v"]
    bs, bv = params["attn_bs"], params["attn_bv"]
    N, da = H.shape[-2], Ws.shape[0]
    lead = H.shape[:-2]
    src = dc.matmul(H, dc.transpose(Ws))                       # (..., N, da)
    dst = dc.matmul(H, dc.transpose(Wt))
    src = dc.reshape(src, (*lead, N, 1, da))
    dst = dc.reshape(dst, (*lead, 1, N, da))
    e = dc.elu(dc.add(dc.add(src, dst), bs))                   # (..., N, N, da)
    a = dc.matmul(e, dc.reshape(v, (da, 1)))                   # (..., N, N, 1)
    return dc.add(dc.reshape(a, (*lead, N, N)), bv)


def normalize_rows(A: Tensor, p: float = 2.0, eps: float = 1e-12) -> Tensor:
    return dc.row_lp_norm_scale(A, p, eps)


@dataclass
class AttentionMatrix:
    """Raw (row-normalized) attention, gate and fused matrix for one or more samples."""

    raw: np.ndarray
    gate: np.ndarray
    fused: np.ndarray


def fuse_attention(A: Tensor, adjacency: np.ndarray, params: Params) -> tuple[Tensor, Tensor]:
    """Gate ``M = sigmoid(Wm A + bm)``; return ``(M, M*adj + (1-M)*A)``."""
    adj = dc._lift(adjacency)
    M = dc.sigmoid(dc.add(dc.matmul(params["gate_Wm"], A), params["gate_bm"]))
    # M*adj + (1-M)*A, written as A + M*(adj - A)
    fused = dc.add(A, dc.mul(M, dc.add(adj, dc.scale(A, -1.0))))
    return M, fused


def temporal_conv(x: Tensor, filters: Tensor) -> Tensor:
    """``relu(max over offsets of the valid correlation)`` per location and filter: ``(..., N, K)``."""
    return dc.relu(dc.maxpool_full(dc.conv1d_valid(x, filters)))


def _dropout(t: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0 or rng is None:
        return t
    keep = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return dc.mul(t, Tensor(keep))


def message_pass(H0: Tensor, A_hat, params: Params, n_layers: int,
                 dropout: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    """``H_l = elu(A_hat @ H_{l-1} @ W^T + b)`` for each layer."""
    H = dc._lift(H0)
    A_hat = dc._lift(A_hat)
    for l in range(n_layers):
        W, b = params[f"graph_W{l}"], params[f"graph_b{l}"]
        if H.shape[-1] != W.shape[1]:
            raise dc.ShapeError(f"graph layer {l}: input width {H.shape[-1]} != weight width {W.shape[1]}")
        H = _dropout(H, dropout, rng)
        H = dc.elu(dc.add(dc.matmul(dc.matmul(A_hat, H), dc.transpose(W)), b))
    return H


def predict(H_rnn: Tensor, H_graph: Tensor, params: Params) -> Tensor:
    """Identity output head on ``[h_rnn ; h_graph]``; returns ``(..., N)``."""
    theta = params["out_theta"]
    feats = dc.concat([H_rnn, H_graph], axis=-1)
    if feats.shape[-1] != theta.shape[0]:
        raise dc.ShapeError(f"head expects {theta.shape[0]} features, got {feats.shape[-1]}")
    y = dc.matmul(feats, dc.reshape(theta, (theta.shape[0], 1)))
    return dc.add(dc.reshape(y, y.shape[:-1]), params["out_b"])


# --- model ------------------------------------------------------------------

class ColaGNN:
    """Parameters plus forward pass for a fixed location set and window length."""

    def __init__(self, config: ColaGnnConfig, adjacency: np.ndarray, window: int,
                 rng: np.random.Generator | int | None = None, params: Params | None = None):
        self.config = config
        self.adjacency = np.asarray(adjacency, dtype=np.float64)
        self.n_locations = self.adjacency.shape[0]
        self.window = window
        self.shapes = parameter_shapes(config, self.n_locations, window)
        if params is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            params = init_params(self.shapes, rng)
        else:
            missing = set(self.shapes) ^ set(params)
            if missing:
                raise ValueError(f"parameter set mismatch: {sorted(missing)}")
            for name, shape in self.shapes.items():
                if params[name].shape != shape:
                    raise dc.ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.params = params

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None,
                return_attention: bool = False):
        cfg = self.config
        x = dc._lift(x)
        if x.shape[-1] != self.window or x.shape[-2] != self.n_locations:
            raise dc.ShapeError(f"input {x.shape} does not match (N={self.n_locations}, W={self.window})")
        drop = cfg.dropout if training else 0.0
        rng = rng if training else None
        H = rnn_encode(x, self.params)
        H = _dropout(H, drop, rng)
        attn = None
        if cfg.use_location_attention:
            A = normalize_rows(attention_scores(H, self.params), cfg.norm_p, cfg.norm_eps)
            M, A_hat = fuse_attention(A, self.adjacency, self.params)
            if return_attention:
                attn = AttentionMatrix(A.data.copy(), M.data.copy(), A_hat.data.copy())
        else:
            A_hat = Tensor(self.adjacency)
        if cfg.use_temporal_conv:
            H0 = temporal_conv(x, self.params["conv_filters"])
        else:
            H0 = x
        HL = message_pass(H0, A_hat, self.params, cfg.n_layers, drop, rng)
        y = predict(H, HL, self.params)
        return (y, attn) if return_attention else y

    __call__ = forward

    def predict_array(self, inputs: np.ndarray) -> np.ndarray:
        with dc.no_grad():
            return self.forward(inputs).data

    def attention(self, x) -> AttentionMatrix:
        if not self.config.use_location_attention:
            raise ValueError("model was built without location attention; there is no attention matrix")
        with dc.no_grad():
            _, attn = self.forward(x, return_attention=True)
        return attn

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            self.params[k].data = np.array(v, dtype=np.float64)

    def metadata(self) -> dict:
        return {"kind": "cola-gnn", "config": self.config.to_dict(), "window": self.window,
                "n_locations": self.n_locations}
