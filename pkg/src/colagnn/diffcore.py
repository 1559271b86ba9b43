"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Only the primitives the forecasting model composes are provided.  Every
operation accepts optional leading batch axes; samples in a batch never
interact, the batch axis only exists so a mini-batch is one graph instead
of thirty-two.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np


_grad_enabled = True


class ShapeError(ValueError):
    pass


class GradCheckError(RuntimeError):
    pass


def _as_array(value) -> np.ndarray:
    return np.array(value, dtype=np.float64)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block; results are plain leaves."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the expression graph.

    Leaves are created directly; every primitive returns a new node that
    remembers its parents and how to route an upstream gradient back to
    them.  ``grad`` accumulates across ``backward`` calls until
    :meth:`zero_grad` is called.
    """

    __slots__ = ("data", "grad", "op", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @classmethod
    def _node(cls, data: np.ndarray, op: str, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out.name = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def _back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._node(out, "matmul", (a, b), _back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting sum; a row vector added to a matrix is the broadcast-add-row case."""
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from exc
    op = "add" if a.shape == b.shape else "broadcast-add-row"

    def _back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._node(out, op, (a, b), _back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from exc

    def _back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._node(out, "hadamard", (a, b), _back)


def scale(a: Tensor, c: float) -> Tensor:
    a = _lift(a)
    c = float(c)
    return Tensor._node(a.data * c, "scalar-mul", (a,), lambda g: (g * c,))


def tanh(x: Tensor) -> Tensor:
    x = _lift(x)
    y = np.tanh(x.data)
    return Tensor._node(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    x = _lift(x)
    # tanh form never overflows
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._node(y, "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def elu(x: Tensor) -> Tensor:
    x = _lift(x)
    pos = x.data >= 0
    ex = np.exp(np.minimum(x.data, 0.0))
    y = np.where(pos, x.data, ex - 1.0)
    return Tensor._node(y, "elu", (x,), lambda g: (g * np.where(pos, 1.0, ex),))


def relu(x: Tensor) -> Tensor:
    x = _lift(x)
    mask = x.data > 0
    return Tensor._node(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    x = _lift(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 dims, got {x.shape}")
    return Tensor._node(np.swapaxes(x.data, -1, -2), "transpose", (x,),
                        lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _lift(x)
    src = x.shape
    return Tensor._node(x.data.reshape(shape), "reshape", (x,), lambda g: (g.reshape(src),))


def take(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; the gradient scatters back into a zero tensor."""
    x = _lift(x)
    out = x.data[index]

    def _back(g):
        full = np.zeros_like(x.data)
        full[index] += g
        return (full,)

    return Tensor._node(np.array(out, dtype=np.float64), "take", (x,), _back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def _back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._node(out, "concat-rows", tuple(ts), _back)


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    x = _lift(x)
    if sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not sum to {x.shape[axis]}")
    pieces = []
    start = 0
    for n in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + n)
        pieces.append(take(x, tuple(idx)))
        start += n
    return pieces


def row_lp_norm_scale(x: Tensor, p: float = 2.0, eps: float = 1e-12) -> Tensor:
    """Scale each row (last axis) by ``1 / max(||row||_p, eps)``."""
    x = _lift(x)
    if p < 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    a = x.data
    absa = np.abs(a)
    norm = np.sum(absa ** p, axis=-1, keepdims=True) ** (1.0 / p)
    use_norm = norm > eps
    denom = np.where(use_norm, norm, eps)
    y = a / denom

    def _back(g):
        # d||a||/da_j = sign(a_j) |a_j|^(p-1) / ||a||^(p-1)
        safe = np.where(use_norm, norm, 1.0)
        dnorm = np.sign(a) * absa ** (p - 1) / safe ** (p - 1)
        proj = np.sum(g * a, axis=-1, keepdims=True)
        gx = g / denom - np.where(use_norm, proj / (safe * safe), 0.0) * dnorm
        return (gx,)

    return Tensor._node(y, "row-lp-norm-scale", (x,), _back)


def conv1d_valid(x: Tensor, filters: Tensor) -> Tensor:
    """Valid cross-correlation of every row of ``x`` with every filter.

    ``x`` is ``(..., R, T)`` and ``filters`` is ``(K, Q)``; the result is
    ``(..., R, K, T - Q + 1)``.  No bias term.
    """
    x, filters = _lift(x), _lift(filters)
    if filters.ndim != 2:
        raise ShapeError(f"filters must be (K, Q), got {filters.shape}")
    T = x.shape[-1]
    Q = filters.shape[1]
    if Q > T:
        raise ShapeError(f"conv1d_valid: filter length {Q} exceeds row length {T}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, Q, axis=-1)  # (..., R, S, Q)
    out = np.einsum("...rsq,kq->...rks", windows, filters.data)

    def _back(g):
        lead = (-1, *windows.shape[-3:])
        gf = np.einsum("brks,brsq->kq", g.reshape(-1, *g.shape[-3:]), windows.reshape(lead))
        gw = np.einsum("...rks,kq->...rsq", g, filters.data)
        gx = np.zeros_like(x.data)
        S = T - Q + 1
        for q in range(Q):
            gx[..., q:q + S] += gw[..., q]
        return gx, gf

    return Tensor._node(out, "conv1d-valid", (x, filters), _back)


def maxpool_full(x: Tensor) -> Tensor:
    """Max over the last axis; ties go to the lowest index."""
    x = _lift(x)
    idx = np.argmax(x.data, axis=-1)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def _back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
        return (gx,)

    return Tensor._node(out, "maxpool-full", (x,), _back)


def tsum(x: Tensor) -> Tensor:
    x = _lift(x)
    return Tensor._node(np.array(x.data.sum()), "sum", (x,),
                        lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum_abs(x: Tensor) -> Tensor:
    """Sum of absolute values; the subgradient at 0 is 0."""
    x = _lift(x)
    sgn = np.sign(x.data)
    return Tensor._node(np.array(np.abs(x.data).sum()), "sum-abs", (x,), lambda g: (g * sgn,))


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into every leaf with ``requires_grad``.

    Intermediate nodes pass gradients on and keep nothing; repeated calls
    add to the leaves' existing ``grad``.
    """
    if output.data.size != 1:
        raise ValueError(f"backward() needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    order = _topo_order(output)
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    step: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(e < self.tolerance for e in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic, numeric) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | dict[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare ``backward()`` against central differences, coordinate by coordinate.

    ``f`` rebuilds the graph from the current parameter values each time it
    is called.  Parameters are perturbed in place and restored.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    named = dict(params) if isinstance(params, dict) else {str(i): p for i, p in enumerate(params)}
    for p in named.values():
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise GradCheckError("objective is not finite at the unperturbed point")
    out.backward()
    errors = {}
    for name, p in named.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f().item()
            flat[i] = orig - step
            fm = f().item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradCheckError(f"objective not finite when perturbing parameter {name!r} index {i}")
            numeric[i] = (fp - fm) / (2.0 * step)
        err = relative_error(analytic.reshape(-1), numeric)
        errors[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(errors, step, tolerance)
