"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that sees a gradient-requiring input records a tape node:
the output tensor keeps references to its parents and a closure computing
the vector-Jacobian product.  ``backward`` walks the recorded graph once in
reverse topological order and accumulates gradients; repeated calls without
``zero_grad`` keep accumulating.  ``detach`` returns a tensor with the same
values and no tape edge, so no gradient flows through it -- this is the
stop-gradient used by the two training phases.

The op set is intentionally minimal: exactly the primitives the model needs,
with broadcasting limited to row-vector bias addition.  Shapes are 0-d, 1-d
or 2-d.  Hot primitives (softmax, layer norm, the prior kernels) call into
:mod:`adformer.kernels`.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, NumericError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Context in which no tape nodes are recorded (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus optional gradient buffer and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor data must be finite (got NaN or Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjp: Optional[Callable] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._vjp = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; scalars route through the *_scalar ops
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Construct an op output, recording a tape node when gradients flow."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a + b; b may be a row vector broadcast over a's rows."""
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make(a.data + c, (a,), lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-d tensors")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.shape} x {b.shape} do not match")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2-d tensor")
    return _make(a.data.T, (a,), lambda g: (g.T,))


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("slice_cols expects a 2-d tensor")

    def vjp(g):
        z = np.zeros_like(a.data)
        z[:, j0:j1] = g
        return (z,)

    return _make(a.data[:, j0:j1].copy(), (a,), vjp)


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.data for p in parts], axis=1), parts, vjp)


def sum_all(a: Tensor) -> Tensor:
    return _make(
        np.asarray(a.data.sum()),
        (a,),
        lambda g: (np.full(a.shape, float(g)),),
    )


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


def sum_lastdim(a: Tensor) -> Tensor:
    """Row sums of a 2-d tensor, kept as an (M, 1) column."""
    if a.data.ndim != 2:
        raise ShapeError("sum_lastdim expects a 2-d tensor")
    n = a.shape[1]
    return _make(
        a.data.sum(axis=1, keepdims=True),
        (a,),
        lambda g: (np.repeat(g, n, axis=1),),
    )


def log(a: Tensor) -> Tensor:
    if a.data.min() <= 0.0:
        raise NumericError("log: input must be strictly positive (clamp first)")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data > floor
    return _make(np.maximum(a.data, floor), (a,), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    # derivative is the logistic sigmoid, written in its tanh form for stability
    def vjp(g):
        return (g * (0.5 * (1.0 + np.tanh(0.5 * a.data))),)

    return _make(np.logaddexp(0.0, a.data), (a,), vjp)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)

    def vjp(g):
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (
            1.0 + 3.0 * _GELU_A * x * x
        )
        return (g * d,)

    return _make(0.5 * x * (1.0 + t), (a,), vjp)


def softmax_lastdim(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; rows sum to one."""
    vec = a.data.ndim == 1
    x2 = a.data[None, :] if vec else a.data
    if x2.ndim != 2:
        raise ShapeError("softmax_lastdim expects a 1-d or 2-d tensor")
    y = kernels.softmax_rows(np.ascontiguousarray(x2))

    def vjp(g):
        g2 = g[None, :] if vec else g
        gx = kernels.softmax_rows_bwd(y, np.ascontiguousarray(g2))
        return (gx[0] if vec else gx,)

    return _make(y[0] if vec else y, (a,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalisation over channels, then affine gain/bias."""
    if x.data.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm: x {x.shape}, gain {gain.shape}, bias {bias.shape}"
        )
    y, xhat, inv_std = kernels.layernorm(
        np.ascontiguousarray(x.data), gain.data, bias.data, eps
    )

    def vjp(g):
        return kernels.layernorm_bwd(np.ascontiguousarray(g), xhat, inv_std, gain.data)

    return _make(y, (x, gain, bias), vjp)


def gaussian_prior(sigma: Tensor, dist: np.ndarray) -> Tensor:
    """Row-stochastic Gaussian kernel over squared distances.

    ``sigma`` is an (N, 1) column of positive scales; ``dist`` a constant
    (N, N) matrix of squared index distances.  Row i is proportional to
    exp(-dist[i, j] / (2 sigma_i^2)); the row-constant Gaussian prefactor
    cancels in the normalisation.
    """
    if sigma.data.ndim != 2 or sigma.shape[1] != 1 or sigma.shape[0] != dist.shape[0]:
        raise ShapeError(f"gaussian_prior: sigma {sigma.shape}, dist {dist.shape}")
    if sigma.data.min() <= 0.0:
        raise ContractError("gaussian_prior: scale must be strictly positive")
    s = np.ascontiguousarray(sigma.data[:, 0])
    p = kernels.gaussian_prior(s, dist)

    def vjp(g):
        gs = kernels.gaussian_prior_bwd(p, dist, s, np.ascontiguousarray(g))
        return (gs[:, None],)

    return _make(p, (sigma,), vjp)


def powerlaw_prior(alpha: Tensor, logdist: np.ndarray) -> Tensor:
    """Row-stochastic power-law kernel (|j-i|+1)^(-alpha_i).

    ``logdist`` holds ln(|j-i|+1); the +1 offset avoids the pole at zero
    distance.
    """
    if (
        alpha.data.ndim != 2
        or alpha.shape[1] != 1
        or alpha.shape[0] != logdist.shape[0]
    ):
        raise ShapeError(f"powerlaw_prior: alpha {alpha.shape}, logdist {logdist.shape}")
    if alpha.data.min() <= 0.0:
        raise ContractError("powerlaw_prior: exponent must be strictly positive")
    a = np.ascontiguousarray(alpha.data[:, 0])
    p = kernels.powerlaw_prior(a, logdist)

    def vjp(g):
        ga = kernels.powerlaw_prior_bwd(p, logdist, np.ascontiguousarray(g))
        return (ga[:, None],)

    return _make(p, (alpha,), vjp)


def dropout(a: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return a
    if p >= 1.0:
        raise ContractError("dropout rate must be < 1")
    keep = (rng.uniform(a.shape) >= p) / (1.0 - p)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


def detach(a: Tensor) -> Tensor:
    return a.detach()


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list:
    """Parents-before-children ordering of the graph reachable from root."""
    order: list = []
    visited: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable gradient-requiring tensor.

    The loss must be a scalar.  Each tape node is visited exactly once, in
    reverse topological order; calling backward again without zeroing
    accumulates into the existing buffers.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            # grads are never mutated in place, so sharing g with a sibling
            # buffer (ops like add return the same array twice) is safe
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg
