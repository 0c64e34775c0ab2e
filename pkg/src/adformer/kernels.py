"""Hot numeric kernels, implemented twice: numba ``@njit`` and pure numpy.

Every kernel exists in both variants with identical semantics.  The active
set is chosen once at import time from the ``ADFORMER_BACKEND`` environment
variable:

* ``auto`` (default) -- use numba when it imports, numpy otherwise
* ``numba``          -- require numba, fail loudly if missing
* ``numpy``          -- force the pure-numpy fallback

Both variants of each kernel are always importable (``IMPLEMENTATIONS``),
so the equivalence tests and ``benchmarks/bench_kernels.py`` can compare
them regardless of the active backend.

All kernels operate on C-contiguous float64 arrays.  Results agree between
backends to floating-point roundoff (summation order may differ); within
one backend they are bit-deterministic.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via ADFORMER_BACKEND=numpy
    _NUMBA_AVAILABLE = False

_MODE = os.environ.get("ADFORMER_BACKEND", "auto").strip().lower()
if _MODE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"ADFORMER_BACKEND must be 'auto', 'numba' or 'numpy', got {_MODE!r}"
    )
if _MODE == "numba" and not _NUMBA_AVAILABLE:
    raise ImportError("ADFORMER_BACKEND=numba but numba is not installed")

USE_NUMBA = _NUMBA_AVAILABLE if _MODE == "auto" else _MODE == "numba"


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"


# xorshift64* multiplier (Vigna 2016); 2**-53 maps the top 53 bits to [0, 1).
_XS_MULT = 0x2545F4914F6CDD1D
_U64_MASK = 0xFFFFFFFFFFFFFFFF
_TO_DOUBLE = 2.0**-53


# ---------------------------------------------------------------------------
# numpy variants
# ---------------------------------------------------------------------------


def _softmax_rows_np(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_rows_bwd_np(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def _gaussian_prior_np(sigma: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # row-normalised Gaussian kernel; the 1/(sqrt(2*pi)*sigma_i) prefactor is
    # constant along each row and cancels in the normalisation
    t = -dist / (2.0 * sigma[:, None] ** 2)
    e = np.exp(t)
    return e / e.sum(axis=1, keepdims=True)


def _gaussian_prior_bwd_np(
    p: np.ndarray, dist: np.ndarray, sigma: np.ndarray, gp: np.ndarray
) -> np.ndarray:
    w = gp * p
    a = (w * dist).sum(axis=1)
    b = w.sum(axis=1)
    c = (p * dist).sum(axis=1)
    return (a - b * c) / sigma**3


def _powerlaw_prior_np(alpha: np.ndarray, logdist: np.ndarray) -> np.ndarray:
    # (|j-i|+1)^(-alpha_i) row-normalised; logdist holds ln(|j-i|+1)
    e = np.exp(-alpha[:, None] * logdist)
    return e / e.sum(axis=1, keepdims=True)


def _powerlaw_prior_bwd_np(
    p: np.ndarray, logdist: np.ndarray, gp: np.ndarray
) -> np.ndarray:
    w = gp * p
    a = (w * logdist).sum(axis=1)
    b = w.sum(axis=1)
    c = (p * logdist).sum(axis=1)
    return -(a - b * c)


def _layernorm_np(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * gain + bias, xhat, inv_std[:, 0]


def _layernorm_bwd_np(
    gy: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray, gain: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ghat = gy * gain
    m1 = ghat.mean(axis=1, keepdims=True)
    m2 = (ghat * xhat).mean(axis=1, keepdims=True)
    gx = (ghat - m1 - xhat * m2) * inv_std[:, None]
    return gx, (gy * xhat).sum(axis=0), gy.sum(axis=0)


def _adam_update_np(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    step: int,
) -> None:
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def _xorshift_fill_np(state: int, out: np.ndarray) -> int:
    s = int(state) & _U64_MASK
    for i in range(out.shape[0]):
        s ^= s >> 12
        s = (s ^ (s << 25)) & _U64_MASK
        s ^= s >> 27
        out[i] = (((s * _XS_MULT) & _U64_MASK) >> 11) * _TO_DOUBLE
    return s


# ---------------------------------------------------------------------------
# numba variants
# ---------------------------------------------------------------------------

if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _softmax_rows_nb(x):
        rows, cols = x.shape
        out = np.empty((rows, cols))
        for i in range(rows):
            mx = x[i, 0]
            for j in range(1, cols):
                if x[i, j] > mx:
                    mx = x[i, j]
            total = 0.0
            for j in range(cols):
                e = math.exp(x[i, j] - mx)
                out[i, j] = e
                total += e
            inv = 1.0 / total
            for j in range(cols):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def _softmax_rows_bwd_nb(y, gy):
        rows, cols = y.shape
        gx = np.empty((rows, cols))
        for i in range(rows):
            dot = 0.0
            for j in range(cols):
                dot += y[i, j] * gy[i, j]
            for j in range(cols):
                gx[i, j] = y[i, j] * (gy[i, j] - dot)
        return gx

    @njit(cache=True)
    def _gaussian_prior_nb(sigma, dist):
        rows, cols = dist.shape
        out = np.empty((rows, cols))
        for i in range(rows):
            denom = 2.0 * sigma[i] * sigma[i]
            total = 0.0
            for j in range(cols):
                e = math.exp(-dist[i, j] / denom)
                out[i, j] = e
                total += e
            inv = 1.0 / total
            for j in range(cols):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def _gaussian_prior_bwd_nb(p, dist, sigma, gp):
        rows, cols = p.shape
        gs = np.empty(rows)
        for i in range(rows):
            a = 0.0
            b = 0.0
            c = 0.0
            for j in range(cols):
                w = gp[i, j] * p[i, j]
                a += w * dist[i, j]
                b += w
                c += p[i, j] * dist[i, j]
            gs[i] = (a - b * c) / (sigma[i] * sigma[i] * sigma[i])
        return gs

    @njit(cache=True)
    def _powerlaw_prior_nb(alpha, logdist):
        rows, cols = logdist.shape
        out = np.empty((rows, cols))
        for i in range(rows):
            total = 0.0
            for j in range(cols):
                e = math.exp(-alpha[i] * logdist[i, j])
                out[i, j] = e
                total += e
            inv = 1.0 / total
            for j in range(cols):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def _powerlaw_prior_bwd_nb(p, logdist, gp):
        rows, cols = p.shape
        ga = np.empty(rows)
        for i in range(rows):
            a = 0.0
            b = 0.0
            c = 0.0
            for j in range(cols):
                w = gp[i, j] * p[i, j]
                a += w * logdist[i, j]
                b += w
                c += p[i, j] * logdist[i, j]
            ga[i] = -(a - b * c)
        return ga

    @njit(cache=True)
    def _layernorm_nb(x, gain, bias, eps):
        rows, cols = x.shape
        y = np.empty((rows, cols))
        xhat = np.empty((rows, cols))
        inv_std = np.empty(rows)
        for i in range(rows):
            mu = 0.0
            for j in range(cols):
                mu += x[i, j]
            mu /= cols
            var = 0.0
            for j in range(cols):
                d = x[i, j] - mu
                var += d * d
            var /= cols
            inv = 1.0 / math.sqrt(var + eps)
            inv_std[i] = inv
            for j in range(cols):
                h = (x[i, j] - mu) * inv
                xhat[i, j] = h
                y[i, j] = h * gain[j] + bias[j]
        return y, xhat, inv_std

    @njit(cache=True)
    def _layernorm_bwd_nb(gy, xhat, inv_std, gain):
        rows, cols = gy.shape
        gx = np.empty((rows, cols))
        ggain = np.zeros(cols)
        gbias = np.zeros(cols)
        for i in range(rows):
            m1 = 0.0
            m2 = 0.0
            for j in range(cols):
                gh = gy[i, j] * gain[j]
                m1 += gh
                m2 += gh * xhat[i, j]
            m1 /= cols
            m2 /= cols
            for j in range(cols):
                gh = gy[i, j] * gain[j]
                gx[i, j] = (gh - m1 - xhat[i, j] * m2) * inv_std[i]
                ggain[j] += gy[i, j] * xhat[i, j]
                gbias[j] += gy[i, j]
        return gx, ggain, gbias

    @njit(cache=True)
    def _adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, step):
        bc1 = 1.0 - beta1**step
        bc2 = 1.0 - beta2**step
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            p[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)

    @njit(cache=True)
    def _xorshift_fill_nb(state, out):
        s = np.uint64(state)
        for i in range(out.shape[0]):
            s ^= s >> np.uint64(12)
            s ^= s << np.uint64(25)
            s ^= s >> np.uint64(27)
            x = s * np.uint64(_XS_MULT)
            out[i] = np.float64(x >> np.uint64(11)) * _TO_DOUBLE
        return s

else:  # pragma: no cover - numba-less environments
    _softmax_rows_nb = None
    _softmax_rows_bwd_nb = None
    _gaussian_prior_nb = None
    _gaussian_prior_bwd_nb = None
    _powerlaw_prior_nb = None
    _powerlaw_prior_bwd_nb = None
    _layernorm_nb = None
    _layernorm_bwd_nb = None
    _adam_update_nb = None
    _xorshift_fill_nb = None


def _xorshift_fill_nb_wrapped(state: int, out: np.ndarray) -> int:
    # numba returns np.uint64; callers expect a python int state
    return int(_xorshift_fill_nb(np.uint64(state), out))


# name -> {"numpy": fn, "numba": fn | None}; used by tests and benchmarks
IMPLEMENTATIONS = {
    "softmax_rows": {"numpy": _softmax_rows_np, "numba": _softmax_rows_nb},
    "softmax_rows_bwd": {"numpy": _softmax_rows_bwd_np, "numba": _softmax_rows_bwd_nb},
    "gaussian_prior": {"numpy": _gaussian_prior_np, "numba": _gaussian_prior_nb},
    "gaussian_prior_bwd": {
        "numpy": _gaussian_prior_bwd_np,
        "numba": _gaussian_prior_bwd_nb,
    },
    "powerlaw_prior": {"numpy": _powerlaw_prior_np, "numba": _powerlaw_prior_nb},
    "powerlaw_prior_bwd": {
        "numpy": _powerlaw_prior_bwd_np,
        "numba": _powerlaw_prior_bwd_nb,
    },
    "layernorm": {"numpy": _layernorm_np, "numba": _layernorm_nb},
    "layernorm_bwd": {"numpy": _layernorm_bwd_np, "numba": _layernorm_bwd_nb},
    "adam_update": {"numpy": _adam_update_np, "numba": _adam_update_nb},
    "xorshift_fill": {
        "numpy": _xorshift_fill_np,
        "numba": _xorshift_fill_nb_wrapped if _NUMBA_AVAILABLE else None,
    },
}

if USE_NUMBA:
    softmax_rows = _softmax_rows_nb
    softmax_rows_bwd = _softmax_rows_bwd_nb
    gaussian_prior = _gaussian_prior_nb
    gaussian_prior_bwd = _gaussian_prior_bwd_nb
    powerlaw_prior = _powerlaw_prior_nb
    powerlaw_prior_bwd = _powerlaw_prior_bwd_nb
    layernorm = _layernorm_nb
    layernorm_bwd = _layernorm_bwd_nb
    adam_update = _adam_update_nb
    xorshift_fill = _xorshift_fill_nb_wrapped
else:
    softmax_rows = _softmax_rows_np
    softmax_rows_bwd = _softmax_rows_bwd_np
    gaussian_prior = _gaussian_prior_np
    gaussian_prior_bwd = _gaussian_prior_bwd_np
    powerlaw_prior = _powerlaw_prior_np
    powerlaw_prior_bwd = _powerlaw_prior_bwd_np
    layernorm = _layernorm_np
    layernorm_bwd = _layernorm_bwd_np
    adam_update = _adam_update_np
    xorshift_fill = _xorshift_fill_np
