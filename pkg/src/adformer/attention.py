"""Two-branch attention block.

Each block produces, per head, two row-stochastic N x N association maps:

* the *prior* map, a distance-based kernel (Gaussian by default) whose
  per-point scale is a learned projection of the input -- it concentrates
  mass on nearby time points by construction;
* the *series* map, ordinary scaled dot-product softmax attention learned
  from the data.

The attended representation is built from the series map only; the prior
exists to be compared against the series map downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    add_scalar,
    concat_cols,
    gaussian_prior,
    matmul,
    powerlaw_prior,
    scale,
    slice_cols,
    softmax_lastdim,
    softplus,
    transpose,
)

PRIOR_KINDS = ("gaussian", "power_law")


@dataclass
class AttentionConfig:
    d_model: int
    heads: int
    sigma_floor: float = 1e-4
    prior_kind: str = "gaussian"

    def validate(self) -> None:
        if self.d_model <= 0 or self.heads <= 0:
            raise ConfigError("d_model and heads must be positive")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by heads={self.heads}"
            )
        if self.sigma_floor <= 0:
            raise ConfigError("sigma_floor must be positive")
        if self.prior_kind not in PRIOR_KINDS:
            raise ConfigError(f"prior_kind must be one of {PRIOR_KINDS}")


@dataclass
class AttentionWeights:
    """Learnable projections of one attention block."""

    w_q: Tensor  # d_model x d_model
    w_k: Tensor  # d_model x d_model
    w_v: Tensor  # d_model x d_model
    w_sigma: Tensor  # d_model x heads
    w_out: Tensor  # d_model x d_model


@dataclass
class AttentionOutput:
    """Attended representation plus the association maps that produced it."""

    z_hat: Tensor  # N x d_model
    prior: Tuple[Tensor, ...]  # per head, N x N row-stochastic
    series: Tuple[Tensor, ...]  # per head, N x N row-stochastic
    sigma: Tensor  # N x heads, positive scales

    def prior_stack(self) -> np.ndarray:
        """Prior maps as an (h, N, N) array (values only)."""
        return np.stack([p.data for p in self.prior])

    def series_stack(self) -> np.ndarray:
        return np.stack([s.data for s in self.series])

    def detach_series(self) -> "AttentionOutput":
        """Copy with gradient flow through the series maps cut."""
        return AttentionOutput(
            z_hat=self.z_hat,
            prior=self.prior,
            series=tuple(s.detach() for s in self.series),
            sigma=self.sigma,
        )

    def detach_prior(self) -> "AttentionOutput":
        """Copy with gradient flow through the prior maps cut."""
        return AttentionOutput(
            z_hat=self.z_hat,
            prior=tuple(p.detach() for p in self.prior),
            series=self.series,
            sigma=self.sigma,
        )


@lru_cache(maxsize=8)
def distance_matrix(n: int) -> np.ndarray:
    """Squared index distances: entry (i, j) = (j - i)^2."""
    idx = np.arange(n, dtype=np.float64)
    return (idx[None, :] - idx[:, None]) ** 2


@lru_cache(maxsize=8)
def log_distance_matrix(n: int) -> np.ndarray:
    """ln(|j - i| + 1), the log-domain base of the power-law kernel."""
    idx = np.arange(n, dtype=np.float64)
    return np.log(np.abs(idx[None, :] - idx[:, None]) + 1.0)


def project_qkvs(
    x: Tensor, weights: AttentionWeights
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """Linear projections of the input: queries, keys, values and raw scales."""
    d_model = weights.w_q.shape[0]
    if x.data.ndim != 2 or x.shape[1] != d_model:
        raise ShapeError(f"expected input of shape (N, {d_model}), got {x.shape}")
    q = matmul(x, weights.w_q)
    k = matmul(x, weights.w_k)
    v = matmul(x, weights.w_v)
    sigma_raw = matmul(x, weights.w_sigma)
    return q, k, v, sigma_raw


def sigma_transform(sigma_raw: Tensor, sigma_floor: float) -> Tensor:
    """Map raw scale projections to strictly positive values.

    softplus keeps the map smooth and unbounded above; the floor keeps the
    kernel away from a collapse to zero width when the scales are driven
    down during training.
    """
    return add_scalar(softplus(sigma_raw), sigma_floor)


def compute_prior(sigma: Tensor, dist: np.ndarray, prior_kind: str) -> Tuple[Tensor, ...]:
    """Per-head row-stochastic prior maps from positive scales.

    ``sigma`` is (N, heads); for the gaussian kind column m provides the
    per-point kernel widths of head m, for the power_law kind it provides
    the per-point exponents.
    """
    if prior_kind not in PRIOR_KINDS:
        raise ConfigError(f"prior_kind must be one of {PRIOR_KINDS}")
    heads = sigma.shape[1]
    maps = []
    if prior_kind == "gaussian":
        for m in range(heads):
            maps.append(gaussian_prior(slice_cols(sigma, m, m + 1), dist))
    else:
        logdist = log_distance_matrix(dist.shape[0])
        for m in range(heads):
            maps.append(powerlaw_prior(slice_cols(sigma, m, m + 1), logdist))
    return tuple(maps)


def compute_series(q: Tensor, k: Tensor, heads: int) -> Tuple[Tensor, ...]:
    """Per-head softmax attention maps at scale 1/sqrt(d_model/heads)."""
    d_model = q.shape[1]
    d_head = d_model // heads
    inv_scale = 1.0 / np.sqrt(float(d_head))
    maps = []
    for m in range(heads):
        qm = slice_cols(q, m * d_head, (m + 1) * d_head)
        km = slice_cols(k, m * d_head, (m + 1) * d_head)
        scores = scale(matmul(qm, transpose(km)), inv_scale)
        maps.append(softmax_lastdim(scores))
    return tuple(maps)


def attend(series: Tuple[Tensor, ...], v: Tensor, w_out: Tensor) -> Tensor:
    """Apply per-head series maps to values, concatenate heads, project."""
    heads = len(series)
    d_head = v.shape[1] // heads
    per_head = [
        matmul(series[m], slice_cols(v, m * d_head, (m + 1) * d_head))
        for m in range(heads)
    ]
    return matmul(concat_cols(per_head), w_out)


def anomaly_attention(
    x: Tensor, weights: AttentionWeights, cfg: AttentionConfig, dist: np.ndarray
) -> AttentionOutput:
    """Full block: projections, both association branches, attended output."""
    q, k, v, sigma_raw = project_qkvs(x, weights)
    sigma = sigma_transform(sigma_raw, cfg.sigma_floor)
    prior = compute_prior(sigma, dist, cfg.prior_kind)
    series = compute_series(q, k, cfg.heads)
    z_hat = attend(series, v, weights.w_out)
    return AttentionOutput(z_hat=z_hat, prior=prior, series=series, sigma=sigma)
