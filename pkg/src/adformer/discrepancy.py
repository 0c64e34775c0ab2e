"""Association discrepancy between prior and series maps.

For each layer the per-head maps are averaged over heads first (the mean of
row-stochastic rows is row-stochastic), then a row-wise statistical distance
compares the two averaged maps, and the per-point values are averaged over
the selected layers.  The default distance is the symmetrized KL divergence;
Jensen-Shannon, cross-entropy and squared-L2 variants are available.

Probabilities are clamped at ``prob_floor`` before every logarithm so that
underflowed softmax entries cannot produce infinities; the clamp is far
below any value that matters (1e-12 against rows summing to 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .attention import AttentionOutput
from .errors import ConfigError, ContractError
from .tensor import Tensor, clamp_min, log, mul, scale, sub, sum_lastdim

METRICS = ("sym_kl", "jsd", "cross_entropy", "l2")


@dataclass
class DiscrepancyConfig:
    metric: str = "sym_kl"
    layers: Optional[Tuple[int, ...]] = None  # 1-based subset; None = all
    prob_floor: float = 1e-12

    def validate(self, n_layers: Optional[int] = None) -> None:
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        if self.prob_floor <= 0:
            raise ConfigError("prob_floor must be positive")
        if self.layers is not None:
            if len(self.layers) == 0:
                raise ConfigError("layer selection must be non-empty")
            if n_layers is not None and any(
                l < 1 or l > n_layers for l in self.layers
            ):
                raise ConfigError(
                    f"layer selection {self.layers} outside 1..{n_layers}"
                )


def _check_distribution(p: np.ndarray, name: str) -> None:
    if p.ndim != 1:
        raise ContractError(f"{name} must be a 1-d distribution")
    if np.any(p < 0):
        raise ContractError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ContractError(f"{name} does not sum to 1 (sum={p.sum():.8f})")


def row_sym_kl(p, q, prob_floor: float = 1e-12) -> float:
    """Symmetrized KL divergence KL(p||q) + KL(q||p) between two rows."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    lp = np.log(np.maximum(p, prob_floor))
    lq = np.log(np.maximum(q, prob_floor))
    return float((p * (lp - lq)).sum() + (q * (lq - lp)).sum())


def row_jsd(p, q, prob_floor: float = 1e-12) -> float:
    """Jensen-Shannon divergence; bounded by ln 2."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    m = 0.5 * (p + q)
    lm = np.log(np.maximum(m, prob_floor))
    lp = np.log(np.maximum(p, prob_floor))
    lq = np.log(np.maximum(q, prob_floor))
    return float(0.5 * (p * (lp - lm)).sum() + 0.5 * (q * (lq - lm)).sum())


def row_cross_entropy(p, q, prob_floor: float = 1e-12) -> float:
    """Cross-entropy -sum p ln q (clamped)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    return float(-(p * np.log(np.maximum(q, prob_floor))).sum())


def row_l2(p, q, prob_floor: float = 1e-12) -> float:
    """Squared L2 distance sum (p - q)^2."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    return float(((p - q) ** 2).sum())


ROW_METRICS = {
    "sym_kl": row_sym_kl,
    "jsd": row_jsd,
    "cross_entropy": row_cross_entropy,
    "l2": row_l2,
}


def _kl_rows(p: Tensor, q: Tensor, floor: float) -> Tensor:
    lp = log(clamp_min(p, floor))
    lq = log(clamp_min(q, floor))
    return sum_lastdim(mul(p, sub(lp, lq)))


def metric_rows(p: Tensor, q: Tensor, metric: str, floor: float) -> Tensor:
    """Differentiable row-wise distance between two (N, N) maps -> (N, 1)."""
    if metric == "sym_kl":
        return _kl_rows(p, q, floor) + _kl_rows(q, p, floor)
    if metric == "jsd":
        m = scale(p + q, 0.5)
        return scale(_kl_rows(p, m, floor) + _kl_rows(q, m, floor), 0.5)
    if metric == "cross_entropy":
        return -sum_lastdim(mul(p, log(clamp_min(q, floor))))
    if metric == "l2":
        d = sub(p, q)
        return sum_lastdim(mul(d, d))
    raise ConfigError(f"metric must be one of {METRICS}")


def head_average(maps: Sequence[Tensor]) -> Tensor:
    """Mean of the per-head maps; preserves row-stochasticity."""
    total = maps[0]
    for m in maps[1:]:
        total = total + m
    return scale(total, 1.0 / len(maps))


def assoc_discrepancy(
    layers: Sequence[AttentionOutput], cfg: DiscrepancyConfig
) -> Tensor:
    """Per-point discrepancy vector (N, 1), averaged over selected layers.

    Heads are averaged before the row distance is taken; layer indices in
    ``cfg.layers`` are 1-based.
    """
    cfg.validate(n_layers=len(layers))
    selected = (
        list(range(1, len(layers) + 1)) if cfg.layers is None else list(cfg.layers)
    )
    acc = None
    for idx in selected:
        out = layers[idx - 1]
        p_avg = head_average(out.prior)
        s_avg = head_average(out.series)
        rows = metric_rows(p_avg, s_avg, cfg.metric, cfg.prob_floor)
        acc = rows if acc is None else acc + rows
    return scale(acc, 1.0 / len(selected))


def assoc_discrepancy_values(
    layers: Sequence[AttentionOutput], cfg: DiscrepancyConfig
) -> np.ndarray:
    """Discrepancy as a plain length-N array (no gradient tracking needed)."""
    return assoc_discrepancy(layers, cfg).data[:, 0]
