"""Inference scoring, window stitching and threshold selection.

Per window, the anomaly criterion combines two per-point signals: the
softmax over the window of the negated association discrepancy, and the
channel-mean squared reconstruction error.  The default combination is the
elementwise product.

A series is scored over consecutive non-overlapped windows; if a tail
shorter than one window remains, one extra window covering the final
``window`` points is scored and only its new tail scores are kept, so every
point is scored exactly once with full-width context.  Note the softmax
normalisation makes the discrepancy component depend on the window a point
lands in; tail points are normalised within the extra window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .data import window_slices
from .discrepancy import DiscrepancyConfig, assoc_discrepancy_values, head_average
from .errors import ConfigError, ContractError
from .model import ForwardResult, ModelConfig, ModelParams, forward
from .tensor import no_grad

CRITERIA = ("multiplication", "addition", "assdis_only", "recon_only")


@dataclass
class ThresholdSpec:
    """Either a validation-ratio threshold or a fixed value."""

    mode: str = "ratio_r"  # "ratio_r" | "fixed_delta"
    r: Optional[float] = 0.01
    delta: Optional[float] = None

    def validate(self) -> None:
        if self.mode == "ratio_r":
            if self.r is None or self.delta is not None:
                raise ConfigError("ratio_r mode needs r and no delta")
            if not 0.0 < self.r < 1.0:
                raise ConfigError(f"r must be in (0, 1), got {self.r}")
        elif self.mode == "fixed_delta":
            if self.delta is None or self.r is not None:
                raise ConfigError("fixed_delta mode needs delta and no r")
        else:
            raise ConfigError("mode must be 'ratio_r' or 'fixed_delta'")


@dataclass
class ScoreSeries:
    """Per-point scores plus the components they were built from."""

    scores: np.ndarray
    recon_component: np.ndarray  # channel-mean squared error
    assdis_component: np.ndarray  # softmax over the window of -discrepancy
    window_id: np.ndarray  # index into window_starts
    sigma: np.ndarray  # head- and layer-averaged learned scale
    window_starts: List[int]
    series_maps: Optional[List[np.ndarray]] = None  # per window, averaged S

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    def to_csv(self) -> str:
        lines = ["index,score,recon_component,assdis_component"]
        for i in range(len(self)):
            lines.append(
                f"{i},{self.scores[i]:.17g},{self.recon_component[i]:.17g},"
                f"{self.assdis_component[i]:.17g}"
            )
        return "\n".join(lines) + "\n"


def window_score(
    fr: ForwardResult,
    x: np.ndarray,
    dcfg: DiscrepancyConfig,
    criterion: str = "multiplication",
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores for one window: (score, recon component, discrepancy component)."""
    if criterion not in CRITERIA:
        raise ConfigError(f"criterion must be one of {CRITERIA}")
    assdis = assoc_discrepancy_values(fr.layers, dcfg)
    c_ad = kernels.softmax_rows(np.ascontiguousarray(-assdis[None, :]))[0]
    c_recon = ((x - fr.x_hat.data) ** 2).mean(axis=1)
    if criterion == "multiplication":
        scores = c_ad * c_recon
    elif criterion == "addition":
        scores = c_ad + c_recon
    elif criterion == "assdis_only":
        scores = c_ad.copy()
    else:
        scores = c_recon.copy()
    return scores, c_recon, c_ad


def _window_sigma(fr: ForwardResult) -> np.ndarray:
    """Learned scales averaged over heads and layers, one value per point."""
    return np.mean([out.sigma.data.mean(axis=1) for out in fr.layers], axis=0)


def _window_series_map(fr: ForwardResult) -> np.ndarray:
    """Series maps averaged over heads and layers: one (N, N) matrix."""
    return np.mean([head_average(out.series).data for out in fr.layers], axis=0)


def score_series(
    values: np.ndarray,
    params: ModelParams,
    mcfg: ModelConfig,
    dcfg: Optional[DiscrepancyConfig] = None,
    criterion: str = "multiplication",
    keep_series_maps: bool = False,
) -> ScoreSeries:
    """Score every point of a series exactly once.

    Consecutive non-overlapped windows are scored; a remaining tail of t < N
    points is covered by one extra window over the final N points, of which
    only the last t scores are kept.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ContractError("score_series expects an (M, d) value matrix")
    m, n = values.shape[0], mcfg.window
    dcfg = dcfg or DiscrepancyConfig()

    slices = window_slices(values, n, "infer_overlap_tail")
    starts = [s.start for s in slices]

    scores = np.empty(m)
    recon_c = np.empty(m)
    assdis_c = np.empty(m)
    window_id = np.empty(m, dtype=np.int64)
    sigma = np.empty(m)
    maps: Optional[List[np.ndarray]] = [] if keep_series_maps else None

    with no_grad():
        for wid, ws in enumerate(slices):
            fr = forward(ws.values, params, mcfg)
            w_scores, w_recon, w_ad = window_score(fr, ws.values, dcfg, criterion)
            w_sigma = _window_sigma(fr)
            first_new = ws.new_from
            sl = slice(ws.start + first_new, ws.start + n)
            scores[sl] = w_scores[first_new:]
            recon_c[sl] = w_recon[first_new:]
            assdis_c[sl] = w_ad[first_new:]
            sigma[sl] = w_sigma[first_new:]
            window_id[sl] = wid
            if maps is not None:
                maps.append(_window_series_map(fr))

    return ScoreSeries(
        scores=scores,
        recon_component=recon_c,
        assdis_component=assdis_c,
        window_id=window_id,
        sigma=sigma,
        window_starts=starts,
        series_maps=maps,
    )


def select_threshold(val_scores: np.ndarray, spec: ThresholdSpec) -> float:
    """Threshold so that exactly floor(r * M) validation points exceed it.

    Ratio mode sorts descending and returns the score at 0-based rank
    floor(r * M); with the strict ``score > delta`` predicate and no ties
    exactly that many points are flagged.  Ties can only reduce the flagged
    count.  Fixed mode returns delta verbatim.
    """
    spec.validate()
    if spec.mode == "fixed_delta":
        return float(spec.delta)
    val_scores = np.asarray(val_scores, dtype=np.float64)
    if val_scores.size == 0:
        raise ContractError("validation scores must be non-empty")
    k = int(np.floor(spec.r * val_scores.size))
    k = min(k, val_scores.size - 1)
    return float(np.sort(val_scores)[::-1][k])


def predict(scores: np.ndarray, delta: float) -> np.ndarray:
    """Binary labels: 1 where score strictly exceeds the threshold."""
    return (np.asarray(scores) > delta).astype(np.int64)
