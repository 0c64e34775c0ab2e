"""Self-contained SVG chart of a scored series.

Two stacked panels: the raw series (when provided) and the anomaly score
with the decision threshold.  True anomaly segments are shaded in both
panels.  The output is plain SVG 1.1 with no external references, so it can
be opened anywhere; the threshold line carries its data value in a
``data-delta`` attribute for downstream tools.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

_WIDTH = 960
_PANEL_H = 220
_MARGIN = 45


def _scale(values: np.ndarray, lo: float, hi: float, y0: float, y1: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return y1 - (values - lo) / span * (y1 - y0)


def _polyline(xs: np.ndarray, ys: np.ndarray, color: str, width: float = 1.0,
              extra: str = "") -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
        f'{extra}points="{pts}" />'
    )


def _segments(labels: np.ndarray) -> List[Tuple[int, int]]:
    diff = np.diff(labels.astype(np.int8), prepend=0, append=0)
    return list(zip(np.nonzero(diff == 1)[0].tolist(), np.nonzero(diff == -1)[0].tolist()))


def render_svg(
    scores: np.ndarray,
    series: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    delta: Optional[float] = None,
    title: str = "anomaly scores",
) -> str:
    """Build the chart as an SVG string."""
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.shape[0]
    panels = 2 if series is not None else 1
    height = _MARGIN + panels * (_PANEL_H + _MARGIN)
    xs = _MARGIN + np.arange(m) / max(m - 1, 1) * (_WIDTH - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{height}" viewBox="0 0 {_WIDTH} {height}">',
        f'<rect width="{_WIDTH}" height="{height}" fill="white" />',
        f'<text x="{_MARGIN}" y="{_MARGIN - 18}" font-family="monospace" '
        f'font-size="14">{title}</text>',
    ]

    def shade(y0: float, y1: float) -> None:
        if labels is None:
            return
        for a, b in _segments(np.asarray(labels)):
            xa = xs[a]
            xb = xs[min(b, m - 1)] if b > a else xa
            parts.append(
                f'<rect x="{xa:.2f}" y="{y0:.2f}" width="{max(xb - xa, 2.0):.2f}" '
                f'height="{y1 - y0:.2f}" fill="#ffcccc" />'
            )

    top = float(_MARGIN)
    if series is not None:
        series = np.asarray(series, dtype=np.float64)
        col = series[:, 0] if series.ndim == 2 else series
        lo, hi = float(col.min()), float(col.max())
        shade(top, top + _PANEL_H)
        parts.append(
            f'<rect x="{_MARGIN}" y="{top:.2f}" width="{_WIDTH - 2 * _MARGIN}" '
            f'height="{_PANEL_H}" fill="none" stroke="#888" />'
        )
        parts.append(_polyline(xs, _scale(col, lo, hi, top, top + _PANEL_H), "#1f77b4"))
        top += _PANEL_H + _MARGIN

    lo = float(min(scores.min(), 0.0))
    hi = float(scores.max())
    if delta is not None:
        lo, hi = min(lo, delta), max(hi, delta)
    shade(top, top + _PANEL_H)
    parts.append(
        f'<rect x="{_MARGIN}" y="{top:.2f}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_PANEL_H}" fill="none" stroke="#888" />'
    )
    parts.append(_polyline(xs, _scale(scores, lo, hi, top, top + _PANEL_H), "#d62728"))
    if delta is not None:
        y = float(_scale(np.asarray([delta]), lo, hi, top, top + _PANEL_H)[0])
        parts.append(
            f'<line id="threshold" data-delta="{delta:.17g}" x1="{_MARGIN}" '
            f'x2="{_WIDTH - _MARGIN}" y1="{y:.2f}" y2="{y:.2f}" '
            f'stroke="#2ca02c" stroke-width="1.5" stroke-dasharray="6,3" />'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
