"""Synthetic data generation, CSV ingestion, normalisation, window slicing.

The generator produces a sum-of-sinusoids base signal with Gaussian noise
and injects labelled anomalies of five behaviour kinds into the test split
only; train and validation splits stay clean.  Everything is a pure
function of the spec (seed included), so reruns are bit-identical.

Anomaly kinds:

* ``point_global``      -- value forced to mean +/- k * global std
* ``point_contextual``  -- value kept inside the global range but at least
                           k local stds away from the centred moving average
                           (window 20)
* ``pattern_shapelet``  -- segment replaced by a square wave of the base
                           amplitude/period (noise kept)
* ``pattern_seasonal``  -- segment frequency multiplied (default x2)
* ``pattern_trend``     -- linear drift ramping to ``magnitude`` added over
                           the segment
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ContractError
from .rng import XorShift64Star

ANOMALY_KINDS = (
    "point_global",
    "point_contextual",
    "pattern_shapelet",
    "pattern_seasonal",
    "pattern_trend",
)

_LOCAL_WINDOW = 20  # centred moving-average window for contextual points


@dataclass
class TimeSeries:
    values: np.ndarray  # (M, d)
    labels: Optional[np.ndarray] = None  # (M,) of 0/1
    channel_names: Optional[List[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if not np.all(np.isfinite(self.values)):
            raise ContractError("time series values must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.values.shape[0]:
                raise ContractError(
                    f"labels length {self.labels.shape[0]} does not match "
                    f"series length {self.values.shape[0]}"
                )

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class AnomalyEvent:
    kind: str
    position: int
    extent: int = 1
    magnitude: float = 5.0

    def validate(self, length: int) -> None:
        if self.kind not in ANOMALY_KINDS:
            raise ConfigError(f"unknown anomaly kind {self.kind!r}")
        if self.kind.startswith("point") and self.extent != 1:
            raise ConfigError(f"{self.kind} events must have extent 1")
        if self.extent < 1:
            raise ConfigError("event extent must be >= 1")
        if self.position < 0 or self.position + self.extent > length:
            raise ConfigError(
                f"event {self.kind}@{self.position}+{self.extent} exceeds "
                f"series bounds 0..{length}"
            )
        if self.kind.startswith("point") and self.magnitude < 3.0:
            raise ConfigError(f"{self.kind} magnitude must be >= 3 (got {self.magnitude})")


@dataclass
class BaseSignal:
    amplitudes: List[float] = field(default_factory=lambda: [1.0, 0.4])
    periods: List[float] = field(default_factory=lambda: [50.0, 13.0])
    phases: List[float] = field(default_factory=lambda: [0.0, 1.0])
    noise_std: float = 0.05

    def validate(self) -> None:
        if not (len(self.amplitudes) == len(self.periods) == len(self.phases)):
            raise ConfigError("amplitudes, periods and phases must align")
        if len(self.amplitudes) == 0:
            raise ConfigError("base signal needs at least one component")
        if any(p <= 0 for p in self.periods):
            raise ConfigError("periods must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")


@dataclass
class SynthSpec:
    length_train: int = 2000
    length_val: int = 1000
    length_test: int = 2000
    channels: int = 1
    base: BaseSignal = field(default_factory=BaseSignal)
    events: List[AnomalyEvent] = field(default_factory=list)
    seed: int = 7
    seasonal_factor: float = 2.0

    def validate(self) -> None:
        for name in ("length_train", "length_val", "length_test", "channels"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        self.base.validate()
        for ev in self.events:
            ev.validate(self.length_test)
        ordered = sorted(self.events, key=lambda e: e.position)
        for a, b in zip(ordered, ordered[1:]):
            if a.position + a.extent > b.position:
                raise ConfigError(
                    f"events overlap: {a.kind}@{a.position}+{a.extent} and "
                    f"{b.kind}@{b.position}+{b.extent}"
                )

    def anomaly_ratio(self) -> float:
        return sum(e.extent for e in self.events) / self.length_test

    def to_json(self) -> str:
        payload = {
            "length_train": self.length_train,
            "length_val": self.length_val,
            "length_test": self.length_test,
            "channels": self.channels,
            "base": {
                "amplitudes": self.base.amplitudes,
                "periods": self.base.periods,
                "phases": self.base.phases,
                "noise_std": self.base.noise_std,
            },
            "events": [
                {
                    "kind": e.kind,
                    "position": e.position,
                    "extent": e.extent,
                    "magnitude": e.magnitude,
                }
                for e in self.events
            ],
            "seed": self.seed,
            "seasonal_factor": self.seasonal_factor,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid synth spec JSON: {exc}") from exc
        try:
            base = BaseSignal(**raw.get("base", {}))
            events = [AnomalyEvent(**e) for e in raw.get("events", [])]
            spec = cls(
                length_train=raw.get("length_train", 2000),
                length_val=raw.get("length_val", 1000),
                length_test=raw.get("length_test", 2000),
                channels=raw.get("channels", 1),
                base=base,
                events=events,
                seed=raw.get("seed", 7),
                seasonal_factor=raw.get("seasonal_factor", 2.0),
            )
        except TypeError as exc:
            raise ConfigError(f"invalid synth spec field: {exc}") from exc
        spec.validate()
        return spec


def default_spec(seed: int = 7) -> SynthSpec:
    """Desk-scale spec: ~1.9% anomalies across all five kinds.

    The contextual point sits near a crest of the slow component, where the
    local deviation fits inside the global range.
    """
    return SynthSpec(
        seed=seed,
        events=[
            AnomalyEvent("point_global", position=300, magnitude=6.0),
            AnomalyEvent("point_contextual", position=662, magnitude=3.0),
            AnomalyEvent("pattern_shapelet", position=1000, extent=12),
            AnomalyEvent("pattern_seasonal", position=1400, extent=12),
            AnomalyEvent("pattern_trend", position=1750, extent=12, magnitude=2.5),
        ],
    )


def _deterministic_part(spec: SynthSpec, t: np.ndarray) -> np.ndarray:
    """Sum-of-sinusoids base at (absolute) times t -> (len(t), channels)."""
    out = np.zeros((t.shape[0], spec.channels))
    for c in range(spec.channels):
        acc = np.zeros(t.shape[0])
        for amp, period, phase in zip(
            spec.base.amplitudes, spec.base.periods, spec.base.phases
        ):
            acc += amp * np.sin(2.0 * np.pi * t / period + phase + 0.7 * c)
        out[:, c] = acc
    return out


def _inject(spec: SynthSpec, clean: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    """Apply events to the test split; returns the label vector.

    Global and local statistics are taken from the observed (pre-injection)
    series, so a zero-event regeneration with the same seed reproduces them
    exactly.
    """
    m = noisy.shape[0]
    observed = noisy.copy()
    labels = np.zeros(m, dtype=np.int64)
    g_mean = observed.mean(axis=0)
    g_std = observed.std(axis=0)
    g_min = observed.min(axis=0)
    g_max = observed.max(axis=0)
    t = np.arange(m, dtype=np.float64)
    amp0 = spec.base.amplitudes[0]
    period0 = spec.base.periods[0]

    for ev in spec.events:
        pos, ext = ev.position, ev.extent
        labels[pos : pos + ext] = 1
        if ev.kind == "point_global":
            sign = 1.0 if ev.magnitude >= 0 else -1.0
            noisy[pos] = g_mean + sign * abs(ev.magnitude) * g_std
        elif ev.kind == "point_contextual":
            lo = max(0, pos - _LOCAL_WINDOW // 2)
            hi = min(m, pos + _LOCAL_WINDOW // 2)
            local = observed[lo:hi]
            l_mean = local.mean(axis=0)
            l_std = np.maximum(local.std(axis=0), 1e-8)
            for c in range(noisy.shape[1]):
                offset = abs(ev.magnitude) * l_std[c]
                up, down = l_mean[c] + offset, l_mean[c] - offset
                headroom_up = g_max[c] - up
                headroom_down = down - g_min[c]
                if headroom_up < 0 and headroom_down < 0:
                    raise ConfigError(
                        f"point_contextual@{pos}: {ev.magnitude} local stds do "
                        "not fit inside the global range"
                    )
                noisy[pos, c] = up if headroom_up >= headroom_down else down
        elif ev.kind == "pattern_shapelet":
            seg = t[pos : pos + ext]
            square = amp0 * np.sign(np.sin(2.0 * np.pi * seg / period0))
            square = np.where(square == 0.0, amp0, square)
            for c in range(noisy.shape[1]):
                noisy[pos : pos + ext, c] += square - clean[pos : pos + ext, c]
        elif ev.kind == "pattern_seasonal":
            seg = t[pos : pos + ext]
            for c in range(noisy.shape[1]):
                fast = np.zeros(ext)
                for amp, period, phase in zip(
                    spec.base.amplitudes, spec.base.periods, spec.base.phases
                ):
                    fast += amp * np.sin(
                        2.0 * np.pi * spec.seasonal_factor * seg / period
                        + phase
                        + 0.7 * c
                    )
                noisy[pos : pos + ext, c] += fast - clean[pos : pos + ext, c]
        elif ev.kind == "pattern_trend":
            ramp = ev.magnitude * (np.arange(1, ext + 1) / ext)
            noisy[pos : pos + ext] += ramp[:, None]
    return labels


def generate(spec: SynthSpec) -> Tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Clean train/val splits and a labelled test split, all seeded."""
    spec.validate()
    rng = XorShift64Star(spec.seed)
    lengths = (spec.length_train, spec.length_val, spec.length_test)
    offsets = np.cumsum((0,) + lengths)
    splits = []
    for i, length in enumerate(lengths):
        t = np.arange(offsets[i], offsets[i] + length, dtype=np.float64)
        clean = _deterministic_part(spec, t)
        noise = rng.normal((length, spec.channels)) * spec.base.noise_std
        splits.append((clean, clean + noise))
    train = TimeSeries(splits[0][1])
    val = TimeSeries(splits[1][1])
    test_clean, test_noisy = splits[2]
    labels = _inject(spec, test_clean, test_noisy)
    test = TimeSeries(test_noisy, labels=labels)
    return train, val, test


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------


def save_csv(ts: TimeSeries, path: str, label_path: Optional[str] = None) -> None:
    """Headerless CSV, 17 significant digits, LF endings."""
    with open(path, "w", newline="\n") as fh:
        for row in ts.values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if label_path is not None:
        if ts.labels is None:
            raise ContractError("series has no labels to save")
        with open(label_path, "w", newline="\n") as fh:
            for v in ts.labels:
                fh.write(f"{int(v)}\n")


def load_csv(path: str, label_path: Optional[str] = None) -> TimeSeries:
    """Parse a headerless numeric CSV; errors carry line numbers."""
    rows: List[List[float]] = []
    width = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ContractError(
                    f"{path}:{lineno}: ragged row has {len(cells)} cells, "
                    f"expected {width}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise ContractError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not rows:
        raise ContractError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    labels = None
    if label_path is not None:
        raw: List[int] = []
        with open(label_path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if line not in ("0", "1"):
                    raise ContractError(
                        f"{label_path}:{lineno}: label must be 0 or 1, got {line!r}"
                    )
                raw.append(int(line))
        if len(raw) != values.shape[0]:
            raise ContractError(
                f"label file has {len(raw)} rows, data has {values.shape[0]}"
            )
        labels = np.asarray(raw, dtype=np.int64)
    return TimeSeries(values, labels=labels)


# ---------------------------------------------------------------------------
# normalisation and windows
# ---------------------------------------------------------------------------


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8

    @classmethod
    def from_train(cls, ts: TimeSeries) -> "NormStats":
        return cls(
            mean=ts.values.mean(axis=0),
            std=np.maximum(ts.values.std(axis=0), 1e-8),
        )


def normalize(ts: TimeSeries, stats: NormStats) -> TimeSeries:
    """Per-channel (x - mean) / std with the training-split statistics."""
    return TimeSeries(
        (ts.values - stats.mean) / stats.std,
        labels=None if ts.labels is None else ts.labels.copy(),
        channel_names=ts.channel_names,
    )


@dataclass
class WindowSlice:
    start: int
    values: np.ndarray  # (window, d)
    new_from: int = 0  # first row not covered by an earlier window


def window_slices(values: np.ndarray, window: int, mode: str) -> List[WindowSlice]:
    """Non-overlapped windows, shared by training and inference.

    ``train_drop_tail`` drops a trailing remainder shorter than the window;
    ``infer_overlap_tail`` adds one final window over the last ``window``
    points with ``new_from`` marking where its fresh rows start.
    """
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[0]
    if m < window:
        raise ContractError(f"series of length {m} is shorter than one window ({window})")
    slices = [
        WindowSlice(start=s, values=np.ascontiguousarray(values[s : s + window]))
        for s in range(0, m - window + 1, window)
    ]
    if mode == "train_drop_tail":
        return slices
    if mode == "infer_overlap_tail":
        tail = m - (slices[-1].start + window)
        if tail > 0:
            slices.append(
                WindowSlice(
                    start=m - window,
                    values=np.ascontiguousarray(values[m - window :]),
                    new_from=window - tail,
                )
            )
        return slices
    raise ContractError("mode must be 'train_drop_tail' or 'infer_overlap_tail'")
