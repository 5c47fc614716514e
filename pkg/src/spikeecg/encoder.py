"""Beat segmentation, window splitting and dual-polarity Poisson encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .snn_core import SpikeTrain

PRE_R_SECONDS = 0.25
POST_R_SECONDS = 0.45
NORMALIZATIONS = ("iqr", "zscore", "none")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def beat_geometry(fs: float) -> tuple[int, int]:
    """Samples kept before and after the R peak at sampling rate ``fs``."""
    return round_half_up(PRE_R_SECONDS * fs), round_half_up(POST_R_SECONDS * fs)


def beat_length(fs: float) -> int:
    pre, post = beat_geometry(fs)
    return pre + post


class TruncatedBeatError(DataError):
    """The segmentation window around an R peak leaves the signal."""


@dataclass
class Beat:
    samples: np.ndarray
    fs: float
    r_index: int
    label: str | None = None
    record_id: str | None = None
    r_peak: int | None = None  # position of the R peak in the source record

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class Window:
    q: int
    samples: np.ndarray
    offset: int


@dataclass(frozen=True)
class EncoderParams:
    r_base: float = 0.05
    r_scale: float = 0.1
    horizon: int = 200
    dt: float = 1.0

    def __post_init__(self):
        if self.r_base < 0:
            raise ConfigError(f"r_base must be >= 0, got {self.r_base}")
        if not self.r_scale > 0:
            raise ConfigError(f"r_scale must be > 0, got {self.r_scale}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")


def segment_beat(signal, r_peak: int, fs: float, label: str | None = None) -> Beat:
    """Cut the beat around ``r_peak``.

    Raises:
        TruncatedBeatError: the window does not fit inside ``signal``.
    """
    pre, post = beat_geometry(fs)
    start, stop = r_peak - pre, r_peak + post
    if start < 0 or stop > len(signal):
        raise TruncatedBeatError(
            f"truncated-beat: R peak {r_peak} needs samples [{start}, {stop}) "
            f"but signal has {len(signal)}"
        )
    samples = np.asarray(signal[start:stop], dtype=np.float64)
    return Beat(samples=samples, fs=fs, r_index=pre, label=label, r_peak=r_peak)


def window_length(n_samples: int, q_count: int) -> int:
    return -(-n_samples // -(-q_count // 2))


def split_windows(beat: Beat, q_count: int) -> list[Window]:
    """Split a beat into ``q_count`` equal, evenly spaced, overlapping windows."""
    if q_count < 1:
        raise ConfigError(f"window count must be >= 1, got {q_count}")
    n = len(beat.samples)
    length = window_length(n, q_count)
    if length < 2:
        raise ConfigError(f"{q_count} windows leave fewer than 2 samples per window (beat has {n})")
    windows = []
    for q in range(1, q_count + 1):
        offset = 0 if q_count == 1 else round_half_up((q - 1) * (n - length) / (q_count - 1))
        windows.append(Window(q=q, samples=beat.samples[offset : offset + length], offset=offset))
    return windows


def cell_rates(samples: np.ndarray, params: EncoderParams) -> tuple[np.ndarray, np.ndarray]:
    """Firing rates (spikes/ms) of the positive and negative cell of each sample."""
    x = np.asarray(samples, dtype=np.float64)
    active = params.r_base + params.r_scale * np.abs(x)
    pos = np.where(x >= 0, active, params.r_base)
    neg = np.where(x < 0, active, params.r_base)
    return pos, neg


def spike_probability(rate: np.ndarray, params: EncoderParams) -> np.ndarray:
    return np.minimum(1.0, rate * params.dt)


def encode_window(
    window: Window, params: EncoderParams, rng: np.random.Generator
) -> tuple[SpikeTrain, SpikeTrain]:
    """Bernoulli-per-step Poisson encoding of one window into two polarity trains."""
    pos, neg = cell_rates(window.samples, params)
    p = spike_probability(np.stack([pos, neg]), params)
    raster = rng.random((params.horizon, 2, len(window.samples))) < p
    return SpikeTrain(raster[:, 0]), SpikeTrain(raster[:, 1])


def route_windows(encoded: Sequence[tuple[SpikeTrain, SpikeTrain]]) -> list[SpikeTrain]:
    """Interleave polarity trains: window q's positive train first, then its negative."""
    routed = []
    for pos, neg in encoded:
        routed.extend((pos, neg))
    return routed


def beat_rates(beat: Beat, q_count: int, params: EncoderParams) -> np.ndarray:
    """Per-cell rates of a beat in routed order, shape ``(2Q, L)``."""
    rows = []
    for window in split_windows(beat, q_count):
        rows.extend(cell_rates(window.samples, params))
    return np.stack(rows)


def encode_beat(
    beat: Beat, q_count: int, params: EncoderParams, rng: np.random.Generator
) -> np.ndarray:
    """Encode every window of a beat at once.

    Same distribution as ``route_windows([encode_window(w, ...) for w in windows])``
    stacked into a boolean array of shape ``(horizon, 2Q, L)``, drawn in a
    single call.
    """
    p = spike_probability(beat_rates(beat, q_count, params), params)
    n_windows, length = p.shape
    draws = rng.random((params.horizon, n_windows // 2, 2, length))
    return draws.reshape(params.horizon, n_windows, length) < p


def normalize_signal(samples, method: str = "iqr") -> np.ndarray:
    """Scale a whole record before segmentation.

    ``iqr`` centres on the median and divides by the inter-quartile range,
    ``zscore`` uses mean and standard deviation, ``none`` passes through.
    A zero spread leaves the scale unchanged.
    """
    x = np.asarray(samples, dtype=np.float64)
    if method == "none":
        return x.copy()
    if method == "iqr":
        q1, med, q3 = np.percentile(x, [25, 50, 75])
        centre, spread = med, q3 - q1
    elif method == "zscore":
        centre, spread = x.mean(), x.std()
    else:
        raise ConfigError(f"unknown normalization {method!r}; expected one of {NORMALIZATIONS}")
    return (x - centre) / (spread if spread > 0 else 1.0)
