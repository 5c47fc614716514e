"""Gaussian gain layer with per-window trainable scale.

Every encoder synapse ``i`` of window ``q`` drives its own LIF neuron through
a weight ``g[q][i] = beta[q] * N(i; mu, sigma)`` where the normal density is
centred on the window middle with ``sigma`` a third of the window length.
``beta`` is trained so every window fires the same mean number of spikes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, EmptyDataError
from .snn_core import LifParams, integrate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianParams:
    r_target: float = 10.0
    alpha_g: float = 0.5
    epsilon: float = 0.05
    max_epochs: int = 50
    beta_min: float = 1e-3
    beta_init: float = 1.0

    def __post_init__(self):
        if not self.r_target > 0:
            raise ConfigError(f"r_target must be > 0, got {self.r_target}")
        if not self.beta_min > 0:
            raise ConfigError(f"beta_min must be > 0, got {self.beta_min}")
        if not self.beta_init > 0:
            raise ConfigError(f"beta_init must be > 0, got {self.beta_init}")
        if self.epsilon < 0 or self.max_epochs < 0:
            raise ConfigError("epsilon and max_epochs must be non-negative")


def kernel(window_len: int) -> np.ndarray:
    """Unit-scale Gaussian density sampled at ``i = 1..window_len``."""
    if window_len < 2:
        raise ConfigError(f"window_len must be >= 2, got {window_len}")
    mu = window_len / 2
    sigma = window_len / 3
    i = np.arange(1, window_len + 1, dtype=np.float64)
    return np.exp(-0.5 * ((i - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def init_gains(window_len: int, beta: float) -> np.ndarray:
    return beta * kernel(window_len)


def update_beta(mean_rate: float, r_target: float, alpha_g: float) -> float:
    if not r_target > 0:
        raise ConfigError(f"r_target must be > 0, got {r_target}")
    return alpha_g * (1.0 - mean_rate / r_target)


def measure_mean_rate(counts) -> float:
    """Mean spikes per neuron per beat.

    ``counts`` holds per-neuron spike counts with beats on the first axis
    (a 1-D array is one beat).
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise EmptyDataError("cannot measure a rate over an empty pass")
    return float(counts.mean())


@dataclass
class GaussianLayer:
    beta: np.ndarray
    window_len: int
    lif: LifParams
    params: GaussianParams = field(default_factory=GaussianParams)

    @classmethod
    def create(cls, n_windows: int, window_len: int, lif: LifParams, params: GaussianParams):
        return cls(np.full(n_windows, params.beta_init), window_len, lif, params)

    @property
    def n_windows(self) -> int:
        return len(self.beta)

    @property
    def gains(self) -> np.ndarray:
        """Gain matrix of shape ``(2Q, L)``."""
        return self.beta[:, None] * kernel(self.window_len)[None, :]

    def forward(self, spikes: np.ndarray) -> np.ndarray:
        """Run the layer on encoder spikes.

        ``spikes`` is boolean with time first and ``(2Q, L)`` last, with any
        number of batch axes in between; the output raster has the same shape.
        """
        spikes = np.asarray(spikes)
        if spikes.shape[-2:] != (self.n_windows, self.window_len):
            raise ConfigError(
                f"encoder output {spikes.shape[-2:]} does not match gaussian layer "
                f"({self.n_windows}, {self.window_len})"
            )
        raster, _ = integrate(spikes * self.gains, self.lif, layer="gaussian")
        return raster


@dataclass
class GaussianReport:
    converged: bool
    epochs: int
    rates: list[float]
    history: list[list[float]]


def window_counts(layer: GaussianLayer, spikes: np.ndarray) -> np.ndarray:
    """Output spike counts summed over time, neurons and beats, per window.

    ``spikes`` has shape ``(horizon, beats, 2Q, L)``.
    """
    return layer.forward(spikes).sum(axis=(0, 1, 3))


def window_rates(layer: GaussianLayer, spikes: np.ndarray) -> np.ndarray:
    """Mean output spikes per neuron per beat for each window.

    ``spikes`` has shape ``(horizon, beats, 2Q, L)``.
    """
    n_beats = spikes.shape[1]
    if n_beats == 0:
        raise EmptyDataError("cannot measure a rate over an empty pass")
    return window_counts(layer, spikes) / (n_beats * layer.window_len)


def train_gaussian(
    layer: GaussianLayer,
    measure: Callable[[GaussianLayer, int], np.ndarray],
) -> GaussianReport:
    """Iterate dataset passes updating every ``beta`` until rates match target.

    Args:
        layer: updated in place.
        measure: ``measure(layer, epoch)`` runs one pass over the training
            set and returns the mean output rate of every window, for
            example by summing :func:`window_counts` over chunks of beats.
    """
    p = layer.params
    history: list[list[float]] = []
    rates = np.zeros(layer.n_windows)
    converged = False
    epochs = 0
    for epoch in range(p.max_epochs):
        rates = np.asarray(measure(layer, epoch), dtype=np.float64)
        history.append(rates.tolist())
        error = np.abs(1.0 - rates / p.r_target)
        log.debug("gaussian epoch %d rates=%s beta=%s", epoch, rates.round(2), layer.beta.round(3))
        if error.max() < p.epsilon:
            converged = True
            break
        for q, rate in enumerate(rates):
            layer.beta[q] = max(p.beta_min, layer.beta[q] + update_beta(rate, p.r_target, p.alpha_g))
        epochs = epoch + 1
    if not converged and p.max_epochs > 0:
        log.warning(
            "gaussian layer did not converge in %d epochs (max |1 - R/R_target| = %.3f)",
            p.max_epochs,
            float(np.abs(1.0 - rates / p.r_target).max()),
        )
    return GaussianReport(converged, epochs, rates.tolist(), history)
