"""Reward-modulated STDP output layer with one LIF neuron per class."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .feature_stdp import POST_OFFSET
from .snn_core import NEVER, LifParams, LifState, integrate


@dataclass(frozen=True)
class RstdpParams:
    ar_plus: float = 0.02
    ar_minus: float = -0.02
    ap_plus: float = 0.02
    ap_minus: float = -0.02
    psi_max: float = 1.0
    init_low: float = 0.4
    init_high: float = 0.6

    def __post_init__(self):
        if not (self.ar_plus >= 0 >= self.ar_minus and self.ap_plus >= 0 >= self.ap_minus):
            raise ConfigError("R-STDP rates need ar_plus, ap_plus > 0 > ar_minus, ap_minus")
        if not self.psi_max > 0:
            raise ConfigError(f"psi_max must be > 0, got {self.psi_max}")
        if not 0 <= self.init_low <= self.init_high <= 1:
            raise ConfigError("need 0 <= init_low <= init_high <= 1 (fractions of psi_max)")


@dataclass
class ClassifierState:
    psi: np.ndarray  # (W, N, K)
    classes: list[str]

    @classmethod
    def initial(cls, n_windows, n_neurons, classes: Sequence[str], params: RstdpParams, rng):
        shape = (n_windows, n_neurons, len(classes))
        psi = rng.uniform(params.init_low, params.init_high, shape) * params.psi_max
        return cls(psi=psi, classes=list(classes))

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def predict(counts, potentials=None) -> int:
    """Winner-take-all on spike counts.

    Ties go to the higher final membrane potential, then the lower index.
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ConfigError("need at least one class neuron")
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) > 1 and potentials is not None:
        u = np.asarray(potentials, dtype=np.float64)[tied]
        tied = tied[u == u.max()]
    return int(tied[0])


def rstdp_delta(correct: bool, dt_spike, psi, params: RstdpParams):
    """Weight change for a pre/post pair under reward (correct) or punishment.

    ``dt_spike`` is ``t_post - t_pre``; arrays broadcast.
    """
    causal = np.asarray(dt_spike) > 0
    if correct:
        rate = np.where(causal, params.ar_plus, params.ar_minus)
    else:
        rate = np.where(causal, params.ap_minus, params.ap_plus)
    psi = np.asarray(psi, dtype=np.float64)
    delta = rate * psi * (params.psi_max - psi)
    return float(delta) if delta.ndim == 0 else delta


@dataclass
class ClassOutput:
    counts: np.ndarray
    potentials: np.ndarray
    last_spike: np.ndarray
    winner: int

    @property
    def spikes(self) -> int:
        return int(self.counts.sum())


def forward(state: ClassifierState, feature_raster: np.ndarray, lif: LifParams) -> ClassOutput:
    """Drive the class neurons with a ``(horizon, W, N)`` feature raster."""
    if feature_raster.shape[1:] != state.psi.shape[:2]:
        raise ConfigError(
            f"feature raster {feature_raster.shape[1:]} does not match classifier {state.psi.shape[:2]}"
        )
    currents = np.einsum("twn,wnk->tk", feature_raster.astype(np.float64), state.psi)
    raster, final = integrate(currents, lif, layer="rstdp")
    counts = raster.sum(axis=0)
    return ClassOutput(counts, final.u, final.last_fire, predict(counts, final.u))


def last_spike_steps(raster: np.ndarray) -> np.ndarray:
    """Step of the last spike of every neuron along axis 0, ``NEVER`` if silent."""
    horizon = raster.shape[0]
    fired = raster.any(axis=0)
    last = horizon - 1 - np.argmax(raster[::-1], axis=0)
    return np.where(fired, last, NEVER)


def reinforce(
    state: ClassifierState,
    feature_raster: np.ndarray,
    out: ClassOutput,
    correct: bool,
    params: RstdpParams,
    dt: float = 1.0,
) -> None:
    """Apply reward or punishment to the winner's input synapses.

    The pre time of a synapse is the last spike of its feature neuron in the
    beat; the post time is the winner's last spike, timed like the feature
    layer (mid-step), or the end of the horizon if the winner stayed
    silent. Synapses whose feature neuron never fired are left alone.
    """
    k = out.winner
    t_pre = last_spike_steps(feature_raster)
    if out.last_spike[k] == NEVER:
        t_post = feature_raster.shape[0] * dt
    else:
        t_post = (out.last_spike[k] + POST_OFFSET) * dt
    active = t_pre != NEVER
    column = state.psi[:, :, k]
    delta = rstdp_delta(correct, t_post - t_pre * dt, column, params)
    column += np.where(active, delta, 0.0)
    np.clip(column, 0.0, params.psi_max, out=column)


@dataclass
class RstdpEpochStats:
    beats: int
    correct: int
    class_spikes: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.beats if self.beats else 0.0


def train_rstdp_epoch(
    state: ClassifierState,
    samples: Iterable[tuple[np.ndarray, str]],
    lif: LifParams,
    params: RstdpParams,
) -> RstdpEpochStats:
    """One sequential pass over ``(feature_raster, label)`` samples."""
    index = {c: i for i, c in enumerate(state.classes)}
    beats = correct = spikes = 0
    for raster, label in samples:
        if label not in index:
            raise DataError(f"label {label!r} is not one of the classifier classes {state.classes}")
        out = forward(state, raster, lif)
        hit = out.winner == index[label]
        reinforce(state, raster, out, hit, params, lif.dt)
        beats += 1
        correct += hit
        spikes += out.spikes
    return RstdpEpochStats(beats, correct, spikes)
