"""Discrete-time leaky integrate-and-fire kernel.

The membrane equation ``tau du/dt = -(u - u_rest) + alpha * sum_i s_i w_ij``
is integrated with forward Euler at a fixed step. A neuron whose updated
potential reaches threshold fires and is reset to rest in the same step;
there is no refractory period and no synaptic delay.

All spiking layers in the package go through :func:`lif_step`, either one
step at a time (when learning needs per-step feedback) or through
:func:`integrate` for a precomputed input-current tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, NumericError

NEVER = -1
"""Sentinel stored in ``LifState.last_fire`` for neurons that have not fired."""


@dataclass(frozen=True)
class LifParams:
    tau_m: float = 10.0
    u_rest: float = 0.0
    u_th: float = 1.0
    alpha: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if not self.tau_m > 0:
            raise ConfigError(f"tau_m must be > 0, got {self.tau_m}")
        if not self.u_th > self.u_rest:
            raise ConfigError(f"u_th ({self.u_th}) must exceed u_rest ({self.u_rest})")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.dt > self.tau_m:
            raise ConfigError(f"dt ({self.dt}) must not exceed tau_m ({self.tau_m})")

    @property
    def leak(self) -> float:
        """Fraction of the distance to rest removed per step, ``dt / tau_m``."""
        return self.dt / self.tau_m


@dataclass
class LifState:
    """Membrane potentials and last spike step for a block of neurons.

    ``u`` may have any shape; the neuron index reported in errors is the
    flat (C-order) index.
    """

    u: np.ndarray
    last_fire: np.ndarray
    t: int = 0

    @classmethod
    def rest(cls, shape, params: LifParams) -> "LifState":
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        return cls(
            u=np.full(shape, params.u_rest, dtype=np.float64),
            last_fire=np.full(shape, NEVER, dtype=np.int64),
        )

    @property
    def shape(self) -> tuple:
        return self.u.shape


def lif_step(
    state: LifState, weighted_input, params: LifParams, layer: str = ""
) -> tuple[LifState, np.ndarray]:
    """Advance every neuron in ``state`` by one Euler step.

    Args:
        state: current potentials; left untouched.
        weighted_input: ``sum_i s_i(t) w_ij`` per neuron, broadcastable to
            the state shape.
        params: membrane constants.
        layer: name used in the error raised on overflow.

    Returns:
        The new state and a boolean array of neurons that fired.
    """
    drive = np.asarray(weighted_input, dtype=np.float64)
    if drive.shape != state.u.shape:
        try:
            drive = np.broadcast_to(drive, state.u.shape)
        except ValueError:
            raise ConfigError(
                f"input shape {drive.shape} does not match layer {layer!r} shape {state.u.shape}"
            ) from None
    u = state.u + params.leak * (-(state.u - params.u_rest) + params.alpha * drive)
    bad = ~np.isfinite(u)
    if bad.any():
        raise NumericError(layer, int(np.flatnonzero(bad)[0]))
    fired = u >= params.u_th
    u[fired] = params.u_rest
    last_fire = np.where(fired, state.t, state.last_fire)
    return LifState(u=u, last_fire=last_fire, t=state.t + 1), fired


def reset_all(state: LifState, params: LifParams) -> LifState:
    """Return a state of the same shape at rest with no spike history."""
    return LifState.rest(state.shape, params)


@dataclass
class SpikeTrain:
    """Spikes of ``n_neurons`` neurons over ``horizon`` steps.

    Stored as a dense boolean raster of shape ``(horizon, n_neurons)``,
    which by construction allows at most one spike per neuron per step.
    """

    raster: np.ndarray
    _events: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.raster = np.asarray(self.raster, dtype=bool)
        if self.raster.ndim != 2:
            raise ConfigError(f"raster must be 2-D (horizon, neurons), got shape {self.raster.shape}")

    @classmethod
    def empty(cls, horizon: int, n_neurons: int) -> "SpikeTrain":
        return cls(np.zeros((horizon, n_neurons), dtype=bool))

    @classmethod
    def from_events(
        cls, events: Iterable[tuple[int, int]], horizon: int, n_neurons: int
    ) -> "SpikeTrain":
        raster = np.zeros((horizon, n_neurons), dtype=bool)
        for neuron, step in events:
            if not 0 <= step < horizon:
                raise ConfigError(f"spike at step {step} outside horizon {horizon}")
            if not 0 <= neuron < n_neurons:
                raise ConfigError(f"neuron {neuron} outside [0, {n_neurons})")
            raster[step, neuron] = True
        return cls(raster)

    @property
    def horizon(self) -> int:
        return self.raster.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.raster.shape[1]

    @property
    def events(self) -> list[tuple[int, int]]:
        """``(neuron_index, timestep)`` pairs ordered by step, then neuron."""
        if self._events is None:
            steps, neurons = np.nonzero(self.raster)
            self._events = list(zip(neurons.tolist(), steps.tolist()))
        return self._events

    def counts(self) -> np.ndarray:
        return self.raster.sum(axis=0)

    def __len__(self) -> int:
        return int(self.raster.sum())


def integrate(
    currents: np.ndarray, params: LifParams, layer: str = "", state: LifState | None = None
) -> tuple[np.ndarray, LifState]:
    """Run :func:`lif_step` over the leading (time) axis of ``currents``.

    Returns the boolean raster (same shape as ``currents``) and final state.
    """
    currents = np.asarray(currents, dtype=np.float64)
    if state is None:
        state = LifState.rest(currents.shape[1:], params)
    raster = np.zeros(currents.shape, dtype=bool)
    for t in range(currents.shape[0]):
        state, raster[t] = lif_step(state, currents[t], params, layer)
    return raster, state


def run_layer(
    weights: np.ndarray,
    train: SpikeTrain,
    params: LifParams,
    layer: str = "",
    state: LifState | None = None,
) -> SpikeTrain:
    """Drive a fully connected LIF layer with an input spike train.

    ``weights`` has shape ``(n_inputs, n_neurons)``. The computation is
    deterministic; a fresh resting state is used unless one is given.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != train.n_neurons:
        raise ConfigError(
            f"weight matrix shape {weights.shape} incompatible with {train.n_neurons} input neurons"
        )
    currents = train.raster.astype(np.float64) @ weights
    raster, _ = integrate(currents, params, layer, state)
    return SpikeTrain(raster)
