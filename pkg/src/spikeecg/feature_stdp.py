"""Unsupervised feature layer: STDP-trained neurons per window plus a
mirror inhibitory population with trainable negative backward synapses.

Array layout used throughout: forward weights ``w`` are ``(W, L, N)``
(window, input, neuron); inhibitory weights ``w_inhib`` are ``(W, N, N)``
indexed ``[window, from_inhibitory, to_stdp]`` with a zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .snn_core import NEVER, LifParams, LifState, integrate, lif_step

RULES = ("optimized", "classic")
PAIRINGS = ("all", "nearest", "restricted")

POST_OFFSET = 0.5
"""Postsynaptic spikes are timed at the middle of the step in which the
threshold is crossed; presynaptic spikes at its start. A pre spike that
arrives in the step where the post neuron fires therefore counts as
causal (+dt/2), and spike-time differences are never zero."""


@dataclass(frozen=True)
class StdpParams:
    a_plus: float = 0.01
    a_minus: float = -0.01
    tau_stdp: float = 20.0
    gamma_max: float = 4.0
    w_max: float = 1.0
    neurons_per_window: int = 10
    rule: str = "optimized"
    pairing: str = "nearest"
    init_low: float = 0.3
    init_high: float = 0.7

    def __post_init__(self):
        if not self.a_plus >= 0 >= self.a_minus:
            raise ConfigError("STDP rates need a_plus > 0 > a_minus")
        if not self.tau_stdp > 0:
            raise ConfigError(f"tau_stdp must be > 0, got {self.tau_stdp}")
        if not self.gamma_max > 1:
            raise ConfigError(f"gamma_max must be > 1, got {self.gamma_max}")
        if not self.w_max > 0:
            raise ConfigError(f"w_max must be > 0, got {self.w_max}")
        if self.neurons_per_window < 1:
            raise ConfigError("neurons_per_window must be >= 1")
        if self.rule not in RULES:
            raise ConfigError(f"unknown STDP rule {self.rule!r}; expected one of {RULES}")
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"unknown pairing {self.pairing!r}; expected one of {PAIRINGS}")
        if not 0 <= self.init_low <= self.init_high <= 1:
            raise ConfigError("need 0 <= init_low <= init_high <= 1 (fractions of w_max)")


@dataclass(frozen=True)
class InhibParams:
    b_plus: float = 0.005
    b_minus: float = -0.05
    lam: float = 5.0
    dropout_p: float = 0.2
    rule: str = "optimized"

    def __post_init__(self):
        if not self.b_plus >= 0 >= self.b_minus:
            raise ConfigError("inhibitory rates need b_plus > 0 > b_minus")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.rule not in RULES:
            raise ConfigError(f"unknown inhibitory rule {self.rule!r}; expected one of {RULES}")


def gamma(w, gamma_max: float):
    """LTD amplification ``(1 + w * gamma_max) / (1 + w)``; 1 at w=0, tends to gamma_max."""
    return (1.0 + np.multiply(w, gamma_max)) / (1.0 + np.asarray(w, dtype=np.float64))


def stdp_delta_classic(dt_spike: float, params: StdpParams) -> float:
    if dt_spike == 0:
        raise ValueError("STDP update undefined for simultaneous spikes")
    rate = params.a_plus if dt_spike > 0 else params.a_minus
    return rate * np.exp(-abs(dt_spike) / params.tau_stdp)


def stdp_delta(dt_spike: float, w: float, params: StdpParams) -> float:
    """Optimized rule: the depression branch is scaled by ``gamma(w)``."""
    delta = stdp_delta_classic(dt_spike, params)
    if dt_spike < 0:
        delta *= gamma(w, params.gamma_max)
    return float(delta)


def inhib_delta(dt_spike: float, w_prime: float, params: InhibParams) -> float:
    """Change of one inhibitory weight for two neurons firing ``dt_spike`` apart."""
    if abs(dt_spike) <= params.lam:
        if params.rule == "classic":
            return params.b_minus
        return params.b_minus / (1.0 - w_prime)
    return params.b_plus


@dataclass
class StdpLayerState:
    w: np.ndarray
    w_inhib: np.ndarray
    dropout_mask: np.ndarray

    @classmethod
    def initial(cls, n_windows: int, n_inputs: int, params: StdpParams, rng: np.random.Generator):
        n = params.neurons_per_window
        w = rng.uniform(params.init_low, params.init_high, (n_windows, n_inputs, n)) * params.w_max
        return cls(
            w=w,
            w_inhib=np.zeros((n_windows, n, n)),
            dropout_mask=np.ones((n_windows, n), dtype=bool),
        )

    @property
    def n_windows(self) -> int:
        return self.w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w.shape[1]

    @property
    def n_neurons(self) -> int:
        return self.w.shape[2]


def apply_inhibition(fired: np.ndarray, state: StdpLayerState) -> np.ndarray:
    """Backward current each STDP neuron receives on the next step.

    Only inhibitory neurons left active by the dropout mask transmit.
    Returns an array shaped like ``fired`` with values <= 0.
    """
    senders = (fired & state.dropout_mask).astype(np.float64)
    return np.einsum("wj,wjk->wk", senders, state.w_inhib)


def draw_dropout(state: StdpLayerState, params: InhibParams, rng: np.random.Generator) -> None:
    state.dropout_mask = rng.random(state.dropout_mask.shape) >= params.dropout_p


@dataclass
class BeatStats:
    stdp_spikes: int = 0
    inhib_spikes: int = 0
    inhib_events: int = 0


@dataclass
class EpochStats:
    beats: int = 0
    stdp_spikes: int = 0
    inhib_spikes: int = 0
    inhib_events: int = 0
    mean_weight: float = 0.0
    mean_inhib_weight: float = 0.0
    per_beat: list = field(default_factory=list, repr=False)

    @property
    def mean_rate(self) -> float:
        return self.stdp_spikes / self.beats if self.beats else 0.0


def train_beat(
    state: StdpLayerState,
    pre: np.ndarray,
    lif: LifParams,
    stdp: StdpParams,
    inhib: InhibParams,
    inhibition: bool = True,
) -> BeatStats:
    """Present one beat of presynaptic spikes and learn online.

    ``pre`` is a boolean raster ``(horizon, W, L)``. Pairings are read from
    exponential traces with time constant ``tau_stdp``:

    * ``all``: every earlier partner spike contributes;
    * ``nearest``: a spike pairs with the latest partner spike only;
    * ``restricted``: nearest, and each spike takes part in at most one
      pairing per direction, so a dense input earns one depression per
      postsynaptic interval instead of one per presynaptic spike.

    Spike times follow :data:`POST_OFFSET`. Forward weights are clipped to
    ``[0, w_max]`` and inhibitory weights to ``<= 0`` after every step.
    """
    horizon, n_windows, n_inputs = pre.shape
    if (n_windows, n_inputs) != state.w.shape[:2]:
        raise ConfigError(f"input raster {pre.shape[1:]} does not match weights {state.w.shape[:2]}")
    n = state.n_neurons
    lif_state = LifState.rest((n_windows, n), lif)
    pre_trace = np.zeros((n_windows, n_inputs))
    post_trace = np.zeros((n_windows, n))
    decay = np.exp(-lif.dt / stdp.tau_stdp)
    ltp_lag = np.exp(-POST_OFFSET * lif.dt / stdp.tau_stdp)
    post_mark = 1.0 / ltp_lag  # a post spike seen from the start of its own step
    nearest = stdp.pairing != "all"
    restricted = stdp.pairing == "restricted"
    if restricted:
        ltp_armed = np.zeros(state.w.shape, dtype=bool)
        ltd_armed = np.zeros(state.w.shape, dtype=bool)
    inh_drive = np.zeros((n_windows, n))
    off_diag = ~np.eye(n, dtype=bool)
    classic = stdp.rule == "classic"
    stats = BeatStats()
    w = state.w

    for t in range(horizon):
        spikes = pre[t]
        drive = np.einsum("wl,wln->wn", spikes, w) + inh_drive
        last_post = lif_state.last_fire
        lif_state, fired = lif_step(lif_state, drive, lif, layer="stdp")
        pre_trace *= decay
        post_trace *= decay

        any_pre, any_post = spikes.any(), fired.any()
        if any_pre:
            if post_trace.any():
                ltd = stdp.a_minus * post_trace[:, None, :] * spikes[:, :, None]
                if restricted:
                    ltd = ltd * ltd_armed
                if not classic:
                    ltd = ltd * gamma(w, stdp.gamma_max)
                w += ltd
            if restricted:
                ltd_armed[spikes] = False
                ltp_armed[spikes] = True
            if nearest:
                pre_trace[spikes] = 1.0
            else:
                pre_trace += spikes
        if any_post:
            ltp = stdp.a_plus * ltp_lag * pre_trace[:, :, None] * fired[:, None, :]
            if restricted:
                ltp = ltp * ltp_armed
                ltp_armed &= ~fired[:, None, :]
                ltd_armed |= fired[:, None, :]
            w += ltp
            if nearest:
                post_trace[fired] = post_mark
            else:
                post_trace += post_mark * fired
            stats.stdp_spikes += int(fired.sum())
        if any_pre or any_post:
            np.clip(w, 0.0, stdp.w_max, out=w)

        if inhibition and any_post:
            partner_time = np.where(fired, t, last_post)
            gap = np.where(partner_time == NEVER, np.inf, t - partner_time)
            coincident = gap <= inhib.lam
            mask = fired[:, None, :] & state.dropout_mask[:, :, None] & off_diag
            if inhib.rule == "classic":
                depress = np.full_like(state.w_inhib, inhib.b_minus)
            else:
                depress = inhib.b_minus / (1.0 - state.w_inhib)
            delta = np.where(coincident[:, :, None], depress, inhib.b_plus)
            state.w_inhib += np.where(mask, delta, 0.0)
            np.minimum(state.w_inhib, 0.0, out=state.w_inhib)
            senders = fired & state.dropout_mask
            stats.inhib_spikes += int(senders.sum())
            stats.inhib_events += int(senders.sum()) * (n - 1)
            inh_drive = apply_inhibition(fired, state)
        else:
            inh_drive = np.zeros((n_windows, n))
    return stats


def train_stdp_epoch(
    state: StdpLayerState,
    beats_pre,
    lif: LifParams,
    stdp: StdpParams,
    inhib: InhibParams,
    rng: np.random.Generator,
) -> EpochStats:
    """One pass over presynaptic rasters with a fresh dropout mask.

    ``beats_pre`` is an iterable of ``(horizon, W, L)`` rasters (the
    Gaussian-layer output of each beat, already in presentation order).
    """
    draw_dropout(state, inhib, rng)
    stats = EpochStats()
    for pre in beats_pre:
        b = train_beat(state, pre, lif, stdp, inhib)
        stats.beats += 1
        stats.stdp_spikes += b.stdp_spikes
        stats.inhib_spikes += b.inhib_spikes
        stats.inhib_events += b.inhib_events
        stats.per_beat.append(b)
    stats.mean_weight = float(state.w.mean())
    stats.mean_inhib_weight = float(state.w_inhib.mean())
    return stats


def forward(w: np.ndarray, pre: np.ndarray, lif: LifParams) -> tuple[np.ndarray, LifState]:
    """Inference pass without inhibition.

    ``pre`` has shape ``(horizon, ..., W, L)``; the output raster is
    ``(horizon, ..., W, N)``.
    """
    currents = np.einsum("...wl,wln->...wn", pre.astype(np.float64), w)
    return integrate(currents, lif, layer="stdp")
