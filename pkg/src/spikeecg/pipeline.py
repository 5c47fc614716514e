"""End-to-end network: staged training, inference, energy tally and model files.

Topology for ``Q`` windows of ``L`` samples, ``N`` feature neurons per
window and ``K`` classes::

    encoder (2Q x L cells) -> gaussian (2Q x L, one-to-one)
        -> feature STDP (2Q x N, dense per window) -> classes (K, dense)

Randomness: every beat presentation draws its encoder spikes from its own
stream keyed by ``(seed, stage, epoch, beat index)``, so results do not
depend on thread count or processing order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import classifier, feature_stdp
from .classifier import ClassifierState
from .config import RunConfig, from_dict
from .encoder import Beat, beat_length, encode_beat
from .errors import ConfigError, DataError, EmptyDataError, TopologyMismatch
from .feature_stdp import StdpLayerState
from .gaussian import GaussianLayer, GaussianReport, train_gaussian, window_counts

log = logging.getLogger(__name__)

SPIKE_PJ = 50.0
EVENT_PJ = 147.0

STAGE_INIT, STAGE_GAUSSIAN, STAGE_STDP, STAGE_RSTDP, STAGE_EVAL = range(5)
_ORDER_SLOT = 2**32 - 1
_DROPOUT_SLOT = 2**32 - 2

MAGIC = b"SNNECG\x00\x00"
FORMAT_VERSION = 1
_TENSORS = ("beta", "w", "w_inhib", "psi")

CHUNK = 16


def stream(seed: int, stage: int, epoch: int = 0, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage, epoch, index]))


def _map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _blocks(indices: Sequence[int], size: int = CHUNK) -> list[list[int]]:
    return [list(indices[k : k + size]) for k in range(0, len(indices), size)]


@dataclass(frozen=True)
class EnergyReport:
    spike_count: int = 0
    synaptic_events: int = 0

    @property
    def energy_pj(self) -> float:
        return SPIKE_PJ * self.spike_count + EVENT_PJ * self.synaptic_events

    def __add__(self, other: "EnergyReport") -> "EnergyReport":
        return EnergyReport(
            self.spike_count + other.spike_count, self.synaptic_events + other.synaptic_events
        )


def tally_energy(spike_count: int, synaptic_events: int) -> EnergyReport:
    if spike_count < 0 or synaptic_events < 0:
        raise ValueError("spike and event counts must be non-negative")
    return EnergyReport(int(spike_count), int(synaptic_events))


def out_degrees(n_neurons: int, n_classes: int) -> dict[str, int]:
    """Synapses leaving one neuron of each layer at inference."""
    return {"encoder": 1, "gaussian": n_neurons, "stdp": n_classes, "rstdp": 0}


def layer_energy(layer_spikes: dict[str, int], degrees: dict[str, int]) -> dict[str, EnergyReport]:
    return {
        name: tally_energy(count, count * degrees[name]) for name, count in layer_spikes.items()
    }


@dataclass
class Model:
    config: RunConfig
    beta: np.ndarray
    w: np.ndarray
    w_inhib: np.ndarray
    psi: np.ndarray
    classes: list[str]
    provenance: dict = field(default_factory=dict)

    @property
    def n_windows(self) -> int:
        return self.w.shape[0]

    @property
    def window_len(self) -> int:
        return self.w.shape[1]

    @property
    def n_neurons(self) -> int:
        return self.w.shape[2]

    def gaussian_layer(self) -> GaussianLayer:
        return GaussianLayer(self.beta.copy(), self.window_len, self.config.lif_gaussian, self.config.gaussian)

    def check_topology(self, config: RunConfig) -> None:
        """Raise :class:`TopologyMismatch` if ``config`` implies a different network."""
        mine, theirs = self.config, config
        checks = {
            "run.q_windows": (mine.run.q_windows, theirs.run.q_windows),
            "data.fs": (mine.data.fs, theirs.data.fs),
            "encoder.horizon": (mine.encoder.horizon, theirs.encoder.horizon),
            "stdp.neurons_per_window": (mine.stdp.neurons_per_window, theirs.stdp.neurons_per_window),
        }
        bad = [f"{k}: model {a!r} vs config {b!r}" for k, (a, b) in checks.items() if a != b]
        missing = [c for c in self.classes if c not in theirs.classes]
        if missing:
            bad.append(f"classes {missing} not in config [classes]")
        if bad:
            raise TopologyMismatch("model does not match config: " + "; ".join(bad))

    def to_bytes(self) -> bytes:
        """Serialize: magic, u32 version, u64 header length, JSON header, f8 tensors."""
        index, offset, blobs = {}, 0, []
        for name in _TENSORS:
            arr = np.ascontiguousarray(getattr(self, name), dtype="<f8")
            index[name] = {"offset": offset, "shape": list(arr.shape)}
            blobs.append(arr.tobytes())
            offset += arr.nbytes
        header = {
            "config": self.config.to_dict(),
            "classes": self.classes,
            "provenance": self.provenance,
            "tensors": index,
        }
        text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(text)) + text + b"".join(blobs)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Model":
        fixed = len(MAGIC) + 12
        if len(blob) < fixed or blob[: len(MAGIC)] != MAGIC:
            raise TopologyMismatch("not a model file (bad magic)")
        version, length = struct.unpack("<IQ", blob[len(MAGIC) : fixed])
        if version != FORMAT_VERSION:
            raise TopologyMismatch(f"unsupported model format version {version}")
        try:
            header = json.loads(blob[fixed : fixed + length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TopologyMismatch(f"corrupt model header: {exc}") from None
        body = blob[fixed + length :]
        tensors = {}
        for name in _TENSORS:
            entry = header["tensors"][name]
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            start = entry["offset"]
            if start + 8 * count > len(body):
                raise TopologyMismatch(f"model file truncated in tensor {name!r}")
            tensors[name] = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape).copy()
        return cls(
            config=from_dict(header["config"]),
            classes=list(header["classes"]),
            provenance=header["provenance"],
            **tensors,
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_bytes(Path(path).read_bytes())


def dataset_digest(beats: Iterable[Beat]) -> str:
    h = hashlib.sha256()
    for beat in beats:
        h.update((beat.label or "").encode("utf-8") + b"\x00")
        h.update(np.ascontiguousarray(beat.samples, dtype="<f8").tobytes())
    return h.hexdigest()


class _Network:
    """Frozen upstream layers shared by the training stages and inference."""

    def __init__(self, config: RunConfig, gaussian: GaussianLayer, w: np.ndarray | None = None):
        self.config = config
        self.gaussian = gaussian
        self.w = w

    def check_beat(self, beat: Beat) -> None:
        expected = beat_length(self.config.data.fs)
        if len(beat.samples) != expected:
            raise ConfigError(
                f"beat of {len(beat.samples)} samples, model expects {expected} "
                f"(fs={self.config.data.fs} Hz)"
            )

    def encode(self, beats: Sequence[Beat], indices: Sequence[int], stage: int, epoch: int) -> np.ndarray:
        """Encoder spikes ``(T, B, 2Q, L)`` for the given beat indices."""
        cfg = self.config
        return np.stack(
            [
                encode_beat(beats[i], cfg.run.q_windows, cfg.encoder, stream(cfg.run.seed, stage, epoch, i))
                for i in indices
            ],
            axis=1,
        )

    def gaussian_rasters(self, beats, indices, stage, epoch) -> np.ndarray:
        return self.gaussian.forward(self.encode(beats, indices, stage, epoch))

    def feature_rasters(self, beats, indices, stage, epoch) -> np.ndarray:
        g = self.gaussian_rasters(beats, indices, stage, epoch)
        raster, _ = feature_stdp.forward(self.w, g, self.config.lif_stdp)
        return raster

    def stream_blocks(
        self, make: Callable, beats, order: Sequence[int], stage: int, epoch: int
    ) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(beat index, raster)`` in ``order``, computing blocks in parallel."""
        threads = self.config.run.threads
        blocks = _blocks(order)
        for start in range(0, len(blocks), threads):
            group = blocks[start : start + threads]
            results = _map(lambda b: make(beats, b, stage, epoch), group, threads)
            for block, raster in zip(group, results):
                for j, i in enumerate(block):
                    yield i, raster[:, j]


def _resolve_classes(beats: Sequence[Beat], config: RunConfig) -> list[str]:
    present = {b.label for b in beats}
    unknown = sorted(str(c) for c in present - set(config.classes))
    if unknown:
        raise DataError(f"training labels {unknown} are not defined in [classes]")
    return [c for c in config.classes if c in present]


def train_full(beats: Sequence[Beat], config: RunConfig) -> Model:
    """Train the gaussian, feature and class layers in that order."""
    beats = list(beats)
    if not beats:
        raise EmptyDataError("no training beats")
    classes = _resolve_classes(beats, config)
    seed, threads = config.run.seed, config.run.threads
    n_windows, window_len = config.n_windows, config.window_len
    started = time.perf_counter()

    gaussian = GaussianLayer.create(n_windows, window_len, config.lif_gaussian, config.gaussian)
    net = _Network(config, gaussian)
    for beat in beats:
        net.check_beat(beat)
    all_idx = list(range(len(beats)))

    def measure(layer: GaussianLayer, epoch: int) -> np.ndarray:
        counts = _map(
            lambda block: window_counts(layer, net.encode(beats, block, STAGE_GAUSSIAN, epoch)),
            _blocks(all_idx),
            threads,
        )
        return np.sum(counts, axis=0) / (len(beats) * layer.window_len)

    g_report: GaussianReport = train_gaussian(gaussian, measure)
    log.info(
        "stage gaussian: converged=%s epochs=%d rates=%s",
        g_report.converged,
        g_report.epochs,
        np.round(g_report.rates, 2).tolist(),
    )

    stdp_state = StdpLayerState.initial(n_windows, window_len, config.stdp, stream(seed, STAGE_INIT, 0))
    stdp_log = []
    for epoch in range(config.stdp_train.epochs):
        order = stream(seed, STAGE_STDP, epoch, _ORDER_SLOT).permutation(len(beats)).tolist()
        rasters = (r for _, r in net.stream_blocks(net.gaussian_rasters, beats, order, STAGE_STDP, epoch))
        stats = feature_stdp.train_stdp_epoch(
            stdp_state,
            rasters,
            config.lif_stdp,
            config.stdp,
            config.inhib,
            stream(seed, STAGE_STDP, epoch, _DROPOUT_SLOT),
        )
        stdp_log.append(
            {
                "stdp_spikes": stats.stdp_spikes,
                "inhib_spikes": stats.inhib_spikes,
                "inhib_events": stats.inhib_events,
                "mean_weight": stats.mean_weight,
                "mean_inhib_weight": stats.mean_inhib_weight,
            }
        )
        log.info("stage stdp epoch %d: spikes/beat=%.1f mean w=%.3f", epoch, stats.mean_rate, stats.mean_weight)

    net.w = stdp_state.w
    cls_state = ClassifierState.initial(
        n_windows, config.stdp.neurons_per_window, classes, config.rstdp, stream(seed, STAGE_INIT, 1)
    )
    rstdp_log = []
    for epoch in range(config.rstdp_train.epochs):
        order = stream(seed, STAGE_RSTDP, epoch, _ORDER_SLOT).permutation(len(beats)).tolist()
        samples = (
            (raster, beats[i].label)
            for i, raster in net.stream_blocks(net.feature_rasters, beats, order, STAGE_RSTDP, epoch)
        )
        stats = classifier.train_rstdp_epoch(cls_state, samples, config.lif_rstdp, config.rstdp)
        rstdp_log.append({"accuracy": stats.accuracy, "class_spikes": stats.class_spikes})
        log.info("stage rstdp epoch %d: train accuracy=%.3f", epoch, stats.accuracy)

    provenance = {
        "seed": seed,
        "n_train_beats": len(beats),
        "dataset_sha256": dataset_digest(beats),
        "class_counts": {c: sum(b.label == c for b in beats) for c in classes},
        "gaussian": {
            "converged": g_report.converged,
            "epochs": g_report.epochs,
            "rates": g_report.rates,
        },
        "stdp_epochs": stdp_log,
        "rstdp_epochs": rstdp_log,
    }
    log.debug("training took %.1f s", time.perf_counter() - started)
    return Model(config, gaussian.beta.copy(), stdp_state.w.copy(), stdp_state.w_inhib.copy(),
                 cls_state.psi.copy(), classes, provenance)


@dataclass
class BeatResult:
    index: int
    label: str | None
    prediction: str
    layer_spikes: dict[str, int]
    energy: EnergyReport
    wall_s: float
    record_id: str | None = None

    @property
    def correct(self) -> bool:
        return self.label == self.prediction


def infer_beat(model: Model, beat: Beat, rng: np.random.Generator, index: int = 0) -> BeatResult:
    """Classify one beat over the full horizon with inhibition disabled."""
    started = time.perf_counter()
    cfg = model.config
    net = _Network(cfg, model.gaussian_layer(), model.w)
    net.check_beat(beat)
    enc = encode_beat(beat, cfg.run.q_windows, cfg.encoder, rng)
    g = net.gaussian.forward(enc)
    feats, _ = feature_stdp.forward(model.w, g, cfg.lif_stdp)
    out = classifier.forward(ClassifierState(model.psi, model.classes), feats, cfg.lif_rstdp)
    spikes = {
        "encoder": int(enc.sum()),
        "gaussian": int(g.sum()),
        "stdp": int(feats.sum()),
        "rstdp": out.spikes,
    }
    per_layer = layer_energy(spikes, out_degrees(model.n_neurons, len(model.classes)))
    energy = sum(per_layer.values(), EnergyReport())
    return BeatResult(
        index=index,
        label=beat.label,
        prediction=model.classes[out.winner],
        layer_spikes=spikes,
        energy=energy,
        wall_s=time.perf_counter() - started,
        record_id=beat.record_id,
    )


@dataclass
class Evaluation:
    classes: list[str]
    results: list[BeatResult]
    threads: int

    @property
    def n_beats(self) -> int:
        return len(self.results)

    @property
    def accuracy(self) -> float:
        return sum(r.correct for r in self.results) / self.n_beats

    @property
    def confusion(self) -> dict[str, dict[str, int]]:
        """Counts indexed ``[true label][predicted label]``."""
        labels = list(self.classes) + sorted({r.label for r in self.results} - set(self.classes))
        table = {t: {p: 0 for p in self.classes} for t in labels}
        for r in self.results:
            table[r.label][r.prediction] += 1
        return table

    @property
    def mean_energy_pj(self) -> float:
        return sum(r.energy.energy_pj for r in self.results) / self.n_beats

    @property
    def mean_wall_ms(self) -> float:
        return 1000.0 * sum(r.wall_s for r in self.results) / self.n_beats

    def per_record(self) -> dict[str, dict]:
        groups: dict[str, list[BeatResult]] = {}
        for r in self.results:
            groups.setdefault(r.record_id or "", []).append(r)
        return {
            rid: {"beats": len(rs), "correct": sum(r.correct for r in rs), "accuracy": sum(r.correct for r in rs) / len(rs)}
            for rid, rs in sorted(groups.items())
        }

    def summary(self, timing: bool = True) -> dict:
        out = {
            "beats": self.n_beats,
            "accuracy": self.accuracy,
            "classes": self.classes,
            "confusion": self.confusion,
            "mean_energy_uj": self.mean_energy_pj * 1e-6,
            "mean_spikes": sum(r.energy.spike_count for r in self.results) / self.n_beats,
            "mean_events": sum(r.energy.synaptic_events for r in self.results) / self.n_beats,
            "per_record": self.per_record(),
            "threads": self.threads,
        }
        if timing:
            out["mean_wall_ms"] = self.mean_wall_ms
        return out


def evaluate(model: Model, beats: Sequence[Beat], threads: int | None = None) -> Evaluation:
    beats = list(beats)
    if not beats:
        raise EmptyDataError("no test beats")
    threads = threads or model.config.run.threads
    seed = model.config.run.seed

    def run(i: int) -> BeatResult:
        return infer_beat(model, beats[i], stream(seed, STAGE_EVAL, 0, i), index=i)

    return Evaluation(list(model.classes), _map(run, range(len(beats)), threads), threads)
