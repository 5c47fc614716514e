"""Annotated ECG records: CSV I/O, train/test splitting and a synthetic generator.

Record files are plain CSV without header, UTF-8, ``\\n`` line endings:

* signal file: ``index,amplitude`` per sample (amplitude in millivolts),
  indices ``0..n-1`` in order;
* annotation file: ``index,label`` per beat, label a single symbol.

The sampling rate is not stored in the files; callers pass it (it is a
key of the ``data`` config section).
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import Beat, TruncatedBeatError, beat_geometry, normalize_signal, segment_beat
from .errors import DataError

log = logging.getLogger(__name__)

# AAMI-style grouping of MIT-BIH beat symbols; order fixes class order.
AAMI_CLASSES: dict[str, list[str]] = {
    "N": ["N", "L", "R", "e", "j"],
    "S": ["A", "a", "J", "S"],
    "V": ["V", "E"],
    "F": ["F"],
    "Q": ["/", "f", "Q"],
}

DS1_RECORDS = [
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109", "111", "112",
    "113", "114", "115", "116", "117", "118", "119", "121", "122", "123", "124",
]
DS2_TEST_RECORDS = [
    "200", "201", "202", "203", "205", "207", "208", "209", "210", "212", "213", "214",
    "215", "219", "220", "221", "222", "223", "228", "230", "231", "232", "233", "234",
]

PATIENT_PREFIX_SECONDS = 300.0


@dataclass
class ECGRecord:
    record_id: str
    fs: float
    samples: np.ndarray
    annotations: list[tuple[int, str]]

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if not self.fs > 0:
            raise DataError(f"record {self.record_id}: fs must be > 0, got {self.fs}")
        previous = -1
        for index, label in self.annotations:
            if index <= previous:
                raise DataError(
                    f"record {self.record_id}: annotation indices must be strictly increasing "
                    f"({index} after {previous})"
                )
            if not 0 <= index < len(self.samples):
                raise DataError(
                    f"record {self.record_id}: annotation index {index} outside signal of "
                    f"{len(self.samples)} samples"
                )
            previous = index


def _rows(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 comma-separated fields, got {len(parts)}")
            yield lineno, parts


def load_record(signal_path, annotation_path, fs: float, record_id: str | None = None) -> ECGRecord:
    """Read and validate one record from its two CSV files."""
    signal_path, annotation_path = Path(signal_path), Path(annotation_path)
    samples = []
    for lineno, (idx, amp) in _rows(signal_path):
        try:
            index, value = int(idx), float(amp)
        except ValueError:
            raise DataError(f"{signal_path}:{lineno}: malformed row {idx!r},{amp!r}") from None
        if index != len(samples):
            raise DataError(f"{signal_path}:{lineno}: expected sample index {len(samples)}, got {index}")
        if not math.isfinite(value):
            raise DataError(f"{signal_path}:{lineno}: non-finite amplitude")
        samples.append(value)
    annotations = []
    for lineno, (idx, label) in _rows(annotation_path):
        try:
            index = int(idx)
        except ValueError:
            raise DataError(f"{annotation_path}:{lineno}: malformed index {idx!r}") from None
        if len(label) != 1:
            raise DataError(f"{annotation_path}:{lineno}: label must be a single symbol, got {label!r}")
        annotations.append((index, label))
    rid = record_id if record_id is not None else signal_path.name.split(".")[0]
    return ECGRecord(rid, fs, np.array(samples), annotations)


def save_record(record: ECGRecord, signal_path, annotation_path) -> None:
    # repr() of a float is the shortest string that parses back to the same value
    with open(signal_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i},{float(v)!r}\n" for i, v in enumerate(record.samples))
    with open(annotation_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i},{label}\n" for i, label in record.annotations)


def record_paths(directory, record_id: str) -> tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{record_id}.signal.csv", directory / f"{record_id}.ann.csv"


def load_directory(directory, fs: float, record_ids: Iterable[str] | None = None) -> dict[str, ECGRecord]:
    """Load every ``<id>.signal.csv`` / ``<id>.ann.csv`` pair (or just ``record_ids``)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"data directory {directory} does not exist")
    if record_ids is None:
        record_ids = sorted(p.name[: -len(".signal.csv")] for p in directory.glob("*.signal.csv"))
    records = {}
    for rid in record_ids:
        sig, ann = record_paths(directory, rid)
        if not sig.exists() or not ann.exists():
            raise DataError(f"record {rid} missing from {directory}")
        records[rid] = load_record(sig, ann, fs, rid)
    return records


def symbol_to_class(class_map: Mapping[str, Sequence[str]]) -> dict[str, str]:
    lookup = {}
    for name, symbols in class_map.items():
        for s in symbols:
            if s in lookup:
                raise DataError(f"symbol {s!r} mapped to both {lookup[s]!r} and {name!r}")
            lookup[s] = name
    return lookup


@dataclass
class Diagnostic:
    record_id: str
    r_peak: int
    kind: str
    message: str


def segment_record(
    record: ECGRecord,
    class_map: Mapping[str, Sequence[str]] = AAMI_CLASSES,
    normalization: str = "iqr",
    diagnostics: list | None = None,
) -> list[Beat]:
    """Normalize a record and cut one labelled beat per mapped annotation.

    Annotations whose symbol is not in ``class_map`` (rhythm changes, noise
    markers) are ignored. Beats too close to the record edges are skipped
    and reported as ``truncated-beat`` diagnostics.
    """
    lookup = symbol_to_class(class_map)
    signal = normalize_signal(record.samples, normalization)
    beats = []
    for r_peak, symbol in record.annotations:
        if symbol not in lookup:
            continue
        try:
            beat = segment_beat(signal, r_peak, record.fs, label=lookup[symbol])
        except TruncatedBeatError as exc:
            if diagnostics is not None:
                diagnostics.append(Diagnostic(record.record_id, r_peak, "truncated-beat", str(exc)))
            log.debug("%s", exc)
            continue
        beat.record_id = record.record_id
        beats.append(beat)
    return beats


@dataclass
class SplitSpec:
    test_record_ids: list[str] = field(default_factory=lambda: list(DS2_TEST_RECORDS))
    ds1_record_ids: list[str] = field(default_factory=lambda: list(DS1_RECORDS))
    ds1_per_class: dict[str, int] = field(
        default_factory=lambda: {name: 150 for name in AAMI_CLASSES}
    )
    patient_prefix_s: float = PATIENT_PREFIX_SECONDS


def make_split(
    records: Mapping[str, ECGRecord],
    spec: SplitSpec,
    seed: int,
    class_map: Mapping[str, Sequence[str]] = AAMI_CLASSES,
    normalization: str = "iqr",
    diagnostics: list | None = None,
) -> tuple[list[Beat], list[Beat]]:
    """Build train and test beats.

    Train: up to ``ds1_per_class[c]`` beats of each class drawn at random
    from the DS1 records, plus every beat in the first
    ``patient_prefix_s`` seconds of each test record. Test: the remaining
    beats of the test records.
    """
    wanted = list(spec.test_record_ids) + list(spec.ds1_record_ids)
    missing = [rid for rid in wanted if rid not in records]
    if missing:
        raise DataError(f"records not found: {', '.join(missing)}")
    overlap = sorted(set(spec.ds1_record_ids) & set(spec.test_record_ids))
    if overlap:
        raise DataError(f"records listed both as DS1 pool and test: {', '.join(overlap)}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E1]))
    pool: dict[str, list[Beat]] = defaultdict(list)
    for rid in spec.ds1_record_ids:
        for beat in segment_record(records[rid], class_map, normalization, diagnostics):
            pool[beat.label].append(beat)

    requested = {c: n for c, n in spec.ds1_per_class.items() if n > 0}
    absent = [c for c in requested if not pool.get(c)]
    if absent:
        raise DataError(f"classes absent from the DS1 pool: {', '.join(absent)}")
    train: list[Beat] = []
    for name in class_map:
        if name not in requested:
            continue
        candidates = pool[name]
        take = min(requested[name], len(candidates))
        chosen = rng.choice(len(candidates), size=take, replace=False)
        train.extend(candidates[i] for i in sorted(chosen))

    test: list[Beat] = []
    for rid in spec.test_record_ids:
        record = records[rid]
        for beat in segment_record(record, class_map, normalization, diagnostics):
            if beat.r_peak / record.fs < spec.patient_prefix_s:
                train.append(beat)
            else:
                test.append(beat)
    return train, test


def patient_splits(records, spec: SplitSpec, seed: int, **kwargs):
    """Yield ``(record_id, train, test)`` with one test patient at a time."""
    for rid in spec.test_record_ids:
        single = SplitSpec([rid], spec.ds1_record_ids, spec.ds1_per_class, spec.patient_prefix_s)
        train, test = make_split(records, single, seed, **kwargs)
        yield rid, train, test


# Synthetic beats: sums of Gaussian bumps placed relative to the R peak.
# Each bump is (name, amplitude in mV, centre offset in s, width sigma in s).
NORMAL_WAVES = [
    ("P", 0.15, -0.20, 0.025),
    ("Q", -0.12, -0.025, 0.008),
    ("R", 1.10, 0.0, 0.010),
    ("S", -0.25, 0.025, 0.008),
    ("T", 0.30, 0.25, 0.045),
]
WIDE_QRS_FACTOR = 3.0


@dataclass(frozen=True)
class SynthClass:
    name: str
    symbol: str
    waves: tuple
    qrs_width_factor: float = 1.0


def _scaled_qrs(waves, factor):
    return tuple(
        (n, a, off * factor, w * factor) if n in "QRS" else (n, a, off, w) for n, a, off, w in waves
    )


SYNTH_CLASSES: dict[str, SynthClass] = {
    "normal": SynthClass("normal", "N", tuple(NORMAL_WAVES)),
    # premature-ventricular-like: no P wave, QRS widened, T wave inverted
    "wide-QRS": SynthClass(
        "wide-QRS",
        "V",
        _scaled_qrs(
            [w for w in NORMAL_WAVES if w[0] != "P"][:3] + [("T", -0.35, 0.28, 0.05)],
            WIDE_QRS_FACTOR,
        ),
        WIDE_QRS_FACTOR,
    ),
    # dominant negative deflection: R small, deep S
    "inverted-QRS": SynthClass(
        "inverted-QRS",
        "F",
        (
            ("P", 0.15, -0.20, 0.025),
            ("R", 0.25, -0.015, 0.008),
            ("S", -1.10, 0.012, 0.012),
            ("T", 0.30, 0.25, 0.045),
        ),
    ),
}

SYNTH_RR_S = 0.8
SYNTH_RR_JITTER_S = 0.04
SYNTH_AMP_JITTER = 0.08
SYNTH_WIDTH_JITTER = 0.05
SYNTH_NOISE_MV = 0.02
SYNTH_WANDER_MV = 0.05
SYNTH_PAD_S = 0.6


def synth_ecg(
    class_id: str, n_beats: int, fs: float, rng: np.random.Generator, record_id: str | None = None
) -> ECGRecord:
    """Generate a record of ``n_beats`` beats of one synthetic class.

    Every beat jitters the RR interval, wave amplitudes and widths; the
    trace gets white noise and a slow baseline wander. Both ends are padded
    so every beat can be segmented.
    """
    if class_id not in SYNTH_CLASSES:
        raise DataError(f"unknown synthetic class {class_id!r}; choose from {sorted(SYNTH_CLASSES)}")
    spec = SYNTH_CLASSES[class_id]
    rr = SYNTH_RR_S + SYNTH_RR_JITTER_S * rng.standard_normal(n_beats)
    rr = np.maximum(rr, 0.5)
    r_times = SYNTH_PAD_S + np.concatenate([[0.0], np.cumsum(rr[:-1])]) if n_beats else np.array([])
    duration = (r_times[-1] if n_beats else 0.0) + SYNTH_PAD_S
    n = int(math.ceil(duration * fs)) + 1
    t = np.arange(n) / fs
    x = np.zeros(n)
    for r in r_times:
        amp_scale = 1.0 + SYNTH_AMP_JITTER * rng.standard_normal()
        for _, amp, offset, width in spec.waves:
            w = width * (1.0 + SYNTH_WIDTH_JITTER * rng.standard_normal())
            x += amp * amp_scale * np.exp(-0.5 * ((t - r - offset) / w) ** 2)
    phase = rng.uniform(0, 2 * math.pi)
    x += SYNTH_WANDER_MV * np.sin(2 * math.pi * 0.3 * t + phase)
    x += SYNTH_NOISE_MV * rng.standard_normal(n)
    annotations = [(int(round(r * fs)), spec.symbol) for r in r_times]
    return ECGRecord(record_id or f"synth-{class_id}", fs, x, annotations)


def synth_beats(
    counts: Mapping[str, int],
    fs: float,
    seed: int,
    part: int = 0,
    class_map: Mapping[str, Sequence[str]] = AAMI_CLASSES,
    normalization: str = "iqr",
) -> list[Beat]:
    """Labelled beats from one synthetic record per class, in class order.

    ``part`` selects an independent draw for the same seed (0 for training
    data, 1 for test data).
    """
    beats = []
    for i, (class_id, n) in enumerate(counts.items()):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A7, part, i]))
        record = synth_ecg(class_id, n, fs, rng, record_id=f"synth{part}-{class_id}")
        beats.extend(segment_record(record, class_map, normalization))
    return beats
