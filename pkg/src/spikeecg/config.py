"""Run configuration: one TOML file with a section per module.

Every section maps onto a parameter dataclass of the owning module, so
validation lives next to the parameters. Unknown sections and keys are
rejected. Command-line overrides use dotted paths, e.g.
``--stdp.a_plus=0.02`` or ``--lif.stdp.alpha=8``.
"""

from __future__ import annotations

import copy
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classifier import RstdpParams
from .data import AAMI_CLASSES, DS1_RECORDS, DS2_TEST_RECORDS, PATIENT_PREFIX_SECONDS, SYNTH_CLASSES
from .encoder import NORMALIZATIONS, EncoderParams, beat_length, window_length
from .errors import ConfigError
from .feature_stdp import InhibParams, StdpParams
from .gaussian import GaussianParams
from .snn_core import LifParams

DATA_SOURCES = ("records", "synthetic")


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    threads: int = 1
    q_windows: int = 8
    normalization: str = "iqr"

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.q_windows < 1:
            raise ConfigError(f"q_windows must be >= 1, got {self.q_windows}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")


@dataclass(frozen=True)
class EpochSection:
    epochs: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass(frozen=True)
class DataSection:
    source: str = "records"
    records_dir: str = "records"
    fs: float = 360.0

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}, got {self.source!r}")
        if not self.fs > 0:
            raise ConfigError(f"data.fs must be > 0, got {self.fs}")


@dataclass(frozen=True)
class SplitSection:
    test_records: list = field(default_factory=lambda: list(DS2_TEST_RECORDS))
    ds1_records: list = field(default_factory=lambda: list(DS1_RECORDS))
    per_class: dict = field(default_factory=lambda: {name: 150 for name in AAMI_CLASSES})
    patient_prefix_s: float = PATIENT_PREFIX_SECONDS

    def __post_init__(self):
        if self.patient_prefix_s < 0:
            raise ConfigError("split.patient_prefix_s must be >= 0")
        for name, n in self.per_class.items():
            if not isinstance(n, int) or n < 0:
                raise ConfigError(f"split.per_class.{name} must be a non-negative integer")


@dataclass(frozen=True)
class SyntheticSection:
    train_per_class: dict = field(
        default_factory=lambda: {"normal": 67, "wide-QRS": 67, "inverted-QRS": 66}
    )
    test_per_class: dict = field(
        default_factory=lambda: {"normal": 34, "wide-QRS": 33, "inverted-QRS": 33}
    )

    def __post_init__(self):
        for table in (self.train_per_class, self.test_per_class):
            for name, n in table.items():
                if name not in SYNTH_CLASSES:
                    raise ConfigError(f"unknown synthetic class {name!r}; choose from {sorted(SYNTH_CLASSES)}")
                if not isinstance(n, int) or n < 0:
                    raise ConfigError(f"synthetic beat count for {name!r} must be a non-negative integer")


@dataclass(frozen=True)
class PathsSection:
    model: str = "model.snn"
    metrics: str = "metrics.json"
    beat_log: str = "beats.log"


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    lif_gaussian: LifParams = field(default_factory=lambda: LifParams(alpha=100.0))
    lif_stdp: LifParams = field(default_factory=lambda: LifParams(alpha=6.0))
    lif_rstdp: LifParams = field(default_factory=lambda: LifParams(alpha=8.0))
    encoder: EncoderParams = field(default_factory=lambda: EncoderParams(r_base=0.1))
    gaussian: GaussianParams = field(default_factory=GaussianParams)
    stdp: StdpParams = field(default_factory=lambda: StdpParams(pairing="restricted"))
    stdp_train: EpochSection = field(default_factory=lambda: EpochSection(epochs=1))
    inhib: InhibParams = field(default_factory=InhibParams)
    rstdp: RstdpParams = field(default_factory=lambda: RstdpParams(ap_plus=0.04, ap_minus=-0.04))
    rstdp_train: EpochSection = field(default_factory=lambda: EpochSection(epochs=20))
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    classes: dict = field(default_factory=lambda: {k: list(v) for k, v in AAMI_CLASSES.items()})
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self):
        dts = {self.lif_gaussian.dt, self.lif_stdp.dt, self.lif_rstdp.dt, self.encoder.dt}
        if len(dts) != 1:
            raise ConfigError(f"all layers and the encoder must share one dt, got {sorted(dts)}")
        if not self.classes:
            raise ConfigError("[classes] must define at least one class")
        for name, symbols in self.classes.items():
            if not isinstance(symbols, list) or not all(isinstance(s, str) and len(s) == 1 for s in symbols):
                raise ConfigError(f"classes.{name} must be a list of single-character symbols")
        n = beat_length(self.data.fs)
        length = window_length(n, self.run.q_windows)
        if length < 2:
            raise ConfigError(
                f"q_windows={self.run.q_windows} leaves windows of {length} samples for beats of {n}"
            )

    @property
    def n_windows(self) -> int:
        return 2 * self.run.q_windows

    @property
    def window_len(self) -> int:
        return window_length(beat_length(self.data.fs), self.run.q_windows)

    def to_dict(self) -> dict:
        """Nested plain-data form with the same layout as the TOML file."""
        out: dict[str, Any] = {}
        for path, attr in _SECTIONS.items():
            value = getattr(self, attr)
            data = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else copy.deepcopy(value)
            node = out
            *parents, leaf = path
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = data
        for section, attr in _EPOCHS.items():
            out[section]["epochs"] = getattr(self, attr).epochs
        return out


# TOML section path -> RunConfig attribute. "stdp" and "rstdp" carry an
# extra "epochs" key that goes to the *_train attribute.
_SECTIONS: dict[tuple[str, ...], str] = {
    ("run",): "run",
    ("lif", "gaussian"): "lif_gaussian",
    ("lif", "stdp"): "lif_stdp",
    ("lif", "rstdp"): "lif_rstdp",
    ("encoder",): "encoder",
    ("gaussian",): "gaussian",
    ("stdp",): "stdp",
    ("inhib",): "inhib",
    ("rstdp",): "rstdp",
    ("data",): "data",
    ("split",): "split",
    ("synthetic",): "synthetic",
    ("classes",): "classes",
    ("paths",): "paths",
}
_EPOCHS = {"stdp": "stdp_train", "rstdp": "rstdp_train"}
_FREE_TABLES = {"classes"}


def _coerce(value, default, where: str):
    """Check a TOML value against the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if default and all(isinstance(d, str) for d in default):
            value = [str(v) for v in value]
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table, got {value!r}")
    return value


def _build_section(defaults, table: Mapping, where: str):
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in dataclasses.fields(defaults)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}")
    kwargs = {k: _coerce(v, getattr(defaults, k), f"{where}.{k}") for k, v in table.items()}
    try:
        return dataclasses.replace(defaults, **kwargs)
    except ConfigError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def from_dict(data: Mapping) -> RunConfig:
    """Build and validate a config from TOML-shaped data."""
    data = copy.deepcopy(dict(data))
    base = RunConfig()
    kwargs = {}
    lif = data.pop("lif", {})
    if not isinstance(lif, Mapping):
        raise ConfigError("[lif] must be a table of per-layer sections")
    unknown_lif = sorted(set(lif) - {"gaussian", "stdp", "rstdp"})
    if unknown_lif:
        raise ConfigError(f"[lif] unknown layer(s): {', '.join(unknown_lif)}")
    for path, attr in _SECTIONS.items():
        if path[0] == "lif":
            table = lif.get(path[1])
        else:
            table = data.pop(path[0], None)
        if table is None:
            continue
        where = ".".join(path)
        if path[0] in _FREE_TABLES:
            if not isinstance(table, Mapping):
                raise ConfigError(f"[{where}] must be a table")
            kwargs[attr] = dict(table)
            continue
        if path[0] in _EPOCHS:
            table = dict(table)
            if "epochs" in table:
                kwargs[_EPOCHS[path[0]]] = _build_section(getattr(base, _EPOCHS[path[0]]), {"epochs": table.pop("epochs")}, where)
        kwargs[attr] = _build_section(getattr(base, attr), table, where)
    if data:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(data))}")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded by the key checks above
        raise ConfigError(str(exc)) from None


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``section.key=value`` into a key path and a TOML-parsed value.

    Values that are not valid TOML are taken as bare strings.
    """
    if text.startswith("--"):
        text = text[2:]
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    path = key.strip().split(".")
    if len(path) < 2 or not all(path):
        raise ConfigError(f"override key {key!r} must be section.key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return path, value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {text!r}: {part!r} is not a section")
            node = child
        node[path[-1]] = value
    return data


def load_config(path=None, overrides=()) -> RunConfig:
    """Read a TOML config (defaults only when ``path`` is None) and apply overrides."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(apply_overrides(data, overrides))
