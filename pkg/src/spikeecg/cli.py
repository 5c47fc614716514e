"""Command-line entry point: ``spikeecg train|eval|synth|energy``.

Exit codes: 0 success, 2 configuration or input error, 3 model/config
mismatch, 4 no data where some is required.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import (
    SYNTH_CLASSES,
    SplitSpec,
    load_directory,
    make_split,
    record_paths,
    save_record,
    synth_beats,
    synth_ecg,
)
from .errors import ConfigError, DataError, EmptyDataError, TopologyMismatch
from .pipeline import EVENT_PJ, SPIKE_PJ, Model, evaluate, tally_energy, train_full

log = logging.getLogger("spikeecg")

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_EMPTY = 0, 2, 3, 4

# published per-beat energy of the reference hardware design, for comparison only
REFERENCE_ENERGY_UJ = 1.78


def emit(**fields) -> None:
    """One metrics record as ``key=value`` pairs on stdout."""
    print(" ".join(f"{k}={_fmt(v)}" for k, v in fields.items()))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value).replace(" ", "_")


def load_beats(cfg: RunConfig, part: str):
    """Training (``part="train"``) or test beats as the config describes."""
    if cfg.data.source == "synthetic":
        counts = cfg.synthetic.train_per_class if part == "train" else cfg.synthetic.test_per_class
        return synth_beats(
            counts, cfg.data.fs, cfg.run.seed, part=0 if part == "train" else 1,
            class_map=cfg.classes, normalization=cfg.run.normalization,
        )
    spec = SplitSpec(
        test_record_ids=[str(r) for r in cfg.split.test_records],
        ds1_record_ids=[str(r) for r in cfg.split.ds1_records],
        ds1_per_class=dict(cfg.split.per_class),
        patient_prefix_s=cfg.split.patient_prefix_s,
    )
    records = load_directory(cfg.data.records_dir, cfg.data.fs, spec.test_record_ids + spec.ds1_record_ids)
    diagnostics: list = []
    train, test = make_split(records, spec, cfg.run.seed, cfg.classes, cfg.run.normalization, diagnostics)
    if diagnostics:
        log.warning("%d beats skipped (truncated-beat)", len(diagnostics))
    return train if part == "train" else test


def cmd_train(args, cfg: RunConfig) -> int:
    beats = load_beats(cfg, "train")
    model = train_full(beats, cfg)
    out = Path(args.model or cfg.paths.model)
    model.save(out)
    g = model.provenance["gaussian"]
    emit(stage="gaussian", converged=g["converged"], epochs=g["epochs"])
    for i, e in enumerate(model.provenance["stdp_epochs"]):
        emit(stage="stdp", epoch=i, stdp_spikes=e["stdp_spikes"], inhib_events=e["inhib_events"],
             mean_weight=e["mean_weight"])
    for i, e in enumerate(model.provenance["rstdp_epochs"]):
        emit(stage="rstdp", epoch=i, train_accuracy=e["accuracy"])
    emit(model=out, beats=len(beats), classes=",".join(model.classes))
    return EXIT_OK


def _beat_line(r) -> str:
    fields = {
        "index": r.index,
        "record": r.record_id or "",
        "label": r.label,
        "prediction": r.prediction,
        **{f"{k}_spikes": v for k, v in r.layer_spikes.items()},
        "spikes": r.energy.spike_count,
        "events": r.energy.synaptic_events,
        "energy_pj": r.energy.energy_pj,
    }
    return " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


def cmd_eval(args, cfg: RunConfig) -> int:
    model = Model.load(args.model or cfg.paths.model)
    model.check_topology(cfg)
    beats = load_beats(cfg, "test")
    if not beats:
        raise EmptyDataError("no test beats")
    result = evaluate(model, beats, threads=cfg.run.threads)
    summary = result.summary()
    summary["mean_energy_pj"] = result.mean_energy_pj
    summary["reference_energy_uj"] = REFERENCE_ENERGY_UJ
    metrics_path = Path(args.metrics or cfg.paths.metrics)
    metrics_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    log_path = Path(args.beat_log or cfg.paths.beat_log)
    log_path.write_text("".join(_beat_line(r) + "\n" for r in result.results), encoding="utf-8")
    emit(beats=result.n_beats, accuracy=result.accuracy, mean_energy_uj=summary["mean_energy_uj"],
         mean_wall_ms=result.mean_wall_ms, threads=result.threads)
    for true, row in summary["confusion"].items():
        emit(confusion=true, **row)
    for rid, row in summary["per_record"].items():
        emit(record=rid, **row)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    if args.synth_class not in SYNTH_CLASSES:
        raise ConfigError(f"unknown synthetic class {args.synth_class!r}; choose from {sorted(SYNTH_CLASSES)}")
    if args.beats < 0:
        raise ConfigError("--beats must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record_id = args.record_id or f"synth-{args.synth_class}"
    rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 0x5A7, 2]))
    record = synth_ecg(args.synth_class, args.beats, cfg.data.fs, rng, record_id=record_id)
    sig, ann = record_paths(out, record_id)
    save_record(record, sig, ann)
    emit(record=record_id, beats=len(record.annotations), samples=len(record.samples), signal=sig, annotations=ann)
    return EXIT_OK


def parse_beat_log(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(dict(part.split("=", 1) for part in line.split()))
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected key=value pairs") from None
    return rows


def cmd_energy(args, cfg: RunConfig) -> int:
    rows = parse_beat_log(args.log)
    if not rows:
        raise EmptyDataError(f"{args.log}: no beats logged")
    total = tally_energy(0, 0)
    for i, row in enumerate(rows, start=1):
        try:
            beat = tally_energy(int(row["spikes"]), int(row["events"]))
        except (KeyError, ValueError):
            raise DataError(f"{args.log}:{i}: needs integer spikes= and events= fields") from None
        logged = row.get("energy_pj")
        if logged is not None and float(logged) != beat.energy_pj:
            log.warning("line %d: logged energy %s pJ differs from tally %s pJ", i, logged, beat.energy_pj)
        total = total + beat
    emit(beats=len(rows), spikes=total.spike_count, events=total.synaptic_events,
         energy_pj=total.energy_pj, mean_energy_uj=total.energy_pj * 1e-6 / len(rows),
         spike_pj=SPIKE_PJ, event_pj=EVENT_PJ)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeecg",
        description="Spiking-network ECG beat classifier. Config keys can be overridden "
        "with --section.key=value after the subcommand.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", help="TOML config file (defaults apply when omitted)")
        return p

    p = with_config(sub.add_parser("train", help="train a model and write the model file"))
    p.add_argument("--model", help="output model path (default paths.model)")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="evaluate a model on the test beats"))
    p.add_argument("--model", help="model path (default paths.model)")
    p.add_argument("--metrics", help="JSON summary path (default paths.metrics)")
    p.add_argument("--beat-log", help="per-beat key=value log (default paths.beat_log)")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("synth", help="write a synthetic record as CSV files"))
    p.add_argument("--class", dest="synth_class", required=True, help=f"one of {sorted(SYNTH_CLASSES)}")
    p.add_argument("--beats", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--record-id")
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("energy", help="re-tally energy from a per-beat log"))
    p.add_argument("log", help="per-beat log written by eval")
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    bad = [e for e in extra if not (e.startswith("--") and "=" in e and "." in e.split("=", 1)[0])]
    if bad:
        parser.print_usage(sys.stderr)
        print(f"spikeecg: error: unrecognized arguments: {' '.join(bad)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, extra)
        return args.func(args, cfg)
    except TopologyMismatch as exc:
        print(f"spikeecg: model mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except EmptyDataError as exc:
        print(f"spikeecg: empty data: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (ConfigError, DataError) as exc:
        print(f"spikeecg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"spikeecg: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
