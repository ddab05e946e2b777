"""``tinysweep`` command line.

Every command resolves the full config first, validates the subset it uses,
and only then touches the filesystem. Outputs are written atomically and each
gets a ``<output>.log.json`` sibling holding the resolved config and seeds.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datapipe as dp_
from .compress import compress, compressed_bytes, load_compressed
from .config import (INPUT_FORMATS, SEED_ENV, device_profile_of, help_lines, manifest_of,
                     path_of, public, read_config_file, resolve_config, seeds_of,
                     train_config_of)
from .errors import ConfigError, TinySweepError, ValidationError
from .footprint import CSV_HEADER, profile, profile_spec
from .io import atomic_write_bytes, atomic_write_json, csv_text
from .nn import ModelSpec, evaluate, load_model, train
from .nn.model import model_bytes
from .report import report_render
from .sweeplab import SweepConfig, run_sweep
from .synthetic import wave_recording

log = logging.getLogger("tinysweep")

COMMANDS = {
    "ingest": "parse a per-sample CSV and write its canonical form",
    "window": "slide fixed windows over the input and write a window cache",
    "reduce": "resample cached windows to a lower rate",
    "train": "split, standardize, and train the classifier",
    "compress": "prune, calibrate, and int8-quantize a trained model",
    "profile": "estimate FLASH/RAM/MACs/latency/energy of a model",
    "sweep": "run every reduction variant end to end",
    "report": "render sweep directories as markdown tables",
}


# -- window files with sidecar metadata ----------------------------------------

def window_meta(ds: dp_.WindowedDataset) -> dict:
    def arr(a):
        return None if a is None else [float(v) for v in a]
    return {
        "effective_frequency_hz": float(ds.effective_frequency_hz),
        "provenance": ds.provenance,
        "subjects": None if ds.subjects is None else [str(s) for s in ds.subjects],
        "norm_mean": arr(ds.norm_mean),
        "norm_std": arr(ds.norm_std),
    }


def load_windows(path) -> dp_.WindowedDataset:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"window file {path} not found")
    ds = dp_.read_window_cache(path)
    side = path.with_name(path.name + ".json")
    if side.is_file():
        meta = json.loads(side.read_text(encoding="utf-8"))
        ds.effective_frequency_hz = meta["effective_frequency_hz"]
        ds.provenance = meta.get("provenance", "")
        if meta.get("subjects") is not None:
            ds.subjects = np.array(meta["subjects"])
        if meta.get("norm_mean") is not None:
            ds.norm_mean = np.array(meta["norm_mean"])
            ds.norm_std = np.array(meta["norm_std"])
    return ds


class Run:
    """Collects outputs so nothing is written until the command succeeded."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.outputs = []
        self.inputs = []

    def read(self, path):
        self.inputs.append(str(path))
        return path

    def text(self, path, text):
        self.outputs.append((Path(path), text.encode("utf-8")))

    def json(self, path, obj):
        self.text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def bytes(self, path, data):
        self.outputs.append((Path(path), data))

    def windows(self, path, ds):
        self.bytes(path, dp_.tswd_bytes(ds))
        self.json(Path(path).with_name(Path(path).name + ".json"), window_meta(ds))

    def log_doc(self) -> dict:
        return {"command": self.command, "config": public(self.cfg), "seeds": seeds_of(self.cfg),
                "inputs": self.inputs}

    def commit(self, logged=None):
        for path, data in self.outputs:
            atomic_write_bytes(path, data)
        if logged is None:
            logged = [p for p, _ in self.outputs if p.suffix != ".json"]
        doc = self.log_doc()
        for path in logged:
            atomic_write_json(Path(str(path) + ".log.json"), doc)


# -- input loading -------------------------------------------------------------

def _input_path(run, cfg):
    p = cfg["input"]["path"]
    if not p:
        raise ConfigError("input.path is required")
    if not Path(p).is_file():
        raise ConfigError(f"input {p} not found")
    return run.read(p)


def _check_format(cfg, allowed):
    fmt = cfg["input"]["format"]
    if fmt not in INPUT_FORMATS:
        raise ConfigError(f"input.format must be one of {INPUT_FORMATS}")
    if fmt not in allowed:
        raise ConfigError(f"input.format {fmt!r} not usable here; expected one of {allowed}")
    return fmt


def load_recording(run, cfg, manifest):
    fmt = _check_format(cfg, ("samples", "synthetic"))
    if fmt == "synthetic":
        return wave_recording(manifest, seed=cfg["seed"])
    return dp_.ingest_csv(_input_path(run, cfg), manifest)


def load_base_windows(run, cfg, manifest):
    """Unreduced windows from whatever the input section names."""
    fmt = cfg["input"]["format"]
    if fmt == "windows":
        return dp_.ingest_window_csv(_input_path(run, cfg), manifest)
    if fmt == "tswd":
        return load_windows(_input_path(run, cfg))
    return dp_.extract_windows(load_recording(run, cfg, manifest), manifest)


# -- commands --------------------------------------------------------------------

def cmd_ingest(run, cfg):
    m = manifest_of(cfg)
    rec = load_recording(run, cfg, m)
    run.text(path_of(cfg, "recording"), dp_.recording_csv_text(rec, m))


def cmd_window(run, cfg):
    m = manifest_of(cfg)
    ds = load_base_windows(run, cfg, m)
    log.info("%d windows of %d x %d", len(ds), ds.window_length, ds.channel_count)
    run.windows(path_of(cfg, "windows"), ds)


def cmd_reduce(run, cfg):
    r = cfg["reduce"]["reduction_percent"]
    if r not in dp_.ALLOWED_REDUCTIONS:
        raise ConfigError(f"reduce.reduction_percent must be one of {dp_.ALLOWED_REDUCTIONS}")
    ds = load_windows(run.read(path_of(cfg, "windows")))
    run.windows(path_of(cfg, "reduced"), dp_.reduce_rate(ds, r))


def cmd_train(run, cfg):
    m = manifest_of(cfg)
    tc = train_config_of(cfg)
    ds = load_windows(run.read(path_of(cfg, "reduced")))
    tr, te = dp_.split(ds, m)
    spec = ModelSpec.sepconv_classifier(ds.window_length, ds.channel_count, m.class_count)
    model = train(spec, tr, te, tc)
    if len(te):
        log.info("float test accuracy %.4f", evaluate(model, te))
    run.bytes(path_of(cfg, "model"), model_bytes(model))
    run.windows(path_of(cfg, "train_windows"), tr)
    run.windows(path_of(cfg, "test_windows"), te)
    run.json(Path(str(path_of(cfg, "model")) + ".training.json"), model.training_log)


def _compress_settings(cfg):
    s = cfg["compress"]["sparsity_fraction"]
    n = cfg["compress"]["calibration_size"]
    if not isinstance(s, (int, float)) or not 0.0 <= s < 1.0:
        raise ConfigError("compress.sparsity_fraction must lie in [0, 1)")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("compress.calibration_size must be a positive integer")
    return float(s), n


def cmd_compress(run, cfg):
    s, n = _compress_settings(cfg)
    mpath = path_of(cfg, "model")
    if not mpath.is_file():
        raise ConfigError(f"model {mpath} not found")
    model = load_model(run.read(mpath))
    calib = load_windows(run.read(path_of(cfg, "train_windows")))
    cm = compress(model, calib, s, n, cfg["seed"])
    run.bytes(path_of(cfg, "compressed"), compressed_bytes(cm))


def cmd_profile(run, cfg):
    dp = device_profile_of(cfg)
    src = cfg["profile"]["source"]
    if src == "architecture":
        m = manifest_of(cfg)
        r = cfg["reduce"]["reduction_percent"]
        L = dp_.reduced_length(m.window_length, r)
        rep = profile_spec(ModelSpec.sepconv_classifier(L, m.channel_count, m.class_count), dp)
        freq = m.base_frequency_hz * (100 - r) / 100
    elif src == "compressed":
        cpath = path_of(cfg, "compressed")
        if not cpath.is_file():
            raise ConfigError(f"compressed model {cpath} not found")
        cm = load_compressed(run.read(cpath))
        te = None
        if cfg["profile"]["evaluate"]:
            te = load_windows(run.read(path_of(cfg, "test_windows")))
        rep = profile(cm, dp, te)
        r = te.reduction_percent if te is not None else cfg["reduce"]["reduction_percent"]
        freq = te.effective_frequency_hz if te is not None else float("nan")
    else:
        raise ConfigError("profile.source must be 'compressed' or 'architecture'")
    out = path_of(cfg, "footprint")
    run.text(out, csv_text(CSV_HEADER, [rep.csv_row(r, freq)]))
    doc = rep.to_dict()
    doc["device_profile"] = dp.to_dict()
    run.json(out.with_suffix(".json"), doc)


def cmd_sweep(run, cfg):
    m = manifest_of(cfg)
    s, n = _compress_settings(cfg)
    outdir = Path(cfg["output_dir"])
    sc = SweepConfig(m, tuple(cfg["sweep"]["reductions"]), train_config_of(cfg), s,
                     device_profile_of(cfg), str(outdir), n, cfg["sweep"]["radar_normalization"])
    data = load_base_windows(run, cfg, m)
    rep = run_sweep(sc, data)
    failed = [r.reduction_pct for r in rep.rows if not r.ok]
    if failed:
        log.warning("variants failed: %s", failed)
    logged = [outdir / f for f in ("report.csv", "summary.csv", "radar.json",
                                   "manifest.lock.json")]
    for r in sc.reductions:
        vdir = outdir / f"r{r:02d}"
        logged += [p for p in (vdir / f for f in ("model.tnym", "model.tnyq", "test.tswd",
                                                  "footprint.csv")) if p.is_file()]
    run.commit(logged)
    return True


def cmd_report(run, cfg):
    inputs = cfg["report"]["inputs"]
    if not isinstance(inputs, list) or not inputs:
        raise ConfigError("report.inputs must list at least one sweep directory")
    for p in inputs:
        run.read(p)
    run.text(path_of(cfg, "report"), report_render(inputs, cfg["report"]["summary_reduction"]))


HANDLERS = {
    "ingest": cmd_ingest, "window": cmd_window, "reduce": cmd_reduce, "train": cmd_train,
    "compress": cmd_compress, "profile": cmd_profile, "sweep": cmd_sweep, "report": cmd_report,
}


# -- argument parsing ----------------------------------------------------------

def help_epilog() -> str:
    return "\n".join([
        "config keys (dotted name = default):",
        *help_lines(),
        "",
        f"seed precedence: --seed > ${SEED_ENV} > config 'seed'.",
        "exit codes: 0 ok, 1 validation error, 2 runtime failure.",
    ])


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=100)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tinysweep", formatter_class=_formatter, epilog=help_epilog(),
        description="Sampling-rate reduction sweeps for tiny time-series classifiers.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, formatter_class=_formatter, epilog=help_epilog(),
                            help=COMMANDS[name])
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                        help="dotted config overrides; values parsed as JSON, else string")
        sp.add_argument("--seed", type=int, default=None, help="global seed")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return p


def dispatch(command, config_path=None, overrides=(), seed=None, verbosity=0, env=None) -> int:
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(max(verbosity, 0), 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    try:
        if command not in HANDLERS:
            raise ConfigError(f"unknown command {command!r}")
        user = read_config_file(config_path) if config_path else {}
        cfg = resolve_config(user, overrides, seed, env)
        run = Run(command, cfg)
        if not HANDLERS[command](run, cfg):
            run.commit()
    except ValidationError as e:
        print(f"ERROR {e.code}: {e}", file=sys.stderr)
        return 1
    except TinySweepError as e:
        print(f"ERROR {e.code}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"ERROR io: {e}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args.command, args.config, args.overrides, args.seed, args.verbose)


if __name__ == "__main__":
    sys.exit(main())
