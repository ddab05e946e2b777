"""Reduction-rate sweep: per variant reduce -> split -> train -> compress -> profile."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import datapipe as dp_
from .compress import compress, compressed_bytes, load_compressed
from .datapipe import ALLOWED_REDUCTIONS, DatasetManifest, WindowedDataset, round_half_up
from .errors import ConfigError, MissingBaseline, TinySweepError
from .footprint import CSV_HEADER, DeviceProfile, FootprintReport, profile
from .footprint.profile import format_freq
from .io import atomic_write_bytes, atomic_write_json, atomic_write_text, csv_text
from .nn import ModelSpec, TrainConfig, evaluate, train
from .nn.model import model_bytes

log = logging.getLogger(__name__)

RADAR_METRICS = ("accuracy", "flash_kb", "ram_kb", "macs_k", "latency_ms", "energy_uj")
SUMMARY_HEADER = ("dataset", "rrr", "mr", "lr", "err", "ar", "dr")


@dataclass(frozen=True)
class SweepConfig:
    manifest: DatasetManifest
    reductions: tuple = ALLOWED_REDUCTIONS
    train_config: TrainConfig = field(default_factory=TrainConfig)
    sparsity_fraction: float = 0.0
    device_profile: DeviceProfile = field(default_factory=DeviceProfile)
    output_dir: Optional[str] = None
    calibration_size: int = 128
    radar_normalization: str = "max"

    def __post_init__(self):
        red = tuple(int(r) for r in self.reductions)
        object.__setattr__(self, "reductions", red)
        if not red:
            raise ConfigError("reductions must be non-empty")
        if list(red) != sorted(set(red)):
            raise ConfigError("reductions must be sorted ascending without duplicates")
        bad = [r for r in red if r not in ALLOWED_REDUCTIONS]
        if bad:
            raise ConfigError(f"reductions {bad} not in {ALLOWED_REDUCTIONS}")
        if self.radar_normalization not in ("max", "minmax"):
            raise ConfigError("radar_normalization must be 'max' or 'minmax'")


@dataclass
class SweepRow:
    reduction_pct: int
    freq_hz: float
    input_len: int
    channels: int
    report: Optional[FootprintReport] = None
    float_accuracy: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.report is not None

    def csv_row(self) -> list:
        if self.report is None:
            head = [str(self.reduction_pct), format_freq(self.freq_hz),
                    str(self.input_len), str(self.channels)]
            return head + ["failed"] * 6
        return self.report.csv_row(self.reduction_pct, self.freq_hz)


@dataclass(frozen=True)
class MetricRow:
    """Full-precision metrics of one variant (units: KB, K, ms, uJ)."""

    reduction_pct: int
    accuracy: float
    flash_kb: float
    ram_kb: float
    macs_k: float
    latency_ms: float
    energy_uj: float

    @classmethod
    def from_report(cls, reduction_pct, r: FootprintReport) -> "MetricRow":
        acc = float("nan") if r.accuracy is None else r.accuracy
        return cls(reduction_pct, acc, r.flash_bytes / 1024, r.ram_bytes / 1024,
                   r.macs_total / 1000, r.latency_ms, r.energy_uj)

    @classmethod
    def from_reported(cls, row) -> "MetricRow":
        return cls(row.reduction_pct, row.accuracy, row.flash_kb, row.ram_kb, row.macs_k,
                   row.latency_ms, row.energy_uj)


@dataclass
class SweepReport:
    dataset: str
    rows: list
    summary: list
    radar: dict
    zero_metrics: list = field(default_factory=list)

    def metric_rows(self):
        return [MetricRow.from_report(r.reduction_pct, r.report) for r in self.rows if r.ok]


def percent_reduction(base, value) -> int:
    if base == 0 or not (math.isfinite(base) and math.isfinite(value)):
        return 0
    pct = round_half_up((base - value) / base * 100.0)
    return max(-100, min(100, pct))


def summarize(rows) -> list:
    """Percent reductions of every row against the 0% baseline.

    Returns one dict per row with keys rrr, mr, lr, err, ar, dr.
    """
    rows = list(rows)
    base = next((r for r in rows if r.reduction_pct == 0), None)
    if base is None:
        raise MissingBaseline("summary needs the 0% reduction row")
    out = []
    for r in rows:
        out.append({
            "rrr": percent_reduction(base.ram_kb, r.ram_kb),
            "mr": percent_reduction(base.macs_k, r.macs_k),
            "lr": percent_reduction(base.latency_ms, r.latency_ms),
            "err": percent_reduction(base.energy_uj, r.energy_uj),
            "ar": percent_reduction(base.accuracy, r.accuracy),
            "dr": int(r.reduction_pct),
        })
    return out


def radar_normalize(rows, method="max"):
    """Per-metric normalization across rows.

    Returns ``(series, zero_metrics)``; metrics whose maximum is zero come
    back as all-zero series and are listed in ``zero_metrics``.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("radar_normalize needs at least one row")
    series, zero = {}, []
    for m in RADAR_METRICS:
        vals = np.array([getattr(r, m) for r in rows], dtype=np.float64)
        top = np.nanmax(vals) if np.any(np.isfinite(vals)) else 0.0
        if top == 0 or not np.isfinite(top):
            series[m] = [0.0] * len(vals)
            zero.append(m)
            continue
        if method == "max":
            series[m] = [float(v) for v in vals / top]
        else:
            lo = np.nanmin(vals)
            span = top - lo
            series[m] = [1.0] * len(vals) if span == 0 else [float(v) for v in (vals - lo) / span]
    return series, zero


def run_variant(base: WindowedDataset, r: int, cfg: SweepConfig, outdir: Optional[Path]):
    m = cfg.manifest
    L = dp_.reduced_length(base.window_length, r)
    freq = base.effective_frequency_hz * (100 - r) / 100
    row = SweepRow(r, freq, L, base.channel_count)
    try:
        ds = dp_.reduce_rate(base, r)
        tr, te = dp_.split(ds, m)
        spec = ModelSpec.sepconv_classifier(ds.window_length, ds.channel_count, m.class_count)
        spec.shapes()
        model = train(spec, tr, te, cfg.train_config)
        cm = compress(model, tr, cfg.sparsity_fraction, cfg.calibration_size,
                      cfg.train_config.seed)
        row.report = profile(cm, cfg.device_profile, te)
        row.float_accuracy = evaluate(model, te) if len(te) else None
        if outdir is not None:
            vdir = outdir / f"r{r:02d}"
            atomic_write_bytes(vdir / "model.tnym", model_bytes(model))
            atomic_write_bytes(vdir / "model.tnyq", compressed_bytes(cm))
            atomic_write_bytes(vdir / "test.tswd", dp_.tswd_bytes(te))
            atomic_write_text(vdir / "footprint.csv", csv_text(CSV_HEADER, [row.csv_row()]))
            atomic_write_json(vdir / "training_log.json", model.training_log)
    except TinySweepError as e:
        log.warning("variant %d%% failed: %s", r, e)
        row.report = None
        row.error = f"{e.code}: {e}"
    return row


def run_sweep(cfg: SweepConfig, data) -> SweepReport:
    """Run every reduction variant of ``data`` (a recording or unreduced windows)."""
    if isinstance(data, dp_.TimeSeriesRecording):
        base = dp_.extract_windows(data, cfg.manifest)
    else:
        base = data
    if len(base) == 0:
        raise TinySweepError("no windows to sweep over")
    outdir = Path(cfg.output_dir) if cfg.output_dir else None
    rows = [run_variant(base, r, cfg, outdir) for r in cfg.reductions]
    ok = [MetricRow.from_report(r.reduction_pct, r.report) for r in rows if r.ok]
    summary = summarize(ok) if any(m.reduction_pct == 0 for m in ok) else []
    radar, zero = radar_normalize(ok, cfg.radar_normalization) if ok else ({}, [])
    rep = SweepReport(cfg.manifest.name, rows, summary, radar, zero)
    if outdir is not None:
        write_report(rep, cfg, outdir)
    return rep


def lock_document(cfg: SweepConfig, rep: SweepReport) -> dict:
    return {
        "manifest": cfg.manifest.to_dict(),
        "reductions": list(cfg.reductions),
        "train_config": cfg.train_config.__dict__.copy(),
        "sparsity_fraction": cfg.sparsity_fraction,
        "calibration_size": cfg.calibration_size,
        "device_profile": cfg.device_profile.to_dict(),
        "radar_normalization": cfg.radar_normalization,
        "seeds": {"train": cfg.train_config.seed, "split": cfg.manifest.split_policy.seed,
                  "calibration": cfg.train_config.seed},
        "failures": {str(r.reduction_pct): r.error for r in rep.rows if not r.ok},
        "zero_metrics": rep.zero_metrics,
    }


def write_report(rep: SweepReport, cfg: SweepConfig, outdir: Path) -> None:
    atomic_write_text(outdir / "report.csv", csv_text(CSV_HEADER, [r.csv_row() for r in rep.rows]))
    srows = [[rep.dataset] + [s[k] for k in SUMMARY_HEADER[1:]] for s in rep.summary]
    atomic_write_text(outdir / "summary.csv", csv_text(SUMMARY_HEADER, srows))
    atomic_write_json(outdir / "radar.json", rep.radar)
    atomic_write_json(outdir / "manifest.lock.json", lock_document(cfg, rep))


def reprofile_variant(vdir, device_profile: DeviceProfile) -> FootprintReport:
    """Reload a persisted variant and profile it again."""
    vdir = Path(vdir)
    cm = load_compressed(vdir / "model.tnyq")
    te = dp_.read_window_cache(vdir / "test.tswd")
    return profile(cm, device_profile, te)
