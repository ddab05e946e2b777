"""Raw time-series ingestion, sliding windows, and rate-reduced variants."""
from __future__ import annotations

import csv
import io
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .errors import (
    ConfigError,
    EmptyFile,
    FormatError,
    InvalidReduction,
    MissingColumn,
    NonNumericValue,
    RecordingShorterThanWindow,
    SingleSubjectWithBySubjectPolicy,
    UnknownLabel,
    ValidationError,
)

ALLOWED_REDUCTIONS = (0, 25, 50, 75)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitPolicy:
    kind: str = "random_fraction"  # or "by_subject"
    seed: int = 7
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in ("random_fraction", "by_subject"):
            raise ConfigError(f"unknown split policy {self.kind!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    base_frequency_hz: float
    window_seconds: float
    overlap_fraction: float
    channel_count: int
    class_labels: tuple
    split_policy: SplitPolicy = field(default_factory=SplitPolicy)
    # CSV column names in channel order; defaults to ch0..ch{C-1}
    channel_names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "class_labels", tuple(str(c) for c in self.class_labels))
        if self.channel_names is not None:
            object.__setattr__(self, "channel_names", tuple(self.channel_names))
            if len(self.channel_names) != self.channel_count:
                raise ConfigError("channel_names length must equal channel_count")
        if isinstance(self.split_policy, dict):
            object.__setattr__(self, "split_policy", SplitPolicy(**self.split_policy))
        if self.base_frequency_hz <= 0 or self.window_seconds <= 0:
            raise ConfigError("frequency and window duration must be positive")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError("overlap_fraction must lie in [0, 1)")
        if self.channel_count < 1:
            raise ConfigError("channel_count must be positive")
        if not self.class_labels or len(set(self.class_labels)) != len(self.class_labels):
            raise ConfigError("class_labels must be non-empty and unique")
        if self.window_length < 8:
            raise ConfigError(f"window length {self.window_length} < 8")

    @property
    def window_length(self) -> int:
        # floor, not round: 1.5 s at 125 Hz must give 187 samples
        return int(math.floor(self.window_seconds * self.base_frequency_hz + 1e-6))

    @property
    def stride(self) -> int:
        return max(1, round_half_up(self.window_length * (1.0 - self.overlap_fraction)))

    @property
    def columns(self) -> tuple:
        if self.channel_names is not None:
            return self.channel_names
        return tuple(f"ch{i}" for i in range(self.channel_count))

    @property
    def class_count(self) -> int:
        return len(self.class_labels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_labels"] = list(self.class_labels)
        if self.channel_names is not None:
            d["channel_names"] = list(self.channel_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            jsonschema.validate(d, MANIFEST_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ConfigError(f"manifest: {e.message}") from None
        d = dict(d)
        d["split_policy"] = SplitPolicy(**d.get("split_policy", {}))
        return cls(**d)


MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["name", "base_frequency_hz", "window_seconds", "overlap_fraction",
                 "channel_count", "class_labels"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "base_frequency_hz": {"type": "number", "exclusiveMinimum": 0},
        "window_seconds": {"type": "number", "exclusiveMinimum": 0},
        "overlap_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "channel_count": {"type": "integer", "minimum": 1},
        "class_labels": {"type": "array", "items": {"type": "string"}, "minItems": 1,
                         "uniqueItems": True},
        "split_policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["random_fraction", "by_subject"]},
                "seed": {"type": "integer"},
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "channel_names": {"type": ["array", "null"], "items": {"type": "string"}},
    },
}


def load_manifest(path) -> DatasetManifest:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e})") from None
    return DatasetManifest.from_dict(d)


# Windowing parameters per benchmark. UCIHAR uses its 9 raw inertial channels
# (body acc, gyro, total acc); ECG sets arrive pre-segmented one beat per row.
PRESETS = {
    "ucihar": DatasetManifest(
        "ucihar", 50.0, 2.56, 0.5, 9,
        ("WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING"),
        SplitPolicy("by_subject", 7, 0.3)),
    "wisdm": DatasetManifest(
        "wisdm", 20.0, 10.0, 0.5, 6,
        ("WALKING", "JOGGING", "TYPING", "WRITING", "STAIRS", "BRUSHING_TEETH"),
        SplitPolicy("by_subject", 7, 0.2)),
    "pamap2": DatasetManifest(
        "pamap2", 100.0, 5.12, 0.5, 6,
        ("WALKING", "RUNNING", "CYCLING", "COMPUTER_WORK", "CAR_DRIVING", "ROPE_JUMPING"),
        SplitPolicy("by_subject", 7, 0.2)),
    "mhealth": DatasetManifest(
        "mhealth", 50.0, 5.0, 0.5, 6,
        ("WALKING", "CLIMBING_STAIRS", "CYCLING", "JOGGING", "RUNNING"),
        SplitPolicy("by_subject", 7, 0.2)),
    "mitbih": DatasetManifest(
        "mitbih", 125.0, 1.5, 0.0, 1, ("N", "S", "V", "F", "Q"),
        SplitPolicy("random_fraction", 7, 0.2)),
    "ptb": DatasetManifest(
        "ptb", 125.0, 1.5, 0.0, 1, ("NORMAL", "MI"),
        SplitPolicy("random_fraction", 7, 0.2)),
}


@dataclass
class TimeSeriesRecording:
    channels: np.ndarray  # (num_samples, channel_count) float64
    labels: np.ndarray  # (num_samples,) int64
    frequency_hz: float
    subject_id: str = ""
    # per-sample subject tags when one CSV holds several subjects
    subjects: Optional[np.ndarray] = None

    @property
    def num_samples(self) -> int:
        return int(self.channels.shape[0])

    def by_subject(self) -> list:
        """Split into contiguous single-subject recordings (input order kept)."""
        if self.subjects is None:
            return [self]
        out = []
        s = self.subjects
        bounds = [0] + [i for i in range(1, len(s)) if s[i] != s[i - 1]] + [len(s)]
        for a, b in zip(bounds[:-1], bounds[1:]):
            out.append(TimeSeriesRecording(self.channels[a:b], self.labels[a:b],
                                           self.frequency_hz, str(s[a])))
        return out


@dataclass
class WindowedDataset:
    instances: np.ndarray  # (N, L, C) float32
    labels: np.ndarray  # (N,) int64
    effective_frequency_hz: float
    reduction_percent: int = 0
    provenance: str = ""
    subjects: Optional[np.ndarray] = None
    # per-channel standardization applied to instances, if any
    norm_mean: Optional[np.ndarray] = None
    norm_std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.instances.ndim != 3:
            raise ValidationError("instances must have shape (N, length, channels)")
        if len(self.labels) != len(self.instances):
            raise ValidationError("one label per instance required")

    def __len__(self):
        return int(self.instances.shape[0])

    @property
    def window_length(self) -> int:
        return int(self.instances.shape[1])

    @property
    def channel_count(self) -> int:
        return int(self.instances.shape[2])

    def take(self, idx, tag=None) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        prov = self.provenance if tag is None else f"{self.provenance.split(':')[0]}:{tag}"
        return replace(
            self,
            instances=self.instances[idx],
            labels=self.labels[idx],
            subjects=None if self.subjects is None else self.subjects[idx],
            provenance=prov,
        )


def _parse_label(raw: str, labels: Sequence[str], row: int) -> int:
    raw = raw.strip()
    try:
        return labels.index(raw)
    except ValueError:
        pass
    # numeric class indices are accepted too (pre-segmented ECG exports)
    try:
        v = float(raw)
    except ValueError:
        raise UnknownLabel(f"row {row}: label {raw!r} not in class_labels") from None
    if v.is_integer() and 0 <= int(v) < len(labels):
        return int(v)
    raise UnknownLabel(f"row {row}: label {raw!r} not in class_labels")


def _parse_float(raw: str, row: int, col: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise NonNumericValue(row, col, raw) from None
    if not math.isfinite(v):
        raise NonNumericValue(row, col, raw)
    return v


def _read_rows(path):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        rows = [r for r in reader if r]
    if not rows:
        raise EmptyFile(f"{path}: header only, no data rows")
    return header, rows


def ingest_csv(path, manifest: DatasetManifest) -> TimeSeriesRecording:
    """Parse a raw per-sample CSV into a recording.

    Columns: optional ``subject``, one column per manifest channel, and
    ``label``. Extra columns are ignored.
    """
    header, rows = _read_rows(path)
    cols = {name: i for i, name in enumerate(header)}
    need = list(manifest.columns) + ["label"]
    for name in need:
        if name not in cols:
            raise MissingColumn(name)
    ch_idx = [cols[c] for c in manifest.columns]
    lab_idx = cols["label"]
    subj_idx = cols.get("subject")

    data = np.empty((len(rows), manifest.channel_count), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    subjects = [] if subj_idx is not None else None
    for r, row in enumerate(rows, start=1):
        if len(row) < len(header):
            raise NonNumericValue(r, header[len(row)], None)
        for j, ci in enumerate(ch_idx):
            data[r - 1, j] = _parse_float(row[ci], r, header[ci])
        labels[r - 1] = _parse_label(row[lab_idx], manifest.class_labels, r)
        if subjects is not None:
            subjects.append(row[subj_idx].strip())

    subj_arr = None if subjects is None else np.array(subjects)
    subject_id = ""
    if subj_arr is not None and len(set(subjects)) == 1:
        subject_id = subjects[0]
    return TimeSeriesRecording(data, labels, manifest.base_frequency_hz, subject_id, subj_arr)


def recording_csv_text(rec: TimeSeriesRecording, manifest: DatasetManifest) -> str:
    """Inverse of :func:`ingest_csv` (floats written with ``repr`` precision)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(manifest.columns) + ["label"]
    if rec.subjects is not None:
        header = ["subject"] + header
    w.writerow(header)
    for i in range(rec.num_samples):
        row = [repr(float(v)) for v in rec.channels[i]]
        row.append(manifest.class_labels[int(rec.labels[i])])
        if rec.subjects is not None:
            row = [str(rec.subjects[i])] + row
        w.writerow(row)
    return buf.getvalue()


def export_csv(rec: TimeSeriesRecording, path, manifest: DatasetManifest) -> None:
    Path(path).write_text(recording_csv_text(rec, manifest), encoding="utf-8")


def ingest_window_csv(path, manifest: DatasetManifest) -> WindowedDataset:
    """Read pre-segmented windows, one instance per row.

    Every column other than ``label``/``subject`` is a sample value; there
    must be ``window_length * channel_count`` of them, time-major.
    """
    header, rows = _read_rows(path)
    if "label" not in header:
        raise MissingColumn("label")
    lab_idx = header.index("label")
    subj_idx = header.index("subject") if "subject" in header else None
    val_idx = [i for i, h in enumerate(header) if i not in (lab_idx, subj_idx)]
    L, C = manifest.window_length, manifest.channel_count
    if len(val_idx) != L * C:
        raise ValidationError(
            f"{path}: {len(val_idx)} value columns, expected {L}x{C}={L * C}")
    x = np.empty((len(rows), L * C), dtype=np.float64)
    y = np.empty(len(rows), dtype=np.int64)
    subjects = []
    for r, row in enumerate(rows, start=1):
        for j, ci in enumerate(val_idx):
            x[r - 1, j] = _parse_float(row[ci], r, header[ci])
        y[r - 1] = _parse_label(row[lab_idx], manifest.class_labels, r)
        if subj_idx is not None:
            subjects.append(row[subj_idx].strip())
    return WindowedDataset(
        x.reshape(len(rows), L, C), y, manifest.base_frequency_hz, 0, manifest.name,
        subjects=np.array(subjects) if subj_idx is not None else None)


def window_count(num_samples: int, length: int, stride: int) -> int:
    if num_samples < length:
        return 0
    return (num_samples - length) // stride + 1


def extract_windows(rec: TimeSeriesRecording, manifest: DatasetManifest) -> WindowedDataset:
    """Slide a fixed window over each subject's samples.

    A window takes the majority per-sample label; windows whose majority
    covers less than half of the samples are dropped.
    """
    if not math.isclose(rec.frequency_hz, manifest.base_frequency_hz):
        raise ValidationError(
            f"recording at {rec.frequency_hz} Hz, manifest expects {manifest.base_frequency_hz} Hz")
    L, stride, C = manifest.window_length, manifest.stride, manifest.channel_count
    xs, ys, subj = [], [], []
    for part in rec.by_subject():
        n = window_count(part.num_samples, L, stride)
        if n == 0:
            warnings.warn(
                f"subject {part.subject_id!r}: {part.num_samples} samples < window {L}",
                RecordingShorterThanWindow, stacklevel=2)
            continue
        for k in range(n):
            a = k * stride
            lab = part.labels[a:a + L]
            counts = np.bincount(lab, minlength=manifest.class_count)
            top = int(np.argmax(counts))
            if 2 * counts[top] < L:
                continue
            xs.append(part.channels[a:a + L])
            ys.append(top)
            subj.append(part.subject_id)
    x = np.stack(xs) if xs else np.zeros((0, L, C))
    return WindowedDataset(
        x, np.array(ys, dtype=np.int64), manifest.base_frequency_hz, 0, manifest.name,
        subjects=np.array(subj) if rec.subjects is not None or rec.subject_id else None)


def reduced_length(length: int, reduction_percent: int) -> int:
    if reduction_percent not in ALLOWED_REDUCTIONS:
        raise InvalidReduction(f"reduction must be one of {ALLOWED_REDUCTIONS}, got {reduction_percent}")
    return length * (100 - reduction_percent) // 100


def resample_linear(x: np.ndarray, new_length: int) -> np.ndarray:
    """Linear interpolation of axis 1 onto ``new_length`` evenly spaced points over [0, L-1]."""
    L = x.shape[1]
    pos = np.linspace(0.0, L - 1, new_length)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, L - 1)
    frac = (pos - lo)[None, :, None]
    xd = x.astype(np.float64)
    # a + f*(b - a) keeps constants exact and never leaves [min(a,b), max(a,b)]
    return xd[:, lo, :] + frac * (xd[:, hi, :] - xd[:, lo, :])


def reduce_rate(ds: WindowedDataset, reduction_percent: int) -> WindowedDataset:
    if ds.reduction_percent != 0:
        raise InvalidReduction("reduce_rate expects an unreduced (0%) dataset")
    new_len = reduced_length(ds.window_length, reduction_percent)
    if reduction_percent == 0:
        return replace(ds, instances=ds.instances.copy())
    if new_len < 1:
        raise InvalidReduction(f"window of {ds.window_length} cannot shrink by {reduction_percent}%")
    freq = ds.effective_frequency_hz * (100 - reduction_percent) / 100
    return replace(ds, instances=resample_linear(ds.instances, new_len).astype(np.float32),
                   effective_frequency_hz=freq, reduction_percent=reduction_percent)


def standardize(ds: WindowedDataset, mean: np.ndarray, std: np.ndarray) -> WindowedDataset:
    x = (ds.instances.astype(np.float64) - mean) / std
    return replace(ds, instances=x.astype(np.float32), norm_mean=mean, norm_std=std)


def channel_stats(ds: WindowedDataset):
    x = ds.instances.astype(np.float64).reshape(-1, ds.channel_count)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def split(ds: WindowedDataset, manifest: DatasetManifest):
    """Partition into standardized (train, test) per the manifest's policy."""
    if len(ds) == 0:
        raise ValidationError("cannot split an empty dataset")
    pol = manifest.split_policy
    rng = np.random.default_rng(pol.seed)
    n = len(ds)
    if pol.kind == "random_fraction":
        n_test = round_half_up(pol.test_fraction * n)
        n_test = min(max(n_test, 1), n - 1) if n > 1 else 0
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
    else:
        if ds.subjects is None:
            raise SingleSubjectWithBySubjectPolicy("dataset carries no subject tags")
        uniq = sorted(set(ds.subjects.tolist()))
        if len(uniq) < 2:
            raise SingleSubjectWithBySubjectPolicy(
                f"by_subject split needs >= 2 subjects, found {len(uniq)}")
        k = min(max(round_half_up(pol.test_fraction * len(uniq)), 1), len(uniq) - 1)
        order = rng.permutation(len(uniq))
        test_subj = {uniq[i] for i in order[:k]}
        mask = np.array([s in test_subj for s in ds.subjects])
        test_idx = np.flatnonzero(mask)
        train_idx = np.flatnonzero(~mask)
    train = ds.take(train_idx, "train")
    test = ds.take(test_idx, "test")
    mean, std = channel_stats(train)
    return standardize(train, mean, std), standardize(test, mean, std)


# -- window cache -----------------------------------------------------------

_TSWD_HEADER = struct.Struct("<4sHIIHH")


def write_window_cache(ds: WindowedDataset, path) -> None:
    data = tswd_bytes(ds)
    Path(path).write_bytes(data)


def tswd_bytes(ds: WindowedDataset) -> bytes:
    head = _TSWD_HEADER.pack(b"TSWD", 1, len(ds), ds.window_length, ds.channel_count,
                             ds.reduction_percent)
    body = np.ascontiguousarray(ds.instances, dtype="<f4").tobytes()
    labs = np.ascontiguousarray(ds.labels, dtype="<u2").tobytes()
    return head + body + labs


def read_window_cache(path, frequency_hz: float = float("nan"), provenance: str = "") -> WindowedDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _TSWD_HEADER.size:
        raise FormatError(f"{path}: truncated window cache")
    magic, ver, n, L, C, red = _TSWD_HEADER.unpack_from(raw, 0)
    if magic != b"TSWD" or ver != 1:
        raise FormatError(f"{path}: not a version-1 window cache")
    off = _TSWD_HEADER.size
    nvals = n * L * C
    if len(raw) != off + 4 * nvals + 2 * n:
        raise FormatError(f"{path}: payload size mismatch")
    x = np.frombuffer(raw, dtype="<f4", count=nvals, offset=off).reshape(n, L, C)
    y = np.frombuffer(raw, dtype="<u2", count=n, offset=off + 4 * nvals)
    return WindowedDataset(x.astype(np.float32), y.astype(np.int64), frequency_hz, red, provenance)
