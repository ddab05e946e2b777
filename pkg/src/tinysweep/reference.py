"""Published per-variant footprints for the six benchmarks.

Values as reported for the int8 separable-conv classifier profiled on an EFR32xG24
(Cortex-M33, 78 MHz). ``freq_hz`` is the display value as printed (floored,
with one known typo: MHEALTH 25% prints 35 Hz for 37.5 Hz).
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class ReportedRow:
    dataset: str
    reduction_pct: int
    freq_hz: float
    input_len: int
    channels: int
    classes: int
    accuracy: float
    flash_kb: float
    ram_kb: float
    macs_k: float
    latency_ms: float
    energy_uj: float


def _rows(dataset, channels, classes, body):
    return [ReportedRow(dataset, r, f, L, channels, classes, *rest) for r, f, L, *rest in body]


REPORTED = {
    "ucihar": _rows("ucihar", 9, 6, [
        (0, 50, 128, 0.928, 28.4, 13.6, 265.6, 25.0, 139.5),
        (25, 37, 96, 0.927, 28.5, 11.6, 200.6, 18.9, 129.4),
        (50, 25, 64, 0.929, 28.6, 9.5, 135.6, 13.2, 120.7),
        (75, 12, 32, 0.904, 28.6, 6.25, 118.83, 7.69, 40.88),
    ]),
    "wisdm": _rows("wisdm", 6, 6, [
        (0, 20, 200, 0.968, 27.3, 18.1, 390.8, 37.6, 295.8),
        (25, 15, 150, 0.949, 27.6, 14.9, 292.7, 28.4, 162.2),
        (50, 10, 100, 0.925, 27.5, 11.7, 198.2, 19.6, 132.5),
        (75, 5, 50, 0.895, 27.5, 6.46, 104.21, 10.5, 51.75),
    ]),
    "pamap2": _rows("pamap2", 6, 6, [
        (0, 100, 512, 0.98, 28.5, 38.1, 991.7, 94.5, 1000.0),
        (25, 75, 384, 0.972, 28.5, 29.9, 745.2, 70.2, 675.2),
        (50, 50, 256, 0.962, 28.5, 21.7, 498.7, 48.5, 467.2),
        (75, 25, 128, 0.947, 28.5, 13.5, 252.1, 25.0, 150.5),
    ]),
    "mhealth": _rows("mhealth", 6, 5, [
        (0, 50, 250, 0.956, 28.2, 21.3, 485.2, 46.8, 454.9),
        (25, 35, 187, 0.92, 28.2, 17.3, 362.2, 34.1, 228.1),
        (50, 25, 125, 0.9051, 28.3, 13.4, 244.6, 24.7, 152.1),
        (75, 12, 62, 0.898, 28.4, 9.3, 123.2, 12.6, 124.3),
    ]),
    "mitbih": _rows("mitbih", 1, 5, [
        (0, 125, 187, 0.981, 27.1, 17.2, 329.5, 32.8, 219.1),
        (25, 93.75, 140, 0.981, 27.1, 14.3, 250.7, 26.1, 147.6),
        (50, 62.5, 93, 0.98, 27.1, 11.2, 166.7, 17.9, 131.2),
        (75, 31.25, 46, 0.98, 27.1, 6.88, 84.35, 8.63, 65.03),
    ]),
    "ptb": _rows("ptb", 1, 2, [
        (0, 125, 187, 0.976, 27.9, 17.3, 329.5, 32.8, 219.1),
        (25, 93.75, 140, 0.977, 28.0, 14.3, 250.7, 26.1, 147.6),
        (50, 62.5, 93, 0.971, 28.1, 11.3, 166.7, 17.9, 131.2),
        (75, 31.25, 46, 0.98, 28.1, 6.88, 84.35, 8.63, 65.03),
    ]),
}

# Percent reductions at the chosen operating point per dataset:
# (RRR, MR, LR, ERR, AR, DR)
REPORTED_SUMMARY = {
    "ucihar": (30, 40, 48, 71, 0, 50),
    "wisdm": (34, 49, 49, 55, 4, 50),
    "pamap2": (45, 45, 49, 53, 2, 50),
    "mhealth": (20, 25, 27, 50, 3, 25),
    "mitbih": (60, 75, 74, 70, 0, 75),
    "ptb": (60, 75, 74, 70, 0, 75),
}

# Rows whose MACs/latency disagree with layer arithmetic.
ANOMALOUS_ROWS = {("ucihar", 75), ("wisdm", 75)}


def all_rows():
    return [r for rows in REPORTED.values() for r in rows]


def row(dataset, reduction_pct) -> ReportedRow:
    for r in REPORTED[dataset]:
        if r.reduction_pct == reduction_pct:
            return r
    raise KeyError((dataset, reduction_pct))
