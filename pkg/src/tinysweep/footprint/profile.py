"""Assemble FLASH / RAM / MACs / latency / energy into one report."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

from ..nn.model import ModelSpec, is_bias
from .arena import estimate_arena
from .device import DeviceProfile, estimate_energy, estimate_latency
from .macs import count_macs, deployed_layer_count

CSV_HEADER = ("reduction_pct", "freq_hz", "input_len", "channels", "accuracy", "flash_kb",
              "ram_kb", "macs_k", "latency_ms", "energy_uj")


@dataclass
class FootprintReport:
    macs_total: int
    macs_per_layer: list
    flash_bytes: int
    ram_bytes: int
    latency_ms: float
    energy_uj: float
    accuracy: Optional[float] = None
    input_len: int = 0
    channels: int = 0
    arena_bytes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self, reduction_pct, freq_hz) -> list:
        return [
            str(int(reduction_pct)), format_freq(freq_hz), str(self.input_len), str(self.channels),
            "" if self.accuracy is None else round_half_up(self.accuracy, 4),
            round_half_up(self.flash_bytes / 1024, 1),
            round_half_up(self.ram_bytes / 1024, 1),
            round_half_up(self.macs_total / 1000, 1),
            round_half_up(self.latency_ms, 1),
            round_half_up(self.energy_uj, 1),
        ]


def round_half_up(x: float, places: int) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_freq(f: float) -> str:
    return f"{float(f):.6g}"


def flash_parameter_bytes(spec: ModelSpec) -> int:
    """int8 kernels + int32 biases, from the parameter layout alone."""
    total = 0
    for name, shape in spec.param_shapes().items():
        n = 1
        for s in shape:
            n *= s
        total += 4 * n if is_bias(name) else n
    return total


def estimate_flash(cm, dp: DeviceProfile) -> int:
    """Compressed parameter bytes plus per-layer and fixed overheads."""
    if cm is None:
        raise ValueError("compressed model required")
    layers = deployed_layer_count(cm.spec) if cm.spec.layers else 0
    return cm.parameter_bytes() + dp.flash_overhead_bytes_per_layer * layers + dp.flash_fixed_bytes


def estimate_ram(spec: ModelSpec, dp: DeviceProfile) -> int:
    peak, _ = estimate_arena(spec)
    return peak + dp.ram_overhead_bytes


def profile(cm, dp: DeviceProfile, eval_set=None) -> FootprintReport:
    """Static footprint of a compressed model; accuracy via the int8 path when
    an evaluation set is given."""
    spec = cm.spec
    spec.shapes()
    macs, per = count_macs(spec)
    peak, _ = estimate_arena(spec)
    layers = deployed_layer_count(spec)
    lat = estimate_latency(macs, layers, dp)
    acc = None
    if eval_set is not None:
        from ..compress import quantized_accuracy
        acc = quantized_accuracy(cm, eval_set)
    L, C = spec.input_shape if len(spec.input_shape) == 2 else (spec.input_shape[0], 1)
    return FootprintReport(
        macs_total=int(macs), macs_per_layer=[int(m) for m in per],
        flash_bytes=int(estimate_flash(cm, dp)), ram_bytes=int(peak + dp.ram_overhead_bytes),
        latency_ms=float(lat), energy_uj=float(estimate_energy(lat, dp)), accuracy=acc,
        input_len=int(L), channels=int(C), arena_bytes=int(peak))


def profile_spec(spec: ModelSpec, dp: DeviceProfile) -> FootprintReport:
    """Footprint from the architecture alone (dense int8 parameters assumed)."""
    macs, per = count_macs(spec)
    peak, _ = estimate_arena(spec)
    layers = deployed_layer_count(spec)
    lat = estimate_latency(macs, layers, dp)
    flash = flash_parameter_bytes(spec) + dp.flash_overhead_bytes_per_layer * layers \
        + dp.flash_fixed_bytes
    L, C = spec.input_shape
    return FootprintReport(int(macs), per, int(flash), int(peak + dp.ram_overhead_bytes),
                           float(lat), float(estimate_energy(lat, dp)), None, L, C, int(peak))
