"""Calibratable MCU cost model and its fitting helpers."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..errors import ConfigError


@dataclass(frozen=True)
class DeviceProfile:
    """Constants mapping static counts to time, energy, and memory.

    Defaults are fitted to the published EFR32xG24 numbers: cycles per MAC
    from WISDM 0%, active power and RAM overhead from MIT-BIH, fixed FLASH
    from the mean residual over all 24 rows (see ``fit_default_profile``).
    """

    name: str = "efr32xg24"
    clock_hz: float = 78e6
    cycles_per_mac: float = 7.5043
    cycles_overhead_per_layer: float = 0.0
    active_power_mw: float = 6.67988
    ram_overhead_bytes: int = 5833
    flash_overhead_bytes_per_layer: int = 0
    flash_fixed_bytes: int = 16794

    def __post_init__(self):
        for f in ("clock_hz", "cycles_per_mac", "active_power_mw"):
            if not getattr(self, f) > 0:
                raise ConfigError(f"device profile: {f} must be > 0")
        for f in ("cycles_overhead_per_layer", "ram_overhead_bytes",
                  "flash_overhead_bytes_per_layer", "flash_fixed_bytes"):
            if getattr(self, f) < 0:
                raise ConfigError(f"device profile: {f} must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"device profile: unknown keys {sorted(extra)}")
        return cls(**d)


def load_profile(path) -> DeviceProfile:
    try:
        return DeviceProfile.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e})") from None


def save_profile(dp: DeviceProfile, path) -> None:
    Path(path).write_text(json.dumps(dp.to_dict(), indent=2, sort_keys=True) + "\n")


def estimate_latency(macs_total, layer_count, dp: DeviceProfile) -> float:
    """Milliseconds."""
    cycles = macs_total * dp.cycles_per_mac + layer_count * dp.cycles_overhead_per_layer
    return cycles / dp.clock_hz * 1000.0


def estimate_energy(latency_ms, dp: DeviceProfile) -> float:
    """Microjoules (mW x ms)."""
    return dp.active_power_mw * latency_ms


# -- fitting -------------------------------------------------------------------

def fit_cycles_per_mac(macs_total, latency_ms, clock_hz=78e6, layer_count=0,
                       cycles_overhead_per_layer=0.0) -> float:
    cycles = latency_ms / 1000.0 * clock_hz - layer_count * cycles_overhead_per_layer
    return cycles / macs_total


def fit_power(latency_ms, energy_uj) -> float:
    return energy_uj / latency_ms


def fit_ram_overhead(arena_peaks, ram_bytes) -> int:
    """Least-squares constant offset: mean of (measured - arena peak)."""
    res = [r - p for p, r in zip(arena_peaks, ram_bytes)]
    return max(0, round(sum(res) / len(res)))


def fit_flash_fixed(param_bytes, flash_bytes, layer_count=0, per_layer=0) -> int:
    res = [f - p - layer_count * per_layer for p, f in zip(param_bytes, flash_bytes)]
    return max(0, round(sum(res) / len(res)))


def fit_default_profile(base: DeviceProfile = None) -> DeviceProfile:
    """Re-derive the default constants from the published table rows."""
    from ..nn.model import ModelSpec
    from ..reference import all_rows, row
    from .arena import estimate_arena
    from .macs import count_macs
    from .profile import flash_parameter_bytes

    base = base or DeviceProfile()
    w = row("wisdm", 0)
    macs, _ = count_macs(ModelSpec.sepconv_classifier(w.input_len, w.channels, w.classes))
    cpm = fit_cycles_per_mac(macs, w.latency_ms, base.clock_hz)

    m0, m3 = row("mitbih", 0), row("mitbih", 75)
    peaks = [estimate_arena(ModelSpec.sepconv_classifier(r.input_len, r.channels, r.classes))[0]
             for r in (m0, m3)]
    ram_over = fit_ram_overhead(peaks, [m0.ram_kb * 1024, m3.ram_kb * 1024])
    power = fit_power(m0.latency_ms, m0.energy_uj)

    pbytes, fbytes = [], []
    for r in all_rows():
        spec = ModelSpec.sepconv_classifier(r.input_len, r.channels, r.classes)
        pbytes.append(flash_parameter_bytes(spec))
        fbytes.append(r.flash_kb * 1024)
    flash_fixed = fit_flash_fixed(pbytes, fbytes)
    return replace(base, cycles_per_mac=cpm, active_power_mw=power,
                   ram_overhead_bytes=ram_over, flash_fixed_bytes=flash_fixed)
