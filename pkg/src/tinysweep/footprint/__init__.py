from .arena import ArenaPlan, Buffer, estimate_arena, graph_buffers, plan_first_fit
from .device import (DeviceProfile, estimate_energy, estimate_latency, fit_cycles_per_mac,
                     fit_default_profile, fit_power, fit_ram_overhead, load_profile, save_profile)
from .macs import count_macs, deployed_layer_count, layer_macs
from .profile import (CSV_HEADER, FootprintReport, estimate_flash, estimate_ram,
                      flash_parameter_bytes, profile, profile_spec)
