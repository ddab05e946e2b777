import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import closed_form_params, exhaustive_min_peak, brute_placement_min, traced_macs
from tinysweep.compress import CompressedModel
from tinysweep.errors import ConfigError
from tinysweep.footprint import (CSV_HEADER, DeviceProfile, FootprintReport, count_macs,
                                 estimate_arena, estimate_energy, estimate_flash,
                                 estimate_latency, estimate_ram, fit_cycles_per_mac,
                                 fit_default_profile, fit_power, fit_ram_overhead,
                                 flash_parameter_bytes, graph_buffers, load_profile,
                                 plan_first_fit, profile, profile_spec, save_profile)
from tinysweep.footprint.arena import Buffer
from tinysweep.footprint.macs import deployed_layer_count
from tinysweep.footprint.profile import round_half_up
from tinysweep.nn import ModelSpec
from tinysweep.nn.model import Layer
from tinysweep.reference import ANOMALOUS_ROWS, all_rows, row


def t1(L, C=1, K=5):
    return ModelSpec.sepconv_classifier(L, C, K)


# -- MACs -----------------------------------------------------------------------

def test_macs_128x9():
    total, per = count_macs(t1(128, 9, 6))
    assert total == 265584
    assert per == [40320, 104448, 115200, 5184, 432]


@pytest.mark.parametrize("L,C,K,expected", [(187, 1, 5, 329465), (96, 9, 6, 200592)])
def test_macs_examples(L, C, K, expected):
    assert count_macs(t1(L, C, K))[0] == expected


def test_macs_single_dense():
    spec = ModelSpec((4,), 3, (Layer("dense", 3, "softmax"),))
    assert count_macs(spec)[0] == 12


@given(st.integers(8, 600), st.integers(1, 12), st.integers(2, 8))
def test_macs_match_traced_oracle(L, C, K):
    total, per = count_macs(t1(L, C, K))
    assert (total, per) == traced_macs(L, C, K)


def test_macs_against_published_rows():
    for r in all_rows():
        got = count_macs(t1(r.input_len, r.channels, r.classes))[0] / 1000
        rel = abs(got - r.macs_k) / r.macs_k
        key = (r.dataset, r.reduction_pct)
        if key == ("wisdm", 75):
            assert rel <= 0.05
        elif key == ("ucihar", 75):
            assert rel > 0.3
        else:
            assert rel <= 0.005, key


def test_deployed_layers_skip_dropout():
    assert deployed_layer_count(t1(128)) == 9


# -- arena --------------------------------------------------------------------------

def test_single_maxpool_peak():
    plan = plan_first_fit(graph_buffers((100, 4), [Layer("maxpool", stride=2)]))
    assert plan.peak_bytes == 600


@pytest.mark.parametrize("L,C,K", sorted({(r.input_len, r.channels, r.classes)
                                         for r in all_rows()}))
def test_first_fit_is_optimal_on_table_instances(L, C, K):
    peak, plan = estimate_arena(t1(L, C, K))
    assert plan.conflicts() == []
    opt = exhaustive_min_peak([b.size for b in plan.buffers],
                              [(b.first, b.last) for b in plan.buffers])
    assert peak == opt == plan.live_lower_bound()


def test_exhaustive_oracle_agrees_with_grid_search():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(2, 5))
        sizes = [int(s) for s in rng.integers(1, 4, n)]
        iv = []
        for _ in range(n):
            a = int(rng.integers(0, 4))
            iv.append((a, a + int(rng.integers(0, 3))))
        assert exhaustive_min_peak(sizes, iv) == brute_placement_min(sizes, iv)


@given(st.lists(st.tuples(st.integers(1, 64), st.integers(0, 6), st.integers(0, 3)),
                min_size=1, max_size=6))
def test_first_fit_sound_on_random_lifetimes(spec):
    bufs = [Buffer(f"b{i}", s, a, a + d) for i, (s, a, d) in enumerate(spec)]
    plan = plan_first_fit(bufs)
    assert plan.conflicts() == []
    assert all(b.offset >= 0 for b in plan.buffers)
    opt = exhaustive_min_peak([b.size for b in bufs], [(b.first, b.last) for b in bufs])
    assert plan.live_lower_bound() <= opt <= plan.peak_bytes


def test_arena_monotone_in_length():
    for C, K in [(1, 5), (6, 6), (9, 6)]:
        peaks = [estimate_arena(t1(L, C, K))[0] for L in range(32, 513)]
        assert all(b >= a for a, b in zip(peaks, peaks[1:]))


# -- FLASH ------------------------------------------------------------------------------

def test_flash_parameter_partition():
    total, weights, biases = closed_form_params(9, 6)
    assert biases == 230
    assert flash_parameter_bytes(t1(128, 9, 6)) == weights + 4 * biases


def _dense_cm(spec):
    """A CompressedModel with zero tensors in the right shapes (no training needed)."""
    from tinysweep.compress import QuantParams
    tensors = {}
    for k, s in spec.param_shapes().items():
        dt = np.int32 if k.endswith(".bias") else np.int8
        tensors[k] = (np.zeros(s, dt), QuantParams(np.ones(1), np.zeros(1)))
    return CompressedModel(spec, tensors, {})


def test_flash_independent_of_length():
    dp = DeviceProfile()
    for C, K in [(9, 6), (6, 6), (1, 5), (1, 2)]:
        vals = {estimate_flash(_dense_cm(t1(L, C, K)), dp) for L in range(32, 513)}
        assert len(vals) == 1


def test_flash_zero_layer_model():
    dp = DeviceProfile(flash_fixed_bytes=1234, flash_overhead_bytes_per_layer=50)
    cm = CompressedModel(ModelSpec((4,), 0, ()), {}, {})
    assert estimate_flash(cm, dp) == 1234


# -- device model ----------------------------------------------------------------------

def test_default_profile_refits():
    fitted = fit_default_profile()
    dp = DeviceProfile()
    assert math.isclose(fitted.cycles_per_mac, dp.cycles_per_mac, rel_tol=1e-4)
    assert math.isclose(fitted.active_power_mw, dp.active_power_mw, rel_tol=1e-4)
    assert fitted.ram_overhead_bytes == dp.ram_overhead_bytes
    assert fitted.flash_fixed_bytes == dp.flash_fixed_bytes


def test_latency_fit_on_wisdm():
    w = row("wisdm", 0)
    cpm = fit_cycles_per_mac(count_macs(t1(200, 6, 6))[0], w.latency_ms)
    assert 7.4 < cpm < 7.6
    dp = DeviceProfile(cycles_per_mac=cpm)
    for ds, target in [("pamap2", 94.5), ("mhealth", 46.8)]:
        r = row(ds, 0)
        got = estimate_latency(count_macs(t1(r.input_len, r.channels, r.classes))[0], 9, dp)
        assert abs(got - target) / target <= 0.15


def test_latency_zero():
    assert estimate_latency(0, 0, DeviceProfile()) == 0.0


def test_energy_fit_on_mitbih():
    m = row("mitbih", 0)
    dp = DeviceProfile(active_power_mw=fit_power(m.latency_ms, m.energy_uj))
    assert math.isclose(dp.active_power_mw, 6.68, abs_tol=0.005)
    assert math.isclose(estimate_energy(m.latency_ms, dp), 219.1, rel_tol=1e-12)
    assert estimate_energy(0.0, dp) == 0.0
    lat = [estimate_latency(count_macs(t1(L))[0], 9, DeviceProfile())
           for L in (187, 140, 93, 46)]
    e = [estimate_energy(x, dp) for x in lat]
    assert all(b < a for a, b in zip(e, e[1:]))


def test_ram_two_point_calibration():
    m = [row("mitbih", r) for r in (0, 25, 50, 75)]
    peaks = [estimate_arena(t1(r.input_len))[0] for r in m]
    over = fit_ram_overhead([peaks[0], peaks[3]], [m[0].ram_kb * 1024, m[3].ram_kb * 1024])
    dp = DeviceProfile(ram_overhead_bytes=over)
    for r in m[1:3]:
        got = estimate_ram(t1(r.input_len), dp) / 1024
        assert abs(got - r.ram_kb) / r.ram_kb <= 0.15


def test_ram_without_overhead_is_arena_peak():
    spec = t1(187)
    assert estimate_ram(spec, DeviceProfile(ram_overhead_bytes=0)) == estimate_arena(spec)[0]


def test_profile_file_round_trip(tmp_path):
    dp = DeviceProfile(name="x", clock_hz=48e6)
    p = tmp_path / "dp.json"
    save_profile(dp, p)
    assert load_profile(p) == dp
    assert set(json.loads(p.read_text())) == {
        "name", "clock_hz", "cycles_per_mac", "cycles_overhead_per_layer", "active_power_mw",
        "ram_overhead_bytes", "flash_overhead_bytes_per_layer", "flash_fixed_bytes"}
    p.write_text(json.dumps({"clock": 1}))
    with pytest.raises(ConfigError):
        load_profile(p)
    with pytest.raises(ConfigError):
        DeviceProfile(clock_hz=0)


# -- report -----------------------------------------------------------------------------

def test_profile_report_187x1():
    rep = profile_spec(t1(187), DeviceProfile())
    assert rep.macs_total == 329465
    assert min(rep.macs_total, rep.flash_bytes, rep.ram_bytes, rep.latency_ms,
               rep.energy_uj) >= 0
    assert profile_spec(t1(187), DeviceProfile()) == rep


def test_profile_compressed_matches_spec_only():
    spec = t1(96, 9, 6)
    a = profile(_dense_cm(spec), DeviceProfile())
    b = profile_spec(spec, DeviceProfile())
    assert (a.macs_total, a.flash_bytes, a.ram_bytes) == (b.macs_total, b.flash_bytes, b.ram_bytes)
    assert a.accuracy is None


@given(st.integers(8, 512), st.integers(8, 512))
def test_resource_monotone_in_length(a, b):
    lo, hi = sorted((a, b))
    ra, rb = profile_spec(t1(lo, 6, 6), DeviceProfile()), profile_spec(t1(hi, 6, 6), DeviceProfile())
    assert ra.macs_total <= rb.macs_total
    assert ra.ram_bytes <= rb.ram_bytes
    assert ra.latency_ms <= rb.latency_ms
    assert ra.energy_uj <= rb.energy_uj
    assert ra.flash_bytes == rb.flash_bytes


def test_csv_row_formatting():
    rep = FootprintReport(265584, [], 29083, 13926, 25.04999, 139.45, 0.92805, 128, 9)
    assert CSV_HEADER[0] == "reduction_pct" and len(CSV_HEADER) == 10
    assert rep.csv_row(25, 37.5) == ["25", "37.5", "128", "9", "0.9281", "28.4", "13.6",
                                     "265.6", "25.0", "139.5"]
    assert round_half_up(0.25, 1) == "0.3"
    assert round_half_up(2.675, 2) == "2.68"
