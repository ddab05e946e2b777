"""Magnitude pruning, post-training int8 quantization, integer inference.

Weights are symmetric per-output-channel int8 (zero point 0, range
[-127, 127]); activations are asymmetric per-tensor int8; biases are int32
at ``input_scale * weight_scale``. Requantization uses a Q31 fixed-point
multiplier and a rounding right shift, all in 64-bit integer arithmetic.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (AccumulatorOverflow, EmptyCalibrationSet, FormatError, InvalidFraction,
                     ShapeMismatch)
from .nn import layers as F
from .nn.model import ModelSpec, TrainedModel, is_bias, parse_meta

SCALE_FLOOR = 1e-8
INT32_MIN, INT32_MAX = -(2 ** 31), 2 ** 31 - 1


@dataclass(frozen=True)
class QuantParams:
    scale: np.ndarray  # float32, shape (1,) or (channels,)
    zero_point: np.ndarray  # int32, same shape
    granularity: str = "per_tensor"
    axis: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=np.float32)))
        object.__setattr__(self, "zero_point",
                           np.atleast_1d(np.asarray(self.zero_point, dtype=np.int32)))
        if np.any(self.scale <= 0):
            raise ValueError("scale must be positive")
        if self.granularity == "per_channel" and self.axis is None:
            raise ValueError("per_channel params need an axis")

    def _bcast(self, arr, ndim):
        if self.granularity == "per_tensor":
            return arr[0]
        shape = [1] * ndim
        shape[self.axis] = -1
        return arr.reshape(shape)

    def quantize(self, x, qmin=-128, qmax=127):
        x = np.asarray(x, dtype=np.float64)
        s = self._bcast(self.scale.astype(np.float64), x.ndim)
        z = self._bcast(self.zero_point.astype(np.int64), x.ndim)
        q = np.round(x / s) + z
        return np.clip(q, qmin, qmax).astype(np.int64)

    def dequantize(self, q):
        q = np.asarray(q, dtype=np.int64)
        s = self._bcast(self.scale.astype(np.float64), q.ndim)
        z = self._bcast(self.zero_point.astype(np.int64), q.ndim)
        return (q - z) * s

    def equals(self, other) -> bool:
        return (self.granularity == other.granularity and self.axis == other.axis
                and np.array_equal(self.scale, other.scale)
                and np.array_equal(self.zero_point, other.zero_point))


def symmetric_weight_params(w, axis) -> QuantParams:
    """Per-channel symmetric scale ``max|w| / 127`` along ``axis``."""
    w = np.asarray(w, dtype=np.float64)
    other = tuple(i for i in range(w.ndim) if i != axis)
    amax = np.abs(w).max(axis=other) if other else np.abs(w)
    scale = np.maximum(amax / 127.0, SCALE_FLOOR)
    return QuantParams(scale, np.zeros_like(scale, dtype=np.int32), "per_channel", axis)


def asymmetric_activation_params(lo, hi) -> QuantParams:
    """Affine int8 params covering ``[min(lo,0), max(hi,0)]``."""
    lo = min(float(lo), 0.0)
    hi = max(float(hi), 0.0)
    scale = np.float32(max((hi - lo) / 255.0, SCALE_FLOOR))
    zp = int(np.clip(round(-128 - lo / float(scale)), -128, 127))
    return QuantParams(scale, zp, "per_tensor")


# -- pruning -----------------------------------------------------------------

def prunable(name: str) -> bool:
    return not is_bias(name)


def prune_magnitude(model: TrainedModel, sparsity_fraction: float) -> TrainedModel:
    """Zero the globally smallest-|w| kernel weights; biases are exempt.

    Ties resolve towards parameters declared earlier (stable sort over the
    concatenation in declaration order).
    """
    if not 0.0 <= sparsity_fraction < 1.0:
        raise InvalidFraction(f"sparsity_fraction must lie in [0, 1), got {sparsity_fraction}")
    names = [k for k in model.params if prunable(k)]
    flat = np.concatenate([model.params[k].ravel() for k in names])
    k = int(math.ceil(sparsity_fraction * flat.size - 1e-9))
    params = {n: v.copy() for n, v in model.params.items()}
    if k == 0:
        return replace(model, params=params)
    order = np.argsort(np.abs(flat), kind="stable")
    flat = flat.copy()
    flat[order[:k]] = 0.0
    off = 0
    for n in names:
        size = params[n].size
        params[n] = flat[off:off + size].reshape(params[n].shape)
        off += size
    return replace(model, params=params)


def zero_fraction(model) -> float:
    params = model.params if isinstance(model, TrainedModel) else {
        k: v for k, (v, _) in model.tensors.items()}
    ws = [v.ravel() for k, v in params.items() if prunable(k)]
    flat = np.concatenate(ws)
    return float(np.mean(flat == 0))


# -- calibration ---------------------------------------------------------------

def boundary_names(spec: ModelSpec) -> list:
    """Activation boundaries that carry their own quantization params."""
    names = ["input"]
    for i, l in enumerate(spec.layers):
        if l.kind == "sepconv":
            names += [f"{i}.dw", f"{i}.out"]
        elif l.kind == "dense":
            names.append(f"{i}.out")
    return names


def _float_trace(params, spec, x):
    """Forward pass recording every boundary tensor (logits pre-softmax)."""
    acts = {"input": x}
    h = x
    for i, l in enumerate(spec.layers):
        if l.kind == "sepconv":
            d, _ = F.depthwise_forward(h, params[f"{i}.depthwise"])
            h, _ = F.pointwise_forward(d, params[f"{i}.pointwise"], params[f"{i}.bias"],
                                       l.activation == "relu")
            acts[f"{i}.dw"] = d
            acts[f"{i}.out"] = h
        elif l.kind == "maxpool":
            h, _ = F.maxpool_forward(h, l.pool_size, l.stride)
        elif l.kind == "gap":
            h, _ = F.gap_forward(h)
        elif l.kind == "dense":
            act = "relu" if l.activation == "relu" else "none"
            h, _ = F.dense_forward(h, params[f"{i}.kernel"], params[f"{i}.bias"], act)
            acts[f"{i}.out"] = h
    return acts


def observe_ranges(model: TrainedModel, instances) -> dict:
    """Boundary -> (min, max) over all calibration instances."""
    x = np.asarray(instances, dtype=np.float64)
    if len(x) == 0:
        raise EmptyCalibrationSet("calibration set is empty")
    if x.shape[1:] != model.spec.input_shape:
        raise ShapeMismatch(f"calibration shape {x.shape[1:]} != {model.spec.input_shape}")
    params = model.params64()
    ranges = {}
    for s in range(0, len(x), 256):
        acts = _float_trace(params, model.spec, x[s:s + 256])
        for k, a in acts.items():
            lo, hi = float(a.min()), float(a.max())
            if k in ranges:
                lo, hi = min(lo, ranges[k][0]), max(hi, ranges[k][1])
            ranges[k] = (lo, hi)
    return ranges


def calibration_sample(ds, size=128, seed=7):
    """Seeded subset of ``size`` instances (all of them if fewer)."""
    n = len(ds)
    if n == 0:
        raise EmptyCalibrationSet("calibration set is empty")
    if n <= size:
        return ds.instances
    idx = np.sort(np.random.default_rng(seed).choice(n, size, replace=False))
    return ds.instances[idx]


def calibrate(model: TrainedModel, calibration_set) -> dict:
    """Per-boundary asymmetric activation params from observed min/max.

    ``calibration_set`` is a WindowedDataset or an instance array.
    """
    inst = getattr(calibration_set, "instances", calibration_set)
    ranges = observe_ranges(model, inst)
    relu_out = {f"{i}.out" for i, l in enumerate(model.spec.layers) if l.activation == "relu"}
    out = {}
    for k, (lo, hi) in ranges.items():
        if k in relu_out:
            lo = 0.0
        out[k] = asymmetric_activation_params(lo, hi)
    return out


# -- quantized model -----------------------------------------------------------

@dataclass
class CompressedModel:
    spec: ModelSpec
    tensors: dict  # name -> (int8 / int32 ndarray, QuantParams)
    activations: dict  # boundary -> QuantParams
    sparsity_fraction: float = 0.0
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None
    multipliers: dict = field(default_factory=dict, repr=False, compare=False)

    def weight_count(self) -> int:
        return int(sum(q.size for k, (q, _) in self.tensors.items() if not is_bias(k)))

    def bias_count(self) -> int:
        return int(sum(q.size for k, (q, _) in self.tensors.items() if is_bias(k)))

    def parameter_bytes(self) -> int:
        return self.weight_count() * 1 + self.bias_count() * 4

    def dequantized_params(self) -> dict:
        return {k: qp.dequantize(q) for k, (q, qp) in self.tensors.items()}


def quantize(model: TrainedModel, calib: dict, sparsity_fraction: float = None) -> CompressedModel:
    spec = model.spec
    tensors = {}
    prev = "input"
    for i, l in enumerate(spec.layers):
        if l.kind == "sepconv":
            dw = model.params[f"{i}.depthwise"]
            pw = model.params[f"{i}.pointwise"]
            qdw = symmetric_weight_params(dw, 0)
            qpw = symmetric_weight_params(pw, 1)
            tensors[f"{i}.depthwise"] = (qdw.quantize(dw, -127, 127).astype(np.int8), qdw)
            tensors[f"{i}.pointwise"] = (qpw.quantize(pw, -127, 127).astype(np.int8), qpw)
            tensors[f"{i}.bias"] = _bias(model.params[f"{i}.bias"], calib[f"{i}.dw"], qpw)
            prev = f"{i}.out"
        elif l.kind == "dense":
            w = model.params[f"{i}.kernel"]
            qw = symmetric_weight_params(w, 1)
            tensors[f"{i}.kernel"] = (qw.quantize(w, -127, 127).astype(np.int8), qw)
            tensors[f"{i}.bias"] = _bias(model.params[f"{i}.bias"], calib[prev], qw)
            prev = f"{i}.out"
    acts = {k: calib[k] for k in boundary_names(spec)}
    if sparsity_fraction is None:
        sparsity_fraction = zero_fraction(model)
    return CompressedModel(spec, tensors, acts, float(sparsity_fraction),
                           model.input_mean, model.input_std)


def _bias(b, in_qp: QuantParams, w_qp: QuantParams):
    scale = (in_qp.scale[0].astype(np.float64) * w_qp.scale.astype(np.float64)).astype(np.float32)
    qp = QuantParams(np.maximum(scale, np.float32(1e-30)), np.zeros(len(scale), np.int32),
                     "per_channel", 0)
    q = np.clip(np.round(np.asarray(b, np.float64) / qp.scale.astype(np.float64)),
                INT32_MIN, INT32_MAX).astype(np.int32)
    return q, qp


def quantize_multiplier(m: float):
    """Express ``m > 0`` as ``m0 * 2**(shift - 31)`` with ``m0`` in [2^30, 2^31)."""
    if m <= 0:
        return 0, 0
    frac, exp = math.frexp(m)
    m0 = int(round(frac * (1 << 31)))
    if m0 == 1 << 31:
        m0 //= 2
        exp += 1
    return m0, exp


def _requantize(acc, m0, shift):
    """round(acc * m0 / 2^(31 - shift)), half away from zero, vectorized."""
    acc = acc.astype(np.int64)
    m0 = np.asarray(m0, dtype=np.int64)
    rs = 31 - np.asarray(shift, dtype=np.int64)
    if np.any(rs < 1):
        raise AccumulatorOverflow("requantization multiplier >= 2^30 not supported")
    rs_c = np.minimum(rs, 62)
    prod = acc * m0
    half = np.left_shift(np.int64(1), rs_c - 1)
    mag = np.right_shift(np.abs(prod) + half, rs_c)
    out = np.where(prod < 0, -mag, mag)
    return np.where(rs > 62, 0, out)


def _multipliers(real):
    pairs = [quantize_multiplier(float(m)) for m in np.atleast_1d(real)]
    return np.array([p[0] for p in pairs], np.int64), np.array([p[1] for p in pairs], np.int64)


def _check_acc(acc, where):
    if acc.size and (acc.max() > INT32_MAX or acc.min() < INT32_MIN):
        raise AccumulatorOverflow(f"{where}: int32 accumulator overflow")


def quantized_logits(cm: CompressedModel, x) -> np.ndarray:
    """Integer-domain forward of a batch; returns dequantized logits."""
    spec = cm.spec
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != spec {spec.input_shape}")
    qp = cm.activations["input"]
    h = qp.quantize(x)
    for i, l in enumerate(spec.layers):
        if l.kind == "sepconv":
            dw, qdw = cm.tensors[f"{i}.depthwise"]
            pw, qpw = cm.tensors[f"{i}.pointwise"]
            bq, _ = cm.tensors[f"{i}.bias"]
            q_mid = cm.activations[f"{i}.dw"]
            q_out = cm.activations[f"{i}.out"]
            zin = int(qp.zero_point[0])
            K = dw.shape[1]
            left = (K - 1) // 2
            hp = np.pad(h - zin, ((0, 0), (left, K - 1 - left), (0, 0)))
            L = h.shape[1]
            acc = np.zeros(h.shape, dtype=np.int64)
            for k in range(K):
                acc += hp[:, k:k + L, :] * dw[:, k].astype(np.int64)
            _check_acc(acc, f"layer {i} depthwise")
            m0, sh = _multipliers(qp.scale[0].astype(np.float64) * qdw.scale.astype(np.float64)
                                  / np.float64(q_mid.scale[0]))
            d = np.clip(_requantize(acc, m0, sh) + int(q_mid.zero_point[0]), -128, 127)
            zmid = int(q_mid.zero_point[0])
            acc = (d - zmid) @ pw.astype(np.int64) + bq.astype(np.int64)
            _check_acc(acc, f"layer {i} pointwise")
            m0, sh = _multipliers(q_mid.scale[0].astype(np.float64) * qpw.scale.astype(np.float64)
                                  / np.float64(q_out.scale[0]))
            lo = max(int(q_out.zero_point[0]), -128) if l.activation == "relu" else -128
            h = np.clip(_requantize(acc, m0, sh) + int(q_out.zero_point[0]), lo, 127)
            qp = q_out
        elif l.kind == "maxpool":
            h, _ = F.maxpool_forward(h, l.pool_size, l.stride)
        elif l.kind == "gap":
            s = (h - int(qp.zero_point[0])).sum(axis=1)
            n = h.shape[1]
            mag = (np.abs(s) + n // 2) // n
            h = np.where(s < 0, -mag, mag) + int(qp.zero_point[0])
        elif l.kind == "dense":
            w, qw = cm.tensors[f"{i}.kernel"]
            bq, _ = cm.tensors[f"{i}.bias"]
            q_out = cm.activations[f"{i}.out"]
            acc = (h - int(qp.zero_point[0])) @ w.astype(np.int64) + bq.astype(np.int64)
            _check_acc(acc, f"layer {i} dense")
            m0, sh = _multipliers(qp.scale[0].astype(np.float64) * qw.scale.astype(np.float64)
                                  / np.float64(q_out.scale[0]))
            lo = max(int(q_out.zero_point[0]), -128) if l.activation == "relu" else -128
            h = np.clip(_requantize(acc, m0, sh) + int(q_out.zero_point[0]), lo, 127)
            qp = q_out
    return qp.dequantize(h)


def quantized_predict(cm: CompressedModel, x, batch=256) -> np.ndarray:
    x = np.asarray(x)
    if len(x) == 0:
        return np.zeros((0, cm.spec.class_count))
    return np.concatenate([F.softmax(quantized_logits(cm, x[i:i + batch]))
                           for i in range(0, len(x), batch)])


def quantized_forward(cm: CompressedModel, instance) -> np.ndarray:
    """Class probabilities for one instance via the int8 path."""
    instance = np.asarray(instance)
    if instance.shape != cm.spec.input_shape:
        raise ShapeMismatch(f"instance shape {instance.shape} != spec {cm.spec.input_shape}")
    return F.softmax(quantized_logits(cm, instance[None]))[0]


def quantized_accuracy(cm: CompressedModel, ds) -> float:
    if len(ds) == 0:
        return float("nan")
    probs = quantized_predict(cm, ds.instances)
    return float(np.mean(probs.argmax(axis=1) == ds.labels))


# -- compressed model file -----------------------------------------------------

_GRAN = {"per_tensor": 0, "per_channel": 1}
_DTYPES = {None: 0, "int8": 1, "int32": 2}


def _record(tag: str, qp: QuantParams, payload: Optional[np.ndarray]) -> bytes:
    t = tag.encode("utf-8")
    dtype = None if payload is None else str(payload.dtype)
    axis = 255 if qp.axis is None else qp.axis
    parts = [struct.pack("<H", len(t)), t,
             struct.pack("<BBBI", _GRAN[qp.granularity], _DTYPES[dtype], axis, len(qp.scale)),
             qp.scale.astype("<f4").tobytes(), qp.zero_point.astype("<i4").tobytes()]
    if payload is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", payload.ndim))
        parts.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
        parts.append(payload.astype(payload.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def compressed_bytes(cm: CompressedModel) -> bytes:
    meta = {"spec": cm.spec.to_dict(), "sparsity_fraction": cm.sparsity_fraction}
    if cm.input_mean is not None:
        meta["input_mean"] = [float(v) for v in cm.input_mean]
        meta["input_std"] = [float(v) for v in cm.input_std]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    recs = [_record(k, qp, q) for k, (q, qp) in cm.tensors.items()]
    recs += [_record("act:" + k, qp, None) for k, qp in cm.activations.items()]
    return b"".join([b"TNYQ", struct.pack("<HI", 1, len(blob)), blob,
                     struct.pack("<I", len(recs))] + recs)


def save_compressed(cm: CompressedModel, path) -> None:
    Path(path).write_bytes(compressed_bytes(cm))


def load_compressed(path) -> CompressedModel:
    raw = Path(path).read_bytes()
    meta, off = parse_meta(raw, b"TNYQ", path)
    spec = ModelSpec.from_dict(meta["spec"])
    inv_gran = {v: k for k, v in _GRAN.items()}
    inv_dtype = {v: k for k, v in _DTYPES.items()}
    try:
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        tensors, acts = {}, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, off)
            off += 2
            tag = raw[off:off + n].decode("utf-8")
            off += n
            g, dt, axis, ns = struct.unpack_from("<BBBI", raw, off)
            off += 7
            scale = np.frombuffer(raw, "<f4", ns, off).copy()
            off += 4 * ns
            zp = np.frombuffer(raw, "<i4", ns, off).copy()
            off += 4 * ns
            qp = QuantParams(scale, zp, inv_gran[g], None if axis == 255 else axis)
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            dtype = inv_dtype[dt]
            if dtype is None:
                acts[tag[4:]] = qp
                continue
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            npd = np.dtype(dtype).newbyteorder("<")
            size = int(np.prod(shape))
            q = np.frombuffer(raw, npd, size, off).reshape(shape).astype(dtype)
            off += size * npd.itemsize
            tensors[tag] = (q, qp)
    except (struct.error, ValueError, KeyError) as e:
        raise FormatError(f"{path}: corrupt record ({e})") from None
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    mean, std = meta.get("input_mean"), meta.get("input_std")
    return CompressedModel(spec, tensors, acts, meta["sparsity_fraction"],
                           None if mean is None else np.array(mean),
                           None if std is None else np.array(std))


def compress(model: TrainedModel, calibration_set, sparsity_fraction=0.0,
             calibration_size=128, seed=7) -> CompressedModel:
    """Prune, calibrate on a seeded sample, quantize."""
    pruned = prune_magnitude(model, sparsity_fraction)
    sample = calibration_sample(calibration_set, calibration_size, seed)
    return quantize(pruned, calibrate(pruned, sample), sparsity_fraction)
