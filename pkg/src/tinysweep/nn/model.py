"""Model description, parameter layout, inference and gradients."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import FormatError, InvalidSpec, ShapeMismatch
from . import layers as F


@dataclass(frozen=True)
class Layer:
    kind: str  # sepconv | maxpool | gap | dense | dropout
    units: int = 0
    activation: str = "none"
    kernel_size: int = 3
    stride: int = 1
    pool_size: int = 2
    rate: float = 0.0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


LAYER_KINDS = ("sepconv", "maxpool", "gap", "dense", "dropout")


def sepconv_classifier_layers(class_count: int) -> tuple:
    return (
        Layer("sepconv", 32, "relu"),
        Layer("maxpool", stride=2, pool_size=2),
        Layer("sepconv", 48, "relu"),
        Layer("maxpool", stride=2, pool_size=2),
        Layer("sepconv", 72, "relu"),
        Layer("maxpool", stride=2, pool_size=2),
        Layer("gap"),
        Layer("dense", 72, "relu"),
        Layer("dropout", rate=0.25),
        Layer("dense", class_count, "softmax"),
    )


def propagate_shapes(input_shape, layer_list) -> list:
    """Per-layer output shapes for an arbitrary layer chain."""
    shape = tuple(input_shape)
    if any(s < 1 for s in shape) or len(shape) not in (1, 2):
        raise InvalidSpec(f"bad input shape {shape}")
    out = []
    for i, l in enumerate(layer_list):
        if l.kind not in LAYER_KINDS:
            raise InvalidSpec(f"layer {i}: unknown kind {l.kind!r}")
        if l.kind in ("sepconv", "maxpool", "gap") and len(shape) != 2:
            raise InvalidSpec(f"layer {i}: {l.kind} needs (length, channels) input")
        if l.kind == "sepconv":
            if l.stride != 1 or l.units < 1:
                raise InvalidSpec(f"layer {i}: only stride-1 separable conv supported")
            shape = (shape[0], l.units)
        elif l.kind == "maxpool":
            n = (shape[0] - l.pool_size) // l.stride + 1 if shape[0] >= l.pool_size else 0
            if n < 1:
                raise InvalidSpec(f"layer {i}: sequence of length {shape[0]} too short to pool")
            shape = (n, shape[1])
        elif l.kind == "gap":
            shape = (shape[1],)
        elif l.kind == "dense":
            if len(shape) != 1:
                raise InvalidSpec(f"layer {i}: dense expects a feature vector")
            if l.units < 1:
                raise InvalidSpec(f"layer {i}: dense needs >= 1 unit")
            shape = (l.units,)
        out.append(shape)
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Layer graph plus input shape.

    ``input_shape`` is ``(length, channels)`` for sequence input, or
    ``(features,)`` for a vector-input model.
    """

    input_shape: tuple
    class_count: int
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(
            Layer(**l) if isinstance(l, dict) else l for l in self.layers))

    @classmethod
    def sepconv_classifier(cls, input_length: int, channels: int, class_count: int) -> "ModelSpec":
        return cls((input_length, channels), class_count, sepconv_classifier_layers(class_count))

    def shapes(self) -> list:
        """Output shape of every layer; raises InvalidSpec if the graph is ill-formed."""
        out = propagate_shapes(self.input_shape, self.layers)
        if not out or len(out[-1]) != 1 or out[-1][0] != self.class_count:
            raise InvalidSpec("final layer must emit class_count features")
        return out

    def is_valid(self) -> bool:
        try:
            self.shapes()
        except InvalidSpec:
            return False
        return True

    def param_shapes(self) -> dict:
        """Parameter name -> shape, in declaration order."""
        shapes = {}
        shape = self.input_shape
        for i, (l, out) in enumerate(zip(self.layers, self.shapes())):
            if l.kind == "sepconv":
                shapes[f"{i}.depthwise"] = (shape[1], l.kernel_size)
                shapes[f"{i}.pointwise"] = (shape[1], l.units)
                shapes[f"{i}.bias"] = (l.units,)
            elif l.kind == "dense":
                shapes[f"{i}.kernel"] = (shape[0], l.units)
                shapes[f"{i}.bias"] = (l.units,)
            shape = out
        return shapes

    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "class_count": self.class_count,
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(tuple(d["input_shape"]), int(d["class_count"]),
                   tuple(Layer(**l) for l in d["layers"]))


def is_bias(name: str) -> bool:
    return name.endswith(".bias")


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict:
    """Glorot-uniform kernels, zero biases."""
    params = {}
    for name, shape in spec.param_shapes().items():
        if is_bias(name):
            params[name] = np.zeros(shape)
            continue
        if name.endswith(".depthwise"):
            fan_in = fan_out = shape[1]
        else:
            fan_in, fan_out = shape
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-lim, lim, size=shape)
    return params


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: dict
    training_log: list = field(default_factory=list)
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None

    def __post_init__(self):
        # float32 storage keeps in-memory and on-disk models bit-identical
        self.params = {k: np.asarray(v, dtype=np.float32) for k, v in self.params.items()}
        expected = self.spec.param_shapes()
        if list(expected) != list(self.params):
            raise ShapeMismatch("parameter names do not match the spec")
        for k, s in expected.items():
            if self.params[k].shape != s:
                raise ShapeMismatch(f"{k}: shape {self.params[k].shape}, expected {s}")

    def params64(self) -> dict:
        return {k: v.astype(np.float64) for k, v in self.params.items()}


def run(params, spec, x, training=False, dropout_rng=None):
    """Batched forward pass. Returns (probs, tape) with tape for backward."""
    tape = []
    h = x
    for i, l in enumerate(spec.layers):
        if l.kind == "sepconv":
            h, c = F.sepconv_forward(h, params[f"{i}.depthwise"], params[f"{i}.pointwise"],
                                     params[f"{i}.bias"], l.activation == "relu")
        elif l.kind == "maxpool":
            h, c = F.maxpool_forward(h, l.pool_size, l.stride)
        elif l.kind == "gap":
            h, c = F.gap_forward(h)
        elif l.kind == "dense":
            h, c = F.dense_forward(h, params[f"{i}.kernel"], params[f"{i}.bias"], l.activation)
        elif l.kind == "dropout":
            if training:
                h, c = F.dropout_forward(h, l.rate, dropout_rng)
            else:
                c = None
        tape.append(c)
    if spec.layers[-1].activation != "softmax":
        h = F.softmax(h)
    return h, tape


def backward(params, spec, tape, g_logits) -> dict:
    grads = {}
    g = g_logits
    for i in range(len(spec.layers) - 1, -1, -1):
        l, c = spec.layers[i], tape[i]
        if l.kind == "sepconv":
            g, grads[f"{i}.depthwise"], grads[f"{i}.pointwise"], grads[f"{i}.bias"] = \
                F.sepconv_backward(g, c)
        elif l.kind == "maxpool":
            g = F.maxpool_backward(g, c)
        elif l.kind == "gap":
            g = F.gap_backward(g, c)
        elif l.kind == "dense":
            g, grads[f"{i}.kernel"], grads[f"{i}.bias"] = F.dense_backward(g, c)
        elif l.kind == "dropout" and c is not None:
            g = F.dropout_backward(g, c)
    return {k: grads[k] for k in params}


def _check_input(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != spec {spec.input_shape}")
    return x


def predict_proba(model: TrainedModel, x) -> np.ndarray:
    """Class probabilities for a batch ``(N, *input_shape)``."""
    x = _check_input(model.spec, x)
    probs, _ = run(model.params64(), model.spec, x)
    return probs


def forward(model: TrainedModel, instance) -> np.ndarray:
    """Class probabilities for one instance; dropout is inactive."""
    instance = np.asarray(instance)
    if instance.shape != model.spec.input_shape:
        raise ShapeMismatch(f"instance shape {instance.shape} != spec {model.spec.input_shape}")
    return predict_proba(model, instance[None])[0]


def loss_and_gradients_raw(params, spec, x, y, dropout_rng=None):
    training = dropout_rng is not None
    probs, tape = run(params, spec, x, training=training, dropout_rng=dropout_rng)
    loss, g = F.cross_entropy(probs, y)
    return loss, backward(params, spec, tape, g)


def loss_and_gradients(model: TrainedModel, batch, dropout_rng=None):
    """Mean cross-entropy of ``batch = (x, y)`` and per-parameter gradients."""
    x, y = batch
    x = _check_input(model.spec, x)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0 or len(y) != len(x):
        raise ShapeMismatch("batch must be non-empty with one label per instance")
    if y.min() < 0 or y.max() >= model.spec.class_count:
        raise ShapeMismatch("label out of range")
    return loss_and_gradients_raw(model.params64(), model.spec, x, y, dropout_rng)


# -- float model file --------------------------------------------------------

def _meta(model: TrainedModel) -> dict:
    meta = {"spec": model.spec.to_dict()}
    if model.input_mean is not None:
        meta["input_mean"] = [float(v) for v in model.input_mean]
        meta["input_std"] = [float(v) for v in model.input_std]
    return meta


def model_bytes(model: TrainedModel) -> bytes:
    blob = json.dumps(_meta(model), sort_keys=True).encode("utf-8")
    parts = [b"TNYM", struct.pack("<HI", 1, len(blob)), blob]
    for v in model.params.values():
        parts.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def parse_meta(raw: bytes, magic: bytes, path=""):
    if raw[:4] != magic:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    ver, n = struct.unpack_from("<HI", raw, 4)
    if ver != 1:
        raise FormatError(f"{path}: unsupported version {ver}")
    try:
        meta = json.loads(raw[10:10 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: corrupt header block") from None
    return meta, 10 + n


def load_model(path) -> TrainedModel:
    raw = Path(path).read_bytes()
    meta, off = parse_meta(raw, b"TNYM", path)
    spec = ModelSpec.from_dict(meta["spec"])
    params = {}
    for name, shape in spec.param_shapes().items():
        n = int(np.prod(shape))
        if off + 4 * n > len(raw):
            raise FormatError(f"{path}: truncated at {name}")
        params[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        off += 4 * n
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    mean = meta.get("input_mean")
    std = meta.get("input_std")
    return TrainedModel(spec, params, [],
                        None if mean is None else np.array(mean),
                        None if std is None else np.array(std))
