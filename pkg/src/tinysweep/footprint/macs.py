"""Multiply counts per layer (bias adds and pooling comparisons excluded)."""
from ..nn.model import ModelSpec, propagate_shapes


def layer_macs(input_shape, layers) -> list:
    """MACs of every layer in the chain (zero for pooling/GAP/dropout)."""
    out = []
    shape = tuple(input_shape)
    for l, nxt in zip(layers, propagate_shapes(input_shape, layers)):
        if l.kind == "sepconv":
            L, C = shape
            out.append(L * C * l.kernel_size + L * C * l.units)
        elif l.kind == "dense":
            out.append(shape[0] * l.units)
        else:
            out.append(0)
        shape = nxt
    return out


def count_macs(spec: ModelSpec):
    """Return ``(total, per_layer)`` where per_layer lists compute layers only."""
    per = [m for m, l in zip(layer_macs(spec.input_shape, spec.layers), spec.layers)
           if l.kind in ("sepconv", "dense")]
    return sum(per), per


def deployed_layer_count(spec: ModelSpec) -> int:
    """Ops left after conversion (dropout is removed at inference)."""
    return sum(1 for l in spec.layers if l.kind != "dropout")
