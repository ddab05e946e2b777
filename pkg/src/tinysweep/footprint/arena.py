"""Activation-arena planning for a sequential int8 graph.

Every op reads its input buffer and writes its output buffer at one
execution step; a separable conv also holds its depthwise intermediate at
that step, so input, intermediate, and output are live together. A buffer
lives from the step that produces it through its last consumer.

Placement is first-fit: each buffer goes to the lowest offset free of every
already-placed buffer whose lifetime overlaps. Buffers are visited step by
step, heaviest live set first, in execution order within a step. Plain
size-descending order is worse on these chains: it strands the buffer
shared by two heavy steps in the middle of the arena.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.model import ModelSpec, propagate_shapes


@dataclass
class Buffer:
    name: str
    size: int  # bytes
    first: int  # first live step (inclusive)
    last: int  # last live step (inclusive)
    offset: int = -1

    def overlaps_in_time(self, other: "Buffer") -> bool:
        return self.first <= other.last and other.first <= self.last

    @property
    def end(self) -> int:
        return self.offset + self.size


@dataclass
class ArenaPlan:
    buffers: list
    peak_bytes: int

    def conflicts(self) -> list:
        """Pairs of time-overlapping buffers whose byte ranges also overlap."""
        bad = []
        for i, a in enumerate(self.buffers):
            for b in self.buffers[i + 1:]:
                if a.overlaps_in_time(b) and a.offset < b.end and b.offset < a.end:
                    bad.append((a.name, b.name))
        return bad

    def live_lower_bound(self) -> int:
        """Largest total of simultaneously live bytes: no plan can beat it."""
        steps = range(min(b.first for b in self.buffers), max(b.last for b in self.buffers) + 1)
        return max(sum(b.size for b in self.buffers if b.first <= s <= b.last) for s in steps)


def graph_buffers(input_shape, layers, bytes_per_element: int = 1) -> list:
    """Lifetimes of all activation buffers, in execution order."""
    shapes = propagate_shapes(input_shape, layers)
    cur = Buffer("input", int(np.prod(input_shape)) * bytes_per_element, 0, 0)
    bufs = [cur]
    step = 0
    in_shape = tuple(input_shape)
    for i, (l, out) in enumerate(zip(layers, shapes)):
        if l.kind == "dropout":
            continue
        cur.last = step
        if l.kind == "sepconv":
            bufs.append(Buffer(f"{i}.dw", int(np.prod(in_shape)) * bytes_per_element, step, step))
        cur = Buffer(f"{i}.out", int(np.prod(out)) * bytes_per_element, step, step)
        bufs.append(cur)
        in_shape = out
        step += 1
    return bufs


def placement_order(bufs) -> list:
    steps = sorted({s for b in bufs for s in range(b.first, b.last + 1)})
    live = {s: [i for i, b in enumerate(bufs) if b.first <= s <= b.last] for s in steps}
    weight = {s: sum(bufs[i].size for i in live[s]) for s in steps}
    order, seen = [], set()
    for s in sorted(steps, key=lambda s: (-weight[s], s)):
        for i in live[s]:
            if i not in seen:
                seen.add(i)
                order.append(i)
    return order


def plan_first_fit(buffers) -> ArenaPlan:
    bufs = [Buffer(b.name, b.size, b.first, b.last) for b in buffers]
    placed = []
    for i in placement_order(bufs):
        b = bufs[i]
        busy = sorted((p.offset, p.end) for p in placed if p.overlaps_in_time(b))
        off = 0
        for lo, hi in busy:
            if off + b.size <= lo:
                break
            off = max(off, hi)
        b.offset = off
        placed.append(b)
    peak = max((b.end for b in bufs), default=0)
    return ArenaPlan(bufs, peak)


def estimate_arena(spec: ModelSpec):
    """Return ``(peak_bytes, plan)`` for int8 activations of ``spec``."""
    plan = plan_first_fit(graph_buffers(spec.input_shape, spec.layers))
    return plan.peak_bytes, plan
