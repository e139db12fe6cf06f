"""Attention routing between memory rows and input feature rows.

``route(z, x)`` computes ``softmax(q(z) k(x)^T / sqrt(d_attn)) v(x)``: each
memory row (factor) distributes one unit of attention over the feature
rows. All maps act row-wise, so permuting memory rows permutes the output
rows, and permuting feature rows leaves the output unchanged.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .module import Linear, Module


class RouterMaps(Module):
    """Query/key maps plus one value map per routed stream."""

    def __init__(self, d: int, rng: np.random.Generator, d_attn: int | None = None, n_values: int = 1):
        if n_values < 1:
            raise ConfigError("a router needs at least one value map")
        self.d = d
        self.d_attn = d if d_attn is None else d_attn
        if self.d_attn < 1:
            raise ConfigError(f"d_attn must be >= 1, got {self.d_attn}")
        self.query = Linear(d, self.d_attn, rng)
        self.key = Linear(d, self.d_attn, rng)
        self.values = [Linear(d, d, rng) for _ in range(n_values)]
        # debug hook: mixes neighbouring feature rows inside the value maps,
        # which breaks the row-wise contract (negative control for verify)
        self.fault_cross_row = False

    def value(self, x: Tensor, i: int = 0) -> Tensor:
        v = self.values[i](x)
        if self.fault_cross_row and x.shape[-2] > 1:
            rolled = ad.take(v, np.roll(np.arange(x.shape[-2]), 1), axis=-2)
            v = v + 0.5 * rolled * rolled
        return v


def attention_weights(z: Tensor, x: Tensor, maps: RouterMaps) -> Tensor:
    """Routing weights of shape (..., k, m); each row sums to one."""
    z, x = ad.as_tensor(z), ad.as_tensor(x)
    if x.ndim < 2 or x.shape[-2] == 0:
        raise DimensionError(f"route: no feature rows to attend to (x shape {x.shape})")
    if z.ndim < 2 or z.shape[-2] == 0:
        raise DimensionError(f"route: memory must have at least one row (z shape {z.shape})")
    if z.shape[-1] != maps.d or x.shape[-1] != maps.d:
        raise DimensionError(f"route: widths {z.shape[-1]}/{x.shape[-1]} do not match router width {maps.d}")
    q = maps.query(z)
    k = maps.key(x)
    scores = q @ ad.swapaxes(k, -1, -2)
    return ad.softmax(scores * (1.0 / math.sqrt(maps.d_attn)), axis=-1)


def route(z: Tensor, x: Tensor, maps: RouterMaps) -> Tensor:
    """Route feature rows ``x`` (..., m, d) into memory rows ``z`` (..., k, d)."""
    w = attention_weights(z, x, maps)
    return w @ maps.value(x, 0)


def route_multistream(z: Tensor, key_src: Tensor, values: Sequence[Tensor], maps: RouterMaps) -> list[Tensor]:
    """Route several value streams with one shared set of attention weights."""
    if len(values) == 0:
        raise ConfigError("route_multistream needs at least one value stream")
    if len(values) != len(maps.values):
        raise ConfigError(f"{len(values)} value streams but the router has {len(maps.values)} value maps")
    w = attention_weights(z, key_src, maps)
    return [w @ maps.value(v, i) for i, v in enumerate(values)]
