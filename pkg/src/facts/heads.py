"""Set encoders, the temporal predictor and the factor-graph decoder.

Encoders lift a raw window (B, t, m) to feature sets (B, t, m, d), treating
every variate independently so the variate axis can be permuted freely.
The decoder blends per-factor predictions with a softmax over factors, which
makes it indifferent to factor order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .module import Linear, Module, uniform_init


def encode_dft(x, top_k: int) -> Tensor:
    """Spectral split of every variate into ``top_k`` trend channels and one seasonal channel.

    Trend channel ``i`` is the time-domain reconstruction of frequency bin
    ``i`` (bin 0 is the mean); the seasonal channel is what remains.
    """
    x = np.asarray(ad.as_tensor(x).data)
    t = x.shape[1]
    if t < 2:
        raise ConfigError(f"encode_dft needs at least 2 time steps, got {t}")
    if not 1 <= top_k < t / 2:
        raise ConfigError(f"top_k must satisfy 1 <= top_k < t/2 (t={t}), got {top_k}")
    spec = np.fft.rfft(x, axis=1)
    channels = []
    for i in range(top_k):
        one = np.zeros_like(spec)
        one[:, i] = spec[:, i]
        channels.append(np.fft.irfft(one, n=t, axis=1))
    trend = np.stack(channels, axis=-1)
    seasonal = x - trend.sum(axis=-1)
    return Tensor(np.concatenate([trend, seasonal[..., None]], axis=-1))


def encode_conv(x, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Causal temporal conv lifting each variate from 1 to ``d`` channels.

    ``kernel`` has shape (w, 1, d). The window is left-padded with its first
    value rather than zeros, so a constant series encodes to constant channels.
    """
    x = ad.as_tensor(x)
    w = ad.as_tensor(kernel).shape[0]
    xs = x.reshape(*x.shape, 1)
    if w > 1:
        xs = ad.concat([ad.take(xs, [0] * (w - 1), axis=1), xs], axis=1)
    out = ad.causal_temporal_conv(xs, kernel)
    if w > 1:
        out = ad.split(out, [w - 1, x.shape[1]], axis=1)[1]
    return out if bias is None else out + bias


class DFTEncoder(Module):
    """Fixed spectral split followed by a row-wise lift to width ``d``."""

    def __init__(self, top_k: int, d: int, rng: np.random.Generator):
        self.top_k = top_k
        self.lift = Linear(top_k + 1, d, rng)

    def __call__(self, x) -> Tensor:
        return self.lift(encode_dft(x, self.top_k))


class ConvEncoder(Module):
    def __init__(self, lookback_w: int, d: int, rng: np.random.Generator):
        if lookback_w < 1:
            raise ConfigError(f"conv encoder width must be >= 1, got {lookback_w}")
        self.kernel = uniform_init(rng, lookback_w, (lookback_w, 1, d))
        self.bias = uniform_init(rng, lookback_w, (d,))

    def __call__(self, x) -> Tensor:
        return encode_conv(x, self.kernel, self.bias)


class MultiScaleEncoder(Module):
    """One conv branch per scale; branch outputs fill disjoint channel blocks."""

    def __init__(self, scales: Sequence[int], d: int, rng: np.random.Generator):
        scales = list(scales)
        if not scales:
            raise ConfigError("multiscale encoder needs at least one scale")
        if d % len(scales):
            raise ConfigError(f"d={d} is not divisible by the number of scales ({len(scales)})")
        self.scales = scales
        self.branches = [ConvEncoder(w, d // len(scales), rng) for w in scales]

    def __call__(self, x) -> Tensor:
        outs = [b(x) for b in self.branches]
        return outs[0] if len(outs) == 1 else ad.concat(outs, axis=-1)


def encode_multiscale(x, kernels: Sequence[Tensor], biases: Sequence[Tensor]) -> Tensor:
    outs = [encode_conv(x, k, b) for k, b in zip(kernels, biases)]
    return outs[0] if len(outs) == 1 else ad.concat(outs, axis=-1)


class Predictor(Module):
    """Affine map from ``t`` past steps to ``f`` future steps, shared by all lanes."""

    def __init__(self, t: int, f: int, rng: np.random.Generator):
        if f < 1 or t < 1:
            raise ConfigError(f"predictor needs t, f >= 1 (got t={t}, f={f})")
        self.weight = uniform_init(rng, t, (t, f))
        self.bias = uniform_init(rng, t, (f,))

    def __call__(self, z: Tensor) -> Tensor:
        return predict_latents(z, self.weight, self.bias)


def predict_latents(z: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """(B, t, k, d) -> (B, f, k, d)."""
    z = ad.as_tensor(z)
    lanes_last = ad.transpose(z, (0, 2, 3, 1))
    out = lanes_last @ weight + bias
    return ad.transpose(out, (0, 3, 1, 2))


class FactorGraphDecoder(Module):
    """Per-factor logits and predictions over ``m`` variates, blended across factors.

    Both maps are shared by all factors.
    """

    def __init__(self, d: int, m: int, rng: np.random.Generator):
        self.logit_map = Linear(d, m, rng)
        self.pred_map = Linear(d, m, rng)

    def __call__(self, z_f: Tensor) -> Tensor:
        return fgd_decode(z_f, self)


def fgd_decode(z_f: Tensor, p: FactorGraphDecoder) -> Tensor:
    """(B, f, k, d) -> (B, f, m)."""
    z_f = ad.as_tensor(z_f)
    logits = p.logit_map(z_f)
    preds = p.pred_map(z_f)
    weights = ad.softmax(logits, axis=-2)
    return (weights * preds).sum(axis=-2)
