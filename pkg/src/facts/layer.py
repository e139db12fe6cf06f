"""The factored state-space encoder layer.

Input feature sets (B, t, m, d) are turned into a factored memory trajectory
(B, t, k, d):

1. pointwise projection to 2d channels, causal conv along time, split into
   an x stream and a step-size source;
2. pointwise projection of x to 3d channels with SiLU, split into x, B and C
   sources;
3. routing from the initial memory ``z0`` to the features gives the factor
   momentum U and the selective parameters (delta, B, C), per time step;
4. discretisation ``a_bar = exp(alpha * delta)``, ``b_bar = delta * B``;
5. linear recurrence ``z[s] = a_bar[s] * z[s-1] + b_bar[s] * U[s]`` from
   ``z0`` and selective output ``z_hat = C * z``.

Because the routers only ever see ``z0`` (never ``z[s-1]``), the recurrence
is linear in ``z`` and runs through the parallel scan.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .module import Linear, Module, param, uniform_init
from .router import RouterMaps, route, route_multistream
from .scan import scan

# softplus^-1(1): the raw value giving an effective decay exponent of -1
ALPHA_RAW_INIT = math.log(math.e - 1.0)


class FactsLayer(Module):
    """Trainable weights of one layer plus its forward pass.

    With ``constrain_alpha`` (default) the decay exponent is
    ``-softplus(alpha_raw)`` so that ``0 < a_bar < 1``; without it ``alpha_raw``
    is used as-is and the memory may grow.
    """

    def __init__(
        self,
        k: int,
        d: int,
        rng: np.random.Generator,
        d_attn: int | None = None,
        dconv: int = 4,
        constrain_alpha: bool = True,
        scan_method: str = "parallel",
    ):
        if k < 1 or d < 1 or dconv < 1:
            raise ConfigError(f"need k, d, dconv >= 1 (got k={k}, d={d}, dconv={dconv})")
        self.k, self.d, self.dconv = k, d, dconv
        self.constrain_alpha = constrain_alpha
        self.scan_method = scan_method
        self.in_proj = Linear(d, 2 * d, rng)
        self.conv_kernel = uniform_init(rng, dconv * 2 * d, (dconv, 2 * d, 2 * d))
        self.conv_bias = uniform_init(rng, dconv * 2 * d, (2 * d,))
        self.gate_proj = Linear(d, 3 * d, rng)
        self.router_u = RouterMaps(d, rng, d_attn=d_attn, n_values=1)
        self.router_params = RouterMaps(d, rng, d_attn=d_attn, n_values=3)
        self.alpha = param(ALPHA_RAW_INIT if constrain_alpha else -1.0)
        self.z0 = param(rng.standard_normal((k, d)))

    def alpha_eff(self) -> Tensor:
        return -ad.softplus(self.alpha) if self.constrain_alpha else self.alpha

    def __call__(self, x: Tensor):
        return forward(x, self)


def build_streams(x: Tensor, p: FactsLayer):
    """Per-feature preprocessing; returns ``(x_s, delta_s, b_s, c_s)``, each (B, t, m, d)."""
    x = ad.as_tensor(x)
    if x.ndim != 4 or x.shape[-1] != p.d:
        raise ConfigError(f"layer expects (B, t, m, {p.d}) input, got {x.shape}")
    d = p.d
    h = p.in_proj(x)
    h = ad.causal_temporal_conv(h, p.conv_kernel) + p.conv_bias
    xs, delta_s = ad.split(h, [d, d], axis=-1)
    g = ad.silu(p.gate_proj(xs))
    x_s, b_s, c_s = ad.split(g, [d, d, d], axis=-1)
    return x_s, delta_s, b_s, c_s


def selective_params(z0: Tensor, x_s: Tensor, delta_s: Tensor, b_s: Tensor, c_s: Tensor, p: FactsLayer):
    """Route the streams into the memory; returns ``(delta, b_route, c_route, u)``.

    Every time step is routed independently against ``z0``; the x stream
    provides the keys for both routers and the values for U.
    """
    u = route(z0, x_s, p.router_u)
    delta_r, b_route, c_route = route_multistream(z0, x_s, [delta_s, b_s, c_s], p.router_params)
    return ad.softplus(delta_r), b_route, c_route, u


def discretize(delta: Tensor, b_route: Tensor, alpha_eff: Tensor):
    a_bar = ad.exp(alpha_eff * delta)
    b_bar = delta * b_route
    return a_bar, b_bar


def propagate(z0: Tensor, streams, p: FactsLayer, method: str | None = None):
    """Everything after the per-feature preprocessing; returns ``(z_hat, z)``.

    ``streams`` is the ``(x_s, delta_s, b_s, c_s)`` tuple from
    :func:`build_streams`. This is the part that sees the feature axis as a
    set at every step.
    """
    z_route = z0
    if z0.ndim == 3:
        # per-sample memory (B, k, d): add the time axis for broadcasting
        z_route = z0.reshape(z0.shape[0], 1, *z0.shape[1:])
    delta, b_route, c_route, u = selective_params(z_route, *streams, p)
    a_bar, b_bar = discretize(delta, b_route, p.alpha_eff())
    z = scan(a_bar, b_bar * u, z0, method=method or p.scan_method)
    return c_route * z, z


def forward(x: Tensor, p: FactsLayer, z0: Tensor | None = None, method: str | None = None):
    """Full layer; returns ``(z_hat, z)``, both (B, t, k, d).

    ``z0`` overrides the layer's own initial memory (used for permutation
    checks); it must have shape (k, d) or (B, k, d).
    """
    z0 = p.z0 if z0 is None else ad.as_tensor(z0)
    if z0.shape[-1] != p.d:
        raise DimensionError(f"z0 width {z0.shape[-1]} != layer width {p.d}")
    return propagate(z0, build_streams(x, p), p, method=method)


def forward_recurrent(x: Tensor, p: FactsLayer, z0: Tensor | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Slow reference without linearisation: routers see ``z[s-1]`` at each step.

    Returns numpy arrays ``(z_hat, z)``. Only meant for tests.
    """
    z0 = p.z0 if z0 is None else ad.as_tensor(z0)
    with ad.no_record():
        x_s, delta_s, b_s, c_s = build_streams(x, p)
        B, t = x_s.shape[:2]
        prev = Tensor(np.broadcast_to(z0.data, (B,) + z0.shape[-2:]))
        zs, zhats = [], []
        for s in range(t):
            step = [ad.take(v, [s], axis=1).reshape(v.shape[:1] + v.shape[2:]) for v in (x_s, delta_s, b_s, c_s)]
            delta, b_route, c_route, u = selective_params(prev, *step, p)
            a_bar, b_bar = discretize(delta, b_route, p.alpha_eff())
            prev = a_bar * prev + b_bar * u
            zs.append(prev.data)
            zhats.append((c_route * prev).data)
    return np.stack(zhats, axis=1), np.stack(zs, axis=1)
