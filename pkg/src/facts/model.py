"""Forecasting model: set encoder -> layer stack -> predictor -> factor-graph decoder."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ForecastConfig
from .data import normalize
from .heads import ConvEncoder, DFTEncoder, FactorGraphDecoder, MultiScaleEncoder, Predictor
from .layer import FactsLayer
from .module import Module


class ForecastModel(Module):
    """Maps a (B, lookback, m) window to a (B, horizon, m) forecast.

    With ``instance_norm`` every input window is z-scored per variate and the
    forecast is mapped back with the same statistics.
    """

    def __init__(
        self,
        n_vars: int,
        lookback: int,
        horizon: int,
        k: int = 4,
        d: int = 24,
        d_attn: int | None = None,
        dconv: int = 4,
        layers: int = 1,
        encoder: str = "multiscale",
        scales: Sequence[int] = (1, 4, 24),
        conv_width: int = 24,
        top_k: int = 3,
        constrain_alpha: bool = True,
        instance_norm: bool = True,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.n_vars, self.lookback, self.horizon = n_vars, lookback, horizon
        self.instance_norm = instance_norm
        if encoder == "multiscale":
            self.encoder = MultiScaleEncoder(scales, d, rng)
        elif encoder == "conv":
            self.encoder = ConvEncoder(conv_width, d, rng)
        elif encoder == "dft":
            self.encoder = DFTEncoder(top_k, d, rng)
        else:
            raise ValueError(f"unknown encoder {encoder!r}")
        self.layers = [
            FactsLayer(k, d, rng, d_attn=d_attn, dconv=dconv, constrain_alpha=constrain_alpha) for _ in range(layers)
        ]
        self.predictor = Predictor(lookback, horizon, rng)
        self.decoder = FactorGraphDecoder(d, n_vars, rng)

    @classmethod
    def from_config(cls, cfg: ForecastConfig, n_vars: int) -> "ForecastModel":
        return cls(
            n_vars,
            cfg.lookback,
            cfg.horizon,
            k=cfg.k,
            d=cfg.d,
            d_attn=cfg.d_attn,
            dconv=cfg.dconv,
            layers=cfg.layers,
            encoder=cfg.encoder,
            scales=cfg.scales,
            conv_width=cfg.conv_width,
            top_k=cfg.top_k,
            constrain_alpha=cfg.constrain_alpha,
            instance_norm=cfg.norm_mode == "window",
            seed=cfg.seed,
        )

    def encode(self, x) -> Tensor:
        return self.encoder(x)

    def __call__(self, x, feature_perm=None, return_latents: bool = False):
        """Forecast for raw windows ``x``.

        ``feature_perm`` reorders the encoded feature rows before the layer
        stack (test-time variate shuffling); the decoder still emits variates
        in canonical order.
        """
        x = np.asarray(ad.as_tensor(x).data)
        stats = None
        if self.instance_norm:
            x, stats = normalize(x, "window")
        h = self.encode(x)
        if feature_perm is not None:
            h = ad.take(h, feature_perm, axis=2)
        z = None
        for layer in self.layers:
            h, z = layer(h)
        y = self.decoder(self.predictor(h))
        if stats is not None:
            y = y * stats.std + stats.mean
        if return_latents:
            return y, z
        return y
