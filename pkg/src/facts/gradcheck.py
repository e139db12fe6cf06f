"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def numeric_grad(f: Callable[[], float], t: Tensor, h: float = 1e-3) -> np.ndarray:
    """d f / d t by central differences, perturbing ``t.data`` in place."""
    g = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * h)
    return g


def elementwise_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest |a - n| / max(|a|, |n|, floor); entries below ``floor`` are judged on absolute error."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max()) if a.size else 0.0


def group_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest absolute deviation relative to the largest gradient entry of the group."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if not a.size:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max(), floor)
    return float(np.abs(a - n).max() / scale)


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[tuple[str, Tensor]], h: float = 1e-3
) -> dict[str, dict[str, float]]:
    """Compare tape gradients of ``loss_fn()`` with finite differences for every named parameter."""
    tensors = [p for _, p in params]
    with ad.Tape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss, tensors)

    def f():
        with ad.no_record():
            return float(loss_fn().data)

    out = {}
    for (name, p), g in zip(params, grads):
        num = numeric_grad(f, p, h)
        out[name] = {"elementwise": elementwise_rel_err(g, num), "group": group_rel_err(g, num)}
    return out
