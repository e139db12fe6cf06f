"""Dataset ingestion, normalisation and windowing."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import get_dtype
from .errors import ConfigError, ParseError, SchemaError

STD_FLOOR = 1e-8


def load_csv(path) -> tuple[np.ndarray, list[str]]:
    """Read a ``timestamp,var1,var2,...`` file into a (T, m) array and variate names."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(header) < 2:
            raise SchemaError(f"{path}: need a timestamp column and at least one variate, got {header}")
        names = [h.strip() for h in header[1:]]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            vals = []
            for col, cell in enumerate(row[1:], start=2):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column {col} ({header[col - 1]!r}) is not numeric: {cell!r}") from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}:{lineno}: column {col} ({header[col - 1]!r}) is missing or non-finite")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: header present but no data rows")
    data = np.asarray(rows, dtype=np.float64)
    return data.astype(get_dtype()), names


def write_csv(path, values: np.ndarray, names: Sequence[str] | None = None) -> None:
    values = np.asarray(values)
    names = list(names) if names is not None else [f"v{j}" for j in range(values.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *names])
        for i, row in enumerate(values):
            w.writerow([i, *(repr(float(v)) for v in row)])


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def normalize(x: np.ndarray, mode: str, train_rows: int | None = None) -> tuple[np.ndarray, NormStats]:
    """Per-variate z-score.

    ``trainsplit``: ``x`` is (T, m); statistics come from the first
    ``train_rows`` rows (all rows when omitted). ``window``: ``x`` is
    (..., t, m) and every window is scaled by its own statistics over ``t``.
    Population standard deviation; values below ``STD_FLOOR`` become 1.
    """
    x = np.asarray(x)
    if x.size == 0:
        raise ConfigError("cannot normalise an empty array")
    if mode == "trainsplit":
        ref = x if train_rows is None else x[:train_rows]
        mean = ref.mean(axis=0, keepdims=True)
        std = ref.std(axis=0, keepdims=True)
    elif mode == "window":
        mean = x.mean(axis=-2, keepdims=True)
        std = x.std(axis=-2, keepdims=True)
    else:
        raise ConfigError(f"unknown normalisation mode {mode!r}")
    std = np.where(std < STD_FLOOR, 1.0, std).astype(x.dtype)
    return (x - mean) / std, NormStats(mean, std)


def denormalize(z: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(z) * stats.std + stats.mean


def split_bounds(n_rows: int, fractions: Sequence[float]) -> list[tuple[int, int]]:
    """Chronological [start, stop) row ranges for the given fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {list(fractions)}")
    if any(f < 0 for f in fractions):
        raise ConfigError(f"split fractions must be non-negative, got {list(fractions)}")
    edges = np.floor(np.cumsum([0.0, *fractions]) * n_rows + 1e-9).astype(int)
    edges[-1] = n_rows
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def window_count(n_rows: int, lookback: int, horizon: int) -> int:
    return max(n_rows - lookback - horizon + 1, 0)


def make_windows(x: np.ndarray, lookback: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 (input, target) pairs: (N, lookback, m) and (N, horizon, m)."""
    if lookback < 1 or horizon < 1:
        raise ConfigError(f"lookback and horizon must be >= 1 (got {lookback}, {horizon})")
    x = np.asarray(x)
    n = window_count(len(x), lookback, horizon)
    if n == 0:
        raise ConfigError(f"{len(x)} rows cannot hold a window of {lookback} + {horizon}")
    span = np.lib.stride_tricks.sliding_window_view(x, lookback + horizon, axis=0)
    span = np.moveaxis(span, -1, 1)[:n]
    return np.ascontiguousarray(span[:, :lookback]), np.ascontiguousarray(span[:, lookback:])


@dataclass
class SplitWindows:
    inputs: np.ndarray
    targets: np.ndarray
    rows: tuple[int, int]

    def __len__(self):
        return len(self.inputs)


def windowed_splits(x: np.ndarray, lookback: int, horizon: int, fractions=(0.7, 0.1, 0.2)) -> list[SplitWindows]:
    """Split chronologically first, then window inside each split."""
    out = []
    for lo, hi in split_bounds(len(x), fractions):
        inp, tgt = make_windows(x[lo:hi], lookback, horizon)
        out.append(SplitWindows(inp, tgt, (lo, hi)))
    return out


def synthetic_ar_mixture(n_steps: int = 2000, n_vars: int = 8, seed: int = 42) -> np.ndarray:
    """Seeded mixture of latent AR(1) sources observed through a random mixing matrix.

    Three mean-reverting AR(1) sources (coefficients 0.95, 0.8, 0.6, unit
    stationary variance) plus a 24-step periodic driver are mixed into
    ``n_vars`` variates with per-variate offsets and small observation noise.
    """
    rng = np.random.default_rng(seed)
    phis = np.array([0.95, 0.8, 0.6])
    src = np.zeros((n_steps, len(phis)))
    src[0] = rng.standard_normal(len(phis))
    scale = np.sqrt(1.0 - phis**2)
    for s in range(1, n_steps):
        src[s] = phis * src[s - 1] + scale * rng.standard_normal(len(phis))
    steps = np.arange(n_steps)
    periodic = np.stack([np.sin(2 * np.pi * steps / 24), np.cos(2 * np.pi * steps / 24)], axis=1)
    latent = np.concatenate([src, 1.5 * periodic], axis=1)
    mixing = rng.standard_normal((latent.shape[1], n_vars)) / np.sqrt(latent.shape[1])
    offsets = rng.uniform(-2.0, 2.0, n_vars)
    noise = 0.1 * rng.standard_normal((n_steps, n_vars))
    return latent @ mixing + offsets + noise
