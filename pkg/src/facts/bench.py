"""Wall-clock comparison of the sequential and parallel scan."""

from __future__ import annotations

import csv
import io
import time
from typing import Sequence

import numpy as np

from .scan import ScanInputs, scan_parallel, scan_sequential

HEADER = ("t", "seq_ms", "par_ms", "speedup", "max_rel_err")


def _best_ms(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1e3


def bench_scan(
    lengths: Sequence[int], B: int = 8, k: int = 8, d: int = 64, repeats: int = 3, seed: int = 0, dtype=np.float32
) -> list[dict]:
    """Best-of-``repeats`` timings per length; outputs of both paths are compared."""
    rng = np.random.default_rng(seed)
    scan_parallel(ScanInputs(np.ones((1, 64, 1), dtype), np.zeros((1, 64, 1), dtype), np.zeros((1, 1), dtype)))
    rows = []
    for t in lengths:
        inp = ScanInputs(
            rng.uniform(0.5, 1.0, (B, t, k, d)).astype(dtype),
            rng.standard_normal((B, t, k, d)).astype(dtype),
            rng.standard_normal((B, k, d)).astype(dtype),
        )
        ref = scan_sequential(inp)
        got = scan_parallel(inp)
        scale = max(float(np.abs(ref).max()), 1e-30) if ref.size else 1.0
        err = float(np.abs(got.astype(np.float64) - ref).max() / scale) if ref.size else 0.0
        seq_ms = _best_ms(lambda: scan_sequential(inp), repeats)
        par_ms = _best_ms(lambda: scan_parallel(inp), repeats)
        rows.append({"t": int(t), "seq_ms": seq_ms, "par_ms": par_ms, "speedup": seq_ms / par_ms, "max_rel_err": err})
    return rows


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (row[k] if k == "t" else f"{row[k]:.6g}") for k in HEADER})
    return buf.getvalue()
