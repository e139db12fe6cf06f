"""First-order linear recurrence ``z[s] = a[s] * z[s-1] + u[s]`` over time.

Inputs are laid out (B, t, *lanes); every lane evolves independently.
``scan_sequential`` is the plain loop and serves as the reference for
everything else. ``scan_parallel`` evaluates the same recurrence with the
associative combine

    (a1, b1) o (a2, b2) = (a1 * a2, a2 * b1 + b2)

using an up-sweep/down-sweep tree over time once ``t >= TREE_MIN_STEPS``;
shorter sequences run a per-lane loop parallelised over lanes. Tree leaves
are blocks of ``TREE_LEAF`` steps reduced sequentially, and the block count is
padded to a power of two with the identity element (a=1, b=0).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numba
import numpy as np

from . import autodiff as ad
from .errors import DimensionError

# prefer OpenMP over TBB; old TBB builds are rejected with a warning on every import
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

TREE_MIN_STEPS = 64
# time steps per tree leaf; leaf=1 gives the textbook per-element tree
TREE_LEAF = 32


@dataclass(frozen=True)
class ScanInputs:
    a_bar: np.ndarray
    u_drive: np.ndarray
    z0: np.ndarray

    def __post_init__(self):
        _check_shapes(self.a_bar, self.u_drive, self.z0)


def _check_shapes(a, u, z0):
    a, u, z0 = np.asarray(a), np.asarray(u), np.asarray(z0)
    if a.shape != u.shape:
        raise DimensionError(f"scan: a_bar {a.shape} and u_drive {u.shape} differ")
    if a.ndim < 2:
        raise DimensionError(f"scan: expected (B, t, ...) inputs, got {a.shape}")
    want = a.shape[:1] + a.shape[2:]
    if z0.shape != want:
        raise DimensionError(f"scan: z0 {z0.shape} does not match lanes {want}")


def combine(p, q):
    """Associative combine of (a, b) pairs, ``p`` earlier in time than ``q``."""
    a1, b1 = p
    a2, b2 = q
    return a1 * a2, a2 * b1 + b2


def scan_sequential(inp: ScanInputs) -> np.ndarray:
    a, u, z0 = inp.a_bar, inp.u_drive, inp.z0
    out = np.empty(np.broadcast_shapes(a.shape, u.shape), dtype=np.result_type(a, u, z0))
    prev = z0
    for s in range(a.shape[1]):
        prev = a[:, s] * prev + u[:, s]
        out[:, s] = prev
    return out


@numba.njit(parallel=True, cache=True)
def _lane_loop(a, u, z0, out):
    B, T, L = a.shape
    chunk = 64
    chunks = (L + chunk - 1) // chunk
    for job in numba.prange(B * chunks):
        b = job // chunks
        lo = (job % chunks) * chunk
        hi = min(lo + chunk, L)
        for l in range(lo, hi):
            out[b, 0, l] = a[b, 0, l] * z0[b, l] + u[b, 0, l]
        for s in range(1, T):
            for l in range(lo, hi):
                out[b, s, l] = a[b, s, l] * out[b, s - 1, l] + u[b, s, l]


@numba.njit(parallel=True, cache=True)
def _tree_scan(a, u, z0, out, leaf):
    B, T, L = a.shape
    nb = (T + leaf - 1) // leaf
    n = 1
    while n < nb:
        n *= 2
    # one (A, U) aggregate per leaf block; padding blocks stay the identity
    A = np.ones((B, n, L), dtype=a.dtype)
    U = np.zeros((B, n, L), dtype=a.dtype)

    for job in numba.prange(B * nb):
        b = job // nb
        blk = job % nb
        lo = blk * leaf
        hi = min(lo + leaf, T)
        if blk == 0:
            # the initial state is folded into the first block
            for l in range(L):
                U[b, 0, l] = z0[b, l]
        for s in range(lo, hi):
            for l in range(L):
                U[b, blk, l] = a[b, s, l] * U[b, blk, l] + u[b, s, l]
                A[b, blk, l] *= a[b, s, l]

    # up-sweep
    stride = 1
    while stride < n:
        step = 2 * stride
        nodes = n // step
        for job in numba.prange(B * nodes):
            b = job // nodes
            i = (job % nodes) * step + step - 1
            j = i - stride
            for l in range(L):
                a2 = A[b, i, l]
                U[b, i, l] = a2 * U[b, j, l] + U[b, i, l]
                A[b, i, l] = A[b, j, l] * a2
        stride = step

    # down-sweep: aggregates become exclusive prefixes
    for b in numba.prange(B):
        for l in range(L):
            A[b, n - 1, l] = 1.0
            U[b, n - 1, l] = 0.0
    stride = n // 2
    while stride >= 1:
        step = 2 * stride
        nodes = n // step
        for job in numba.prange(B * nodes):
            b = job // nodes
            i = (job % nodes) * step + step - 1
            j = i - stride
            for l in range(L):
                ta = A[b, j, l]
                tb = U[b, j, l]
                pa = A[b, i, l]
                pb = U[b, i, l]
                A[b, j, l] = pa
                U[b, j, l] = pb
                A[b, i, l] = pa * ta
                U[b, i, l] = ta * pb + tb
        stride //= 2

    # leaf pass: rescan each block from the state entering it
    for job in numba.prange(B * nb):
        b = job // nb
        blk = job % nb
        lo = blk * leaf
        hi = min(lo + leaf, T)
        for l in range(L):
            carry = z0[b, l] if blk == 0 else U[b, blk, l]
            out[b, lo, l] = a[b, lo, l] * carry + u[b, lo, l]
        for s in range(lo + 1, hi):
            for l in range(L):
                out[b, s, l] = a[b, s, l] * out[b, s - 1, l] + u[b, s, l]


def _lanes(a, u, z0):
    B, T = a.shape[:2]
    L = int(np.prod(a.shape[2:], dtype=np.int64)) if a.ndim > 2 else 1
    dt = np.result_type(a, u, z0)
    return (
        np.ascontiguousarray(a, dtype=dt).reshape(B, T, L),
        np.ascontiguousarray(u, dtype=dt).reshape(B, T, L),
        np.ascontiguousarray(z0, dtype=dt).reshape(B, L),
    )


def scan_parallel(
    inp: ScanInputs, tree_min_steps: int = TREE_MIN_STEPS, leaf: int = TREE_LEAF
) -> np.ndarray:
    a, u, z0 = _lanes(inp.a_bar, inp.u_drive, inp.z0)
    out = np.empty_like(a)
    if a.shape[1] == 0:
        return out.reshape(inp.a_bar.shape)
    if a.shape[1] >= tree_min_steps:
        _tree_scan(a, u, z0, out, leaf)
    else:
        _lane_loop(a, u, z0, out)
    return out.reshape(inp.a_bar.shape)


def scan_backward(inp: ScanInputs, z: np.ndarray, grad_z: np.ndarray, parallel: bool = True):
    """Adjoint of the recurrence; returns ``(grad_a, grad_u, grad_z0)``.

    The reverse recurrence ``g[s] = grad_z[s] + a[s+1] * g[s+1]`` is itself a
    linear scan, so it runs through the same kernels on time-reversed data.
    """
    a, z0 = inp.a_bar, inp.z0
    if z.shape != a.shape or grad_z.shape != a.shape:
        raise DimensionError(f"scan_backward: z {z.shape} / grad_z {grad_z.shape} vs inputs {a.shape}")
    a_next = np.empty_like(a)
    a_next[:, :-1] = a[:, 1:]
    a_next[:, -1] = 0.0
    rev = ScanInputs(
        np.ascontiguousarray(a_next[:, ::-1]),
        np.ascontiguousarray(grad_z[:, ::-1]),
        np.zeros_like(z0),
    )
    g = (scan_parallel(rev) if parallel else scan_sequential(rev))[:, ::-1]
    z_prev = np.concatenate([z0[:, None], z[:, :-1]], axis=1)
    grad_a = g * z_prev
    grad_u = np.ascontiguousarray(g)
    grad_z0 = a[:, 0] * g[:, 0]
    return grad_a, grad_u, grad_z0


def scan(a_bar, u_drive, z0, method: str = "parallel") -> ad.Tensor:
    """Differentiable scan on tensors. ``z0`` broadcasts to (B, *lanes)."""
    a_bar, u_drive, z0 = ad.as_tensor(a_bar), ad.as_tensor(u_drive), ad.as_tensor(z0)
    lane_shape = a_bar.shape[:1] + a_bar.shape[2:]
    try:
        z0_full = np.broadcast_to(z0.data, lane_shape)
    except ValueError:
        raise DimensionError(f"scan: z0 {z0.shape} does not broadcast to {lane_shape}") from None
    inp = ScanInputs(a_bar.data, u_drive.data, z0_full)
    if method == "parallel":
        z = scan_parallel(inp)
    elif method == "sequential":
        z = scan_sequential(inp)
    else:
        raise ValueError(f"unknown scan method {method!r}")

    def vjp(g):
        ga, gu, gz0 = scan_backward(inp, z, np.ascontiguousarray(g), parallel=method == "parallel")
        return ga, gu, gz0

    return ad.apply_op("scan", z, (a_bar, u_drive, z0), vjp)
