"""Executable property suite: invariances, oracles and gradient checks.

Every check uses fixed seeds and returns a :class:`PropertyResult` carrying
its worst observed error and the tolerance it was held to. ``run_all`` runs
the whole suite at 64-bit precision.
"""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import denormalize, normalize
from .gradcheck import check_gradients, elementwise_rel_err, numeric_grad
from .heads import ConvEncoder, FactorGraphDecoder, MultiScaleEncoder, Predictor, encode_dft
from .layer import FactsLayer, build_streams, forward, propagate
from .model import ForecastModel
from .router import RouterMaps, attention_weights, route
from .scan import ScanInputs, combine, scan_backward, scan_parallel, scan_sequential


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst: float
    tol: float
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name:<40s} worst={self.worst:.3e}  tol={self.tol:.1e}  {self.seconds:6.2f}s{extra}"


def max_rel(a, b) -> float:
    """max |a - b| relative to max |b| (zero when both are empty)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not b.size:
        return 0.0
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def _result(name, worst, tol, start, detail="", strict=False) -> PropertyResult:
    ok = worst == 0.0 if strict else worst <= tol
    return PropertyResult(name, bool(ok), float(worst), tol, time.perf_counter() - start, detail)


# ---------------------------------------------------------------------------
# configuration helpers


@dataclass
class LayerCase:
    layer: FactsLayer
    x: np.ndarray
    k: int
    m: int
    d: int
    t: int


def random_layer_case(rng: np.random.Generator, fault: bool = False, batch: int = 2) -> LayerCase:
    k = int(rng.integers(1, 7))
    m = int(rng.integers(1, 7))
    d = int(rng.integers(1, 17))
    t = int(rng.integers(1, 33))
    dconv = int(rng.integers(1, 5))
    layer = FactsLayer(k, d, rng, dconv=dconv)
    if fault:
        layer.router_u.fault_cross_row = True
        layer.router_params.fault_cross_row = True
    x = rng.standard_normal((batch, t, m, d))
    return LayerCase(layer, x, k, m, d, t)


def permute_rows_per_step(x: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """x (B, t, m, ...) with row order ``perms[s]`` at step ``s``."""
    idx = perms.reshape((1,) + perms.shape + (1,) * (x.ndim - 3))
    return np.take_along_axis(x, np.broadcast_to(idx, x.shape[:3] + (1,) * (x.ndim - 3)), axis=2)


def random_step_perms(rng, t: int, m: int) -> np.ndarray:
    return np.stack([rng.permutation(m) for _ in range(t)])


# ---------------------------------------------------------------------------
# tensor / autodiff properties


def check_matmul_oracle(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        p, q, r = rng.integers(1, 17, size=3)
        a = rng.standard_normal((p, q))
        b = rng.standard_normal((q, r))
        got = ad.matmul(Tensor(a), Tensor(b)).data
        ref = np.zeros((p, r))
        for i in range(p):
            for j in range(r):
                acc = 0.0
                for s in range(q):
                    acc += a[i, s] * b[s, j]
                ref[i, j] = acc
        worst = max(worst, float(np.abs(got - ref).max()))
    return _result("matmul vs triple loop", worst, 1e-12, start)


def check_softmax(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal((4, int(rng.integers(1, 12)))) * 10
        y = ad.softmax(Tensor(x)).data
        worst = max(worst, float(np.abs(y.sum(-1) - 1).max()))
        if (y < 0).any():
            worst = math.inf
        # integer shifts of small-integer inputs are exact, so the outputs must match bitwise
        xi = np.round(x)
        c = float(np.round(rng.normal() * 100))
        if not np.array_equal(ad.softmax(Tensor(xi + c)).data, ad.softmax(Tensor(xi)).data):
            worst = math.inf
    return _result("softmax sums to one, shift invariant", worst, 1e-6, start)


def check_conv_causality(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(20):
        t, c, co, w = (int(v) for v in rng.integers(1, 9, size=4))
        x = rng.standard_normal((2, t, c))
        k = Tensor(rng.standard_normal((w, c, co)))
        base = ad.causal_temporal_conv(Tensor(x), k).data
        s = int(rng.integers(0, t))
        x2 = x.copy()
        x2[:, s + 1 :] += rng.standard_normal(x2[:, s + 1 :].shape)
        out = ad.causal_temporal_conv(Tensor(x2), k).data
        if not np.array_equal(out[:, : s + 1], base[:, : s + 1]):
            violations += 1
    return _result("causal conv ignores the future", float(violations), 0.0, start, strict=True)


def _op_cases(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4,))
    yield "add", lambda x, y: ad.add(x, y), (a, b)
    yield "sub", lambda x, y: ad.sub(x, y), (a, b)
    yield "mul", lambda x, y: ad.mul(x, y), (a, b)
    yield "div", lambda x, y: ad.div(x, y), (a, rng.uniform(0.5, 2.0, (4,)))
    yield "matmul", lambda x, y: ad.matmul(x, y), (rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5)))
    yield "exp", ad.exp, (a,)
    yield "sigmoid", ad.sigmoid, (a,)
    yield "softplus", ad.softplus, (a,)
    yield "silu", ad.silu, (a,)
    yield "square", ad.square, (a,)
    yield "softmax", lambda x: ad.softmax(x, axis=-1), (a,)
    yield "softmax(axis=0)", lambda x: ad.softmax(x, axis=0), (a,)
    yield "sum", lambda x: ad.sum_(x, axis=1, keepdims=False), (a,)
    yield "mean", lambda x: ad.mean(x, axis=0), (a,)
    yield "transpose", lambda x: ad.transpose(x, (1, 0)), (a,)
    yield "take", lambda x: ad.take(x, [2, 0, 1], axis=0), (a,)
    yield "split", lambda x: ad.split(x, [1, 3], axis=1)[1], (a,)
    yield "concat", lambda x, y: ad.concat([x, y], axis=0), (a, rng.standard_normal((2, 4)))
    yield "causal_temporal_conv", ad.causal_temporal_conv, (
        rng.standard_normal((2, 6, 3, 2)),
        rng.standard_normal((3, 2, 4)),
    )


def check_op_gradients(seed: int = 0, h: float = 1e-3) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, worst_op = 0.0, ""
    for name, fn, arrays in _op_cases(rng):
        inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        with ad.no_record():
            w = rng.standard_normal(fn(*inputs).shape)

        def loss():
            return ad.sum_(ad.mul(fn(*inputs), w))

        res = check_gradients(loss, [(f"in{i}", t) for i, t in enumerate(inputs)], h=h)
        err = max(r["elementwise"] for r in res.values())
        if err > worst:
            worst, worst_op = err, name
    return _result("op gradients vs finite differences", worst, 1e-4, start, f"worst op: {worst_op}")


# ---------------------------------------------------------------------------
# scan properties


def _scan_instance(rng, t=None, B=None, lanes=None):
    t = int(rng.integers(1, 258)) if t is None else t
    B = int(rng.integers(1, 4)) if B is None else B
    lanes = tuple(int(v) for v in rng.integers(1, 9, size=2)) if lanes is None else lanes
    a = rng.uniform(0.05, 1.0, (B, t) + lanes)
    u = rng.standard_normal((B, t) + lanes)
    z0 = rng.standard_normal((B,) + lanes)
    return ScanInputs(a, u, z0)


def check_scan_equivalence(seed: int = 0, n: int = 200, bits: int = 64) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    dt = np.float64 if bits == 64 else np.float32
    worst = 0.0
    for _ in range(n):
        inp = _scan_instance(rng)
        inp = ScanInputs(inp.a_bar.astype(dt), inp.u_drive.astype(dt), inp.z0.astype(dt))
        worst = max(worst, max_rel(scan_parallel(inp), scan_sequential(inp)))
    tol = 1e-10 if bits == 64 else 1e-5
    return _result(f"parallel scan == sequential ({bits}-bit)", worst, tol, start, f"{n} instances")


def check_scan_associativity(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        p, q, r = [(rng.uniform(0.05, 1.0, 8), rng.standard_normal(8)) for _ in range(3)]
        left = combine(combine(p, q), r)
        right = combine(p, combine(q, r))
        worst = max(worst, max(float(np.abs(left[i] - right[i]).max()) for i in range(2)))
    return _result("combine is associative", worst, 1e-12, start)


def check_scan_adjoint(seed: int = 0, h: float = 1e-3) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in (1, 6, 70):
        inp = _scan_instance(rng, t=t, B=2, lanes=(2, 3))
        w = rng.standard_normal(inp.a_bar.shape)
        z = scan_sequential(inp)
        ga, gu, gz0 = scan_backward(inp, z, w)
        arrays = [inp.a_bar.copy(), inp.u_drive.copy(), inp.z0.copy()]
        for which, analytic in enumerate((ga, gu, gz0)):
            tensor = Tensor(arrays[which])

            def f():
                args = list(arrays)
                args[which] = tensor.data
                return float((scan_sequential(ScanInputs(*args)) * w).sum())

            worst = max(worst, elementwise_rel_err(analytic, numeric_grad(f, tensor, h)))
    return _result("scan adjoint vs finite differences", worst, 1e-4, start)


def check_scan_stability(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(50):
        inp = _scan_instance(rng)
        z = scan_parallel(inp)
        bound = np.abs(inp.z0)[:, None] + np.cumsum(np.abs(inp.u_drive), axis=1)
        violations += int((np.abs(z) > bound * (1 + 1e-12)).any())
    return _result("|z| <= |z0| + sum|u| when a <= 1", float(violations), 0.0, start, strict=True)


def check_scan_determinism(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    inp = _scan_instance(np.random.default_rng(seed), t=300)
    a = scan_parallel(inp)
    b = scan_parallel(inp)
    return _result("parallel scan is bitwise repeatable", float(not np.array_equal(a, b)), 0.0, start, strict=True)


# ---------------------------------------------------------------------------
# router properties


def check_route_lpe(seed: int = 0, fault: bool = False) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        k, m, d = (int(v) for v in rng.integers(1, 9, size=3))
        maps = RouterMaps(d, rng)
        maps.fault_cross_row = fault
        z = rng.standard_normal((2, k, d))
        x = rng.standard_normal((2, m, d))
        perm = rng.permutation(k)
        a = route(Tensor(z[:, perm]), Tensor(x), maps).data
        b = route(Tensor(z), Tensor(x), maps).data[:, perm]
        worst = max(worst, float(np.abs(a - b).max()))
    return _result("router L.P.E. (bitwise)", worst, 0.0, start, strict=True)


def check_route_rpi(seed: int = 0, fault: bool = False, bits: int = 64) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    with ad.precision(bits):
        for _ in range(50):
            k, m, d = (int(v) for v in rng.integers(1, 9, size=3))
            maps = RouterMaps(d, rng)
            maps.fault_cross_row = fault
            z = rng.standard_normal((2, k, d))
            x = rng.standard_normal((2, m, d))
            perm = rng.permutation(m)
            a = route(Tensor(z), Tensor(x[:, perm]), maps).data
            b = route(Tensor(z), Tensor(x), maps).data
            worst = max(worst, max_rel(a, b))
    tol = 1e-12 if bits == 64 else 1e-5
    return _result(f"router R.P.I. ({bits}-bit)", worst, tol, start)


def check_route_weights(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        k, m, d = (int(v) for v in rng.integers(1, 9, size=3))
        maps = RouterMaps(d, rng)
        w = attention_weights(Tensor(rng.standard_normal((k, d)) * 5), Tensor(rng.standard_normal((3, m, d)) * 5), maps).data
        if (w < 0).any():
            worst = math.inf
        worst = max(worst, float(np.abs(w.sum(-1) - 1).max()))
    return _result("routing weights are distributions", worst, 1e-6, start)


# ---------------------------------------------------------------------------
# layer properties


def layer_lpe_error(case: LayerCase, rng) -> float:
    perm = rng.permutation(case.k)
    x = Tensor(case.x)
    zh, z = forward(x, case.layer)
    zh_p, z_p = forward(x, case.layer, z0=ad.take(case.layer.z0, perm, axis=0))
    return max(max_rel(zh_p.data, zh.data[:, :, perm]), max_rel(z_p.data, z.data[:, :, perm]))


def layer_rpi_errors(case: LayerCase, rng) -> dict[str, float]:
    """R.P.I. errors at three levels.

    ``core``: independent per-step row permutations of the streams that enter
    routing and propagation. ``layer_step``: per-step permutations of the raw
    layer input with a width-1 temporal conv. ``layer_const``: one
    time-constant permutation of the raw layer input, any conv width.
    """
    layer = case.layer
    x = Tensor(case.x)
    streams = build_streams(x, layer)
    zh, z = propagate(layer.z0, streams, layer)
    perms = random_step_perms(rng, case.t, case.m)
    shuffled = tuple(Tensor(permute_rows_per_step(s.data, perms)) for s in streams)
    zh_c, z_c = propagate(layer.z0, shuffled, layer)
    errs = {"core": max(max_rel(zh_c.data, zh.data), max_rel(z_c.data, z.data))}

    const = rng.permutation(case.m)
    zh_l, z_l = forward(Tensor(case.x[:, :, const]), layer)
    errs["layer_const"] = max(max_rel(zh_l.data, zh.data), max_rel(z_l.data, z.data))

    saved = layer.dconv, layer.conv_kernel
    layer.dconv = 1
    layer.conv_kernel = Tensor(saved[1].data[-1:], requires_grad=True)
    try:
        zh1, z1 = forward(x, layer)
        zh1p, z1p = forward(Tensor(permute_rows_per_step(case.x, perms)), layer)
    finally:
        layer.dconv, layer.conv_kernel = saved
    errs["layer_step"] = max(max_rel(zh1p.data, zh1.data), max_rel(z1p.data, z1.data))
    return errs


def check_layer_lpe(seed: int = 0, n: int = 50, fault: bool = False) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        worst = max(worst, layer_lpe_error(random_layer_case(rng, fault=fault), rng))
    return _result("layer L.P.E. (memory permutation)", worst, 1e-12, start, f"{n} configs")


def check_layer_rpi(seed: int = 0, n: int = 50, fault: bool = False, bits: int = 64) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = {"core": 0.0, "layer_const": 0.0, "layer_step": 0.0}
    with ad.precision(bits):
        for _ in range(n):
            errs = layer_rpi_errors(random_layer_case(rng, fault=fault), rng)
            for key, v in errs.items():
                worst[key] = max(worst[key], v)
    tol = 1e-12 if bits == 64 else 1e-5
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return _result(f"layer R.P.I. per-step ({bits}-bit)", max(worst.values()), tol, start, detail)


def _scramble(maps: RouterMaps, rng, scale: float = 2.0) -> None:
    for _, p in maps.named_parameters():
        p.data = rng.standard_normal(p.shape) * scale


def check_generalised_dynamics(seed: int = 0, n: int = 10) -> PropertyResult:
    """Invariances survive independent re-draws of either router or both."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for variant in ("router_u", "router_params", "both"):
        for _ in range(n):
            case = random_layer_case(rng)
            if variant in ("router_u", "both"):
                _scramble(case.layer.router_u, rng)
            if variant in ("router_params", "both"):
                _scramble(case.layer.router_params, rng)
            worst = max(worst, layer_lpe_error(case, rng), layer_rpi_errors(case, rng)["core"])
    return _result("invariances for any router choice", worst, 1e-12, start, f"3 variants x {n}")


def check_linearisation(seed: int = 0) -> PropertyResult:
    """With one-to-one routing the layer is m independent diagonal selective SSMs."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        m = int(rng.integers(1, 6))
        extra = int(rng.integers(1, 5))
        d, t, B = m + extra, int(rng.integers(1, 20)), 2
        layer = FactsLayer(m, d, rng, d_attn=m)
        sharp = 60.0 * math.sqrt(m)
        select = np.zeros((d, m))
        select[:m, :m] = np.eye(m)
        for maps in (layer.router_u, layer.router_params):
            maps.query.weight.data = select.copy()
            maps.query.bias.data = np.zeros(m)
            maps.key.weight.data = select * sharp
            maps.key.bias.data = np.zeros(m)
        z0 = np.zeros((m, d))
        z0[:, :m] = np.eye(m)
        z0[:, m:] = rng.standard_normal((m, extra))
        layer.z0.data = z0
        onehot = np.broadcast_to(np.eye(m), (B, t, m, m))
        x_s = np.concatenate([onehot, rng.standard_normal((B, t, m, extra))], axis=-1)
        others = [rng.standard_normal((B, t, m, d)) for _ in range(3)]
        zh, z = propagate(layer.z0, (Tensor(x_s), *map(Tensor, others)), layer)

        def lin(maps, i, v):
            return v @ maps.values[i].weight.data + maps.values[i].bias.data

        u = lin(layer.router_u, 0, x_s)
        delta = np.logaddexp(0.0, lin(layer.router_params, 0, others[0]))
        b = lin(layer.router_params, 1, others[1])
        c = lin(layer.router_params, 2, others[2])
        alpha = -np.logaddexp(0.0, layer.alpha.data)
        ref = np.empty((B, t, m, d))
        for j in range(m):
            state = np.broadcast_to(z0[j], (B, d)).copy()
            for s in range(t):
                state = np.exp(alpha * delta[:, s, j]) * state + delta[:, s, j] * b[:, s, j] * u[:, s, j]
                ref[:, s, j] = state
        worst = max(worst, max_rel(z.data, ref), max_rel(zh.data, c * ref))
    return _result("one-to-one routing == diagonal SSM lanes", worst, 1e-6, start)


def check_layer_gradients(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    layer = FactsLayer(2, 4, rng, dconv=3)
    x = Tensor(rng.standard_normal((2, 7, 3, 4)))
    w = rng.standard_normal((2, 7, 2, 4))

    def loss():
        zh, z = forward(x, layer)
        return ad.sum_(zh * w) + ad.sum_(z * w) * 0.5

    res = check_gradients(loss, list(layer.named_parameters()))
    worst = max(r["elementwise"] for r in res.values())
    name = max(res, key=lambda k: res[k]["elementwise"])
    return _result("layer gradients vs finite differences", worst, 1e-4, start, f"worst group: {name}")


# ---------------------------------------------------------------------------
# heads and pipeline properties


def check_encoder_rpi(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    x = rng.standard_normal((2, 30, 5))
    perm = rng.permutation(5)
    encoders = {
        "conv": ConvEncoder(4, 6, rng),
        "multiscale": MultiScaleEncoder([1, 3, 7], 6, rng),
        "dft": lambda v: encode_dft(v, 3),
    }
    for enc in encoders.values():
        a = enc(x[:, :, perm]).data
        b = enc(x).data[:, :, perm]
        worst = max(worst, float(np.abs(a - b).max()))
    return _result("encoders commute with variate permutation", worst, 0.0, start, strict=True)


def check_fgd_invariance(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    dec = FactorGraphDecoder(5, 4, rng)
    z = rng.standard_normal((2, 6, 3, 5))
    base = dec(Tensor(z)).data
    worst = 0.0
    for perm in itertools.permutations(range(3)):
        worst = max(worst, max_rel(dec(Tensor(z[:, :, list(perm)])).data, base))
    return _result("decoder invariant to factor order", worst, 1e-12, start, "all 3! orders")


def check_dft_identity(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for top_k in (1, 2, 5):
        x = rng.standard_normal((3, 24, 4))
        enc = encode_dft(x, top_k).data
        worst = max(worst, max_rel(enc.sum(-1), x))
    return _result("trend + seasonal == input", worst, 1e-6, start)


def check_predictor_linearity(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    pred = Predictor(9, 4, rng)
    z1, z2 = rng.standard_normal((2, 2, 9, 3, 2))
    a, b = 1.7, -0.6
    lhs = pred(Tensor(a * z1 + b * z2)).data
    bias = pred.bias.data.reshape(1, -1, 1, 1)
    rhs = a * pred(Tensor(z1)).data + b * pred(Tensor(z2)).data + (1 - a - b) * bias
    return _result("predictor is affine", max_rel(lhs, rhs), 1e-12, start)


def check_normalize_roundtrip(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((50, 4)) * 3 + 7
    worst = 0.0
    for mode in ("trainsplit", "window"):
        z, stats = normalize(x, mode, train_rows=35) if mode == "trainsplit" else normalize(x[None], mode)
        back = denormalize(z, stats)
        worst = max(worst, max_rel(back.reshape(x.shape), x))
    return _result("denormalize(normalize(x)) == x", worst, 1e-6, start)


def check_checkpoint_roundtrip(seed: int = 0) -> PropertyResult:
    start = time.perf_counter()
    with ad.precision(32):
        model = ForecastModel(3, 12, 4, k=2, d=6, scales=(1, 3), seed=seed)
        state = model.state_dict()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.ckpt"
        save_checkpoint(path, state)
        back = load_checkpoint(path)
    mismatches = sum(
        int(k not in back or back[k].tobytes() != np.asarray(v, dtype="<f4").tobytes()) for k, v in state.items()
    )
    return _result("checkpoint round trip is bitwise", float(mismatches), 0.0, start, strict=True)


def check_model_gradients(seed: int = 0) -> PropertyResult:
    """End-to-end: encoder -> layer -> predictor -> decoder, every parameter group."""
    start = time.perf_counter()
    model = ForecastModel(3, 8, 4, k=2, d=4, dconv=3, scales=(1, 3), seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((2, 8, 3))
    y = rng.standard_normal((2, 4, 3))

    def loss():
        return ad.mean(ad.square(model(x) - y))

    res = check_gradients(loss, list(model.named_parameters()))
    worst = max(r["elementwise"] for r in res.values())
    name = max(res, key=lambda k: res[k]["elementwise"])
    return _result("model gradients vs finite differences", worst, 1e-4, start, f"{len(res)} groups, worst: {name}")


# ---------------------------------------------------------------------------


def suite(fault: bool = False) -> list[Callable[[], PropertyResult]]:
    return [
        check_matmul_oracle,
        check_softmax,
        check_conv_causality,
        check_op_gradients,
        check_scan_equivalence,
        check_scan_associativity,
        check_scan_adjoint,
        check_scan_stability,
        check_scan_determinism,
        lambda: check_route_lpe(fault=fault),
        lambda: check_route_rpi(fault=fault),
        check_route_weights,
        lambda: check_layer_lpe(fault=fault),
        lambda: check_layer_rpi(fault=fault),
        check_generalised_dynamics,
        check_linearisation,
        check_layer_gradients,
        check_encoder_rpi,
        check_fgd_invariance,
        check_dft_identity,
        check_predictor_linearity,
        check_normalize_roundtrip,
        check_checkpoint_roundtrip,
        check_model_gradients,
    ]


def run_all(fault: bool = False, echo: Callable[[str], None] | None = None) -> list[PropertyResult]:
    """Run every property at 64-bit; ``fault`` breaks the routers' row-wise contract."""
    results = []
    with ad.precision(64):
        for check in suite(fault):
            res = check()
            results.append(res)
            if echo is not None:
                echo(res.line())
    return results
