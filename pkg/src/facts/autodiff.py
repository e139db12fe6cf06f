"""Dense tensors and a tape-based reverse-mode differentiator.

Only the operations needed by the layer stack are provided. Operations are
recorded onto the active :class:`Tape` (see ``with Tape() as tape:``) when at
least one input requires gradients; outside a tape nothing is recorded and
evaluation is a plain numpy computation.

Broadcasting follows numpy's trailing-axis rules. Every op checks its output
for NaN/Inf and raises :class:`NonFiniteError` naming the op.
"""

from __future__ import annotations

import contextlib
import threading
import weakref
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, NonFiniteError

_DTYPES = {32: np.float32, 64: np.float64}
_precision = {"dtype": np.float32}
_local = threading.local()


def set_precision(bits: int) -> None:
    """Select the run-wide float width (32 or 64)."""
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    _precision["dtype"] = _DTYPES[bits]


def get_dtype():
    return _precision["dtype"]


@contextlib.contextmanager
def precision(bits: int):
    """Temporarily switch the run-wide float width."""
    old = _precision["dtype"]
    set_precision(bits)
    try:
        yield
    finally:
        _precision["dtype"] = old


class Tensor:
    """Immutable n-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=get_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


class Node:
    """One recorded operation: output, inputs and the local vector-Jacobian product."""

    __slots__ = ("op", "inputs", "_output", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, vjp: Callable):
        self.op = op
        self.inputs = inputs
        # weak, so output -> node -> output is not a cycle and arrays free on refcount
        self._output = weakref.ref(output)
        self.vjp = vjp

    @property
    def output(self) -> Tensor | None:
        return self._output()


class Tape:
    """Ordered record of operations for one evaluation context.

    Nodes are appended in execution order, which is a topological order.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor, leaves: Sequence[Tensor] | None = None):
        return backward(self, loss, leaves)


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_record():
    """Suspend recording (e.g. for evaluation inside a training tape)."""
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def backward(tape: Tape, loss: Tensor, leaves: Sequence[Tensor] | None = None):
    """Reverse sweep over ``tape`` seeded with d(loss)/d(loss) = 1.

    Gradients accumulate (sum) into ``leaf.grad`` for every trainable leaf
    reached. If ``leaves`` is given, a list of gradients aligned with it is
    returned; leaves the loss does not depend on get zeros.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None and not loss.requires_grad:
        raise ContractError("loss is not on the tape")
    if loss._node is not None and (not tape.nodes or loss._node not in _tail(tape, loss)):
        raise ContractError("loss was recorded on a different tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict[int, tuple[Tensor, np.ndarray]] = {}

    for node in reversed(tape.nodes):
        out = node.output
        if out is None:
            continue
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for inp, gi in zip(node.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            gi = _unbroadcast(gi, inp.shape)
            if inp._node is None:
                prev = leaf_grads.get(id(inp))
                leaf_grads[id(inp)] = (inp, gi if prev is None else prev[1] + gi)
            else:
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi

    if loss._node is None:
        leaf_grads[id(loss)] = (loss, np.ones_like(loss.data))

    for leaf, g in leaf_grads.values():
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g

    if leaves is None:
        return None
    out = []
    for leaf in leaves:
        hit = leaf_grads.get(id(leaf))
        out.append(np.zeros_like(leaf.data) if hit is None else hit[1])
    return out


def _tail(tape: Tape, loss: Tensor):
    # the loss node is almost always last; avoid an O(n) scan in that case
    if tape.nodes and tape.nodes[-1] is loss._node:
        return (loss._node,)
    return tape.nodes


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(op: str, data: np.ndarray) -> None:
    if not np.isfinite(data).all():
        bad = "NaN" if np.isnan(data).any() else "Inf"
        raise NonFiniteError(f"{op} produced {bad} (output shape {data.shape})")


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    _check_finite(op, data)
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=get_dtype())
    out.grad = None
    out.name = None
    out._node = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape = current_tape()
        if tape is not None:
            node = Node(op, inputs, out, vjp)
            out._node = node
            tape.record(node)
    return out


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# ----------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return _emit("div", out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def exp(a) -> Tensor:
    a = as_tensor(a)
    # overflow surfaces as NonFiniteError from _emit
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _emit("softplus", out, (a,), lambda g: (g * _sigmoid(a.data),))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s
    return _emit("silu", out, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _emit("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


# ----------------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _emit("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _emit("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    return _emit("swapaxes", np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def take(a, index, axis: int) -> Tensor:
    """Gather along ``axis`` (used for row permutations)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    ax = axis % a.ndim

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, ax, 0), index, np.moveaxis(g, ax, 0))
        return (full,)

    return _emit("take", np.take(a.data, index, axis=ax), (a,), vjp)


def split(a, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    a = as_tensor(a)
    ax = axis % a.ndim
    if sum(sizes) != a.shape[ax]:
        raise DimensionError(f"split: sizes {list(sizes)} do not cover axis of length {a.shape[ax]}")
    pieces = []
    start = 0
    for n in sizes:
        sl = [slice(None)] * a.ndim
        sl[ax] = slice(start, start + n)
        sl = tuple(sl)

        def vjp(g, sl=sl):
            full = np.zeros_like(a.data)
            full[sl] = g
            return (full,)

        pieces.append(_emit("split", a.data[sl], (a,), vjp))
        start += n
    return pieces


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", out, tensors, vjp)


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes; batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None
    out = np.matmul(a.data, b.data)

    def vjp(g):
        return (np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _emit("matmul", out, (a, b), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DimensionError(f"softmax: empty axis {axis} in shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), vjp)


def softmax_lastaxis(a) -> Tensor:
    return softmax(a, axis=-1)


def causal_temporal_conv(x, kernel) -> Tensor:
    """Causal convolution along axis 1 with left zero padding.

    ``x`` has shape (B, t, ..., c) and ``kernel`` (w, c, c_out); output step
    ``s`` sees inputs ``s-w+1 .. s`` only. Extra axes between time and
    channels are treated independently (e.g. feature rows).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise DimensionError(f"causal_temporal_conv: kernel must be (w, c, c_out), got {kernel.shape}")
    w = kernel.shape[0]
    if w < 1:
        raise ConfigError("causal_temporal_conv: kernel width must be >= 1")
    if x.ndim < 3 or x.shape[-1] != kernel.shape[1]:
        raise DimensionError(f"causal_temporal_conv: input {x.shape} vs kernel {kernel.shape}")
    t = x.shape[1]
    pad = [(0, 0)] * x.ndim
    pad[1] = (w - 1, 0)
    xp = np.pad(x.data, pad)
    K = kernel.data
    out = np.matmul(xp[:, 0:t], K[0])
    for j in range(1, w):
        out = out + np.matmul(xp[:, j : j + t], K[j])

    def vjp(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(K)
        lead = g.shape[:-1]
        g2 = g.reshape(-1, g.shape[-1])
        for j in range(w):
            win = xp[:, j : j + t]
            gk[j] = win.reshape(-1, win.shape[-1]).T @ g2
            gxp[:, j : j + t] += np.matmul(g, K[j].T).reshape(lead + (K.shape[1],))
        return gxp[:, w - 1 :], gk

    return _emit("causal_temporal_conv", out, (x, kernel), vjp)


def apply_op(op: str, data: np.ndarray, inputs: Iterable[Tensor], vjp: Callable) -> Tensor:
    """Register a custom differentiable op (used by the scan kernels)."""
    return _emit(op, data, tuple(inputs), vjp)
