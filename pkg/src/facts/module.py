"""Parameter containers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor


class Module:
    """Base class for anything that owns trainable tensors.

    Parameters are discovered by walking instance attributes: tensors with
    ``requires_grad``, nested modules, and lists of modules.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def param(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return param(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    """Row-wise affine map on the last axis."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = uniform_init(rng, n_in, (n_in, n_out))
        self.bias = uniform_init(rng, n_in, (n_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias
