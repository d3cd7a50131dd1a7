"""Named parameter storage and initialisation."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from ..errors import ContractError
from ..numcore import Tensor


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParameterSet:
    """Ordered name → Tensor mapping with an initialisation record per tensor."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.tensors: dict[str, Tensor] = {}
        self.init: dict[str, str] = {}

    def add(self, name: str, value: np.ndarray, how: str) -> Tensor:
        if name in self.tensors:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self.tensors[name] = t
        self.init[name] = how
        return t

    def weight(self, name: str, shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> Tensor:
        return self.add(name, kaiming_uniform(shape, fan_in, rng), f"kaiming_uniform(fan_in={fan_in})")

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape), "zeros")

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.ones(shape), "ones")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def copy(self, dtype=None) -> "ParameterSet":
        out = ParameterSet(dtype or self.dtype)
        for k, t in self.tensors.items():
            out.add(k, t.data.copy(), self.init[k])
        return out

    def replace(self, name: str, tensor: Tensor) -> "ParameterSet":
        """Shallow copy with one tensor swapped (used by gradient checks)."""
        out = ParameterSet(self.dtype)
        out.tensors = dict(self.tensors)
        out.init = dict(self.init)
        out.tensors[name] = tensor
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.tensors):
            raise ContractError(
                f"parameter names differ: missing {sorted(set(self.tensors) - set(arrays))}, "
                f"unexpected {sorted(set(arrays) - set(self.tensors))}"
            )
        for k, arr in arrays.items():
            if arr.shape != self.tensors[k].shape:
                raise ContractError(f"{k}: shape {arr.shape} != {self.tensors[k].shape}")
            self.tensors[k].data = np.asarray(arr, dtype=self.dtype).copy()


def check_parameter_gradients(
    params: ParameterSet,
    objective,
    eps: float = 1e-5,
    tol: float = 1e-5,
    max_probe: int = 256,
    seed: int = 0,
) -> dict:
    """Finite-difference check of ``objective(params)`` against every tensor.

    Tensors larger than ``max_probe`` elements are probed at a fixed, seeded
    random subset of positions so a full-model check stays fast.
    """
    from ..numcore import grad_check

    rng = np.random.default_rng(seed)
    reports = {}
    for name in params.names():
        size = params[name].size
        idx = None if size <= max_probe else np.sort(rng.choice(size, max_probe, replace=False))
        reports[name] = grad_check(lambda w, name=name: objective(params.replace(name, w)),
                                   params[name].data, eps=eps, tol=tol, indices=idx)
    return reports
