"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray
    probed: np.ndarray  # flat indices that were differenced

    def abs_errors(self) -> np.ndarray:
        return np.abs(self.analytic.reshape(-1)[self.probed] - self.numeric.reshape(-1)[self.probed])

    def __bool__(self) -> bool:
        return self.passed


def grad_check(
    f: Callable[[Tensor], Tensor],
    x,
    eps: float = 1e-5,
    tol: float = 1e-6,
    indices=None,
) -> GradCheckReport:
    """Compare ``f``'s analytic gradient at ``x`` with central differences.

    ``x`` is copied to float64. Relative error per element is
    ``|a - n| / max(|a|, |n|, 1e-8)``. ``indices`` optionally restricts the
    numeric probe to a subset of flat positions (large parameter tensors).
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(base.copy(), requires_grad=True)
    out = f(xt)
    out.backward()
    analytic = xt.grad if xt.grad is not None else np.zeros_like(base)

    flat = base.reshape(-1)
    probe = np.arange(flat.size) if indices is None else np.asarray(indices, dtype=np.int64).reshape(-1)
    numeric = np.zeros_like(flat)
    for i in probe:
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(base.copy())).item()
        flat[i] = orig - eps
        lo = f(Tensor(base.copy())).item()
        flat[i] = orig
        numeric[i] = (hi - lo) / (2 * eps)
    numeric = numeric.reshape(base.shape)

    a = analytic.reshape(-1)[probe]
    n = numeric.reshape(-1)[probe]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    err = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return GradCheckReport(err, err <= tol, analytic, numeric, probe)
