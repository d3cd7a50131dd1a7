"""Adadelta: step sizes from decayed averages of squared gradients and updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


class DivergenceError(ContractError):
    """A gradient contained NaN or infinity, so training cannot continue."""


@dataclass
class AdadeltaState:
    rho: float = 0.9
    eps: float = 1e-6
    eg2: dict[str, np.ndarray] = field(default_factory=dict)
    edx2: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ContractError(f"rho must lie in [0, 1), got {self.rho}")
        if self.eps <= 0:
            raise ContractError(f"eps must be positive, got {self.eps}")

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"adadelta.eg2.{k}": v for k, v in self.eg2.items()}
        out.update({f"adadelta.edx2.{k}": v for k, v in self.edx2.items()})
        return out


def adadelta_step(params, grads: dict[str, np.ndarray], state: AdadeltaState) -> dict[str, np.ndarray]:
    """Update every tensor in ``params`` in place and return the applied deltas.

    ``params`` maps names to tensors (a ParameterSet works). Nothing is
    modified if any gradient is non-finite.
    """
    bad = {k: int((~np.isfinite(g)).sum()) for k, g in grads.items() if not np.isfinite(g).all()}
    if bad:
        detail = ", ".join(f"{k} ({c} values)" for k, c in sorted(bad.items()))
        raise DivergenceError(f"non-finite gradient at step {state.steps + 1}: {detail}")
    rho, eps = state.rho, state.eps
    deltas = {}
    for name, g in grads.items():
        x = params[name]
        if g.shape != x.data.shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != parameter shape {x.data.shape}")
        eg2 = state.eg2.get(name)
        if eg2 is None:
            eg2 = state.eg2[name] = np.zeros_like(x.data)
            state.edx2[name] = np.zeros_like(x.data)
        edx2 = state.edx2[name]
        eg2 *= rho
        eg2 += (1 - rho) * g * g
        dx = -(np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps)) * g
        edx2 *= rho
        edx2 += (1 - rho) * dx * dx
        x.data = (x.data + dx).astype(x.data.dtype)
        deltas[name] = dx
    state.steps += 1
    return deltas
