"""Focal loss with per-class weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..numcore import Tensor, ops

ALPHA_POLICIES = ("uniform", "inverse")


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha: tuple[float, ...] | None = None  # None means 1 for every class

    def check(self) -> "FocalConfig":
        if self.gamma < 0:
            raise ContractError(f"focal gamma must be >= 0, got {self.gamma}")
        if self.alpha is not None and any(a <= 0 for a in self.alpha):
            raise ContractError("focal alpha weights must be positive")
        return self


def class_weights(labels, num_classes: int, policy: str = "inverse") -> tuple[float, ...]:
    """Per-class alpha. ``inverse`` is 1/frequency rescaled to mean 1.

    A class absent from ``labels`` is counted once so its weight stays finite.
    """
    if policy == "uniform":
        return (1.0,) * num_classes
    if policy != "inverse":
        raise ContractError(f"unknown alpha policy {policy!r}; expected one of {ALPHA_POLICIES}")
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)[:num_classes]
    inv = 1.0 / np.maximum(counts, 1)
    return tuple(float(v) for v in inv / inv.mean())


def focal_loss(logits: Tensor, labels, cfg: FocalConfig = FocalConfig()) -> Tensor:
    """Mean of ``-alpha_y (1 - p_y)^gamma log p_y`` over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ContractError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    cfg.check()
    if cfg.alpha is not None and len(cfg.alpha) != k:
        raise ContractError(f"alpha has {len(cfg.alpha)} weights for {k} classes")
    p = ops.softmax(logits, axis=-1)
    p_y = p[np.arange(n), labels]
    loss = -ops.log(p_y)
    if cfg.gamma != 0:
        loss = loss * ops.power(1.0 - p_y, cfg.gamma)
    if cfg.alpha is not None:
        loss = loss * Tensor(np.asarray(cfg.alpha, dtype=logits.dtype)[labels])
    return loss.mean()
