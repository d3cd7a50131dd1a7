"""Small residual CNN for single-date chips.

Stem conv → two residual blocks (32→32, 32→64) → global average pool →
two fully connected layers. Every convolution is 3×3, stride 1, padding 1, so
3×3 Landsat chips keep their full extent through the network. Batch
normalisation is replaced by a learnable per-channel scale and shift.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionError
from ..numcore import Tensor, ops
from .params import ParameterSet


@dataclass(frozen=True)
class CnnConfig:
    in_channels: int
    num_classes: int
    height: int = 3
    width: int = 3
    stem: int = 32
    block_widths: tuple[int, int] = (32, 64)
    head: int = 32

    def to_json(self) -> dict:
        d = asdict(self)
        d["block_widths"] = list(self.block_widths)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CnnConfig":
        d = dict(d)
        d["block_widths"] = tuple(d["block_widths"])
        return cls(**d)


def init_cnn(cfg: CnnConfig, seed: int, dtype=np.float32) -> ParameterSet:
    rng = np.random.default_rng(seed)
    p = ParameterSet(dtype)
    p.weight("stem.w", (cfg.stem, cfg.in_channels, 3, 3), cfg.in_channels * 9, rng)
    p.zeros("stem.b", (cfg.stem,))
    width = cfg.stem
    for i, out in enumerate(cfg.block_widths, 1):
        pre = f"block{i}"
        p.weight(f"{pre}.conv1.w", (out, width, 3, 3), width * 9, rng)
        p.ones(f"{pre}.scale1", (out,))
        p.zeros(f"{pre}.shift1", (out,))
        p.weight(f"{pre}.conv2.w", (out, out, 3, 3), out * 9, rng)
        p.ones(f"{pre}.scale2", (out,))
        p.zeros(f"{pre}.shift2", (out,))
        if out != width:
            p.weight(f"{pre}.proj.w", (out, width, 1, 1), width, rng)
        width = out
    p.weight("fc1.w", (cfg.head, width), width, rng)
    p.zeros("fc1.b", (cfg.head,))
    p.weight("fc2.w", (cfg.num_classes, cfg.head), cfg.head, rng)
    p.zeros("fc2.b", (cfg.num_classes,))
    return p


def _channel_affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    return x * scale.reshape(1, -1, 1, 1) + shift.reshape(1, -1, 1, 1)


def _block(x: Tensor, p: ParameterSet, pre: str) -> Tensor:
    h = ops.conv2d(x, p[f"{pre}.conv1.w"], padding=1)
    h = ops.relu(_channel_affine(h, p[f"{pre}.scale1"], p[f"{pre}.shift1"]))
    h = ops.conv2d(h, p[f"{pre}.conv2.w"], padding=1)
    h = _channel_affine(h, p[f"{pre}.scale2"], p[f"{pre}.shift2"])
    skip = ops.conv2d(x, p[f"{pre}.proj.w"]) if f"{pre}.proj.w" in p else x
    return ops.relu(h + skip)


def cnn_forward(chips, params: ParameterSet, cfg: CnnConfig | None = None) -> Tensor:
    """Logits (N, K) for chips shaped (N, C_in, H, W)."""
    x = chips if isinstance(chips, Tensor) else Tensor(np.asarray(chips, dtype=params.dtype))
    if x.ndim != 4:
        raise DimensionError(f"cnn_forward expects N×C×H×W chips, got {x.shape}")
    if cfg is not None and x.shape[2:] != (cfg.height, cfg.width):
        raise DimensionError(f"cnn_forward: chips are {x.shape[2]}×{x.shape[3]}, model was built for {cfg.height}×{cfg.width}")
    c_in = params["stem.w"].shape[1]
    if x.shape[1] != c_in:
        raise DimensionError(f"cnn_forward: chips have {x.shape[1]} channels, model expects {c_in}")
    h = ops.conv2d(x, params["stem.w"], padding=1) + params["stem.b"].reshape(1, -1, 1, 1)
    h = ops.relu(h)
    i = 1
    while f"block{i}.conv1.w" in params:
        h = _block(h, params, f"block{i}")
        i += 1
    pooled = h.mean(axis=(2, 3))
    z = ops.relu(ops.linear(pooled, params["fc1.w"], params["fc1.b"]))
    return ops.linear(z, params["fc2.w"], params["fc2.b"])
