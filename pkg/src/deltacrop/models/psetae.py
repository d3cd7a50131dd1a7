"""Pixel-set encoder + temporal attention encoder.

The pixel-set encoder applies a shared MLP to every sampled pixel, pools the
set with mean and standard deviation (both symmetric in pixel order) and maps
the pooled vector through a second MLP. The temporal encoder adds a sinusoidal
encoding of each step's *sequence index*, derives keys and values per head,
averages the valid queries into a single master query, and attends over the
valid steps only. Head outputs are concatenated and decoded to logits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError, DimensionError
from ..numcore import Tensor, ops
from .params import ParameterSet


@dataclass(frozen=True)
class PseTaeConfig:
    in_bands: int
    num_classes: int
    mlp1: tuple[int, ...] = (32, 64)
    mlp2: tuple[int, ...] = (128,)
    d_model: int = 128
    heads: int = 4
    d_k: int = 32
    mlp3: tuple[int, ...] = (128,)
    decoder: tuple[int, ...] = (64, 32)
    t_max: int = 41

    def check(self) -> "PseTaeConfig":
        if self.heads * self.d_k != self.d_model:
            raise ContractError(f"heads·d_k = {self.heads * self.d_k} must equal d_model = {self.d_model}")
        if self.mlp2[-1] != self.d_model:
            raise ContractError("pixel-set encoder output width must equal d_model")
        if self.d_model % 2:
            raise ContractError("d_model must be even for the sinusoidal encoding")
        return self

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d: dict) -> "PseTaeConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def positional_encoding(position, d_model: int) -> np.ndarray:
    """Sinusoidal encoding; ``position`` may be an int or an integer array."""
    if d_model % 2:
        raise ContractError(f"d_model must be even, got {d_model}")
    pos = np.asarray(position, dtype=np.float64)[..., None]
    i = np.arange(d_model // 2)
    angle = pos / np.power(10000.0, 2 * i / d_model)
    out = np.empty(pos.shape[:-1] + (d_model,))
    out[..., 0::2] = np.sin(angle)
    out[..., 1::2] = np.cos(angle)
    return out


def init_psetae(cfg: PseTaeConfig, seed: int, dtype=np.float32) -> ParameterSet:
    cfg.check()
    rng = np.random.default_rng(seed)
    p = ParameterSet(dtype)

    def mlp(prefix: str, dims: tuple[int, ...], width: int) -> int:
        for i, out in enumerate(dims):
            p.weight(f"{prefix}.{i}.w", (out, width), width, rng)
            p.zeros(f"{prefix}.{i}.b", (out,))
            width = out
        return width

    width = mlp("pse.mlp1", cfg.mlp1, cfg.in_bands)
    mlp("pse.mlp2", cfg.mlp2, 2 * width)
    hk = cfg.heads * cfg.d_k
    for name in ("q", "k", "v"):
        p.weight(f"tae.{name}.w", (hk, cfg.d_model), cfg.d_model, rng)
        # a key bias shifts every score of a head equally and softmax cancels it
        if name != "k":
            p.zeros(f"tae.{name}.b", (hk,))
    width = mlp("tae.mlp3", cfg.mlp3, hk)
    width = mlp("dec", cfg.decoder, width)
    p.weight("dec.out.w", (cfg.num_classes, width), width, rng)
    p.zeros("dec.out.b", (cfg.num_classes,))
    return p


def _mlp(x: Tensor, p: ParameterSet, prefix: str) -> Tensor:
    i = 0
    while f"{prefix}.{i}.w" in p:
        x = ops.relu(ops.linear(x, p[f"{prefix}.{i}.w"], p[f"{prefix}.{i}.b"]))
        i += 1
    return x


def pse_forward(pixels, params: ParameterSet) -> Tensor:
    """Embeddings (N, T, d) from pixel sets shaped (N, T, n, B)."""
    x = pixels if isinstance(pixels, Tensor) else Tensor(np.asarray(pixels, dtype=params.dtype))
    if x.ndim != 4:
        raise DimensionError(f"pse_forward expects N×T×n×B pixel sets, got {x.shape}")
    if x.shape[2] == 0:
        raise ContractError("pixel sets must contain at least one pixel")
    b_in = params["pse.mlp1.0.w"].shape[1]
    if x.shape[3] != b_in:
        raise DimensionError(f"pse_forward: pixels have {x.shape[3]} bands, model expects {b_in}")
    h = _mlp(x, params, "pse.mlp1")
    pooled = ops.concat([h.mean(axis=2), ops.std(h, axis=2)], axis=-1)
    return _mlp(pooled, params, "pse.mlp2")


@dataclass
class TaeOutput:
    logits: Tensor
    attention: np.ndarray  # (N, heads, T)


def tae_forward(embeddings: Tensor, mask, positions, params: ParameterSet, heads: int) -> TaeOutput:
    n, t, d = embeddings.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, t):
        raise DimensionError(f"mask shape {mask.shape} does not match embeddings {embeddings.shape}")
    lengths = mask.sum(axis=1)
    if (lengths == 0).any():
        raise ContractError("every sample needs at least one valid time step")
    pe = positional_encoding(np.asarray(positions), d).astype(params.dtype)
    e = embeddings + Tensor(pe)
    hk = params["tae.q.w"].shape[0]
    d_k = hk // heads
    q = ops.linear(e, params["tae.q.w"], params["tae.q.b"]).reshape(n, t, heads, d_k)
    k = ops.linear(e, params["tae.k.w"]).reshape(n, t, heads, d_k)
    v = ops.linear(e, params["tae.v.w"], params["tae.v.b"]).reshape(n, t, heads, d_k)
    w = (mask / lengths[:, None]).astype(params.dtype)[:, :, None, None]
    master = (q * Tensor(w)).sum(axis=1)  # (n, heads, d_k)
    keys = k.transpose(0, 2, 1, 3)  # (n, heads, t, d_k)
    scores = (keys @ master.reshape(n, heads, d_k, 1)).reshape(n, heads, t) * (1.0 / math.sqrt(d_k))
    attn = ops.masked_softmax(scores, mask[:, None, :], axis=-1)
    values = v.transpose(0, 2, 1, 3)  # (n, heads, t, d_k)
    out = (attn.reshape(n, heads, 1, t) @ values).reshape(n, heads * d_k)
    z = _mlp(out, params, "tae.mlp3")
    z = _mlp(z, params, "dec")
    logits = ops.linear(z, params["dec.out.w"], params["dec.out.b"])
    return TaeOutput(logits, attn.data)


def psetae_forward(batch, params: ParameterSet, heads: int = 4, return_attention: bool = False):
    """Logits for a :class:`~deltacrop.sampler.SampleBatch` of pixel-set sequences."""
    x = batch.x
    if batch.mask is None or batch.positions is None:
        raise ContractError("sequence batches need mask and positions")
    emb = pse_forward(x, params)
    out = tae_forward(emb, batch.mask, batch.positions, params, heads)
    return out if return_attention else out.logits
