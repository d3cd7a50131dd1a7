"""Classifier families: a residual CNN for single chips and PSE-TAE for sequences."""

from __future__ import annotations

import numpy as np

from .checkpoint import decode_tensors, encode_tensors, load_checkpoint, save_checkpoint
from .cnn import CnnConfig, cnn_forward, init_cnn
from .params import ParameterSet, check_parameter_gradients, kaiming_uniform
from .psetae import (
    PseTaeConfig,
    TaeOutput,
    init_psetae,
    positional_encoding,
    pse_forward,
    psetae_forward,
    tae_forward,
)


class Model:
    """A config plus its parameters, dispatching to the right forward pass."""

    def __init__(self, kind: str, config, params: ParameterSet):
        if kind not in ("cnn", "psetae"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.config = config
        self.params = params

    @classmethod
    def build(cls, kind: str, config, seed: int, dtype=np.float32) -> "Model":
        init = init_cnn if kind == "cnn" else init_psetae
        return cls(kind, config, init(config, seed, dtype))

    def __call__(self, batch):
        if self.kind == "cnn":
            return cnn_forward(batch.x, self.params, self.config)
        return psetae_forward(batch, self.params, self.config.heads)

    def with_params(self, params: ParameterSet) -> "Model":
        return Model(self.kind, self.config, params)

    def config_json(self) -> dict:
        return {"kind": self.kind, **self.config.to_json()}

    @classmethod
    def from_config_json(cls, d: dict, arrays: dict[str, np.ndarray] | None = None) -> "Model":
        d = dict(d)
        kind = d.pop("kind")
        cfg = CnnConfig.from_json(d) if kind == "cnn" else PseTaeConfig.from_json(d)
        model = cls.build(kind, cfg, seed=0)
        if arrays is not None:
            model.params.load_arrays(arrays)
        return model


__all__ = [
    "CnnConfig",
    "Model",
    "ParameterSet",
    "PseTaeConfig",
    "TaeOutput",
    "check_parameter_gradients",
    "cnn_forward",
    "decode_tensors",
    "encode_tensors",
    "init_cnn",
    "init_psetae",
    "kaiming_uniform",
    "load_checkpoint",
    "positional_encoding",
    "pse_forward",
    "psetae_forward",
    "save_checkpoint",
    "tae_forward",
]
