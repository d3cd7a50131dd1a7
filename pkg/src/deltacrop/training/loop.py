"""Per-fold training: focal loss, Adadelta, best-epoch checkpointing and early stopping."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .. import datastore as ds
from ..errors import ContractError, LeakageError
from ..models import CnnConfig, Model, PseTaeConfig, load_checkpoint, save_checkpoint
from ..numcore import no_grad
from ..sampler import batch_indices, derive_seed
from .adadelta import AdadeltaState, adadelta_step
from .data import ChipInputs, Dataset, LabelMap, SequenceInputs
from .focal import FocalConfig, class_weights, focal_loss
from .metrics import F1Report, macro_f1, score


@dataclass(frozen=True)
class TrainConfig:
    model: str = "psetae"
    satellite: str = "L8"
    bands: str = "R+G+B"
    epochs: int = 100
    batch: int = 32
    seed: int = 0
    patience: int = 10
    gamma: float = 2.0
    alpha: str = "inverse"
    rho: float = 0.9
    eps: float = 1e-6
    metric: str = "macro"
    positive: str | None = None  # class scored by the binary metric
    t_max: int | None = None  # defaults to the sensor's maximum sequence length
    pixels: int | None = None  # defaults to the sensor's pixel-set size
    model_options: dict = field(default_factory=dict)

    def check(self) -> "TrainConfig":
        if self.model not in ("cnn", "psetae"):
            raise ContractError(f"model must be cnn or psetae, got {self.model!r}")
        if self.epochs < 1 or self.batch < 1:
            raise ContractError("epochs and batch size must be at least 1")
        if self.patience < 1:
            raise ContractError("patience must be at least 1")
        if self.metric == "binary" and self.positive is None:
            raise ContractError("the binary metric needs a positive class")
        ds.get_sensor(self.satellite)
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown training options {sorted(unknown)}")
        return cls(**d)

    @property
    def sensor(self) -> ds.SensorSpec:
        return ds.get_sensor(self.satellite)

    @property
    def sequence_length(self) -> int:
        return self.t_max or self.sensor.max_seq_len

    @property
    def pixel_count(self) -> int:
        return self.pixels or self.sensor.pixel_set_size


@dataclass
class FoldResult:
    model: Model
    stats: ds.BandStats
    labels: LabelMap
    config: TrainConfig
    best_epoch: int
    best_f1: float | None
    history: list[dict]
    train_parcels: list[str]
    val_parcels: list[str]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "config": self.model.config_json(),
            "train_config": self.config.to_json(),
            "seed": self.config.seed,
            "epoch": self.best_epoch,
            "metrics": {"val_f1": self.best_f1},
            "band_stats": self.stats.to_json(),
            "labels": list(self.labels.names),
            "train_parcels": self.train_parcels,
            "val_parcels": self.val_parcels,
        }

    def save(self, directory) -> Path:
        arrays = dict(self.model.params.arrays())
        arrays.update(self.optimizer)
        return save_checkpoint(directory, arrays, self.metadata())


def check_disjoint(train: list[str], other: list[str], what: str = "validation") -> None:
    shared = sorted(set(train) & set(other))
    if shared:
        raise LeakageError(f"{len(shared)} parcel(s) in both training and {what} sets: {', '.join(shared[:5])}")


def build_model(cfg: TrainConfig, in_bands: int, num_classes: int) -> Model:
    sensor = cfg.sensor
    opts = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.model_options.items()}
    if cfg.model == "cnn":
        h, w = sensor.chip
        mc = CnnConfig(in_channels=in_bands, num_classes=num_classes, height=h, width=w, **opts)
    else:
        mc = PseTaeConfig(in_bands=in_bands, num_classes=num_classes, t_max=cfg.sequence_length, **opts).check()
    return Model.build(cfg.model, mc, seed=derive_seed(cfg.seed, "init"))


def make_inputs(cfg: TrainConfig, data: Dataset, stats: ds.BandStats):
    if cfg.model == "cnn":
        h, w = cfg.sensor.chip
        return ChipInputs(data, stats, h, w)
    return SequenceInputs(data, stats, cfg.sequence_length, cfg.pixel_count, cfg.seed)


def predict(model: Model, inputs, chunk: int = 256) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(inputs), chunk):
            idx = np.arange(start, min(start + chunk, len(inputs)))
            out.append(np.argmax(model(inputs.batch(idx)).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def _score(cfg: TrainConfig, labels: LabelMap, preds: np.ndarray, truth: np.ndarray) -> float:
    positive = labels.index(cfg.positive) if cfg.positive is not None else 0
    return score(preds, truth, len(labels), cfg.metric, positive)


def _write_json(path: Path, obj) -> None:
    ds.atomic_write_bytes(path, (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode("utf-8"))


def train_fold(
    train: Dataset,
    val: Dataset | None,
    cfg: TrainConfig,
    out_dir=None,
    monitor_train: bool = False,
    stop_at: float | None = None,
) -> FoldResult:
    """Train one model.

    With a validation set the best-scoring epoch is kept and training stops
    after ``patience`` epochs without improvement. Without one, the last
    epoch is kept, unless ``monitor_train`` asks for the training set to be
    scored (with fixed pixel draws) in its place. ``stop_at`` ends training
    as soon as the monitored score reaches that value.
    """
    cfg.check()
    if train.satellite != cfg.satellite or (val is not None and val.satellite != cfg.satellite):
        raise ContractError(f"datasets do not match the configured satellite {cfg.satellite}")
    val_parcels = val.parcels if val is not None else []
    check_disjoint(train.parcels, val_parcels)
    if not len(train):
        raise ContractError("training set is empty")

    combo = ds.parse_band_combination(cfg.bands, cfg.sensor)
    train = train.select(combo)
    stats = ds.fit_band_stats(train.stacks)
    train_in = make_inputs(cfg, train, stats)
    monitor = None
    if val is not None:
        monitor = make_inputs(cfg, val.select(combo), stats)
    elif monitor_train:
        monitor = train_in

    k = len(train.labels)
    model = build_model(cfg, len(combo), k)
    focal = FocalConfig(cfg.gamma, class_weights(train_in.labels, k, cfg.alpha)).check()
    state = AdadeltaState(cfg.rho, cfg.eps)
    params = model.params

    history: list[dict] = []
    best = (-1.0, 0, params.copy(), {})
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        for idx in batch_indices(len(train_in), cfg.batch, derive_seed(cfg.seed, "shuffle", epoch)):
            batch = train_in.batch(idx, epoch)
            params.zero_grad()
            loss = focal_loss(model(batch), batch.labels, focal)
            loss.backward()
            adadelta_step(params, {n: t.grad for n, t in params.items()}, state)
            total += loss.item() * len(idx)
            seen += len(idx)
        row = {"epoch": epoch, "train_loss": total / seen}
        if monitor is not None:
            f1 = _score(cfg, train.labels, predict(model, monitor), monitor.labels)
            row["val_f1" if val is not None else "train_f1"] = f1
            if f1 > best[0]:
                best = (f1, epoch, params.copy(), {k2: v.copy() for k2, v in state.arrays().items()})
        history.append(row)
        if monitor is not None:
            if stop_at is not None and best[0] >= stop_at:
                break
            if epoch - best[1] >= cfg.patience:
                break

    if monitor is None:
        best = (None, len(history), params, state.arrays())
    f1, best_epoch, best_params, opt = best
    result = FoldResult(model.with_params(best_params), stats, train.labels, cfg, best_epoch, f1, history,
                        train.parcels, val_parcels, opt)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg.to_json())
        lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in history)
        ds.atomic_write_bytes(out / "metrics.jsonl", lines.encode("utf-8"))
        result.save(out / "checkpoint")
    return result


def evaluate(result: FoldResult, data: Dataset) -> tuple[F1Report, float]:
    """Score a trained model on ``data``: full F1 report plus the configured headline metric."""
    check_disjoint(result.train_parcels, data.parcels, "evaluation")
    cfg = result.config
    combo = ds.BandCombination(result.stats.bands)
    inputs = make_inputs(cfg, data.select(combo), result.stats)
    preds = predict(result.model, inputs)
    report = macro_f1(preds, inputs.labels, len(result.labels))
    return report, _score(cfg, result.labels, preds, inputs.labels)


def load_result(directory) -> FoldResult:
    """Rebuild a :class:`FoldResult` from a checkpoint directory written by ``train_fold``."""
    arrays, meta = load_checkpoint(directory)
    weights = {k: v for k, v in arrays.items() if not k.startswith("adadelta.")}
    opt = {k: v for k, v in arrays.items() if k.startswith("adadelta.")}
    model = Model.from_config_json(meta["config"], weights)
    cfg = TrainConfig.from_json(meta["train_config"])
    return FoldResult(model, ds.BandStats.from_json(meta["band_stats"]), LabelMap(tuple(meta["labels"])), cfg,
                      meta["epoch"], meta["metrics"].get("val_f1"), [], meta["train_parcels"],
                      meta["val_parcels"], opt)


def retrain_config(cfg: TrainConfig, epochs: int) -> TrainConfig:
    return replace(cfg, epochs=max(1, epochs))
