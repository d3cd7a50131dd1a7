"""In-memory datasets and the model-ready inputs derived from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .. import datastore as ds
from ..errors import ContractError, SchemaError
from ..sampler import SampleBatch, assemble_sequence, derive_seed, group_series


@dataclass(frozen=True)
class LabelMap:
    names: tuple[str, ...]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"label {name!r} is not one of {list(self.names)}") from None

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelMap":
        return cls(tuple(sorted(set(labels))))


class Dataset:
    """Band stacks of a single satellite, sorted by (parcel, date)."""

    def __init__(self, satellite: str, stacks: Sequence[ds.BandStack], labels: LabelMap):
        self.satellite = satellite
        self.sensor = ds.get_sensor(satellite)
        self.labels = labels
        self.stacks = sorted(stacks, key=lambda s: (s.parcel_id, s.date))
        for s in self.stacks:
            if s.satellite != satellite:
                raise ContractError(f"stack {s.parcel_id}@{s.date} is {s.satellite}, dataset is {satellite}")
            if s.label is None:
                raise ContractError(f"stack {s.parcel_id}@{s.date} carries no label")
        self.parcel_label = {}
        for s in self.stacks:
            if self.parcel_label.setdefault(s.parcel_id, s.label) != s.label:
                raise SchemaError(f"parcel {s.parcel_id} carries two labels")

    @classmethod
    def from_records(
        cls,
        records: Sequence[ds.ManifestRecord],
        satellite: str,
        labels: LabelMap | None = None,
        window: ds.DateWindow | None = None,
    ) -> "Dataset":
        recs = ds.filter_manifest(records, satellite=satellite, window=window)
        if labels is None:
            # label indices come from the whole manifest so every fold agrees on K
            labels = LabelMap.from_labels(r.label for r in records)
        stacks = []
        for r in recs:
            s = ds.load_stack(r)
            if s.label is None:
                s.label = r.label
            stacks.append(s)
        return cls(satellite, stacks, labels)

    @property
    def parcels(self) -> list[str]:
        return sorted(self.parcel_label)

    def __len__(self) -> int:
        return len(self.stacks)

    def subset(self, parcels: Iterable[str]) -> "Dataset":
        keep = set(parcels)
        return Dataset(self.satellite, [s for s in self.stacks if s.parcel_id in keep], self.labels)

    def select(self, combo: ds.BandCombination) -> "Dataset":
        return Dataset(self.satellite, [ds.select_bands(s, combo) for s in self.stacks], self.labels)

    def label_of(self, parcel_id: str) -> int:
        return self.labels.index(self.parcel_label[parcel_id])


def _normalized(stack: ds.BandStack, stats: ds.BandStats) -> ds.BandStack:
    if stack.bands != stats.bands:
        raise ContractError(f"stack bands {stack.bands} do not match statistics {stats.bands}")
    return ds.BandStack(stack.parcel_id, stack.satellite, stack.date, stack.season_id, stack.bands,
                        stats.normalize(stack.data, axis=0), stack.label)


class ChipInputs:
    """One sample per image: normalised chips resized to the sensor's average size."""

    kind = "cnn"

    def __init__(self, data: Dataset, stats: ds.BandStats, height: int, width: int):
        chips, labels, pids = [], [], []
        for s in data.stacks:
            chips.append(ds.resize_array(_normalized(s, stats).data, height, width))
            labels.append(data.label_of(s.parcel_id))
            pids.append(s.parcel_id)
        b = len(stats.bands)
        self.x = np.stack(chips).astype(np.float32) if chips else np.zeros((0, b, height, width), np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.parcel_ids = pids

    def __len__(self) -> int:
        return len(self.labels)

    def batch(self, idx: np.ndarray, epoch: int | None = None) -> SampleBatch:
        return SampleBatch(x=self.x[idx], labels=self.labels[idx], parcel_ids=[self.parcel_ids[i] for i in idx])


class SequenceInputs:
    """One sample per parcel-season: a padded sequence of pixel sets.

    ``batch(idx, epoch)`` draws fresh pixel sets for that epoch; ``epoch=None``
    reuses one fixed draw, which is how validation and test sets are scored.
    """

    kind = "psetae"

    def __init__(self, data: Dataset, stats: ds.BandStats, t_max: int, pixels: int, seed: int):
        self.t_max = t_max
        self.pixels = pixels
        self.seed = seed
        self.series = []
        for (pid, _season, _sat), stacks in group_series(_normalized(s, stats) for s in data.stacks).items():
            self.series.append((pid, stacks))
        self.labels = np.asarray([data.label_of(pid) for pid, _ in self.series], dtype=np.int64)
        self._fixed: SampleBatch | None = None

    def __len__(self) -> int:
        return len(self.series)

    @property
    def parcel_ids(self) -> list[str]:
        return [pid for pid, _ in self.series]

    def _assemble(self, idx, seed: int, epoch: int) -> SampleBatch:
        samples = [assemble_sequence(self.series[i][1], self.t_max, self.pixels, seed, int(self.labels[i]), epoch)
                   for i in idx]
        batch = SampleBatch(
            x=np.stack([s.values for s in samples]),
            labels=self.labels[idx],
            mask=np.stack([s.mask for s in samples]),
            positions=np.stack([s.positions for s in samples]),
            parcel_ids=[s.parcel_id for s in samples],
        )
        return batch

    def batch(self, idx: np.ndarray, epoch: int | None = None) -> SampleBatch:
        if epoch is not None:
            return self._assemble(idx, derive_seed(self.seed, "train"), epoch)
        if self._fixed is None:
            self._fixed = self._assemble(np.arange(len(self)), derive_seed(self.seed, "eval"), 0)
        f = self._fixed
        return SampleBatch(x=f.x[idx], labels=f.labels[idx], mask=f.mask[idx], positions=f.positions[idx],
                           parcel_ids=[f.parcel_ids[i] for i in idx])
