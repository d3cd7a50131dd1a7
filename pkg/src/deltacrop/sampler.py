"""Parcel-grouped splits, pixel-set sampling and sequence assembly.

All randomness flows from explicit integer seeds. Per-sample seeds are derived
from a master seed with a SplitMix64 mix of stable hashes, so results do not
depend on iteration or scheduling order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .datastore import BandStack, atomic_write_bytes
from .errors import ContractError, FormatError, LeakageError

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stable_hash(value) -> int:
    return int.from_bytes(hashlib.blake2b(str(value).encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(master: int, *keys) -> int:
    """Fold ``keys`` into ``master`` one SplitMix64 round at a time."""
    s = splitmix64(int(master) & MASK64)
    for k in keys:
        k = k if isinstance(k, int) else stable_hash(k)
        s = splitmix64(s ^ (k & MASK64))
    return s


class Parcel(NamedTuple):
    id: str
    label: str
    location: tuple[float, float] = (0.0, 0.0)


@dataclass
class SplitPlan:
    seed: int
    test_parcels: list[str] = field(default_factory=list)
    folds: list[list[str]] = field(default_factory=list)
    stratify: str = "label"

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_parcels(self) -> list[str]:
        return [p for fold in self.folds for p in fold]

    def fold_split(self, i: int) -> tuple[list[str], list[str]]:
        """(train, validation) parcel ids with fold ``i`` held out."""
        if not 0 <= i < self.k:
            raise ContractError(f"fold {i} out of range for a {self.k}-fold plan")
        train = [p for j, fold in enumerate(self.folds) if j != i for p in fold]
        return train, list(self.folds[i])

    def check(self) -> "SplitPlan":
        test = set(self.test_parcels)
        seen: set[str] = set()
        for fold in self.folds:
            dup = seen.intersection(fold)
            if dup or len(set(fold)) != len(fold):
                raise LeakageError(f"folds overlap on parcels {sorted(dup)[:5]}")
            seen.update(fold)
        if seen & test:
            raise LeakageError(f"test parcels appear in folds: {sorted(seen & test)[:5]}")
        return self

    def to_json(self) -> dict:
        return {"seed": self.seed, "test_parcels": list(self.test_parcels),
                "folds": [list(f) for f in self.folds], "stratify": self.stratify}

    @classmethod
    def from_json(cls, d: dict) -> "SplitPlan":
        try:
            return cls(int(d["seed"]), list(d["test_parcels"]), [list(f) for f in d["folds"]],
                       d.get("stratify", "label")).check()
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed split plan: {exc}") from None

    def save(self, path) -> None:
        atomic_write_bytes(path, (json.dumps(self.to_json(), indent=1) + "\n").encode("utf-8"))

    @classmethod
    def load(cls, path) -> "SplitPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# -- splitting --------------------------------------------------------------------


def _grid_cells(parcels: Sequence[Parcel], grid: int) -> list[int]:
    loc = np.array([p.location for p in parcels], dtype=float)
    lo, hi = loc.min(axis=0), loc.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    ij = np.minimum(((loc - lo) / span * grid).astype(int), grid - 1)
    return [int(i * grid + j) for i, j in ij]


def _label_quotas(counts: dict[str, int], total: int) -> dict[str, int]:
    n = sum(counts.values())
    raw = {lab: c * total / n for lab, c in counts.items()}
    cap = {lab: max(c - 1, 0) for lab, c in counts.items()}
    quota = {lab: min(int(math.floor(raw[lab])), cap[lab]) for lab in counts}
    for lab, c in counts.items():
        if c >= 5 and quota[lab] == 0:
            quota[lab] = 1
    # largest remainder, ties broken by label name
    order = sorted(counts, key=lambda lab: (-(raw[lab] - math.floor(raw[lab])), lab))
    turn = 0
    while sum(quota.values()) < total:
        open_ = [lab for lab in order if quota[lab] < cap[lab]]
        open_ = open_ or [lab for lab in order if quota[lab] < counts[lab]]
        quota[open_[turn % len(open_)]] += 1
        turn += 1
    while sum(quota.values()) > total:
        lab = max(quota, key=lambda k: (quota[k] - raw[k], quota[k], k))
        quota[lab] -= 1
    return quota


def make_test_split(
    parcels: Sequence[Parcel | tuple],
    test_count: int,
    seed: int,
    grid: int = 3,
) -> SplitPlan:
    """Hold out ``test_count`` parcels stratified by label and a coarse spatial grid.

    Each label receives a share proportional to its frequency (labels with at
    least five parcels get at least one). Within a label, parcels are drawn
    round-robin across grid cells so the holdout is spread over the region.
    """
    parcels = [Parcel(*p) for p in parcels]
    if len({p.id for p in parcels}) != len(parcels):
        raise ContractError("parcel ids must be unique")
    if not 0 < test_count < len(parcels):
        raise ContractError(f"test_count must be in (0, {len(parcels)}), got {test_count}")
    rng = np.random.default_rng(derive_seed(seed, "test-split"))
    cells = _grid_cells(parcels, grid)
    by_label: dict[str, list[tuple[int, Parcel]]] = defaultdict(list)
    for cell, p in zip(cells, parcels):
        by_label[p.label].append((cell, p))
    quotas = _label_quotas({lab: len(v) for lab, v in by_label.items()}, test_count)

    test: list[str] = []
    for lab in sorted(by_label):
        per_cell: dict[int, list[str]] = defaultdict(list)
        for cell, p in sorted(by_label[lab], key=lambda cp: cp[1].id):
            per_cell[cell].append(p.id)
        queues = []
        for cell in sorted(per_cell):
            ids = per_cell[cell]
            queues.append([ids[i] for i in rng.permutation(len(ids))])
        queues = [queues[i] for i in rng.permutation(len(queues))]
        picked = []
        while len(picked) < quotas[lab]:
            for q in queues:
                if q and len(picked) < quotas[lab]:
                    picked.append(q.pop(0))
        test.extend(picked)
    return SplitPlan(seed=seed, test_parcels=sorted(test), folds=[], stratify="label×grid").check()


def make_kfold(parcels: Sequence[Parcel | tuple], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Label-stratified partition of parcels into ``k`` folds.

    Parcels are shuffled within each label, concatenated label by label and
    dealt round-robin, so fold sizes differ by at most one and every label is
    spread as evenly as its count allows.
    """
    parcels = [Parcel(*p) for p in parcels]
    if k < 1 or k > len(parcels):
        raise ContractError(f"cannot make {k} folds from {len(parcels)} parcels")
    rng = np.random.default_rng(derive_seed(seed, "kfold", k))
    by_label: dict[str, list[str]] = defaultdict(list)
    for p in sorted(parcels, key=lambda p: p.id):
        by_label[p.label].append(p.id)
    dealt: list[str] = []
    for lab in sorted(by_label):
        ids = by_label[lab]
        dealt.extend(ids[i] for i in rng.permutation(len(ids)))
    folds: list[list[str]] = [[] for _ in range(k)]
    for i, pid in enumerate(dealt):
        folds[i % k].append(pid)
    order = rng.permutation(k)
    return [sorted(folds[i]) for i in order]


def make_split_plan(parcels: Sequence[Parcel | tuple], test_count: int, k: int, seed: int) -> SplitPlan:
    parcels = [Parcel(*p) for p in parcels]
    plan = make_test_split(parcels, test_count, seed)
    held = set(plan.test_parcels)
    plan.folds = make_kfold([p for p in parcels if p.id not in held], k, seed)
    return plan.check()


# -- pixel sets and sequences ---------------------------------------------------------


@dataclass
class PixelSet:
    values: np.ndarray  # (n, B)
    source_count: int
    seed: int
    indices: np.ndarray


def sample_pixel_set(stack: BandStack | np.ndarray, n: int, seed: int) -> PixelSet:
    """Draw ``n`` pixel vectors; all pixels first when the image is smaller than ``n``."""
    data = stack.data if isinstance(stack, BandStack) else np.asarray(stack)
    if n <= 0:
        raise ContractError(f"pixel set size must be positive, got {n}")
    b = data.shape[0]
    pixels = data.reshape(b, -1).T
    count = pixels.shape[0]
    if count == 0:
        raise ContractError("cannot sample pixels from an empty image")
    rng = np.random.default_rng(seed & MASK64)
    if count >= n:
        idx = rng.choice(count, size=n, replace=False)
    else:
        idx = np.concatenate([rng.permutation(count), rng.integers(0, count, size=n - count)])
    return PixelSet(pixels[idx].astype(np.float32), count, seed, idx)


@dataclass
class SequenceSample:
    parcel_id: str
    season_id: str
    label: int
    values: np.ndarray  # (T_max, n, B)
    mask: np.ndarray  # (T_max,) bool
    positions: np.ndarray  # (T_max,) int

    @property
    def length(self) -> int:
        return int(self.mask.sum())


def subsample_indices(count: int, t_max: int) -> list[int]:
    if count <= t_max:
        return list(range(count))
    return [i * count // t_max for i in range(t_max)]


def assemble_sequence(
    stacks: Sequence[BandStack],
    t_max: int,
    n: int,
    seed: int,
    label: int = -1,
    epoch: int = 0,
) -> SequenceSample:
    """Date-sort one parcel-season of stacks into a padded pixel-set sequence."""
    if not stacks:
        raise ContractError("assemble_sequence needs at least one observation")
    first = stacks[0]
    for s in stacks:
        if (s.parcel_id, s.season_id, s.satellite) != (first.parcel_id, first.season_id, first.satellite):
            raise ContractError("all observations must share parcel, season and satellite")
        if s.bands != first.bands:
            raise ContractError("all observations must carry the same bands")
    ordered = sorted(stacks, key=lambda s: s.date)
    keep = [ordered[i] for i in subsample_indices(len(ordered), t_max)]
    values = np.zeros((t_max, n, len(first.bands)), dtype=np.float32)
    for t, s in enumerate(keep):
        values[t] = sample_pixel_set(s, n, derive_seed(seed, s.parcel_id, s.date, epoch)).values
    mask = np.zeros(t_max, dtype=bool)
    mask[:len(keep)] = True
    positions = np.zeros(t_max, dtype=np.int64)
    positions[:len(keep)] = np.arange(len(keep))
    return SequenceSample(first.parcel_id, first.season_id, label, values, mask, positions)


def group_series(stacks: Iterable[BandStack]) -> dict[tuple[str, str, str], list[BandStack]]:
    """Group stacks by (parcel, season, satellite), preserving first-seen key order."""
    out: dict[tuple[str, str, str], list[BandStack]] = {}
    for s in stacks:
        out.setdefault((s.parcel_id, s.season_id, s.satellite), []).append(s)
    return out


@dataclass
class SampleBatch:
    """Model-ready batch. ``x`` is N×T×n×B for sequences or N×B×H×W for chips."""

    x: np.ndarray
    labels: np.ndarray
    mask: np.ndarray | None = None
    positions: np.ndarray | None = None
    weights: np.ndarray | None = None
    parcel_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)


def collate_sequences(samples: Sequence[SequenceSample]) -> SampleBatch:
    shapes = {s.values.shape for s in samples}
    if len(shapes) != 1:
        raise ContractError(f"inconsistent sequence shapes in batch: {sorted(shapes)}")
    return SampleBatch(
        x=np.stack([s.values for s in samples]),
        labels=np.array([s.label for s in samples], dtype=np.int64),
        mask=np.stack([s.mask for s in samples]),
        positions=np.stack([s.positions for s in samples]),
        parcel_ids=[s.parcel_id for s in samples],
    )


def collate_chips(chips: Sequence[np.ndarray], labels: Sequence[int], parcel_ids: Sequence[str] = ()) -> SampleBatch:
    shapes = {c.shape for c in chips}
    if len(shapes) != 1:
        raise ContractError(f"inconsistent chip shapes in batch: {sorted(shapes)}")
    return SampleBatch(x=np.stack(chips).astype(np.float32), labels=np.asarray(labels, dtype=np.int64),
                       parcel_ids=list(parcel_ids))


def batch_indices(count: int, batch_size: int, seed: int | None) -> list[np.ndarray]:
    order = np.arange(count) if seed is None else np.random.default_rng(seed & MASK64).permutation(count)
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def write_split_plan(plan: SplitPlan, path: str | os.PathLike) -> None:
    plan.save(path)
