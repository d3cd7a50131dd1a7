"""k-fold cross-validation with a hyperparameter grid, then a test-set retrain."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .. import datastore as ds
from ..errors import ContractError
from ..sampler import SplitPlan
from .data import Dataset
from .loop import FoldResult, TrainConfig, check_disjoint, evaluate, train_fold

DEFAULT_GRID = tuple({"gamma": g, "alpha": a} for g in (0.0, 1.0, 2.0, 5.0) for a in ("uniform", "inverse"))


def point_name(point: dict) -> str:
    return "_".join(f"{k}={point[k]}" for k in sorted(point))


def _apply(cfg: TrainConfig, point: dict) -> TrainConfig:
    unknown = set(point) - set(cfg.to_json())
    if unknown:
        raise ContractError(f"grid point sets unknown options {sorted(unknown)}")
    return replace(cfg, **point)


def selection_key(point: dict, mean_f1: float):
    """Sort key: best mean F1 first, then smaller gamma, then the point's JSON text."""
    return (-mean_f1, float(point.get("gamma", 0.0)), json.dumps(point, sort_keys=True))


@dataclass
class GridScore:
    point: dict
    fold_f1: list[float]
    best_epochs: list[int]

    @property
    def mean_f1(self) -> float:
        return sum(self.fold_f1) / len(self.fold_f1)

    def to_json(self) -> dict:
        return {"point": self.point, "fold_f1": self.fold_f1, "best_epochs": self.best_epochs,
                "mean_f1": self.mean_f1}


@dataclass
class CVResult:
    scores: list[GridScore]
    selected: dict
    retrain_epochs: int
    final: FoldResult
    test_report: object
    test_f1: float

    def to_json(self) -> dict:
        return {
            "grid": [s.to_json() for s in self.scores],
            "selected": self.selected,
            "retrain_epochs": self.retrain_epochs,
            "test_f1": self.test_f1,
            "test": self.test_report.to_json(),
        }


def _run_fold(args):
    data, plan, cfg, fold, out_dir = args
    train_ids, val_ids = plan.fold_split(fold)
    res = train_fold(data.subset(train_ids), data.subset(val_ids), cfg, out_dir)
    return res.best_f1, res.best_epoch


def cross_validate(
    data: Dataset,
    plan: SplitPlan,
    cfg: TrainConfig,
    grid=None,
    out_dir=None,
    jobs: int = 1,
) -> CVResult:
    """Score every grid point by mean validation F1 over the folds, retrain the
    winner on all non-test parcels and score it on the test parcels.

    The retrain has no validation set, so it runs for the winner's mean best
    epoch across folds, rounded.
    """
    plan.check()
    grid = [dict(p) for p in (grid or DEFAULT_GRID)]
    if not grid:
        raise ContractError("hyperparameter grid is empty")
    out = Path(out_dir) if out_dir is not None else None
    tasks = []
    for gi, point in enumerate(grid):
        pcfg = _apply(cfg, point)
        for fold in range(plan.k):
            run = out / f"grid{gi:02d}_{point_name(point)}" / f"fold{fold}" if out else None
            tasks.append((data, plan, pcfg, fold, run))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    scores = []
    for gi, point in enumerate(grid):
        chunk = results[gi * plan.k:(gi + 1) * plan.k]
        scores.append(GridScore(point, [r[0] for r in chunk], [r[1] for r in chunk]))
    winner = min(scores, key=lambda s: selection_key(s.point, s.mean_f1))
    epochs = max(1, round(sum(winner.best_epochs) / len(winner.best_epochs)))

    train_ids = plan.train_parcels()
    check_disjoint(train_ids, plan.test_parcels, "test")
    final_cfg = replace(_apply(cfg, winner.point), epochs=epochs)
    final = train_fold(data.subset(train_ids), None, final_cfg, out / "final" if out else None)
    report, test_f1 = evaluate(final, data.subset(plan.test_parcels))
    result = CVResult(scores, winner.point, epochs, final, report, test_f1)
    if out is not None:
        ds.atomic_write_bytes(out / "cv.json", (json.dumps(result.to_json(), indent=1, sort_keys=True) + "\n").encode())
    return result
