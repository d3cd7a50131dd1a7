"""Band-combination sweeps: one cross-validated run per (model, satellite, combination)."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .. import datastore as ds
from ..errors import ContractError, UnknownBand
from ..sampler import SplitPlan
from ..training import Dataset, TrainConfig, cross_validate

BASELINE = "R+G+B"


@dataclass(frozen=True)
class ReportRow:
    satellite: str
    model: str
    combination: str
    dims: str
    f1: float | None
    gain: float | None
    status: str = "ok"
    baseline: bool = False
    selected: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ReportRow":
        return cls(**d)


@dataclass
class SweepConfig:
    """Which combinations to run for which model and satellite.

    ``runs`` is a list of ``{"model": kind, "satellites": {sat: [combo, ...]}}``.
    """

    manifest: str
    splits: str
    runs: list[dict]
    train: dict = field(default_factory=dict)
    grid: list[dict] | None = None
    baseline: dict = field(default_factory=dict)
    window: str | None = None
    extra: dict = field(default_factory=dict)  # free-form notes such as acceptance thresholds

    @classmethod
    def from_json(cls, d: dict, base_dir: Path | None = None) -> "SweepConfig":
        d = dict(d)
        if "runs" not in d and "satellites" in d:
            d["runs"] = [{"model": d.pop("model", "cnn"), "satellites": d.pop("satellites")}]
        known = {"manifest", "splits", "runs", "train", "grid", "baseline", "window", "extra"}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown sweep config keys {sorted(unknown)}")
        for key in ("manifest", "splits"):
            if key not in d:
                raise ContractError(f"sweep config needs {key!r}")
            if base_dir is not None and not Path(d[key]).is_absolute():
                d[key] = str(base_dir / d[key])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), path.parent)

    def baseline_for(self, satellite: str) -> str:
        return self.baseline.get(satellite, BASELINE)

    def jobs(self) -> list[tuple[str, str, str]]:
        """(model, satellite, combination) triples with the baseline inserted first when missing."""
        out = []
        for run in self.runs:
            model = run["model"]
            for sat in sorted(run["satellites"], key=ds.SENSOR_ORDER.index):
                combos = list(run["satellites"][sat])
                base = self.baseline_for(sat)
                if base not in combos:
                    combos.insert(0, base)
                out.extend((model, sat, c) for c in combos)
        return out


def input_dims(model: str, satellite: str, n_bands: int, t_max: int | None = None) -> str:
    sensor = ds.get_sensor(satellite)
    h, w = sensor.chip
    if model == "psetae":
        return f"{t_max or sensor.max_seq_len}×{h}×{w}×{n_bands}"
    return f"{h}×{w}×{n_bands}"


def run_dir_name(model: str, satellite: str, combo: str) -> str:
    return f"{model}/{satellite}/{combo.replace('+', '_')}"


def _run_one(args):
    cfg_dict, model, sat, combo, manifest, splits, window, grid, out = args
    records = ds.read_manifest(manifest)
    win = ds.DateWindow.parse(window) if window else None
    data = Dataset.from_records(records, sat, window=win)
    plan = SplitPlan.load(splits)
    cfg = replace(TrainConfig.from_json(cfg_dict), model=model, satellite=sat, bands=combo).check()
    res = cross_validate(data, plan, cfg, grid, out)
    return res.test_f1, res.selected


def sweep_bands(cfg: SweepConfig, out_dir, jobs: int = 1) -> list[ReportRow]:
    """Cross-validate every configured combination and report test F1 against the baseline.

    Combinations a satellite cannot provide become ``skipped:UnknownBand``
    rows. Rows come back in job order; ``rows.jsonl`` is written to ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_train = TrainConfig.from_json(cfg.train)
    tasks, pending = [], []
    rows: list[ReportRow | None] = []
    for model, sat, combo in cfg.jobs():
        try:
            parsed = ds.parse_band_combination(combo, sat)
        except UnknownBand:
            rows.append(ReportRow(sat, model, combo, "", None, None, "skipped:UnknownBand"))
            continue
        dims = input_dims(model, sat, len(parsed), base_train.t_max)
        rows.append(None)
        pending.append((len(rows) - 1, sat, model, str(parsed), dims))
        tasks.append((cfg.train, model, sat, str(parsed), cfg.manifest, cfg.splits, cfg.window, cfg.grid,
                      out / "runs" / run_dir_name(model, sat, str(parsed))))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    f1s = {}
    for (slot, sat, model, combo, dims), (f1, selected) in zip(pending, results):
        f1s[(model, sat, combo)] = f1
        rows[slot] = ReportRow(sat, model, combo, dims, f1, None, "ok", selected)
    final = []
    for row in rows:
        if row.status == "ok":
            base_combo = str(ds.parse_band_combination(cfg.baseline_for(row.satellite), row.satellite))
            base = f1s.get((row.model, row.satellite, base_combo))
            if base is None:
                raise ContractError(f"no baseline run for {row.model}/{row.satellite}")
            is_base = row.combination == base_combo
            row = replace(row, gain=0.0 if is_base else row.f1 - base, baseline=is_base)
        final.append(row)
    text = "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in final)
    ds.atomic_write_bytes(out / "rows.jsonl", text.encode("utf-8"))
    return final


def read_rows(path) -> list[ReportRow]:
    """Rows from a ``rows.jsonl`` file, or from every one found below a directory."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.rglob("rows.jsonl"))
    if not files:
        raise FileNotFoundError(f"no rows.jsonl under {path}")
    rows = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            rows.extend(ReportRow.from_json(json.loads(line)) for line in fh if line.strip())
    return rows
