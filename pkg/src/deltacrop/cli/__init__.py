"""``deltacrop`` command line: gen, split, train, eval, cv, sweep, report.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 leakage or
contract violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .. import datastore as ds
from .. import synthgen as sg
from ..errors import ContractError, DeltaCropError, DimensionError, FormatError, UnknownBand
from ..sampler import Parcel, SplitPlan, make_split_plan
from ..training import Dataset, TrainConfig, cross_validate, evaluate, load_result, train_fold
from .sweep import ReportRow, SweepConfig, read_rows, sweep_bands
from .tables import FORMATS, render_tables

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONTRACT = 0, 2, 3, 4


class UsageError(DeltaCropError):
    pass


def _parse_crops(text: str | None) -> dict:
    """``paddy:3,banana:1`` or ``paddy,banana`` (equal weights)."""
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        name, _, weight = item.partition(":")
        try:
            out[name.strip()] = float(weight) if weight else 1.0
        except ValueError:
            raise UsageError(f"bad crop weight in {item!r}") from None
    unknown = set(out) - set(sg.DEFAULT_PROFILES)
    if unknown:
        raise UsageError(f"unknown crops {sorted(unknown)}; known: {', '.join(sorted(sg.DEFAULT_PROFILES))}")
    return out


def cmd_gen(args) -> int:
    sats = [s.strip() for s in args.satellites.split(",") if s.strip()]
    for s in sats:
        ds.get_sensor(s)
    cfg = sg.SceneConfig(
        parcels=args.parcels,
        crops=_parse_crops(args.crops),
        imbalance=args.imbalance,
        satellites=sats,
        seed=args.seed,
        **({"noise": {s: args.noise for s in ds.SENSOR_ORDER}} if args.noise is not None else {}),
        **({"dropout": {s: args.dropout for s in ds.SENSOR_ORDER}} if args.dropout is not None else {}),
    )
    out = sg.generate_dataset(cfg, args.out)
    counts = {s: sum(1 for _ in open(p, encoding="utf-8")) for s, p in out.manifests.items() if s != "all"}
    print(json.dumps({"out": str(out.root), "parcels": len(out.parcels), "images": counts}, sort_keys=True))
    return EXIT_OK


def _parcels_for(manifest: str) -> list[Parcel]:
    records = ds.read_manifest(manifest)
    labels = ds.parcel_labels(records)
    meta = sg.load_parcels(manifest) or []
    where = {p["parcel_id"]: (p["x"], p["y"]) for p in meta}
    return [Parcel(pid, labels[pid], where.get(pid, (0.0, 0.0))) for pid in sorted(labels)]


def cmd_split(args) -> int:
    plan = make_split_plan(_parcels_for(args.manifest), args.test_parcels, args.folds, args.seed)
    plan.save(args.out)
    print(json.dumps({"out": args.out, "test": len(plan.test_parcels), "folds": [len(f) for f in plan.folds]}))
    return EXIT_OK


def _train_config(args, **over) -> TrainConfig:
    return TrainConfig(model=args.model, satellite=args.satellite, bands=args.bands, gamma=args.gamma,
                       rho=args.rho, eps=args.eps, epochs=args.epochs, batch=args.batch,
                       patience=args.patience, seed=args.seed, **over).check()


def _dataset(manifest: str, satellite: str, window: str | None = None) -> Dataset:
    win = ds.DateWindow.parse(window) if window else None
    return Dataset.from_records(ds.read_manifest(manifest), satellite, window=win)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    plan = SplitPlan.load(args.splits)
    train_ids, val_ids = plan.fold_split(args.fold)
    data = _dataset(args.manifest, cfg.satellite)
    res = train_fold(data.subset(train_ids), data.subset(val_ids), cfg, args.out)
    print(json.dumps({"out": args.out, "best_epoch": res.best_epoch, "val_f1": res.best_f1}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    res = load_result(args.ckpt)
    plan = SplitPlan.load(args.splits)
    parcels = plan.test_parcels if args.set == "test" else res.val_parcels
    if not parcels:
        raise ContractError(f"checkpoint has no {args.set} parcels to evaluate")
    data = _dataset(args.manifest, res.config.satellite, args.window).subset(parcels)
    if not len(data):
        raise ContractError(f"no {args.set} images left after filtering")
    report, headline = evaluate(res, data)
    out = {"set": args.set, "window": args.window, "f1": headline, **report.to_json(),
           "labels": list(res.labels.names)}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _train_config(args)
    grid = None
    if args.grid:
        with open(args.grid, encoding="utf-8") as fh:
            grid = json.load(fh)
    plan = SplitPlan.load(args.splits)
    data = _dataset(args.manifest, cfg.satellite)
    res = cross_validate(data, plan, cfg, grid, args.out, jobs=args.jobs)
    print(json.dumps({"out": args.out, "selected": res.selected, "test_f1": res.test_f1}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = SweepConfig.load(args.config)
    rows = sweep_bands(cfg, args.out, jobs=args.jobs)
    for r in rows:
        f1 = "" if r.f1 is None else f"{r.f1:.4f}"
        print(f"{r.model}\t{r.satellite}\t{r.combination}\t{r.dims}\t{f1}\t{r.status}")
    return EXIT_OK


def cmd_report(args) -> int:
    sys.stdout.write(render_tables(read_rows(args.runs), args.format))
    return EXIT_OK


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("cnn", "psetae"), default="psetae", help="classifier family")
    p.add_argument("--satellite", default="L8", help="L8, S2 or PS")
    p.add_argument("--bands", default="R+G+B", help='band combination such as "NIR+SWIR1+SWIR2"')
    p.add_argument("--gamma", type=float, default=2.0, help="focal loss exponent")
    p.add_argument("--rho", type=float, default=0.9, help="Adadelta decay")
    p.add_argument("--eps", type=float, default=1e-6, help="Adadelta stabiliser")
    p.add_argument("--epochs", type=int, default=100, help="maximum epochs")
    p.add_argument("--batch", type=int, default=32, help="batch size")
    p.add_argument("--patience", type=int, default=10, help="epochs without improvement before stopping")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deltacrop", description="Multi-sensor crop-type classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic multi-sensor dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parcels", type=int, default=172, help="number of parcels")
    p.add_argument("--satellites", default="L8,S2,PS", help="comma-separated satellites")
    p.add_argument("--crops", default=None, help="crop weights, e.g. paddy:3,banana:1 (default: all crops)")
    p.add_argument("--imbalance", default="zipf:1.0", help="class imbalance when --crops is absent, zipf:S")
    p.add_argument("--noise", type=float, default=None, help="reflectance noise sigma for every sensor")
    p.add_argument("--dropout", type=float, default=None, help="acquisition dropout rate for every sensor")
    p.add_argument("--seed", type=int, default=7, help="generator seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="stratified test holdout and k folds by parcel")
    p.add_argument("--manifest", required=True, help="manifest JSONL")
    p.add_argument("--test-parcels", type=int, default=35, help="parcels held out for testing")
    p.add_argument("--folds", type=int, default=5, help="number of folds")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out", required=True, help="split plan JSON to write")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train on all folds but one and validate on it")
    p.add_argument("--manifest", required=True, help="manifest JSONL")
    p.add_argument("--splits", required=True, help="split plan JSON")
    p.add_argument("--fold", type=int, required=True, help="validation fold index")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the test or validation parcels")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--manifest", required=True, help="manifest JSONL")
    p.add_argument("--splits", required=True, help="split plan JSON")
    p.add_argument("--set", choices=("test", "val"), default="test", help="which parcels to score")
    p.add_argument("--window", default=None,
                   help="keep images in START:END: ISO dates, season days (90:180) or season fractions (50%%:100%%)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="cross-validate a hyperparameter grid and score the test set")
    p.add_argument("--manifest", required=True, help="manifest JSONL")
    p.add_argument("--splits", required=True, help="split plan JSON")
    p.add_argument("--grid", default=None, help="JSON list of {gamma, alpha} points (default: 4×2 grid)")
    _add_train_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="cross-validate every band combination in a sweep config")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render result tables from sweep rows")
    p.add_argument("--runs", required=True, help="sweep output directory or rows.jsonl")
    p.add_argument("--format", choices=FORMATS, default="md", help="md or txt")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"deltacrop {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, DimensionError) as exc:
        print(f"deltacrop {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (FormatError, UnknownBand, OSError, json.JSONDecodeError) as exc:
        print(f"deltacrop {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


__all__ = ["ReportRow", "SweepConfig", "build_parser", "main", "read_rows", "render_tables", "sweep_bands"]
