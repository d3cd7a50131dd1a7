"""Render sweep rows as the four result tables (spatial, spatio-spectral,
spatio-temporal, spectro-temporal) in Markdown or aligned plain text."""

from __future__ import annotations

from .. import datastore as ds
from ..errors import ContractError
from .sweep import ReportRow

FORMATS = ("md", "txt")


def _order(rows: list[ReportRow]) -> list[ReportRow]:
    def key(r: ReportRow):
        f1 = r.f1 if r.f1 is not None else float("-inf")
        return (ds.SENSOR_ORDER.index(r.satellite), -f1, r.combination)

    return sorted(rows, key=key)


def _fmt_f1(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


def _fmt_gain(v: float | None) -> str:
    return "" if v is None else f"{v:+.4f}"


def _is_baseline(r: ReportRow) -> bool:
    return r.baseline


def _table(title: str, header: list[str], body: list[list[str]], fmt: str) -> str:
    if fmt == "md":
        lines = [f"## {title}", "", "| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(row) + " |" for row in body]
        return "\n".join(lines) + "\n"
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(header)]
    rule = "  ".join("-" * w for w in widths)
    lines = [title, "=" * len(title), "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(), rule]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines) + "\n"


def _spectral_body(rows: list[ReportRow]) -> list[list[str]]:
    body = []
    for r in _order(rows):
        f1 = _fmt_f1(r.f1) if r.status == "ok" else r.status
        body.append([r.satellite, r.combination, r.dims, f1, _fmt_gain(r.gain)])
    return body


def render_tables(rows: list[ReportRow], fmt: str = "md") -> str:
    """Four result tables; within a satellite, rows run from best to worst F1."""
    if fmt not in FORMATS:
        raise ContractError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")
    if not rows:
        raise ContractError("nothing to report: no rows")
    cnn = [r for r in rows if r.model == "cnn"]
    ts = [r for r in rows if r.model == "psetae"]

    spatial = [[r.satellite, "×".join(map(str, ds.get_sensor(r.satellite).chip)), r.dims, _fmt_f1(r.f1), ""]
               for r in _order([r for r in cnn if _is_baseline(r) and r.status == "ok"])]
    temporal = [[r.satellite, r.dims, _fmt_f1(r.f1)]
                for r in _order([r for r in ts if _is_baseline(r) and r.status == "ok"])]
    parts = [
        _table("Spatial (baseline bands, single image)", ["Satellite", "Resolution", "Input", "F1", "Gain/Loss"], spatial, fmt),
        _table("Spatio-spectral (single image)", ["Satellite", "Bands", "Input", "F1", "Gain/Loss"],
               _spectral_body([r for r in cnn if not _is_baseline(r)]), fmt),
        _table("Spatio-temporal (baseline bands, time series)", ["Satellite", "Input", "F1"], temporal, fmt),
        _table("Spectro-temporal (time series)", ["Satellite", "Bands", "Input", "F1", "Gain/Loss"],
               _spectral_body([r for r in ts if not _is_baseline(r)]), fmt),
    ]
    sep = "\n" if fmt == "md" else "\n\n"
    return sep.join(parts)
