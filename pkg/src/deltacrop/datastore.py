"""Band-stack rasters, manifests and band-combination handling.

A *band stack* is one acquisition of one parcel: a ``B×H×W`` float32 grid of
surface reflectance plus the band tokens naming each plane. Stacks are stored
in the BSF container::

    b"BSF1" | u32 LE header length L | L bytes UTF-8 JSON header | float32 LE payload

with the payload in band-major ``[band][row][col]`` order. Manifests are JSON
Lines files with one :class:`ManifestRecord` per line.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, FormatError, SchemaError, TruncationError, UnknownBand

MAGIC = b"BSF1"
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class SensorSpec:
    name: str
    bands: tuple[str, ...]
    chip: tuple[int, int]
    pixel_set_size: int
    max_seq_len: int
    revisit_days: int

    def index(self, token: str) -> int:
        try:
            return self.bands.index(token)
        except ValueError:
            raise UnknownBand(f"band {token!r} is not available on {self.name} (has {'+'.join(self.bands)})") from None


L8 = SensorSpec(
    "L8",
    ("U-B", "B", "G", "R", "NIR", "SWIR1", "SWIR2", "PAN", "CIRRUS", "TIRS1", "TIRS2"),
    (3, 3), 9, 41, 16,
)
S2 = SensorSpec(
    "S2",
    ("U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3", "NIR", "NARROW-NIR",
     "WATER-VAPOUR", "SWIR1", "SWIR2"),
    (7, 7), 49, 134, 5,
)
PS = SensorSpec("PS", ("B", "G", "R", "NIR"), (19, 19), 300, 210, 1)

SENSORS: dict[str, SensorSpec] = {s.name: s for s in (L8, S2, PS)}
SENSOR_ORDER = ("L8", "S2", "PS")


def get_sensor(name: str) -> SensorSpec:
    try:
        return SENSORS[name]
    except KeyError:
        raise SchemaError(f"unknown satellite {name!r}; expected one of {', '.join(SENSOR_ORDER)}") from None


# -- band stacks ------------------------------------------------------------------


@dataclass
class BandStack:
    parcel_id: str
    satellite: str
    date: str
    season_id: str
    bands: tuple[str, ...]
    data: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.bands = tuple(self.bands)
        self.data = np.asarray(self.data, dtype=np.float32)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def sensor(self) -> SensorSpec:
        return get_sensor(self.satellite)

    def validate(self) -> "BandStack":
        sensor = self.sensor
        if self.data.ndim != 3 or self.data.shape[0] != len(self.bands):
            raise ContractError(
                f"stack data has shape {self.data.shape}, expected ({len(self.bands)}, H, W)"
            )
        if not self.bands:
            raise ContractError("stack has no bands")
        pos = [sensor.index(tok) for tok in self.bands]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise SchemaError(f"bands {self.bands} are not in {sensor.name} canonical order")
        if not np.isfinite(self.data).all():
            raise ContractError(f"stack {self.parcel_id}@{self.date} contains NaN or Inf")
        date.fromisoformat(self.date)
        return self

    def header(self) -> dict:
        head = {
            "parcel_id": self.parcel_id,
            "satellite": self.satellite,
            "date": self.date,
            "season_id": self.season_id,
            "height": self.height,
            "width": self.width,
            "bands": list(self.bands),
        }
        if self.label is not None:
            head["label"] = self.label
        return head

    def equals(self, other: "BandStack") -> bool:
        return (
            self.header() == other.header()
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


def encode_bandstack(stack: BandStack) -> bytes:
    stack.validate()
    head = json.dumps(stack.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(stack.data, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def decode_bandstack(buf: bytes, source: str = "<bytes>") -> BandStack:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<I", buf[4:8])
    if len(buf) < 8 + hlen:
        raise TruncationError(f"{source}: header declares {hlen} bytes, file has {len(buf) - 8}")
    try:
        head = json.loads(buf[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: header is not valid UTF-8 JSON ({exc})") from None
    missing = {"parcel_id", "satellite", "date", "season_id", "height", "width", "bands"} - set(head)
    if missing:
        raise SchemaError(f"{source}: header lacks {sorted(missing)}")
    sensor = get_sensor(head["satellite"])
    for tok in head["bands"]:
        if tok not in sensor.bands:
            raise SchemaError(f"{source}: unknown band token {tok!r} for {sensor.name}")
    b, h, w = len(head["bands"]), int(head["height"]), int(head["width"])
    expected = b * h * w * 4
    actual = len(buf) - 8 - hlen
    if actual != expected:
        raise TruncationError(f"{source}: payload has {actual} bytes, expected {expected} ({b}×{h}×{w} float32)")
    data = np.frombuffer(buf, dtype="<f4", offset=8 + hlen, count=b * h * w).reshape(b, h, w)
    stack = BandStack(
        parcel_id=str(head["parcel_id"]),
        satellite=sensor.name,
        date=head["date"],
        season_id=str(head["season_id"]),
        bands=tuple(head["bands"]),
        data=data.astype(np.float32),
        label=head.get("label"),
    )
    try:
        return stack.validate()
    except ContractError as exc:
        raise FormatError(f"{source}: {exc}") from None


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bandstack(stack: BandStack, path: str | os.PathLike) -> None:
    payload = encode_bandstack(stack)
    try:
        atomic_write_bytes(path, payload)
    except OSError as exc:
        raise OSError(f"cannot write band stack to {path}: {exc}") from exc


def read_bandstack(path: str | os.PathLike) -> BandStack:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read band stack {path}: {exc}") from exc
    return decode_bandstack(buf, str(path))


# -- manifests --------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    parcel_id: str
    satellite: str
    date: str
    season_id: str
    label: str
    height: int
    width: int
    season_start: str | None = None
    season_end: str | None = None

    @property
    def day(self) -> date:
        return date.fromisoformat(self.date)

    def season_day(self) -> int:
        if self.season_start is None:
            raise ContractError(f"record {self.path} has no season_start; day windows need it")
        return (self.day - date.fromisoformat(self.season_start)).days

    def season_length(self) -> int:
        if self.season_start is None or self.season_end is None:
            raise ContractError(f"record {self.path} has no season bounds")
        return (date.fromisoformat(self.season_end) - date.fromisoformat(self.season_start)).days


_RECORD_FIELDS = {f.name for f in fields(ManifestRecord)}


def record_to_json(rec: ManifestRecord) -> str:
    d = {k: v for k, v in asdict(rec).items() if v is not None}
    return json.dumps(d, sort_keys=True)


def write_manifest(records: Iterable[ManifestRecord], path: str | os.PathLike) -> None:
    records = list(records)
    check_manifest_unique(records)
    text = "".join(record_to_json(r) + "\n" for r in records)
    atomic_write_bytes(path, text.encode("utf-8"))


def read_manifest(path: str | os.PathLike, resolve: bool = True) -> list[ManifestRecord]:
    """Load a JSONL manifest; relative ``path`` fields resolve against its directory."""
    path = Path(path)
    base = path.parent
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            unknown = set(raw) - _RECORD_FIELDS
            if unknown:
                raise SchemaError(f"{path}:{lineno}: unknown manifest fields {sorted(unknown)}")
            try:
                rec = ManifestRecord(**raw)
            except TypeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            get_sensor(rec.satellite)
            if resolve and not os.path.isabs(rec.path):
                rec = replace(rec, path=str(base / rec.path))
            out.append(rec)
    check_manifest_unique(out)
    return out


def check_manifest_unique(records: Sequence[ManifestRecord]) -> None:
    seen = set()
    for r in records:
        key = (r.parcel_id, r.satellite, r.date)
        if key in seen:
            raise SchemaError(f"duplicate manifest entry for parcel {r.parcel_id} / {r.satellite} / {r.date}")
        seen.add(key)


def load_stack(rec: ManifestRecord) -> BandStack:
    stack = read_bandstack(rec.path)
    if stack.parcel_id != rec.parcel_id or stack.date != rec.date or stack.satellite != rec.satellite:
        raise FormatError(f"{rec.path}: header does not match its manifest record")
    return stack


# -- band combinations ------------------------------------------------------------------


@dataclass(frozen=True)
class BandCombination:
    tokens: tuple[str, ...]
    indices: tuple[int, ...] = field(default=(), compare=False)

    def __str__(self) -> str:
        return "+".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def parse_band_combination(text: str, sensor: SensorSpec | str) -> BandCombination:
    """Parse ``"NIR+SWIR1+SWIR2"`` into tokens plus indices into ``sensor.bands``."""
    if isinstance(sensor, str):
        sensor = get_sensor(sensor)
    tokens = tuple(t.strip().upper() for t in text.split("+"))
    if not text.strip() or any(not t for t in tokens):
        raise ContractError(f"empty band token in combination {text!r}")
    if len(set(tokens)) != len(tokens):
        raise ContractError(f"repeated band token in combination {text!r}")
    return BandCombination(tokens, tuple(sensor.index(t) for t in tokens))


def full_combination(sensor: SensorSpec | str) -> BandCombination:
    if isinstance(sensor, str):
        sensor = get_sensor(sensor)
    return BandCombination(sensor.bands, tuple(range(len(sensor.bands))))


def select_bands(stack: BandStack, combo: BandCombination | Sequence[str]) -> BandStack:
    tokens = combo.tokens if isinstance(combo, BandCombination) else tuple(combo)
    idx = []
    for tok in tokens:
        if tok not in stack.bands:
            raise UnknownBand(f"band {tok!r} not in stack ({'+'.join(stack.bands)})")
        idx.append(stack.bands.index(tok))
    # selected planes may be out of canonical order, so bypass validate()
    return BandStack(stack.parcel_id, stack.satellite, stack.date, stack.season_id,
                     tokens, stack.data[idx].copy(), stack.label)


# -- resampling and normalisation -----------------------------------------------------------


def _bilinear_axis(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    coord = (np.arange(dst) + 0.5) * src / dst - 0.5
    coord = np.clip(coord, 0, src - 1)
    lo = np.floor(coord).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, coord - lo


def resize_array(data: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of the last two axes with half-pixel centres."""
    if height <= 0 or width <= 0:
        raise ContractError(f"resize target must be positive, got {height}×{width}")
    h, w = data.shape[-2:]
    if (h, w) == (height, width):
        return data.copy()
    y0, y1, fy = _bilinear_axis(h, height)
    x0, x1, fx = _bilinear_axis(w, width)
    d = data.astype(np.float64)
    fy = fy[:, None]
    top = d[..., y0, :][..., :, x0] * (1 - fx) + d[..., y0, :][..., :, x1] * fx
    bot = d[..., y1, :][..., :, x0] * (1 - fx) + d[..., y1, :][..., :, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out.astype(data.dtype)


def resize_bilinear(stack: BandStack, height: int, width: int) -> BandStack:
    return replace(stack, data=resize_array(stack.data, height, width))


@dataclass
class BandStats:
    bands: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, x: np.ndarray, axis: int = 0) -> np.ndarray:
        """Z-score ``x`` whose band axis is ``axis``."""
        shape = [1] * x.ndim
        shape[axis] = len(self.bands)
        m = self.mean.reshape(shape)
        s = self.std.reshape(shape)
        return ((x - m) / s).astype(np.float32)

    def to_json(self) -> dict:
        return {"bands": list(self.bands), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "BandStats":
        return cls(tuple(d["bands"]), np.asarray(d["mean"]), np.asarray(d["std"]))


def fit_band_stats(stacks: Sequence[BandStack], combo: BandCombination | None = None) -> BandStats:
    """Per-band population mean/std over every pixel of ``stacks``."""
    if not stacks:
        raise ContractError("fit_band_stats needs at least one training stack")
    if combo is not None:
        stacks = [select_bands(s, combo) for s in stacks]
    bands = stacks[0].bands
    total = np.zeros(len(bands))
    sq = np.zeros(len(bands))
    count = 0
    for s in stacks:
        if s.bands != bands:
            raise ContractError("stacks carry different band lists")
        d = s.data.astype(np.float64).reshape(len(bands), -1)
        total += d.sum(axis=1)
        count += d.shape[1]
    mean = total / count
    for s in stacks:
        d = s.data.astype(np.float64).reshape(len(bands), -1)
        sq += ((d - mean[:, None]) ** 2).sum(axis=1)
    std = np.maximum(np.sqrt(sq / count), STD_FLOOR)
    return BandStats(bands, mean, std)


# -- filtering ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DateWindow:
    """Inclusive window; ``unit`` is "date" (ISO), "day" (days since season
    start) or "fraction" (of the season length)."""

    start: str | float
    end: str | float
    unit: str = "date"

    def __post_init__(self):
        if self.unit not in ("date", "day", "fraction"):
            raise ContractError(f"unknown window unit {self.unit!r}")
        lo, hi = self._bounds()
        if lo > hi:
            raise ContractError(f"window start {self.start} is after end {self.end}")

    def _bounds(self):
        if self.unit == "date":
            return date.fromisoformat(str(self.start)), date.fromisoformat(str(self.end))
        return float(self.start), float(self.end)

    def contains(self, rec: ManifestRecord) -> bool:
        lo, hi = self._bounds()
        if self.unit == "date":
            return lo <= rec.day <= hi
        if self.unit == "day":
            return lo <= rec.season_day() <= hi
        frac = rec.season_day() / rec.season_length()
        return lo <= frac <= hi

    @classmethod
    def parse(cls, text: str) -> "DateWindow":
        """``2019-01-01:2019-06-30``, ``90:180`` (season days) or ``50%:100%``."""
        try:
            start, end = text.split(":")
        except ValueError:
            raise ContractError(f"window {text!r} must look like START:END") from None
        if start.endswith("%") and end.endswith("%"):
            return cls(float(start[:-1]) / 100, float(end[:-1]) / 100, "fraction")
        if "-" in start[1:] or "-" in end[1:]:
            return cls(start, end, "date")
        return cls(float(start), float(end), "day")


def filter_manifest(
    records: Sequence[ManifestRecord],
    satellite: str | None = None,
    parcels: Iterable[str] | None = None,
    window: DateWindow | None = None,
    season: str | None = None,
) -> list[ManifestRecord]:
    keep = set(parcels) if parcels is not None else None
    out = []
    for r in records:
        if satellite is not None and r.satellite != satellite:
            continue
        if keep is not None and r.parcel_id not in keep:
            continue
        if season is not None and r.season_id != season:
            continue
        if window is not None and not window.contains(r):
            continue
        out.append(r)
    return out


def parcel_labels(records: Iterable[ManifestRecord]) -> dict[str, str]:
    out: dict[str, str] = {}
    for r in records:
        prev = out.setdefault(r.parcel_id, r.label)
        if prev != r.label:
            raise SchemaError(f"parcel {r.parcel_id} carries two labels: {prev!r}, {r.label!r}")
    return out
