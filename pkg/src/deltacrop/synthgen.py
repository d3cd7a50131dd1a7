"""Synthetic multi-sensor crop phenology.

Every parcel lives on a 19×19 native grid at daily cadence. Vegetation cover
follows a double-logistic curve; each pixel mixes a shared soil spectrum with
its crop's vegetation spectrum in proportion to cover. Sensors are emulated by
block-averaging the native grid (3×3 for L8, 7×7 for S2), keeping their band
subsets and revisit cadence, dropping acquisitions at random (clouds), and
adding Gaussian noise.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .datastore import (
    SENSOR_ORDER,
    SENSORS,
    BandStack,
    ManifestRecord,
    atomic_write_bytes,
    encode_bandstack,
    get_sensor,
    write_manifest,
)
from .errors import ContractError
from .sampler import derive_seed

NATIVE_TOKENS = (
    "U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3", "NIR", "NARROW-NIR",
    "WATER-VAPOUR", "SWIR1", "SWIR2", "PAN", "CIRRUS", "TIRS1", "TIRS2",
)
_TOK = {t: i for i, t in enumerate(NATIVE_TOKENS)}
REFLECTIVE = NATIVE_TOKENS[:12]

SOIL = dict(zip(REFLECTIVE, (0.10, 0.12, 0.15, 0.19, 0.21, 0.23, 0.25, 0.27, 0.28, 0.26, 0.33, 0.28)))


def _veg(nir, swir1, swir2, re2, vis_shift=0.0):
    vis = (0.030, 0.040, 0.080, 0.040)
    return dict(zip(REFLECTIVE, (
        vis[0] + vis_shift, vis[1] + vis_shift, vis[2] + vis_shift, vis[3] + vis_shift,
        0.12, re2, 0.8 * nir, nir, 1.02 * nir, 0.8 * nir, swir1, swir2,
    )))


@dataclass(frozen=True)
class Phenology:
    v_min: float
    v_max: float
    t0: float
    k1: float
    t1: float
    k2: float

    def check(self) -> "Phenology":
        if not (0 <= self.v_min < self.v_max <= 1):
            raise ContractError(f"need 0 ≤ v_min < v_max ≤ 1, got {self.v_min}, {self.v_max}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ContractError("phenology slopes must be positive")
        if self.t0 >= self.t1:
            raise ContractError(f"green-up t0={self.t0} must precede senescence t1={self.t1}")
        return self


@dataclass(frozen=True)
class CropProfile:
    name: str
    sowing_window: tuple[int, int]  # day-of-year range
    season_days: int
    phenology: Phenology
    vegetation: dict
    spectral_jitter: float = 0.04

    def check(self) -> "CropProfile":
        self.phenology.check()
        for tok, v in self.vegetation.items():
            if not 0 <= v <= 1.5:
                raise ContractError(f"{self.name}: endmember {tok}={v} outside [0, 1.5]")
        return self


DEFAULT_PROFILES: dict[str, CropProfile] = {
    p.name: p
    for p in (
        CropProfile("paddy", (150, 200), 120, Phenology(0.05, 0.85, 30, 0.15, 100, 0.12),
                    _veg(0.38, 0.15, 0.07, 0.26, 0.004)),
        CropProfile("sugarcane", (20, 80), 330, Phenology(0.05, 0.95, 60, 0.06, 290, 0.05),
                    _veg(0.50, 0.24, 0.12, 0.33, -0.004)),
        CropProfile("banana", (60, 140), 300, Phenology(0.05, 0.80, 50, 0.05, 260, 0.06),
                    _veg(0.44, 0.29, 0.16, 0.30, 0.002)),
        CropProfile("pulses", (10, 60), 80, Phenology(0.05, 0.70, 20, 0.20, 65, 0.18),
                    _veg(0.34, 0.27, 0.14, 0.25, -0.002)),
        CropProfile("other", (200, 260), 150, Phenology(0.05, 0.80, 40, 0.10, 120, 0.10),
                    _veg(0.47, 0.20, 0.10, 0.31, 0.0)),
    )
}


def double_logistic(t, p: Phenology):
    """Cover fraction f(t) ∈ [0, 1]: rising sigmoid at t0 minus falling sigmoid at t1."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(over="ignore"):
        rise = 1.0 / (1.0 + np.exp(-p.k1 * (t - p.t0)))
        fall = 1.0 / (1.0 + np.exp(-p.k2 * (t - p.t1)))
    return np.clip(rise - fall, 0.0, 1.0)


def vegetation_index(t, p: Phenology):
    """Cover scaled into [v_min, v_max]; this is the mixing fraction."""
    return p.v_min + double_logistic(t, p) * (p.v_max - p.v_min)


def mix_spectrum(cover, soil, veg):
    """Linear two-endmember mixture ``(1 - f)·soil + f·veg``."""
    return (1 - cover) * soil + cover * veg


@dataclass
class SceneConfig:
    parcels: int = 172
    crops: dict = field(default_factory=dict)  # name -> weight; empty means Zipf over defaults
    imbalance: str = "zipf:1.0"
    satellites: list = field(default_factory=lambda: list(SENSOR_ORDER))
    noise: dict = field(default_factory=lambda: {"L8": 0.01, "S2": 0.01, "PS": 0.015})
    dropout: dict = field(default_factory=lambda: {"L8": 0.1, "S2": 0.2, "PS": 0.3})
    grid: int = 19
    seed: int = 7
    year: int = 2019
    season_days: int | None = None  # overrides every profile's season length
    start_jitter: int = 15
    pixel_jitter: float = 0.08
    phenology_jitter: float = 0.12
    soil_jitter: float = 0.08
    thermal_sigma: float = 0.06
    native_noise: float = 0.0

    def check(self) -> "SceneConfig":
        if self.parcels < 1:
            raise ContractError("need at least one parcel")
        for sat in self.satellites:
            get_sensor(sat)
        for sat, p in self.dropout.items():
            if not 0 <= p < 1:
                raise ContractError(f"dropout for {sat} must be in [0, 1), got {p}")
        if any(w <= 0 for w in self.crop_weights().values()):
            raise ContractError("crop weights must be positive")
        return self

    def crop_weights(self) -> dict[str, float]:
        if self.crops:
            return {k: float(v) for k, v in self.crops.items()}
        names = list(DEFAULT_PROFILES)
        return zipf_weights(names, self.imbalance)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SceneConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown scene config keys {sorted(unknown)}")
        return cls(**d).check()

    @classmethod
    def load(cls, path) -> "SceneConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def zipf_weights(names, spec: str) -> dict[str, float]:
    kind, _, arg = spec.partition(":")
    if kind == "uniform":
        return {n: 1.0 for n in names}
    if kind != "zipf":
        raise ContractError(f"unknown imbalance spec {spec!r}")
    s = float(arg or 1.0)
    return {n: 1.0 / (i + 1) ** s for i, n in enumerate(names)}


def allocate_labels(weights: dict[str, float], count: int, seed: int) -> list[str]:
    """Largest-remainder allocation of ``count`` labels, shuffled with ``seed``."""
    total = sum(weights.values())
    raw = {k: w * count / total for k, w in weights.items()}
    alloc = {k: int(math.floor(v)) for k, v in raw.items()}
    for k in sorted(raw, key=lambda k: (-(raw[k] - alloc[k]), k))[: count - sum(alloc.values())]:
        alloc[k] += 1
    labels = [k for k in weights for _ in range(alloc[k])]
    rng = np.random.default_rng(derive_seed(seed, "labels"))
    return [labels[i] for i in rng.permutation(len(labels))]


# -- native series ---------------------------------------------------------------------


def block_edges(native: int, target: int) -> np.ndarray:
    return np.array([i * native // target for i in range(target)])


def block_average(grid: np.ndarray, target: int) -> np.ndarray:
    """Average the last two axes of ``grid`` into ``target×target`` blocks."""
    n = grid.shape[-1]
    edges = block_edges(n, target)
    sizes = np.diff(np.append(edges, n))
    summed = np.add.reduceat(np.add.reduceat(grid, edges, axis=-2), edges, axis=-1)
    return summed / (sizes[:, None] * sizes[None, :])


@dataclass
class ParcelSeries:
    parcel_id: str
    label: str
    sowing: date
    season_days: int
    location: tuple[float, float]
    phenology: Phenology
    veg: np.ndarray  # (tokens,)
    soil: np.ndarray  # (tokens,)
    pixel_cover: np.ndarray  # (grid, grid) multiplicative cover jitter
    pixel_soil: np.ndarray  # (grid, grid) soil brightness
    thermal: np.ndarray  # (season_days,) crop-independent temperature proxy
    cirrus: np.ndarray  # (season_days,)
    noise: float
    seed: int

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.season_days)

    @property
    def season_id(self) -> str:
        return f"{self.sowing.year}-{self.sowing.timetuple().tm_yday:03d}"

    def date_of(self, day: int) -> str:
        return (self.sowing + timedelta(days=int(day))).isoformat()

    def render(self, days=None) -> np.ndarray:
        """Reflectance cube (len(days), len(NATIVE_TOKENS), grid, grid) as float64."""
        days = self.days if days is None else np.asarray(days)
        cover = vegetation_index(days, self.phenology)[:, None, None] * self.pixel_cover
        cover = np.clip(cover, 0.0, 1.0)[:, None]
        soil = self.soil[None, :12, None, None] * self.pixel_soil[None, None]
        veg = self.veg[None, :12, None, None]
        refl = mix_spectrum(cover, soil, veg)
        g = self.pixel_cover.shape[0]
        out = np.empty((len(days), len(NATIVE_TOKENS), g, g))
        out[:, :12] = refl
        out[:, _TOK["PAN"]] = refl[:, [_TOK["B"], _TOK["G"], _TOK["R"]]].mean(axis=1)
        out[:, _TOK["CIRRUS"]] = self.cirrus[days][:, None, None]
        out[:, _TOK["TIRS1"]] = self.thermal[days][:, None, None]
        out[:, _TOK["TIRS2"]] = 0.95 * self.thermal[days][:, None, None] + 0.01
        if self.noise > 0:
            for i, d in enumerate(days):
                rng = np.random.default_rng(derive_seed(self.seed, "native-noise", int(d)))
                out[i] += rng.normal(0, self.noise, size=out.shape[1:])
        return np.clip(out, 0.0, 1.5)


def generate_parcel_series(profile: CropProfile, config: SceneConfig, parcel_id: str, seed: int) -> ParcelSeries:
    profile.check()
    rng = np.random.default_rng(seed)
    lo, hi = profile.sowing_window
    sow_doy = int(rng.integers(lo, hi + 1)) + int(rng.integers(-config.start_jitter, config.start_jitter + 1))
    sowing = date(config.year, 1, 1) + timedelta(days=max(sow_doy, 0))
    season = int(config.season_days or profile.season_days)
    scale = season / profile.season_days
    j = config.phenology_jitter
    ph = profile.phenology
    ph = replace(
        ph,
        t0=ph.t0 * scale * (1 + j * rng.uniform(-1, 1)),
        t1=ph.t1 * scale * (1 + j * rng.uniform(-1, 1) / 2),
        k1=ph.k1 / scale,
        k2=ph.k2 / scale,
        v_max=min(1.0, ph.v_max * (1 + j * rng.uniform(-1, 1))),
    )
    veg = np.array([profile.vegetation[t] for t in REFLECTIVE])
    veg = veg * np.exp(profile.spectral_jitter * rng.normal(size=veg.shape))
    soil = np.array([SOIL[t] for t in REFLECTIVE]) * (1 + config.soil_jitter * rng.uniform(-1, 1))
    g = config.grid
    pixel_cover = 1 + config.pixel_jitter * rng.normal(size=(g, g))
    pixel_soil = 1 + 0.4 * config.pixel_jitter * rng.normal(size=(g, g))
    doy = np.arange(season) + sowing.timetuple().tm_yday
    thermal = 0.30 + 0.05 * np.sin(2 * np.pi * doy / 365) + config.thermal_sigma * rng.normal(size=season)
    cirrus = 0.01 + 0.004 * np.abs(rng.normal(size=season))
    location = tuple(float(v) for v in rng.uniform(0, 100, size=2))
    return ParcelSeries(
        parcel_id, profile.name, sowing, season, location, ph, np.clip(veg, 0, 1.5), soil,
        pixel_cover, pixel_soil, thermal, cirrus, config.native_noise, seed,
    )


# -- sensor emulation ------------------------------------------------------------------------


def acquisition_days(season_days: int, revisit: int) -> np.ndarray:
    return np.arange(0, season_days, revisit)


def observe(series: ParcelSeries, satellite: str, config: SceneConfig) -> list[BandStack]:
    """Project a parcel series through one sensor; clouds drop whole acquisitions."""
    sensor = get_sensor(satellite)
    rng = np.random.default_rng(derive_seed(series.seed, "observe", satellite))
    days = acquisition_days(series.season_days, sensor.revisit_days)
    keep = rng.uniform(size=len(days)) >= config.dropout.get(satellite, 0.0)
    if not keep.any():
        keep[rng.integers(len(days))] = True
    days = days[keep]
    cube = series.render(days)[:, [_TOK[t] for t in sensor.bands]]
    h, _ = sensor.chip
    if h != cube.shape[-1]:
        cube = block_average(cube, h)
    sigma = config.noise.get(satellite, 0.0)
    if sigma > 0:
        cube = cube + rng.normal(0, sigma, size=cube.shape)
    cube = np.clip(cube, 0.0, 1.5).astype(np.float32)
    return [
        BandStack(series.parcel_id, satellite, series.date_of(d), series.season_id, sensor.bands, cube[i],
                  series.label)
        for i, d in enumerate(days)
    ]


@dataclass
class GeneratedDataset:
    root: Path
    manifests: dict[str, Path]
    parcels: list[dict]


def generate_dataset(config: SceneConfig, out_dir: str | os.PathLike, profiles: dict | None = None) -> GeneratedDataset:
    """Write BSF stacks, per-satellite manifests, ``manifest.jsonl`` and ``parcels.json``."""
    config.check()
    profiles = profiles or DEFAULT_PROFILES
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    weights = config.crop_weights()
    missing = set(weights) - set(profiles)
    if missing:
        raise ContractError(f"no crop profile for {sorted(missing)}")
    labels = allocate_labels(weights, config.parcels, config.seed)
    records: dict[str, list[ManifestRecord]] = {s: [] for s in config.satellites}
    parcel_rows = []
    for i, label in enumerate(labels):
        pid = f"P{i + 1:04d}"
        series = generate_parcel_series(profiles[label], config, pid, derive_seed(config.seed, pid))
        end = series.sowing + timedelta(days=series.season_days)
        parcel_rows.append({
            "parcel_id": pid, "label": label, "x": series.location[0], "y": series.location[1],
            "season_id": series.season_id, "season_start": series.sowing.isoformat(),
            "season_end": end.isoformat(),
        })
        for sat in config.satellites:
            for stack in observe(series, sat, config):
                rel = Path(sat) / pid / f"{stack.date}.bsf"
                atomic_write_bytes(root / rel, encode_bandstack(stack))
                records[sat].append(ManifestRecord(
                    str(rel), pid, sat, stack.date, stack.season_id, label, stack.height, stack.width,
                    series.sowing.isoformat(), end.isoformat(),
                ))
    manifests = {}
    for sat in config.satellites:
        path = root / f"manifest_{sat}.jsonl"
        write_manifest(records[sat], path)
        manifests[sat] = path
    write_manifest([r for sat in config.satellites for r in records[sat]], root / "manifest.jsonl")
    atomic_write_bytes(root / "parcels.json", (json.dumps(parcel_rows, indent=1) + "\n").encode())
    atomic_write_bytes(root / "scene.json", (json.dumps(config.to_json(), indent=1, sort_keys=True) + "\n").encode())
    return GeneratedDataset(root, manifests, parcel_rows)


def load_parcels(manifest_path) -> list[dict] | None:
    path = Path(manifest_path).parent / "parcels.json"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def spectral_separation(profiles: dict, tokens) -> float:
    """Mean pairwise Euclidean distance between crop vegetation spectra on ``tokens``."""
    names = sorted(profiles)
    vecs = np.array([[profiles[n].vegetation[t] for t in tokens] for n in names])
    d = [np.linalg.norm(vecs[i] - vecs[j]) for i in range(len(names)) for j in range(i + 1, len(names))]
    return float(np.mean(d))


__all__ = [
    "CropProfile", "DEFAULT_PROFILES", "GeneratedDataset", "NATIVE_TOKENS", "ParcelSeries", "Phenology",
    "SENSORS", "SceneConfig", "acquisition_days", "allocate_labels", "block_average", "double_logistic",
    "generate_dataset", "generate_parcel_series", "load_parcels", "mix_spectrum", "observe",
    "spectral_separation", "vegetation_index", "zipf_weights",
]
