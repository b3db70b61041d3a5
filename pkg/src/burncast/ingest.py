"""Extraction of ML-ready fire-event samples from a gridded datacube.

The source cube holds daily grids for the time-varying variables and single
grids for the static ones, on a shared 1 km grid with a shared date axis.
For every recorded ignition, a 64x64 patch around the (randomly offset)
ignition point is cut over the temporal window, winds are resolved into
eastward/northward components when the cube carries speed and direction,
values are min-max normalized with training-split statistics, missing cells
are zeroed, and the union of the post-ignition burned-area rasters becomes
the target mask.
"""

import datetime
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import h5py
import numpy as np

from .catalog import PATCH_SIZE, TemporalWindow, VariableCatalog, default_catalog
from .samples import (
    HA_PER_PIXEL,
    FireEventSample,
    ManifestEntry,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
    write_manifest,
    write_sample,
)
from .validation import check_same_shape

log = logging.getLogger(__name__)

TRAIN_YEARS = (2006, 2020)  # inclusive
VAL_YEAR = 2021
TEST_YEAR = 2022

DEFAULT_MAX_OFFSET = 8
DEFAULT_WATER_THRESHOLD = 0.5

WATER_CHANNEL = "Fraction of Water Bodies"
WIND_SPEED = "Wind Speed"
WIND_DIRECTION = "Wind Direction"
WIND_U = "U Component of Wind"
WIND_V = "V Component of Wind"


class EventSkipped(Exception):
    """Event cannot be extracted; carries the reason for the skip log."""


def decompose_wind(speed, direction):
    """Resolve wind speed (m/s) and direction (degrees) into eastward and
    northward components: u = speed*cos(theta), v = speed*sin(theta)."""
    speed = np.asarray(speed, dtype=float)
    direction = np.asarray(direction, dtype=float)
    check_same_shape(speed, direction, ("speed", "direction"))
    theta = np.deg2rad(direction)
    return speed * np.cos(theta), speed * np.sin(theta)


def impute_missing(grid, fill_value=None):
    """Replace missing cells (non-finite, or equal to fill_value) with 0."""
    out = np.asarray(grid, dtype=float).copy()
    missing = ~np.isfinite(out)
    if fill_value is not None:
        missing |= out == fill_value
    out[missing] = 0.0
    return out


def normalize(grid, bounds):
    """Min-max scale to [0, 1] with clipping; a degenerate (min == max)
    variable maps everywhere to 0. Non-finite cells pass through unchanged."""
    vmin, vmax = bounds
    grid = np.asarray(grid, dtype=float)
    if vmax == vmin:
        out = np.zeros_like(grid)
        out[~np.isfinite(grid)] = np.nan
        return out
    return np.clip((grid - vmin) / (vmax - vmin), 0.0, 1.0)


@dataclass
class NormalizationStats:
    """Per-variable (min, max) over the raw values of the training split."""

    values: dict  # name -> (min, max)
    degenerate: set = field(default_factory=set)
    catalog_hash: str = ""

    def entry(self, name):
        if name not in self.values:
            raise ValueError(f"no normalization stats for variable {name!r}")
        return self.values[name]

    def to_json(self) -> str:
        return json.dumps(
            {
                "catalog_hash": self.catalog_hash,
                "degenerate": sorted(self.degenerate),
                "variables": {k: {"min": v[0], "max": v[1]} for k, v in self.values.items()},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "NormalizationStats":
        d = json.loads(text)
        return cls(
            values={k: (v["min"], v["max"]) for k, v in d["variables"].items()},
            degenerate=set(d.get("degenerate", [])),
            catalog_hash=d.get("catalog_hash", ""),
        )

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def identity(cls, catalog: VariableCatalog) -> "NormalizationStats":
        """(0, 1) bounds for every input; for data generated pre-normalized."""
        return cls(
            values={name: (0.0, 1.0) for name in catalog.input_names()},
            catalog_hash=catalog.version_hash,
        )


def compute_normalization_stats(raw_events, catalog: VariableCatalog) -> NormalizationStats:
    """Scan raw per-event variable grids from the training split and record
    each variable's global min/max over finite values.

    raw_events yields mappings of variable name -> raw ndarray. Constant (or
    never-observed) variables are flagged degenerate.
    """
    lo, hi = {}, {}
    n = 0
    for event in raw_events:
        n += 1
        for name, arr in event.items():
            finite = np.asarray(arr, dtype=float)
            finite = finite[np.isfinite(finite)]
            if finite.size == 0:
                continue
            vmin, vmax = float(finite.min()), float(finite.max())
            lo[name] = min(lo.get(name, vmin), vmin)
            hi[name] = max(hi.get(name, vmax), vmax)
    if n == 0:
        raise ValueError("cannot compute normalization stats from an empty training set")
    stats = NormalizationStats(values={}, catalog_hash=catalog.version_hash)
    for spec in catalog:
        name = spec.name
        if name in lo:
            stats.values[name] = (lo[name], hi[name])
            if lo[name] == hi[name]:
                stats.degenerate.add(name)
                log.warning("variable %r is constant (%s) over the training split", name, lo[name])
        else:
            stats.values[name] = (0.0, 0.0)
            stats.degenerate.add(name)
    return stats


def draw_patch_offset(rng, max_offset=DEFAULT_MAX_OFFSET):
    """Uniform integer patch-center offset in [-max_offset, +max_offset]^2."""
    dy = int(rng.integers(-max_offset, max_offset + 1))
    dx = int(rng.integers(-max_offset, max_offset + 1))
    return dy, dx


def water_fraction(sample, catalog: VariableCatalog = None) -> float:
    """Mean of the water-bodies static channel over the patch."""
    catalog = catalog or default_catalog()
    idx = catalog.static_channel_names().index(WATER_CHANNEL)
    return float(sample.static[idx].mean())


def passes_water_filter(sample, threshold=DEFAULT_WATER_THRESHOLD, catalog=None) -> bool:
    """Retain the sample iff its water fraction is strictly below threshold."""
    return water_fraction(sample, catalog) < threshold


def event_rng(global_seed: int, event_id: str) -> np.random.Generator:
    """Independent per-event random stream, stable across runs and processes."""
    digest = hashlib.sha256(event_id.encode()).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([global_seed, key]))


@dataclass(frozen=True)
class IgnitionRecord:
    event_id: str
    date: datetime.date
    row: int
    col: int

    @property
    def year(self) -> int:
        return self.date.year


class DataCube:
    """Read-only view of a gridded source cube stored as HDF5.

    Layout: group 'dynamic' holds [T, H, W] daily grids, group 'static' holds
    [H, W] grids, and the root attribute 'dates' lists the shared date axis
    as ISO strings. An optional 'fill_value' attribute marks provider
    missing-data sentinels.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._f = h5py.File(self.path, "r")
        self.dates = [
            datetime.date.fromisoformat(d.decode() if isinstance(d, bytes) else str(d))
            for d in self._f.attrs["dates"]
        ]
        self._date_index = {d: i for i, d in enumerate(self.dates)}
        self.fill_value = self._f.attrs.get("fill_value", None)
        some = next(iter(self._f["static"].values()))
        self.height, self.width = some.shape

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def date_index(self, date):
        return self._date_index.get(date)

    def has_dynamic(self, name) -> bool:
        return name in self._f["dynamic"]

    def dynamic_patch(self, name, t0, t1, top, left):
        d = self._f["dynamic"][name]
        return np.asarray(
            d[t0:t1, top : top + PATCH_SIZE, left : left + PATCH_SIZE], dtype=np.float64
        )

    def static_patch(self, name, top, left):
        d = self._f["static"][name]
        return np.asarray(d[top : top + PATCH_SIZE, left : left + PATCH_SIZE], dtype=np.float64)

    def scan_ignitions(self, ignition_name="Ignition Points"):
        """Enumerate ignition records from the cube's ignition raster."""
        d = self._f["dynamic"][ignition_name]
        records = []
        for t, date in enumerate(self.dates):
            grid = np.asarray(d[t])
            for r, c in np.argwhere(grid > 0):
                records.append(
                    IgnitionRecord(
                        event_id=f"{date.isoformat()}_r{int(r):04d}_c{int(c):04d}",
                        date=date,
                        row=int(r),
                        col=int(c),
                    )
                )
        return records


def _mask_fill(arr, fill_value):
    if fill_value is None:
        return arr
    out = arr.copy()
    out[out == fill_value] = np.nan
    return out


def _extract_raw(cube: DataCube, record: IgnitionRecord, window: TemporalWindow,
                 catalog: VariableCatalog, rng, max_offset=DEFAULT_MAX_OFFSET):
    """Cut the raw (unnormalized) patch for one event.

    Returns (dynamic grids by name, static grids by name, target mask,
    patch origin, ignition pixel). Raises EventSkipped when the window or
    the patch cannot be cut.
    """
    t_ign = cube.date_index(record.date)
    if t_ign is None:
        raise EventSkipped(f"{record.event_id}: ignition date {record.date} not in cube")
    t0 = t_ign - window.pre_days
    t1 = t_ign + window.post_days + 1
    if t0 < 0 or t1 > len(cube.dates):
        raise EventSkipped(
            f"{record.event_id}: window [{-window.pre_days},+{window.post_days}] "
            "extends past the cube's time axis"
        )
    margin = PATCH_SIZE // 2 + max_offset
    if not (margin <= record.row <= cube.height - margin and
            margin <= record.col <= cube.width - margin):
        raise EventSkipped(
            f"{record.event_id}: ignition at ({record.row},{record.col}) is within "
            f"{margin} cells of the cube boundary"
        )

    dy, dx = draw_patch_offset(rng, max_offset)
    half = PATCH_SIZE // 2
    top, left = record.row - half + dy, record.col - half + dx
    ignition_pixel = (record.row - top, record.col - left)

    dynamic = {}
    for name in catalog.dynamic_channel_names():
        if name == catalog.ignition_name:
            continue  # rebuilt as a one-hot raster, never read from the cube
        if name in (WIND_U, WIND_V) and not cube.has_dynamic(name):
            if not (cube.has_dynamic(WIND_SPEED) and cube.has_dynamic(WIND_DIRECTION)):
                raise ValueError(
                    f"cube provides neither {name!r} nor {WIND_SPEED!r}+{WIND_DIRECTION!r}"
                )
            speed = _mask_fill(cube.dynamic_patch(WIND_SPEED, t0, t1, top, left), cube.fill_value)
            direction = _mask_fill(
                cube.dynamic_patch(WIND_DIRECTION, t0, t1, top, left), cube.fill_value
            )
            u, v = decompose_wind(np.nan_to_num(speed, nan=0.0), np.nan_to_num(direction, nan=0.0))
            missing = ~(np.isfinite(speed) & np.isfinite(direction))
            u[missing] = np.nan
            v[missing] = np.nan
            dynamic[WIND_U] = u
            dynamic[WIND_V] = v
            continue
        if name in dynamic:
            continue
        if not cube.has_dynamic(name):
            raise ValueError(f"cube is missing dynamic variable {name!r}")
        dynamic[name] = _mask_fill(cube.dynamic_patch(name, t0, t1, top, left), cube.fill_value)

    static = {}
    for name in catalog.static_channel_names():
        static[name] = _mask_fill(cube.static_patch(name, top, left), cube.fill_value)

    burned = cube.dynamic_patch(catalog.target_name, t_ign, t1, top, left)
    burned = np.nan_to_num(burned, nan=0.0)
    target = (burned.max(axis=0) > 0).astype(np.uint8)

    return dynamic, static, target, (int(top), int(left)), ignition_pixel


def extract_event(cube: DataCube, record: IgnitionRecord, window: TemporalWindow,
                  catalog: VariableCatalog, stats: NormalizationStats, rng,
                  max_offset=DEFAULT_MAX_OFFSET) -> FireEventSample:
    """Extract one fully preprocessed event sample.

    The target is the union of the burned-area rasters from the ignition day
    to the end of the window, clipped to the patch.
    """
    raw_dyn, raw_static, target, origin, ignition_pixel = _extract_raw(
        cube, record, window, catalog, rng, max_offset
    )

    t = window.total_days
    dyn_names = catalog.dynamic_channel_names()
    dynamic = np.zeros((len(dyn_names), t, PATCH_SIZE, PATCH_SIZE), dtype=np.float32)
    for i, name in enumerate(dyn_names):
        if name == catalog.ignition_name:
            dynamic[i, window.ignition_index, ignition_pixel[0], ignition_pixel[1]] = 1.0
            continue
        scaled = normalize(raw_dyn[name], stats.entry(name))
        dynamic[i] = impute_missing(scaled)

    sta_names = catalog.static_channel_names()
    static = np.zeros((len(sta_names), PATCH_SIZE, PATCH_SIZE), dtype=np.float32)
    for i, name in enumerate(sta_names):
        scaled = normalize(raw_static[name], stats.entry(name))
        static[i] = impute_missing(scaled)

    sample = FireEventSample(
        event_id=record.event_id,
        ignition_date=record.date,
        dynamic=dynamic,
        static=static,
        target=target,
        burned_area_ha=HA_PER_PIXEL * int(target.sum()),
        ignition_pixel=ignition_pixel,
        patch_origin=origin,
        catalog_hash=catalog.version_hash,
        window=window,
    )
    sample.validate()
    return sample


def year_split(year: int):
    """Split for an ignition year, or None when the year is out of range."""
    if TRAIN_YEARS[0] <= year <= TRAIN_YEARS[1]:
        return SPLIT_TRAIN
    if year == VAL_YEAR:
        return SPLIT_VAL
    if year == TEST_YEAR:
        return SPLIT_TEST
    return None


@dataclass
class SplitAssignment:
    assignments: dict  # event_id -> split

    def counts(self):
        c = {SPLIT_TRAIN: 0, SPLIT_VAL: 0, SPLIT_TEST: 0}
        for s in self.assignments.values():
            c[s] += 1
        return c

    def __getitem__(self, event_id):
        return self.assignments[event_id]


def split_by_year(events) -> SplitAssignment:
    """Assign each event to train/val/test by its ignition year.

    events is an iterable of objects with event_id and year attributes.
    Years outside the dataset's range are an error listing the offenders.
    """
    assignments, bad = {}, []
    for e in events:
        split = year_split(e.year)
        if split is None:
            bad.append((e.event_id, e.year))
        else:
            assignments[e.event_id] = split
    if bad:
        shown = ", ".join(f"{eid} ({yr})" for eid, yr in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        raise ValueError(f"events with ignition year outside 2006-2022: {shown}{more}")
    return SplitAssignment(assignments)


def build_dataset(cube_path, out_dir, window=None, seed=0,
                  water_threshold=DEFAULT_WATER_THRESHOLD, catalog=None,
                  max_offset=DEFAULT_MAX_OFFSET):
    """Build the ML-ready dataset from a source cube.

    First pass computes normalization statistics over the training-split raw
    patches only; second pass extracts, filters, and writes every retained
    event plus the manifest, stats, and catalog files. Returns a summary
    with split counts and the skip log.
    """
    window = window or TemporalWindow(4, 5)
    catalog = catalog or default_catalog()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    skipped = []
    entries = []
    water_idx_name = WATER_CHANNEL

    with DataCube(cube_path) as cube:
        records = cube.scan_ignitions(catalog.ignition_name)
        if not records:
            raise ValueError(f"no ignition records found in {cube_path}")
        split = split_by_year(records)

        def finite_mean(arr):
            v = arr[np.isfinite(arr)]
            return float(v.mean()) if v.size else 0.0

        def train_raw():
            for rec in records:
                if split[rec.event_id] != SPLIT_TRAIN:
                    continue
                rng = event_rng(seed, rec.event_id)
                try:
                    raw_dyn, raw_static, _, _, _ = _extract_raw(
                        cube, rec, window, catalog, rng, max_offset
                    )
                except EventSkipped:
                    continue
                if finite_mean(raw_static[water_idx_name]) >= water_threshold:
                    continue
                yield {**raw_dyn, **raw_static}

        stats = compute_normalization_stats(train_raw(), catalog)

        for rec in records:
            rng = event_rng(seed, rec.event_id)
            try:
                sample = extract_event(cube, rec, window, catalog, stats, rng, max_offset)
            except EventSkipped as e:
                skipped.append((rec.event_id, str(e)))
                log.info("skipped %s", e)
                continue
            raw_water = cube.static_patch(
                water_idx_name, sample.patch_origin[0], sample.patch_origin[1]
            )
            wf = finite_mean(_mask_fill(raw_water, cube.fill_value))
            if wf >= water_threshold:
                skipped.append((rec.event_id, f"water fraction {wf:.2f} >= {water_threshold}"))
                continue
            rel = f"samples/{rec.event_id}.h5"
            write_sample(sample, out_dir / rel)
            entries.append(
                ManifestEntry(
                    event_id=rec.event_id,
                    year=rec.date.year,
                    split=split[rec.event_id],
                    path=rel,
                    burned_area_ha=sample.burned_area_ha,
                    ignition_date=rec.date.isoformat(),
                )
            )

    write_manifest(entries, out_dir / "manifest.jsonl")
    stats.save(out_dir / "stats.json")
    catalog.save(out_dir / "catalog.json")

    counts = {SPLIT_TRAIN: 0, SPLIT_VAL: 0, SPLIT_TEST: 0}
    for e in entries:
        counts[e.split] += 1
    return {"counts": counts, "skipped": skipped, "n_written": len(entries)}
