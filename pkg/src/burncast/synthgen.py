"""Synthetic wind-driven fire events in the real sample schema.

A daily cellular spread from a single ignition cell over a smoothed random
fuel map, elongated toward the day's wind vector, with an optional mid-event
wind-direction shift. Because the post-ignition wind sequence determines the
final shape, datasets generated here give learning-based tests a ground
truth where temporal context provably matters, at desk scale.
"""

import datetime
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, laplace

from .catalog import PATCH_SIZE, TemporalWindow, default_catalog
from .ingest import NormalizationStats, draw_patch_offset, year_split
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

# 8-neighborhood offsets; diagonals spread only across an already burned
# orthogonal bridge cell, which keeps every burned region 4-connected.
_NEIGHBORS = (
    (-1, 0), (1, 0), (0, -1), (0, 1),
    (-1, -1), (-1, 1), (1, -1), (1, 1),
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_events: int = 64
    split_fracs: tuple = (0.8, 0.1, 0.1)
    window: TemporalWindow = TemporalWindow(4, 5)
    # wind regime
    speed_min: float = 6.0
    speed_max: float = 14.0
    direction_min_deg: float = 0.0
    direction_max_deg: float = 360.0
    direction_jitter_deg: float = 8.0
    wind_shift: bool = True
    shift_min_deg: float = 90.0
    shift_max_deg: float = 180.0
    shift_day_min: int = 1  # days after ignition
    shift_day_max: int = 4
    # spread behaviour
    base_spread_prob: float = 0.22
    wind_gain: float = 4.0
    fuel_smoothness: float = 6.0
    fuel_floor: float = 0.55
    water_quantile: float = 0.95
    event_min_days: int = 2
    event_max_days: int = 7
    # terrain texture
    terrain_smoothness: float = 9.0
    max_offset: int = 8

    def __post_init__(self):
        if not 0.0 <= self.base_spread_prob <= 1.0:
            raise ValueError("base_spread_prob must be a probability")
        if self.event_min_days < 1 or self.event_max_days < self.event_min_days:
            raise ValueError("bad event length range")
        if self.n_events < 1:
            raise ValueError("n_events must be positive")


def _smooth01(rng, sigma, shape=(PATCH_SIZE, PATCH_SIZE)):
    field = gaussian_filter(rng.standard_normal(shape), sigma)
    lo, hi = field.min(), field.max()
    if hi == lo:
        return np.zeros(shape)
    return (field - lo) / (hi - lo)


def _event_rng(config: SynthConfig, event_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, int(event_seed)]))


def _daily_winds(config: SynthConfig, rng, event_length: int):
    """Per-window-day (u, v) in m/s. The optional direction shift applies
    from a sampled post-ignition day onward, always early enough to steer
    at least one spread day of this event."""
    t = config.window.total_days
    ign = config.window.ignition_index
    speed = rng.uniform(config.speed_min, config.speed_max)
    base_dir = rng.uniform(config.direction_min_deg, config.direction_max_deg)
    shift_at = None
    shift_by = 0.0
    if config.wind_shift:
        last_effective = max(min(config.shift_day_max, event_length - 1), config.shift_day_min)
        shift_at = ign + int(rng.integers(config.shift_day_min, last_effective + 1))
        shift_by = rng.choice((-1.0, 1.0)) * rng.uniform(config.shift_min_deg, config.shift_max_deg)
    winds = []
    for day in range(t):
        d = base_dir + rng.uniform(-config.direction_jitter_deg, config.direction_jitter_deg)
        if shift_at is not None and day >= shift_at:
            d += shift_by
        s = speed * rng.uniform(0.9, 1.1)
        theta = math.radians(d)
        winds.append((s * math.cos(theta), s * math.sin(theta)))
    return winds


def _spread(config: SynthConfig, rng, fuel, winds, ignition, length: int):
    """Daily cellular spread; returns the burned mask after each day.

    A burning cell ignites each unburned neighbor with probability
    clamp(base * fuel * (1 + gain * max(0, cos a)), 0, 1), a being the angle
    between the day's wind vector and the neighbor direction.
    """
    ign_idx = config.window.ignition_index
    burned = np.zeros(fuel.shape, dtype=bool)
    burned[ignition] = True
    burned_list = [ignition]  # insertion order fixes the sweep order
    masks = []
    for day in range(1, length + 1):
        wind_day = min(ign_idx + day - 1, len(winds) - 1)
        u, v = winds[wind_day]
        wnorm = math.hypot(u, v)
        prev_burned = burned.copy()
        for (r, c) in list(burned_list):
            for i, (dr, dc) in enumerate(_NEIGHBORS):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < fuel.shape[0] and 0 <= cc < fuel.shape[1]):
                    continue
                if burned[rr, cc] or fuel[rr, cc] <= 0:
                    continue
                if i >= 4 and not (prev_burned[rr, c] or prev_burned[r, cc]):
                    continue  # diagonal needs a burned orthogonal bridge
                if wnorm > 0:
                    # neighbor direction in east/north coordinates (rows go south)
                    cos_a = (u * dc + v * (-dr)) / (wnorm * math.hypot(dr, dc))
                else:
                    cos_a = 0.0
                p = config.base_spread_prob * fuel[rr, cc] * (1.0 + config.wind_gain * max(0.0, cos_a))
                if rng.random() < min(p, 1.0):
                    burned[rr, cc] = True
                    burned_list.append((rr, cc))
        masks.append(burned.copy())
    return masks


def _split_plan(config: SynthConfig):
    """Deterministic split sizes: leading events are train, then val, then test."""
    n = config.n_events
    n_train = int(round(n * config.split_fracs[0]))
    n_val = int(round(n * config.split_fracs[1]))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def _ignition_date(config: SynthConfig, index: int, rng) -> datetime.date:
    n_train, n_val, _ = _split_plan(config)
    if index < n_train:
        year = 2006 + index % 15
    elif index < n_train + n_val:
        year = 2021
    else:
        year = 2022
    month = int(rng.integers(6, 10))
    day = int(rng.integers(1, 29))
    return datetime.date(year, month, day)


def generate_event(config: SynthConfig, event_seed: int):
    """Generate one synthetic event.

    event_seed doubles as the event index for date/split planning. Returns
    (sample, per-day burn masks); the masks are diagnostics and are not
    written to the sample container.
    """
    rng = _event_rng(config, event_seed)
    window = config.window
    t = window.total_days

    # landscape
    fuel = config.fuel_floor + (1.0 - config.fuel_floor) * _smooth01(rng, config.fuel_smoothness)
    water_field = _smooth01(rng, config.terrain_smoothness)
    water = water_field > np.quantile(water_field, config.water_quantile)
    fuel = fuel * ~water
    elevation = _smooth01(rng, config.terrain_smoothness)
    gy, gx = np.gradient(elevation)
    slope = np.hypot(gy, gx)
    slope = slope / slope.max() if slope.max() > 0 else slope
    aspect = (np.arctan2(gy, gx) + np.pi) / (2 * np.pi)
    curv = laplace(elevation)
    curv_span = np.abs(curv).max()
    curvature = 0.5 + 0.5 * (curv / curv_span if curv_span > 0 else curv)

    dy, dx = draw_patch_offset(rng, config.max_offset)
    ignition = (PATCH_SIZE // 2 - dy, PATCH_SIZE // 2 - dx)
    water[ignition] = False
    fuel[ignition] = max(fuel[ignition], 0.8)

    length = int(rng.integers(config.event_min_days, config.event_max_days + 1))
    winds = _daily_winds(config, rng, length)
    masks = _spread(config, rng, fuel, winds, ignition, length)
    target = masks[-1].astype(np.uint8)

    catalog = default_catalog()
    smax = config.speed_max * 1.1  # daily speed jitter can exceed speed_max
    u_n = [np.clip((u + smax) / (2 * smax), 0, 1) for u, _ in winds]
    v_n = [np.clip((v + smax) / (2 * smax), 0, 1) for _, v in winds]

    ndvi = np.clip(fuel + 0.05 * (rng.standard_normal(fuel.shape)), 0, 1)
    lai = np.clip(0.8 * fuel + 0.05 * rng.standard_normal(fuel.shape), 0, 1)

    def daily_scalar():
        return rng.uniform(0.2, 0.8, size=t)

    scalars = {name: daily_scalar() for name in (
        "Max Temperature", "Max Dewpoint Temperature", "Max Surface Pressure",
        "Min Relative Humidity", "Total Precipitation", "Mean Surface Solar Radiation",
        "Day Land Surface Temperature", "Night Land Surface Temperature", "Soil Moisture",
    )}

    dyn_names = catalog.dynamic_channel_names()
    dynamic = np.zeros((len(dyn_names), t, PATCH_SIZE, PATCH_SIZE), dtype=np.float32)
    for i, name in enumerate(dyn_names):
        if name == "U Component of Wind":
            for d in range(t):
                dynamic[i, d] = u_n[d]
        elif name == "V Component of Wind":
            for d in range(t):
                dynamic[i, d] = v_n[d]
        elif name == "NDVI":
            dynamic[i] = ndvi
        elif name == "Leaf Area Index":
            dynamic[i] = lai
        elif name == catalog.ignition_name:
            dynamic[i, window.ignition_index, ignition[0], ignition[1]] = 1.0
        else:
            for d in range(t):
                dynamic[i, d] = scalars[name][d]

    sta_names = catalog.static_channel_names()
    static = np.zeros((len(sta_names), PATCH_SIZE, PATCH_SIZE), dtype=np.float32)
    fillers = {
        "Fraction of Forest": fuel * ~water,
        "Fraction of Water Bodies": water.astype(float),
        "Elevation": elevation,
        "Slope": slope,
        "Aspect": aspect,
        "Curvature": curvature,
    }
    for i, name in enumerate(sta_names):
        if name in fillers:
            static[i] = fillers[name]
        else:
            static[i] = 0.3 * _smooth01(rng, config.terrain_smoothness)

    sample = FireEventSample(
        event_id=f"synth_{event_seed:05d}",
        ignition_date=_ignition_date(config, event_seed, rng),
        dynamic=dynamic,
        static=static,
        target=target,
        burned_area_ha=HA_PER_PIXEL * int(target.sum()),
        ignition_pixel=ignition,
        patch_origin=(0, 0),
        catalog_hash=catalog.version_hash,
        window=window,
    )
    sample.validate()
    return sample, masks


def synth_stats(config: SynthConfig) -> NormalizationStats:
    """Normalization bounds matching what generate_event wrote."""
    catalog = default_catalog()
    stats = NormalizationStats.identity(catalog)
    smax = config.speed_max * 1.1
    stats.values["U Component of Wind"] = (-smax, smax)
    stats.values["V Component of Wind"] = (-smax, smax)
    return stats


def generate_dataset(config: SynthConfig, out_dir):
    """Write a full synthetic dataset: samples, manifest, stats, catalog."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog = default_catalog()
    entries = []
    for i in range(config.n_events):
        sample, _ = generate_event(config, i)
        rel = f"samples/{sample.event_id}.h5"
        write_sample(sample, out_dir / rel)
        entries.append(
            ManifestEntry(
                event_id=sample.event_id,
                year=sample.year,
                split=year_split(sample.year),
                path=rel,
                burned_area_ha=sample.burned_area_ha,
                ignition_date=sample.ignition_date.isoformat(),
            )
        )
    write_manifest(entries, out_dir / "manifest.jsonl")
    synth_stats(config).save(out_dir / "stats.json")
    catalog.save(out_dir / "catalog.json")
    counts = {SPLIT_TRAIN: 0, SPLIT_VAL: 0, SPLIT_TEST: 0}
    for e in entries:
        counts[e.split] += 1
    return {"counts": counts, "n_written": len(entries)}
