"""Shared fixtures: synthetic raw source cubes and small generated datasets."""

import datetime

import h5py
import numpy as np
import pytest

from burncast.catalog import TemporalWindow, default_catalog
from burncast.synthgen import SynthConfig, generate_dataset

# physical value ranges for raw cube generation, per variable
_RAW_RANGES = {
    "Max Temperature": (270.0, 320.0),
    "Max Dewpoint Temperature": (260.0, 300.0),
    "Max Surface Pressure": (95000.0, 104000.0),
    "Min Relative Humidity": (5.0, 95.0),
    "Total Precipitation": (0.0, 0.03),
    "Mean Surface Solar Radiation": (50.0, 400.0),
    "Day Land Surface Temperature": (280.0, 330.0),
    "Night Land Surface Temperature": (270.0, 305.0),
    "NDVI": (-0.2, 0.9),
    "Leaf Area Index": (0.0, 6.0),
    "Soil Moisture": (0.05, 0.45),
    "Elevation": (0.0, 2500.0),
    "Slope": (0.0, 45.0),
    "Aspect": (0.0, 360.0),
    "Curvature": (-2.0, 2.0),
}

_FRACTION_NAMES = (
    "Fraction of Agriculture", "Fraction of Forest", "Fraction of Grassland",
    "Fraction of Settlements", "Fraction of Shrubland",
    "Fraction of Sparse Vegetation", "Fraction of Wetland",
)


def build_raw_cube(path, years=(2010, 2021, 2022), days_per_year=12,
                   ignitions_per_year=3, size=128, seed=0,
                   wind_as_speed_dir=True, fill_value=-9999.0,
                   nan_prob=0.0, water_lake=None, ignition_margin=48):
    """Write a synthetic raw HDF5 source cube with physical-unit values.

    The date axis concatenates blocks of consecutive days, one block per
    year, and each block carries ignitions mid-block so every event has a
    full temporal window. Burned-area rasters grow a small blob around each
    ignition over the following days. Returns the list of ignition
    (date, row, col) actually planted.
    """
    rng = np.random.default_rng(seed)
    dates = []
    for year in years:
        start = datetime.date(year, 7, 1)
        dates += [start + datetime.timedelta(days=i) for i in range(days_per_year)]
    t_total = len(dates)

    dyn = {}
    for name, (lo, hi) in _RAW_RANGES.items():
        if name in ("Elevation", "Slope", "Aspect", "Curvature"):
            continue
        dyn[name] = rng.uniform(lo, hi, size=(t_total, size, size)).astype(np.float32)

    if wind_as_speed_dir:
        dyn["Wind Speed"] = rng.uniform(0.5, 18.0, size=(t_total, size, size)).astype(np.float32)
        dyn["Wind Direction"] = rng.uniform(0.0, 360.0, size=(t_total, size, size)).astype(np.float32)
    else:
        dyn["U Component of Wind"] = rng.uniform(-15, 15, size=(t_total, size, size)).astype(np.float32)
        dyn["V Component of Wind"] = rng.uniform(-15, 15, size=(t_total, size, size)).astype(np.float32)

    static = {}
    for name in ("Elevation", "Slope", "Aspect", "Curvature"):
        lo, hi = _RAW_RANGES[name]
        static[name] = rng.uniform(lo, hi, size=(size, size)).astype(np.float32)
    fracs = rng.dirichlet(np.ones(len(_FRACTION_NAMES) + 1), size=(size, size))
    for i, name in enumerate(_FRACTION_NAMES):
        static[name] = fracs[..., i].astype(np.float32)
    water = fracs[..., -1].astype(np.float32)
    if water_lake is not None:
        r0, c0, half, frac = water_lake
        water[r0 - half:r0 + half, c0 - half:c0 + half] = frac
    static["Fraction of Water Bodies"] = water

    ignition = np.zeros((t_total, size, size), dtype=np.float32)
    burned = np.zeros((t_total, size, size), dtype=np.float32)
    planted = []
    lo_pos, hi_pos = ignition_margin, size - ignition_margin
    for b, year in enumerate(years):
        base_t = b * days_per_year
        for k in range(ignitions_per_year):
            t = base_t + days_per_year // 2
            r = int(rng.integers(lo_pos, hi_pos + 1))
            c = int(rng.integers(lo_pos, hi_pos + 1))
            ignition[t, r, c] = 1.0
            # burn a growing blob for three days starting at ignition
            for d, radius in enumerate((1, 2, 3)):
                if t + d < base_t + days_per_year:
                    burned[t + d, r - radius:r + radius + 1, c - radius:c + radius + 1] = 1.0
            planted.append((dates[t], r, c))

    if nan_prob > 0:
        for name, arr in dyn.items():
            if name in ("Wind Speed", "Wind Direction"):
                continue
            mask = rng.random(arr.shape) < nan_prob
            arr[mask] = np.nan
        hole = rng.random((size, size)) < nan_prob
        static["Elevation"][hole] = fill_value

    with h5py.File(path, "w") as f:
        f.attrs["dates"] = [d.isoformat() for d in dates]
        if fill_value is not None:
            f.attrs["fill_value"] = fill_value
        g = f.create_group("dynamic")
        for name, arr in dyn.items():
            g.create_dataset(name, data=arr, compression="gzip", compression_opts=1)
        g.create_dataset("Ignition Points", data=ignition, compression="gzip", compression_opts=1)
        g.create_dataset("Burned Areas", data=burned, compression="gzip", compression_opts=1)
        s = f.create_group("static")
        for name, arr in static.items():
            s.create_dataset(name, data=arr)
    return planted


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def window45():
    return TemporalWindow(4, 5)


@pytest.fixture(scope="session")
def raw_cube(tmp_path_factory):
    """A small raw cube with speed/direction winds and a few NaN holes."""
    path = tmp_path_factory.mktemp("cube") / "cube.h5"
    planted = build_raw_cube(path, seed=11, nan_prob=0.01)
    return path, planted


@pytest.fixture(scope="session")
def synth_dataset_dir(tmp_path_factory):
    """A 24-event generated dataset shared by read-only tests."""
    out = tmp_path_factory.mktemp("synthdata")
    config = SynthConfig(seed=5, n_events=24, base_spread_prob=0.25)
    generate_dataset(config, out)
    return out
