"""Variable schema of the wildfire datacube and deterministic channel layouts.

The catalog fixes the identity, order, and role of every variable so that
dataset writing, model input assembly, and checkpoints all agree on what
channel means what. Any edit to the catalog changes its version hash and
invalidates downstream artifacts.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

ROLE_DYNAMIC = "dynamic_input"
ROLE_STATIC = "static_input"
ROLE_IGNITION = "ignition"
ROLE_TARGET = "target"
ROLES = (ROLE_DYNAMIC, ROLE_STATIC, ROLE_IGNITION, ROLE_TARGET)

STACKED_2D = "stacked2d"
VOLUMETRIC_3D = "volumetric3d"
IGNITION_DAY_2D = "ignition_day_2d"
LAYOUT_MODES = (STACKED_2D, VOLUMETRIC_3D, IGNITION_DAY_2D)

PATCH_SIZE = 64


@dataclass(frozen=True)
class VariableSpec:
    """One variable of the source datacube.

    norm_min/norm_max are fallback normalization bounds (physically plausible
    ranges); dataset builds replace them with training-split statistics.
    """

    name: str
    role: str
    units: str = ""
    source_spatial_resolution_km: float = 1.0
    source_temporal_resolution: str | None = None
    norm_min: float = 0.0
    norm_max: float = 1.0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for variable {self.name!r}")
        if self.norm_max < self.norm_min:
            raise ValueError(
                f"{self.name}: norm_max ({self.norm_max}) < norm_min ({self.norm_min})"
            )


@dataclass(frozen=True)
class TemporalWindow:
    """Day range around ignition: [ignition - pre_days, ignition + post_days]."""

    pre_days: int
    post_days: int

    def __post_init__(self):
        if self.pre_days < 0 or self.post_days < 0:
            raise ValueError("window day counts must be non-negative")

    @property
    def total_days(self) -> int:
        return self.pre_days + 1 + self.post_days

    @property
    def ignition_index(self) -> int:
        return self.pre_days

    @classmethod
    def parse(cls, text: str) -> "TemporalWindow":
        """Parse a 'pre,post' CLI string such as '4,5'."""
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError(f"window must be 'pre,post', got {text!r}")
        return cls(int(parts[0]), int(parts[1]))


DEFAULT_WINDOW = TemporalWindow(4, 5)


@dataclass(frozen=True)
class ChannelRef:
    """One input channel: a variable, optionally pinned to a day offset.

    day_offset is relative to the ignition day (negative = before); None for
    static channels and for volumetric mode, where time is a separate axis.
    """

    name: str
    day_offset: int | None = None


@dataclass(frozen=True)
class ChannelLayout:
    mode: str
    channels: tuple
    total_channels: int
    time_depth: int
    window: TemporalWindow


class VariableCatalog:
    """Ordered, immutable registry of dataset variables."""

    def __init__(self, variables):
        self.variables = tuple(variables)
        targets = [v for v in self.variables if v.role == ROLE_TARGET]
        ignitions = [v for v in self.variables if v.role == ROLE_IGNITION]
        if len(targets) != 1:
            raise ValueError(f"catalog must contain exactly one target variable, found {len(targets)}")
        if len(ignitions) != 1:
            raise ValueError(f"catalog must contain exactly one ignition variable, found {len(ignitions)}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("catalog variable names must be unique")
        self.version_hash = self._digest()

    def _digest(self) -> str:
        h = hashlib.sha256()
        for v in self.variables:
            h.update(f"{v.name}|{v.role}\n".encode())
        return h.hexdigest()[:16]

    def __len__(self):
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)

    def by_name(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def target_name(self) -> str:
        return next(v.name for v in self.variables if v.role == ROLE_TARGET)

    @property
    def ignition_name(self) -> str:
        return next(v.name for v in self.variables if v.role == ROLE_IGNITION)

    def dynamic_channel_names(self):
        """Per-time-step input channels: time-varying variables plus the
        ignition raster (nonzero only at the ignition-day step)."""
        names = [v.name for v in self.variables if v.role == ROLE_DYNAMIC]
        names.append(self.ignition_name)
        return names

    def static_channel_names(self):
        return [v.name for v in self.variables if v.role == ROLE_STATIC]

    def input_names(self):
        return self.dynamic_channel_names() + self.static_channel_names()

    def to_json(self) -> str:
        payload = {
            "version_hash": self.version_hash,
            "variables": [
                {
                    "name": v.name,
                    "role": v.role,
                    "units": v.units,
                    "source_spatial_resolution_km": v.source_spatial_resolution_km,
                    "source_temporal_resolution": v.source_temporal_resolution,
                    "norm_min": v.norm_min,
                    "norm_max": v.norm_max,
                }
                for v in self.variables
            ],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "VariableCatalog":
        payload = json.loads(text)
        cat = cls([VariableSpec(**entry) for entry in payload["variables"]])
        stored = payload.get("version_hash")
        if stored is not None and stored != cat.version_hash:
            raise ValueError(
                f"catalog file version_hash {stored} does not match recomputed {cat.version_hash}"
            )
        return cat

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "VariableCatalog":
        with open(path) as f:
            return cls.from_json(f.read())


def _met(name, units, res_km=9.0):
    return VariableSpec(name, ROLE_DYNAMIC, units, res_km, "1 day")


def default_catalog() -> VariableCatalog:
    """The 27-variable catalog of the source datacube.

    10 meteorological + 3 vegetation time-varying inputs, 8 land-cover
    fraction + 4 topography static inputs, the burned-area target, and the
    ignition-point raster. Channel counts follow from the roles: 14 dynamic
    channels per time step (13 time-varying inputs + ignition) and 12 static
    channels.
    """
    variables = [
        # meteorological
        VariableSpec("Max Temperature", ROLE_DYNAMIC, "K", 9.0, "1 day", 250.0, 330.0),
        VariableSpec("U Component of Wind", ROLE_DYNAMIC, "m/s", 9.0, "1 day", -30.0, 30.0),
        VariableSpec("V Component of Wind", ROLE_DYNAMIC, "m/s", 9.0, "1 day", -30.0, 30.0),
        VariableSpec("Max Dewpoint Temperature", ROLE_DYNAMIC, "K", 9.0, "1 day", 230.0, 310.0),
        VariableSpec("Max Surface Pressure", ROLE_DYNAMIC, "Pa", 9.0, "1 day", 50000.0, 110000.0),
        VariableSpec("Min Relative Humidity", ROLE_DYNAMIC, "%", 9.0, "1 day", 0.0, 100.0),
        VariableSpec("Total Precipitation", ROLE_DYNAMIC, "m", 9.0, "1 day", 0.0, 0.2),
        VariableSpec("Mean Surface Solar Radiation", ROLE_DYNAMIC, "W/m^2", 9.0, "1 day", 0.0, 450.0),
        VariableSpec("Day Land Surface Temperature", ROLE_DYNAMIC, "K", 1.0, "1 day", 250.0, 340.0),
        VariableSpec("Night Land Surface Temperature", ROLE_DYNAMIC, "K", 1.0, "1 day", 240.0, 320.0),
        # vegetation
        VariableSpec("NDVI", ROLE_DYNAMIC, "unitless", 0.5, "16 days", -1.0, 1.0),
        VariableSpec("Leaf Area Index", ROLE_DYNAMIC, "m^2/m^2", 0.5, "8 days", 0.0, 10.0),
        VariableSpec("Soil Moisture", ROLE_DYNAMIC, "m^3/m^3", 5.0, "10 days", 0.0, 1.0),
        # land cover fractions
        VariableSpec("Fraction of Agriculture", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Forest", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Grassland", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Settlements", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Shrubland", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Sparse Vegetation", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Water Bodies", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        VariableSpec("Fraction of Wetland", ROLE_STATIC, "fraction", 0.3, None, 0.0, 1.0),
        # topography
        VariableSpec("Elevation", ROLE_STATIC, "m", 0.03, None, 0.0, 4000.0),
        VariableSpec("Slope", ROLE_STATIC, "degrees", 0.03, None, 0.0, 90.0),
        VariableSpec("Aspect", ROLE_STATIC, "degrees", 0.03, None, 0.0, 360.0),
        VariableSpec("Curvature", ROLE_STATIC, "1/m", 0.03, None, -10.0, 10.0),
        # fire rasters
        VariableSpec("Burned Areas", ROLE_TARGET, "binary", 1.0, "1 day", 0.0, 1.0),
        VariableSpec("Ignition Points", ROLE_IGNITION, "binary", 1.0, "1 day", 0.0, 1.0),
    ]
    return VariableCatalog(variables)


def channel_layout(catalog: VariableCatalog, window: TemporalWindow, mode: str) -> ChannelLayout:
    """Ordered, gap-free channel list for a model input mode.

    stacked2d flattens (day, variable) pairs into independent 2D channels,
    grouped day by day, with static channels appended last. ignition_day_2d
    keeps only the ignition-day slice. volumetric3d keeps time as its own
    axis with the static channels broadcast along it.
    """
    if mode not in LAYOUT_MODES:
        raise ValueError(f"unknown layout mode {mode!r}; expected one of {LAYOUT_MODES}")
    dyn = catalog.dynamic_channel_names()
    sta = catalog.static_channel_names()

    if mode == STACKED_2D:
        channels = [
            ChannelRef(name, offset)
            for offset in range(-window.pre_days, window.post_days + 1)
            for name in dyn
        ]
        channels += [ChannelRef(name) for name in sta]
        return ChannelLayout(mode, tuple(channels), len(channels), 1, window)

    if mode == IGNITION_DAY_2D:
        channels = [ChannelRef(name, 0) for name in dyn]
        channels += [ChannelRef(name) for name in sta]
        return ChannelLayout(mode, tuple(channels), len(channels), 1, window)

    channels = [ChannelRef(name) for name in dyn + sta]
    return ChannelLayout(mode, tuple(channels), len(channels), window.total_days, window)


def assemble_input(dynamic: np.ndarray, static: np.ndarray, layout: ChannelLayout) -> np.ndarray:
    """Arrange a sample's tensors into the model input for a layout.

    dynamic is [n_dyn, T, H, W] with T = layout.window.total_days, static is
    [n_static, H, W]. Returns [total_channels, H, W] for the 2D modes or
    [channels, T, H, W] for volumetric3d.
    """
    n_dyn, t, h, w = dynamic.shape
    if t != layout.window.total_days:
        raise ValueError(
            f"dynamic tensor has {t} time steps, layout window needs {layout.window.total_days}"
        )
    if layout.mode == STACKED_2D:
        # day-major flattening, matching the ChannelRef order
        flat = np.transpose(dynamic, (1, 0, 2, 3)).reshape(n_dyn * t, h, w)
        return np.concatenate([flat, static], axis=0)
    if layout.mode == IGNITION_DAY_2D:
        return np.concatenate([dynamic[:, layout.window.ignition_index], static], axis=0)
    broadcast = np.repeat(static[:, None, :, :], t, axis=1)
    return np.concatenate([dynamic, broadcast], axis=0)
