"""On-disk container for fire-event samples and the dataset manifest.

Each event is one self-describing HDF5 file holding the dynamic tensor, the
static tensor, and the target mask, plus identifying attributes. A dataset
directory is a pile of those files indexed by a JSON-lines manifest.
"""

import dataclasses
import datetime
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np

from .catalog import PATCH_SIZE, TemporalWindow

log = logging.getLogger(__name__)

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)

HA_PER_PIXEL = 100.0  # 1 km^2 grid cell


class SampleFormatError(ValueError):
    """Sample file is missing a required array or attribute."""


class CatalogMismatchError(ValueError):
    """Sample was written under a different catalog version."""


@dataclass
class FireEventSample:
    """One fire event, fully preprocessed and ready for model input."""

    event_id: str
    ignition_date: datetime.date
    dynamic: np.ndarray  # float32 [n_dynamic, T, 64, 64], values in [0, 1]
    static: np.ndarray  # float32 [n_static, 64, 64], values in [0, 1]
    target: np.ndarray  # uint8 [64, 64]
    burned_area_ha: float
    ignition_pixel: tuple
    patch_origin: tuple
    catalog_hash: str
    window: TemporalWindow

    def validate(self):
        """Check every structural invariant; raise ValueError on violation."""
        t = self.window.total_days
        if self.dynamic.ndim != 4 or self.dynamic.shape[1:] != (t, PATCH_SIZE, PATCH_SIZE):
            raise ValueError(
                f"{self.event_id}: dynamic shape {self.dynamic.shape} does not match window {t} days"
            )
        if self.static.ndim != 3 or self.static.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"{self.event_id}: static shape {self.static.shape} invalid")
        for name, arr in (("dynamic", self.dynamic), ("static", self.static)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{self.event_id}: {name} tensor contains non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"{self.event_id}: {name} tensor not normalized to [0, 1]")
        if not np.isin(self.target, (0, 1)).all():
            raise ValueError(f"{self.event_id}: target mask is not binary")
        r, c = self.ignition_pixel
        if not (0 <= r < PATCH_SIZE and 0 <= c < PATCH_SIZE):
            raise ValueError(f"{self.event_id}: ignition pixel {self.ignition_pixel} outside patch")
        ign = self.dynamic[-1]  # ignition raster is the last dynamic channel
        hot = np.argwhere(ign > 0)
        if hot.shape[0] != 1 or tuple(hot[0]) != (self.window.ignition_index, r, c):
            raise ValueError(
                f"{self.event_id}: ignition channel must have exactly one hot pixel at "
                f"(t={self.window.ignition_index}, {r}, {c})"
            )
        if ign[self.window.ignition_index, r, c] != 1.0:
            raise ValueError(f"{self.event_id}: ignition pixel value must be exactly 1")
        expected_ha = HA_PER_PIXEL * int(self.target.sum())
        if self.burned_area_ha != expected_ha:
            raise ValueError(
                f"{self.event_id}: burned_area_ha {self.burned_area_ha} != "
                f"{expected_ha} (100 x pixel count)"
            )

    @property
    def year(self) -> int:
        return self.ignition_date.year


def write_sample(sample: FireEventSample, path):
    """Write the sample container; lossless for all tensors and metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with h5py.File(path, "w") as f:
        f.create_dataset("dynamic", data=sample.dynamic.astype(np.float32))
        f.create_dataset("static", data=sample.static.astype(np.float32))
        f.create_dataset("target", data=sample.target.astype(np.uint8))
        f.attrs["event_id"] = sample.event_id
        f.attrs["ignition_date"] = sample.ignition_date.isoformat()
        f.attrs["burned_area_ha"] = float(sample.burned_area_ha)
        f.attrs["catalog_hash"] = sample.catalog_hash
        f.attrs["window"] = [sample.window.pre_days, sample.window.post_days]
        f.attrs["patch_origin"] = list(sample.patch_origin)
        f.attrs["ignition_pixel"] = list(sample.ignition_pixel)
    return path


_REQUIRED_ARRAYS = ("dynamic", "static", "target")
_REQUIRED_ATTRS = (
    "event_id",
    "ignition_date",
    "burned_area_ha",
    "catalog_hash",
    "window",
    "patch_origin",
    "ignition_pixel",
)


def read_sample(path, expected_catalog_hash=None, allow_catalog_mismatch=False) -> FireEventSample:
    """Read a sample container back; inverse of write_sample.

    If expected_catalog_hash is given and differs from the stored hash, the
    read is refused unless allow_catalog_mismatch is set.
    """
    with h5py.File(path, "r") as f:
        for name in _REQUIRED_ARRAYS:
            if name not in f:
                raise SampleFormatError(f"{path}: missing array {name!r}")
        for name in _REQUIRED_ATTRS:
            if name not in f.attrs:
                raise SampleFormatError(f"{path}: missing attribute {name!r}")
        stored_hash = str(f.attrs["catalog_hash"])
        if expected_catalog_hash is not None and stored_hash != expected_catalog_hash:
            log.warning(
                "catalog hash mismatch for %s: sample %s vs expected %s",
                path, stored_hash, expected_catalog_hash,
            )
            if not allow_catalog_mismatch:
                raise CatalogMismatchError(
                    f"{path}: sample catalog hash {stored_hash} != expected "
                    f"{expected_catalog_hash} (pass --allow-catalog-mismatch to override)"
                )
        pre, post = (int(x) for x in f.attrs["window"])
        return FireEventSample(
            event_id=str(f.attrs["event_id"]),
            ignition_date=datetime.date.fromisoformat(str(f.attrs["ignition_date"])),
            dynamic=f["dynamic"][:],
            static=f["static"][:],
            target=f["target"][:],
            burned_area_ha=float(f.attrs["burned_area_ha"]),
            ignition_pixel=tuple(int(x) for x in f.attrs["ignition_pixel"]),
            patch_origin=tuple(int(x) for x in f.attrs["patch_origin"]),
            catalog_hash=stored_hash,
            window=TemporalWindow(pre, post),
        )


@dataclass
class ManifestEntry:
    event_id: str
    year: int
    split: str
    path: str  # relative to the manifest's directory
    burned_area_ha: float
    ignition_date: str = ""  # ISO date; kept for monthly statistics


def write_manifest(entries, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for e in entries:
            f.write(json.dumps(dataclasses.asdict(e)) + "\n")
    return path


def read_manifest(path):
    entries = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            entries.append(ManifestEntry(**d))
    return entries


def sample_path(manifest_path, entry: ManifestEntry) -> Path:
    """Resolve an entry's sample file relative to the manifest location."""
    return Path(manifest_path).parent / entry.path
