"""Dataset analysis: fire-size clustering, per-cluster skill, map rendering.

The 1-D k-means here is a small exact-objective Lloyd implementation with
k-means++ seeding and restarts; sklearn's KMeans adds threading and dtype
shims that get in the way of the bit-for-bit reproducibility the reports
are checked against.
"""

import datetime
import logging
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from .catalog import VariableCatalog, default_catalog
from .objective import aggregate_metrics
from .samples import HA_PER_PIXEL

log = logging.getLogger(__name__)


def pixels_to_hectares(n_pixels: int) -> float:
    return HA_PER_PIXEL * n_pixels


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 10
    seed: int = 0
    n_restarts: int = 8
    max_iter: int = 300
    tol: float = 1e-8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.n_restarts < 1 or self.max_iter < 1:
            raise ValueError("n_restarts and max_iter must be positive")


def _inertia(values, centers, labels):
    return float(((values - centers[labels]) ** 2).sum())


def _plus_plus_seed(values, k, rng):
    centers = np.empty(k)
    centers[0] = values[rng.integers(len(values))]
    d2 = (values - centers[0]) ** 2
    for i in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[i:] = values[rng.integers(len(values), size=k - i)]
            break
        centers[i] = values[rng.choice(len(values), p=d2 / total)]
        d2 = np.minimum(d2, (values - centers[i]) ** 2)
    return centers


def _lloyd(values, centers, max_iter, tol):
    prev = np.inf
    for _ in range(max_iter):
        labels = np.abs(values[:, None] - centers[None, :]).argmin(axis=1)
        reseeded = False
        for j in range(len(centers)):
            members = values[labels == j]
            if len(members):
                centers[j] = members.mean()
            else:
                # move the empty center onto the worst-fit point
                far = np.abs(values - centers[labels]).argmax()
                centers[j] = values[far]
                reseeded = True
        labels = np.abs(values[:, None] - centers[None, :]).argmin(axis=1)
        cur = _inertia(values, centers, labels)
        # Lloyd updates never increase the objective unless a center was reseeded
        assert reseeded or cur <= prev + 1e-9 * max(prev, 1.0)
        if not reseeded and prev - cur <= tol * max(prev, 1.0):
            break
        prev = cur
    return centers, labels, cur


def kmeans_1d(values, config: ClusterConfig = ClusterConfig()):
    """Cluster scalar values; returns (centers ascending, labels, inertia).

    Deterministic for a fixed config: restarts draw from one seeded
    generator and the best-inertia solution wins, ties going to the earlier
    restart.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("no values to cluster")
    if not np.isfinite(values).all():
        raise ValueError("values must be finite")
    if len(np.unique(values)) < config.k:
        raise ValueError(
            f"k={config.k} exceeds the {len(np.unique(values))} distinct values"
        )
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.n_restarts):
        centers = _plus_plus_seed(values, config.k, rng)
        centers, labels, inertia = _lloyd(values, centers, config.max_iter, config.tol)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, inertia = best
    order = np.argsort(centers)
    remap = np.empty_like(order)
    remap[order] = np.arange(config.k)
    return centers[order], remap[labels], inertia


def per_cluster_report(areas_ha, per_sample_counts, config: ClusterConfig = ClusterConfig()):
    """Micro metrics per fire-size cluster.

    areas_ha and per_sample_counts are parallel sequences over the same
    events. Rows come back ordered by cluster center, each with the cluster's
    area range, membership count, and pooled metrics.
    """
    if len(areas_ha) != len(per_sample_counts):
        raise ValueError("areas and counts must be the same length")
    centers, labels, _ = kmeans_1d(areas_ha, config)
    areas = np.asarray(areas_ha, dtype=float)
    rows = []
    for j in range(config.k):
        member_idx = np.flatnonzero(labels == j)
        row = {
            "cluster": j,
            "center_ha": float(centers[j]),
            "n_events": int(member_idx.size),
        }
        if member_idx.size:
            row["min_ha"] = float(areas[member_idx].min())
            row["max_ha"] = float(areas[member_idx].max())
            metrics = aggregate_metrics([per_sample_counts[i] for i in member_idx], "micro")
            row["metrics"] = metrics.as_dict()
        else:
            row["min_ha"] = row["max_ha"] = None
            row["metrics"] = None
        rows.append(row)
    return rows


# land-cover tints for the map background, by static channel name
_COVER_COLORS = {
    "Fraction of Forest": (0.13, 0.42, 0.17),
    "Fraction of Shrubland": (0.52, 0.60, 0.25),
    "Fraction of Grassland": (0.72, 0.78, 0.40),
    "Fraction of Agriculture": (0.85, 0.78, 0.46),
    "Fraction of Sparse Vegetation": (0.80, 0.74, 0.62),
    "Fraction of Settlements": (0.55, 0.55, 0.55),
    "Fraction of Wetland": (0.45, 0.66, 0.66),
    "Fraction of Water Bodies": (0.23, 0.41, 0.68),
}

_PRED_COLORS = ((0.55, 0.25, 0.70), (0.85, 0.15, 0.15), (0.95, 0.55, 0.10))


def _background(sample, catalog: VariableCatalog):
    names = catalog.static_channel_names()
    rgb = np.full(sample.target.shape + (3,), 0.92)
    for name, color in _COVER_COLORS.items():
        if name not in names:
            continue
        frac = sample.static[names.index(name)]
        rgb += frac[..., None] * (np.array(color) - rgb) * 0.9
    return np.clip(rgb, 0, 1)


def render_map(sample, predictions, out_path, catalog: VariableCatalog = None,
               dpi: int = 110):
    """Render one event as a PNG: land-cover background, white ground-truth
    contour, translucent fills per predicted mask, ignition marker.

    predictions maps label -> binary [H, W] mask and may be empty; iteration
    order decides fill colors, so pass the baseline first.
    """
    catalog = catalog or default_catalog()
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    ax.imshow(_background(sample, catalog), interpolation="nearest")
    handles = []
    for (label, mask), color in zip(predictions.items(), _PRED_COLORS):
        overlay = np.zeros(mask.shape + (4,))
        overlay[mask.astype(bool)] = (*color, 0.55)
        ax.imshow(overlay, interpolation="nearest")
        handles.append(Patch(facecolor=(*color, 0.55), label=label))
    if sample.target.any():
        ax.contour(sample.target, levels=[0.5], colors="white", linewidths=1.4)
    handles.append(Patch(facecolor="none", edgecolor="white", label="observed"))
    r, c = sample.ignition_pixel
    ax.plot(c, r, marker="*", markersize=13, color="#ffdd00",
            markeredgecolor="black", linestyle="none")
    ax.set_title(f"{sample.event_id} ({sample.burned_area_ha:.0f} ha)", fontsize=10)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.legend(handles=handles, loc="lower right", fontsize=8, framealpha=0.8)
    fig.savefig(out_path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    return out_path


def dataset_stats(entries, cluster_config: ClusterConfig = None):
    """Summary tables over manifest entries: totals, per split, per year,
    per ignition month, and a fire-size cluster histogram when enough
    distinct sizes exist."""
    areas = np.array([e.burned_area_ha for e in entries], dtype=float)
    stats = {
        "n_events": len(entries),
        "total_burned_ha": float(areas.sum()) if len(entries) else 0.0,
        "mean_burned_ha": float(areas.mean()) if len(entries) else 0.0,
        "median_burned_ha": float(np.median(areas)) if len(entries) else 0.0,
        "splits": {},
        "yearly": {},
        "monthly": {},
    }
    for e in entries:
        for table, key in (("splits", e.split), ("yearly", e.year)):
            row = stats[table].setdefault(key, {"n_events": 0, "burned_ha": 0.0})
            row["n_events"] += 1
            row["burned_ha"] += e.burned_area_ha
        if e.ignition_date:
            month = datetime.date.fromisoformat(e.ignition_date).month
            row = stats["monthly"].setdefault(month, {"n_events": 0, "burned_ha": 0.0})
            row["n_events"] += 1
            row["burned_ha"] += e.burned_area_ha

    config = cluster_config or ClusterConfig()
    distinct = len(np.unique(areas))
    if distinct >= config.k:
        centers, labels, _ = kmeans_1d(areas, config)
        stats["size_clusters"] = [
            {
                "center_ha": float(centers[j]),
                "n_events": int((labels == j).sum()),
                "min_ha": float(areas[labels == j].min()),
                "max_ha": float(areas[labels == j].max()),
            }
            for j in range(config.k)
        ]
    else:
        stats["size_clusters"] = None
        log.info("skipping size clusters: %d distinct areas < k=%d", distinct, config.k)
    return stats
