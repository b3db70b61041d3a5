"""Burned-area forecasting from spatio-temporal datacube patches."""

from .catalog import (
    IGNITION_DAY_2D,
    PATCH_SIZE,
    STACKED_2D,
    TemporalWindow,
    VOLUMETRIC_3D,
    VariableCatalog,
    assemble_input,
    channel_layout,
    default_catalog,
)
from .estimator import FireSizeKMeans, SpreadSegmenter
from .ingest import NormalizationStats, build_dataset, decompose_wind
from .models import ModelConfig, build_model, load_checkpoint, predict_mask, save_checkpoint
from .objective import (
    ConfusionCounts,
    LossConfig,
    SegmentationMetrics,
    aggregate_metrics,
    bce_dice_loss,
    confusion_counts,
    metrics_from_counts,
)
from .samples import FireEventSample, read_manifest, read_sample, write_sample
from .synthgen import SynthConfig, generate_dataset, generate_event
from .trainer import ManifestDataset, TrainConfig, evaluate, run_ablation, train
from .analysis import ClusterConfig, dataset_stats, kmeans_1d, per_cluster_report, render_map

__version__ = "0.1.0"

__all__ = [
    "ClusterConfig",
    "ConfusionCounts",
    "FireEventSample",
    "FireSizeKMeans",
    "IGNITION_DAY_2D",
    "LossConfig",
    "ManifestDataset",
    "ModelConfig",
    "NormalizationStats",
    "PATCH_SIZE",
    "STACKED_2D",
    "SegmentationMetrics",
    "SpreadSegmenter",
    "SynthConfig",
    "TemporalWindow",
    "TrainConfig",
    "VOLUMETRIC_3D",
    "VariableCatalog",
    "aggregate_metrics",
    "assemble_input",
    "bce_dice_loss",
    "build_dataset",
    "build_model",
    "channel_layout",
    "confusion_counts",
    "dataset_stats",
    "decompose_wind",
    "default_catalog",
    "evaluate",
    "generate_dataset",
    "generate_event",
    "kmeans_1d",
    "load_checkpoint",
    "metrics_from_counts",
    "per_cluster_report",
    "predict_mask",
    "read_manifest",
    "read_sample",
    "render_map",
    "run_ablation",
    "save_checkpoint",
    "train",
    "write_sample",
]
