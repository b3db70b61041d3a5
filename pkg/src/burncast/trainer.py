"""Training, evaluation, and temporal-window ablation.

Everything here is deliberately deterministic on CPU: seeded weight init,
seeded shuffling, single-process data loading. Two runs with the same
configuration and data produce identical histories and metrics.
"""

import copy
import logging
import math
import os
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from .catalog import (
    TemporalWindow,
    VariableCatalog,
    VOLUMETRIC_3D,
    assemble_input,
    channel_layout,
    default_catalog,
)
from .models import ModelConfig, build_model, save_checkpoint
from .objective import (
    LossConfig,
    aggregate_metrics,
    bce_dice_loss,
    confusion_counts,
)
from .samples import SPLIT_TRAIN, SPLIT_VAL, read_manifest, read_sample, sample_path

log = logging.getLogger(__name__)


# set to "0" to allow nondeterministic kernels (seeding still happens)
DETERMINISM_ENV = "BURNCAST_DETERMINISTIC"


def set_deterministic(seed: int):
    """Seed every RNG in play; force deterministic kernel choices unless
    the environment opts out."""
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)
    if os.environ.get(DETERMINISM_ENV, "1") != "0":
        torch.use_deterministic_algorithms(True)


def truncate_window(dynamic: np.ndarray, stored: TemporalWindow, wanted: TemporalWindow):
    """Cut a [C, T, H, W] tensor down to a narrower window around ignition."""
    if wanted.pre_days > stored.pre_days or wanted.post_days > stored.post_days:
        raise ValueError(
            f"cannot widen window: stored ({stored.pre_days},{stored.post_days}), "
            f"wanted ({wanted.pre_days},{wanted.post_days})"
        )
    start = stored.ignition_index - wanted.pre_days
    stop = stored.ignition_index + wanted.post_days + 1
    return dynamic[:, start:stop]


class ManifestDataset(Dataset):
    """Samples of one split, assembled into a model input layout.

    Keeps raw per-sample tensors in RAM (a few MB each) and assembles the
    requested layout on access; pass cache=False to re-read from disk every
    time. Only entries of the requested split are ever opened.
    """

    def __init__(self, manifest_path, split: str, mode: str = VOLUMETRIC_3D,
                 window: TemporalWindow = None, cache: bool = True,
                 catalog: VariableCatalog = None):
        self.manifest_path = Path(manifest_path)
        self.split = split
        self.entries = [e for e in read_manifest(self.manifest_path) if e.split == split]
        if catalog is None:
            catalog_file = self.manifest_path.parent / "catalog.json"
            catalog = VariableCatalog.load(catalog_file) if catalog_file.exists() else default_catalog()
        self.catalog = catalog
        self._stored_window = None
        self.window = window
        self.mode = mode
        self._cache = {} if cache else None
        self._layout = None

    def _load(self, idx: int):
        if self._cache is not None and idx in self._cache:
            return self._cache[idx]
        entry = self.entries[idx]
        sample = read_sample(
            sample_path(self.manifest_path, entry),
            expected_catalog_hash=self.catalog.version_hash,
        )
        if self._stored_window is None:
            self._stored_window = sample.window
            if self.window is None:
                self.window = sample.window
            self._layout = channel_layout(self.catalog, self.window, self.mode)
        dynamic = sample.dynamic
        if self.window != sample.window:
            dynamic = truncate_window(dynamic, sample.window, self.window)
        item = (dynamic, sample.static, sample.target)
        if self._cache is not None:
            self._cache[idx] = item
        return item

    @property
    def layout(self):
        if self._layout is None:
            self._load(0)
        return self._layout

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, idx):
        dynamic, static, target = self._load(idx)
        x = assemble_input(dynamic, static, self.layout)
        return (
            torch.from_numpy(np.ascontiguousarray(x)),
            torch.from_numpy(target.astype(np.float32))[None],
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 100
    warmup_epochs: int = 0  # linear ramp before the cosine decay kicks in
    patience: int = 15
    batch_size: int = 16
    threshold: float = 0.5
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    loss: LossConfig = field(default_factory=LossConfig)
    max_steps: int = None  # optional hard cap on optimizer steps

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be positive")
        if not 0 <= self.warmup_epochs < self.max_epochs:
            raise ValueError("warmup_epochs must lie inside [0, max_epochs)")


@dataclass
class TrainResult:
    model: torch.nn.Module
    model_config: ModelConfig
    train_config: TrainConfig
    history: list
    best_epoch: int
    best_val_dice: float
    stopped_early: bool
    wall_time_s: float

    def summary(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val_dice": self.best_val_dice,
            "epochs_run": len(self.history),
            "stopped_early": self.stopped_early,
            "wall_time_s": round(self.wall_time_s, 2),
        }


def _loader(dataset, batch_size, shuffle, seed):
    gen = torch.Generator()
    gen.manual_seed(seed)
    return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle,
                      num_workers=0, generator=gen)


@torch.no_grad()
def evaluate(model, dataset, threshold: float = 0.5, batch_size: int = 16):
    """Per-sample confusion counts plus micro and macro aggregates."""
    model.eval()
    counts = []
    for x, y in DataLoader(dataset, batch_size=batch_size, num_workers=0):
        pred = (torch.sigmoid(model(x)) > threshold).to(torch.uint8)
        tgt = y.to(torch.uint8)
        for i in range(pred.shape[0]):
            counts.append(confusion_counts(pred[i, 0].numpy(), tgt[i, 0].numpy()))
    return {
        "micro": aggregate_metrics(counts, "micro"),
        "macro": aggregate_metrics(counts, "macro"),
        "per_sample": counts,
    }


@torch.no_grad()
def predict_masks(model, dataset, threshold: float = 0.5, batch_size: int = 16):
    """Thresholded masks for every sample, as uint8 [N, H, W]."""
    model.eval()
    out = []
    for x, _ in DataLoader(dataset, batch_size=batch_size, num_workers=0):
        out.append(((torch.sigmoid(model(x)) > threshold)[:, 0]).to(torch.uint8).numpy())
    return np.concatenate(out, axis=0)


def train(model_config: ModelConfig, train_config: TrainConfig,
          train_ds: Dataset, val_ds: Dataset = None,
          checkpoint_path=None, catalog_hash: str = "") -> TrainResult:
    """Train with cosine-decayed AdamW and early stopping.

    Model selection is by best validation micro Dice; without a validation
    set the final weights are kept. Non-finite loss aborts immediately
    rather than producing a silently broken model.
    """
    set_deterministic(train_config.seed)
    model = build_model(model_config)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=train_config.lr, betas=train_config.adam_betas,
        weight_decay=train_config.weight_decay,
    )

    def lr_factor(epoch, warm=train_config.warmup_epochs, total=train_config.max_epochs):
        if epoch < warm:
            return (epoch + 1) / warm
        return 0.5 * (1.0 + math.cos(math.pi * (epoch - warm) / max(total - warm, 1)))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_factor)
    loader = _loader(train_ds, train_config.batch_size, shuffle=True, seed=train_config.seed)

    best_state = None
    best_dice = -1.0
    best_epoch = -1
    since_best = 0
    stopped_early = False
    history = []
    steps = 0
    t0 = time.monotonic()

    for epoch in range(train_config.max_epochs):
        model.train()
        epoch_loss = 0.0
        n_batches = 0
        for x, y in loader:
            optimizer.zero_grad()
            loss = bce_dice_loss(model(x), y, train_config.loss)
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item()
            n_batches += 1
            steps += 1
            if train_config.max_steps and steps >= train_config.max_steps:
                break
        scheduler.step()

        record = {
            "epoch": epoch,
            "train_loss": epoch_loss / max(n_batches, 1),
            "lr": scheduler.get_last_lr()[0],
        }
        if val_ds is not None:
            val = evaluate(model, val_ds, train_config.threshold, train_config.batch_size)
            record["val_dice"] = val["micro"].dice
            if record["val_dice"] > best_dice:
                best_dice = record["val_dice"]
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                since_best = 0
            else:
                since_best += 1
        history.append(record)
        log.info("epoch %d loss %.4f%s", epoch, record["train_loss"],
                 f" val_dice {record.get('val_dice', float('nan')):.4f}" if val_ds else "")

        if train_config.max_steps and steps >= train_config.max_steps:
            break
        if val_ds is not None and since_best >= train_config.patience:
            stopped_early = True
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history) - 1
    model.eval()

    result = TrainResult(
        model=model,
        model_config=model_config,
        train_config=train_config,
        history=history,
        best_epoch=best_epoch,
        best_val_dice=best_dice,
        stopped_early=stopped_early,
        wall_time_s=time.monotonic() - t0,
    )
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path, model, model_config, catalog_hash,
            extra={"history": history, "train_config": asdict(train_config)},
        )
    return result


def run_ablation(manifest_path, arch: str, windows, mode: str,
                 train_config: TrainConfig, model_overrides: dict = None,
                 eval_split: str = "test"):
    """Train one model per temporal window and evaluate on a held-out split.

    Every run shares the identical architecture, optimizer and seed; the
    window is the only thing that varies, so metric differences are
    attributable to temporal context alone.
    """
    model_overrides = dict(model_overrides or {})
    model_overrides.pop("in_channels", None)  # derived from each window's layout
    model_overrides.pop("time_depth", None)
    results = {}
    for window in windows:
        train_ds = ManifestDataset(manifest_path, SPLIT_TRAIN, mode, window)
        val_ds = ManifestDataset(manifest_path, SPLIT_VAL, mode, window)
        eval_ds = ManifestDataset(manifest_path, eval_split, mode, window)
        layout = channel_layout(train_ds.catalog, window, mode)
        model_config = ModelConfig.for_layout(
            arch, layout, seed=train_config.seed, **model_overrides
        )
        result = train(model_config, train_config, train_ds,
                       val_ds if len(val_ds) else None)
        metrics = evaluate(result.model, eval_ds, train_config.threshold,
                           train_config.batch_size)
        key = f"{window.pre_days},{window.post_days}"
        results[key] = {
            "window": key,
            "total_days": window.total_days,
            "micro": metrics["micro"].as_dict(),
            "macro": metrics["macro"].as_dict(),
            "train": result.summary(),
        }
        log.info("window %s: micro dice %.4f", key, metrics["micro"].dice)
    return results
