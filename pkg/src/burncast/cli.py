"""Command-line entry points.

One executable, subcommand per pipeline stage. Every command that consumes
a dataset directory accepts --catalog to override the variable catalog
stored alongside the data.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .analysis import ClusterConfig, dataset_stats, per_cluster_report, render_map
from .catalog import (
    IGNITION_DAY_2D,
    STACKED_2D,
    TemporalWindow,
    VOLUMETRIC_3D,
    VariableCatalog,
    channel_layout,
    default_catalog,
)
from .ingest import build_dataset
from .models import (
    ARCH_UNET3D,
    ARCHITECTURES,
    ModelConfig,
    allowed_layouts,
    load_checkpoint,
)
from .objective import ConfusionCounts
from .samples import SPLIT_TEST, read_manifest, read_sample, sample_path
from .synthgen import SynthConfig, generate_dataset
from .trainer import ManifestDataset, TrainConfig, evaluate, predict_masks, run_ablation, train

log = logging.getLogger(__name__)

_DEFAULT_MODE = {arch: STACKED_2D for arch in ARCHITECTURES}
_DEFAULT_MODE[ARCH_UNET3D] = VOLUMETRIC_3D
_MODES = (STACKED_2D, VOLUMETRIC_3D, IGNITION_DAY_2D)


def _load_catalog(args) -> VariableCatalog:
    if getattr(args, "catalog", None):
        return VariableCatalog.load(args.catalog)
    data_dir = getattr(args, "data", None) or getattr(args, "samples", None)
    if data_dir:
        stored = Path(data_dir) / "catalog.json"
        if stored.exists():
            return VariableCatalog.load(stored)
    return default_catalog()


def _emit(payload, path=None):
    text = json.dumps(payload, indent=2, default=str)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    print(text)


def _cmd_build_dataset(args):
    result = build_dataset(
        args.cube, args.out,
        window=TemporalWindow.parse(args.window),
        seed=args.seed,
        water_threshold=args.water_threshold,
        catalog=_load_catalog(args),
        max_offset=args.max_offset,
    )
    _emit(result)


def _cmd_synth_gen(args):
    config = SynthConfig(
        seed=args.seed,
        n_events=args.n,
        wind_shift=args.wind_shift == "on",
        window=TemporalWindow.parse(args.window),
        base_spread_prob=args.base_spread_prob,
        wind_gain=args.wind_gain,
    )
    _emit(generate_dataset(config, args.out))


def _write_history_csv(history, path):
    fields = sorted({k for row in history for k in row})
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(history)


def _cmd_train(args):
    catalog = _load_catalog(args)
    window = TemporalWindow.parse(args.window)
    mode = args.mode or _DEFAULT_MODE[args.arch]
    layout = channel_layout(catalog, window, mode)
    model_config = ModelConfig.for_layout(
        args.arch, layout,
        base_width=args.base_width, levels=args.levels, seed=args.seed,
    )
    train_config = TrainConfig(
        lr=args.lr, weight_decay=args.weight_decay, max_epochs=args.epochs,
        patience=args.patience, batch_size=args.batch_size, seed=args.seed,
    )
    manifest = Path(args.data) / "manifest.jsonl"
    train_ds = ManifestDataset(manifest, "train", mode, window, catalog=catalog)
    val_ds = ManifestDataset(manifest, "val", mode, window, catalog=catalog)
    result = train(
        model_config, train_config, train_ds,
        val_ds if len(val_ds) else None,
        checkpoint_path=args.out,
        catalog_hash=catalog.version_hash,
    )
    if args.out:
        _write_history_csv(result.history, str(args.out) + ".history.csv")
    _emit({"checkpoint": str(args.out), "mode": mode,
           "window": args.window, **result.summary()})


def _dataset_for_checkpoint(data_dir, window_arg, config: ModelConfig, catalog, split):
    """Infer the input layout mode (and window) a checkpoint was trained on
    from its channel counts, then build the matching dataset."""
    manifest = Path(data_dir) / "manifest.jsonl"
    if window_arg:
        window = TemporalWindow.parse(window_arg)
    else:
        entries = [e for e in read_manifest(manifest) if e.split == split]
        if not entries:
            raise SystemExit(f"no samples in split {split!r}")
        window = read_sample(sample_path(manifest, entries[0]), catalog.version_hash).window
    for mode in allowed_layouts(config.arch):
        layout = channel_layout(catalog, window, mode)
        if layout.total_channels == config.in_channels and (
            mode != VOLUMETRIC_3D or layout.time_depth == config.time_depth
        ):
            return ManifestDataset(manifest, split, mode, window, catalog=catalog)
    raise SystemExit(
        f"no input layout matches checkpoint ({config.in_channels} channels); "
        "pass --window if the model was trained on a truncated window"
    )


def _cmd_evaluate(args):
    catalog = _load_catalog(args)
    model, config, _ = load_checkpoint(args.ckpt, catalog.version_hash)
    ds = _dataset_for_checkpoint(args.data, args.window, config, catalog, args.split)
    metrics = evaluate(model, ds, args.threshold, args.batch_size)
    per_sample = [
        {"event_id": e.event_id, "burned_area_ha": e.burned_area_ha, **c.__dict__}
        for e, c in zip(ds.entries, metrics["per_sample"])
    ]
    _emit(
        {
            "split": args.split,
            "threshold": args.threshold,
            "micro": metrics["micro"].as_dict(),
            "macro": metrics["macro"].as_dict(),
            "per_sample": per_sample,
        },
        args.report,
    )


def _cmd_ablate(args):
    catalog = _load_catalog(args)
    posts = [int(p) for p in args.posts.split(",")]
    windows = [TemporalWindow(args.pre, p) for p in posts]
    train_config = TrainConfig(
        lr=args.lr, weight_decay=args.weight_decay, max_epochs=args.epochs,
        patience=args.patience, batch_size=args.batch_size, seed=args.seed,
    )
    mode = args.mode or _DEFAULT_MODE[args.arch]
    results = run_ablation(
        Path(args.data) / "manifest.jsonl", args.arch, windows, mode, train_config,
        model_overrides={"base_width": args.base_width, "levels": args.levels},
        eval_split=args.split,
    )
    _emit(results, args.report)


def _cmd_cluster_report(args):
    payload = json.loads(Path(args.metrics).read_text())
    rows = payload["per_sample"]
    areas_by_event = {
        e.event_id: e.burned_area_ha for e in read_manifest(args.manifest)
    }
    areas, counts = [], []
    for row in rows:
        if row["event_id"] not in areas_by_event:
            raise SystemExit(f"event {row['event_id']!r} missing from manifest")
        areas.append(areas_by_event[row["event_id"]])
        counts.append(ConfusionCounts(row["tp"], row["fp"], row["fn"], row["tn"]))
    config = ClusterConfig(k=args.k, seed=args.seed)
    _emit(per_cluster_report(areas, counts, config), args.report)


def _cmd_render_maps(args):
    catalog = _load_catalog(args)
    manifest = Path(args.samples) / "manifest.jsonl"
    entries = [e for e in read_manifest(manifest) if e.split == args.split]
    if not entries:
        raise SystemExit(f"no samples in split {args.split!r}")
    entries = entries[: args.n]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    masks_by_label = {}
    for ckpt in args.pred or []:
        model, config, _ = load_checkpoint(ckpt, catalog.version_hash)
        ds = _dataset_for_checkpoint(args.samples, args.window, config, catalog, args.split)
        masks = predict_masks(model, ds, args.threshold)
        masks_by_label[Path(ckpt).stem] = {
            e.event_id: masks[i] for i, e in enumerate(ds.entries)
        }

    written = []
    for entry in entries:
        sample = read_sample(sample_path(manifest, entry), catalog.version_hash)
        predictions = {
            label: by_event[entry.event_id]
            for label, by_event in masks_by_label.items()
            if entry.event_id in by_event
        }
        out = out_dir / f"{entry.event_id}.png"
        render_map(sample, predictions, out, catalog=catalog)
        written.append(str(out))
    _emit({"n_maps": len(written), "out_dir": str(out_dir)})


def _cmd_stats(args):
    entries = read_manifest(args.manifest)
    config = ClusterConfig(k=args.k, seed=args.seed)
    _emit(dataset_stats(entries, config), args.report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burncast",
        description="Burned-area forecasting pipeline: data, training, analysis.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_catalog(p):
        p.add_argument("--catalog", help="variable catalog JSON overriding the default")

    p = sub.add_parser("build-dataset", help="extract event samples from a source cube")
    p.add_argument("--cube", required=True, help="HDF5 source cube")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--window", default="4,5", help="pre,post days around ignition")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--water-threshold", type=float, default=0.5)
    p.add_argument("--max-offset", type=int, default=8)
    add_catalog(p)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("synth-gen", help="generate a synthetic wind-driven dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1024, help="number of events")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wind-shift", choices=("on", "off"), default="on")
    p.add_argument("--window", default="4,5")
    p.add_argument("--base-spread-prob", type=float, default=0.22)
    p.add_argument("--wind-gain", type=float, default=4.0)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("train", help="train a segmentation model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--arch", choices=ARCHITECTURES, default=ARCH_UNET3D)
    p.add_argument("--mode", choices=_MODES, default=None,
                   help="input layout (defaults per architecture)")
    p.add_argument("--window", default="4,5")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-width", type=int, default=64)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=16)
    add_catalog(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default=SPLIT_TEST)
    p.add_argument("--window", default=None,
                   help="override when the checkpoint used a truncated window")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--report", help="write the metrics JSON here")
    add_catalog(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="temporal-window ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--posts", default="1,2,3,4,5",
                   help="comma list of post-ignition day counts")
    p.add_argument("--pre", type=int, default=4)
    p.add_argument("--arch", choices=ARCHITECTURES, default=ARCH_UNET3D)
    p.add_argument("--mode", choices=_MODES, default=None)
    p.add_argument("--split", default=SPLIT_TEST)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-width", type=int, default=64)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--report", help="write the ablation JSON here")
    add_catalog(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("cluster-report", help="per-fire-size-cluster metrics")
    p.add_argument("--metrics", required=True, help="JSON from `evaluate --report`")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the cluster table here")
    p.set_defaults(func=_cmd_cluster_report)

    p = sub.add_parser("render-maps", help="render prediction overlay maps")
    p.add_argument("--samples", required=True, help="dataset directory")
    p.add_argument("--pred", nargs="*", default=[],
                   help="checkpoints to overlay, first drawn first")
    p.add_argument("--out", required=True, help="output directory for PNGs")
    p.add_argument("--split", default=SPLIT_TEST)
    p.add_argument("--n", type=int, default=8, help="number of events to render")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--window", default=None)
    add_catalog(p)
    p.set_defaults(func=_cmd_render_maps)

    p = sub.add_parser("stats", help="dataset summary statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=10, help="fire-size clusters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the stats JSON here")
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
