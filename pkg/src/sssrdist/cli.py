"""Command-line entry point: ``sssrdist <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 missing input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .enhancement.losses import LossConfigError

log = logging.getLogger("sssrdist")

EXIT_RUNTIME, EXIT_CONFIG, EXIT_MISSING = 1, 2, 3


def _stft_params(cfg: RunConfig):
    from .representations import StftParams

    s = cfg.stft
    return StftParams(s.fft_size, s.window_length_ms, s.hop_ms, s.window)


def _load_backends(cfg: RunConfig) -> list:
    from .representations import load_backend

    out = []
    for model_id in cfg.backends.model_ids():
        ref = getattr(cfg.backends, f"{model_id}_checkpoint", None)
        if ref is None:
            raise ConfigError(f"unknown backend {model_id!r}")
        out.append(load_backend(model_id, ref, cache=cfg.backends.cache_dir or None))
    return out


def write_sidecar(output, cfg: RunConfig, command: str, extra=None) -> Path:
    """Run metadata next to ``output``: config, its hash, adapter versions."""
    from .metrics import adapter_versions

    path = Path(str(output) + ".meta.json")
    meta = {
        "command": command,
        "package_version": __version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "metric_adapters": adapter_versions(),
    }
    meta.update(extra or {})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _require(path, what="input") -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


# --- commands ----------------------------------------------------------------

def cmd_manifest(args, cfg: RunConfig) -> int:
    from .audio_io import build_manifest, write_manifest_csv

    root = _require(args.root or cfg.data.root, "corpus root")
    manifest = build_manifest(root, cfg.data.layout, cfg.data.split)
    write_manifest_csv(manifest, args.out)
    write_sidecar(args.out, cfg, "manifest", {"entries": len(manifest)})
    print(f"{len(manifest)} entries -> {args.out}")
    return 0


def cmd_distances(args, cfg: RunConfig) -> int:
    from .audio_io import read_manifest_csv
    from .distances import batch_distances, write_records_csv

    manifest = read_manifest_csv(_require(args.manifest, "manifest"), split=cfg.data.split)
    backends = _load_backends(cfg)
    records = batch_distances(
        manifest, backends, cfg.distances.layer_list(), _stft_params(cfg),
        cfg.distances.reduction, workers=cfg.output.workers,
    )
    write_records_csv(records, args.out)
    failed = sum(r.error is not None for r in records)
    write_sidecar(args.out, cfg, "distances", {
        "records": len(records), "failed": failed, "backends": [b.metadata for b in backends],
    })
    print(f"{len(records)} records ({failed} failed) -> {args.out}")
    return 0


def cmd_correlate(args, cfg: RunConfig) -> int:
    from .correlation import correlation_report, export_scatter, write_report_csv
    from .distances import DISTANCE_COLUMNS, merge_metrics, read_records_csv
    from .metrics import read_metric_csv

    records = read_records_csv(_require(args.distances, "distance CSV"))
    if args.metrics:
        merge_metrics(records, read_metric_csv(_require(args.metrics, "metric CSV")))
    present = set()
    for r in records:
        present.update(k for k, v in r.as_flat().items() if v is not None)
    distances = [d for d in DISTANCE_COLUMNS if d in present]
    if args.targets:
        targets = [t.strip() for t in args.targets.split(",")]
    else:
        targets = sorted(k for k in present if not k.startswith("d_") and k != "snr_db")
        if not targets and "snr_db" in present:
            targets = ["snr_db"]
    if not distances or not targets:
        raise ConfigError("nothing to correlate: need at least one distance and one target column")
    report = correlation_report(records, distances, targets)
    grid, n_grid = write_report_csv(report, args.out)
    if args.scatter:
        scatter_dir = Path(args.out).with_suffix("")
        for d in distances:
            for t in targets:
                if report.cell(d, t).n:
                    export_scatter(records, d, t, scatter_dir.parent / f"{scatter_dir.name}_scatter_{d}_vs_{t}")
    write_sidecar(args.out, cfg, "correlate", {"distances": distances, "targets": targets})
    print(f"report -> {grid} (+ {n_grid.name})")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from .audio_io import holdout_speakers, read_manifest_csv
    from .enhancement import MaskNetConfig, TrainingConfig, select_checkpoint, train

    train_manifest = read_manifest_csv(_require(args.train_manifest, "training manifest"), split="train")
    if args.valid_manifest:
        valid_manifest = read_manifest_csv(_require(args.valid_manifest, "validation manifest"), split="valid")
    else:
        train_manifest, valid_manifest = holdout_speakers(
            train_manifest, cfg.data.holdout_speakers, cfg.training.seed)
    t = cfg.training
    tcfg = TrainingConfig(
        loss=t.loss, epochs=t.epochs, learning_rate=t.learning_rate, batch_size=t.batch_size,
        seed=t.seed, validation_metric=t.validation_metric, grad_clip=t.grad_clip or None,
        reduction=cfg.distances.reduction,
        model=MaskNetConfig(recurrent_hidden_size=t.recurrent_hidden_size,
                            affine_hidden_size=t.affine_hidden_size, leaky_slope=t.leaky_slope),
    )
    backends = {}
    if t.loss.startswith(("fe_", "ol_")):
        model_id = t.loss.split("_")[1]
        from .representations import load_backend

        backends[model_id] = load_backend(model_id, getattr(cfg.backends, f"{model_id}_checkpoint"),
                                          cache=cfg.backends.cache_dir or None)
    out_dir = Path(args.out)
    checkpoints = train(train_manifest, valid_manifest, tcfg, backends, out_dir=out_dir)
    best = select_checkpoint(checkpoints)
    (out_dir / "best_epoch.txt").write_text(f"{best.epoch}\n")
    write_sidecar(out_dir / "training_log.csv", cfg, "train", {
        "training_config_hash": tcfg.config_hash(), "best_epoch": best.epoch,
        "backends": [b.metadata for b in backends.values()],
    })
    print(f"{len(checkpoints)} checkpoints -> {out_dir} (best epoch {best.epoch})")
    return 0


def _resolve_checkpoint(path):
    from .enhancement import Checkpoint, select_checkpoint

    p = _require(path, "checkpoint")
    if p.is_dir():
        files = sorted(p.glob("epoch_*.pt"))
        if not files:
            raise FileNotFoundError(f"no epoch_*.pt checkpoints in {p}")
        return select_checkpoint([Checkpoint.load(f) for f in files])
    return Checkpoint.load(p)


def cmd_enhance(args, cfg: RunConfig) -> int:
    from .audio_io import load_audio, load_pair, read_manifest_csv, resample, save_audio
    from .enhancement import enhance, model_from_checkpoint

    ckpt = _resolve_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    out_dir = Path(args.out)
    params = _stft_params(cfg)
    if args.input:
        sig = resample(load_audio(_require(args.input)), 16000)
        items = [(Path(args.input).stem, sig)]
    else:
        manifest = read_manifest_csv(_require(args.manifest, "manifest"))
        items = [(e.id, load_pair(e).noisy) for e in manifest.entries]
    for uid, noisy in items:
        save_audio(out_dir / f"{uid}.wav", enhance(model, noisy, params))
    write_sidecar(out_dir / "enhance", cfg, "enhance", {"epoch": ckpt.epoch, "files": len(items)})
    print(f"{len(items)} files -> {out_dir}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .audio_io import align_pair, load_audio, load_pair, read_manifest_csv, resample
    from .metrics import evaluate_utterance, mean_row, write_evaluation_csv

    manifest = read_manifest_csv(_require(args.manifest, "manifest"))
    enhanced = _require(args.enhanced, "enhanced directory") if args.enhanced else None
    rows = []
    for entry in sorted(manifest.entries, key=lambda e: e.id):
        pair = load_pair(entry)
        est = pair.noisy
        if enhanced is not None:
            est = resample(load_audio(_require(enhanced / f"{entry.id}.wav", "enhanced file")), 16000)
        ref, est = align_pair(pair.clean, est)
        rows.append(evaluate_utterance(ref, est, entry.id, cfg.evaluation.metric_list()))
    write_evaluation_csv(rows, args.out)
    write_sidecar(args.out, cfg, "evaluate", {"mean": mean_row(rows), "rows": len(rows)})
    print(json.dumps(mean_row(rows)))
    return 0


def cmd_visualize(args, cfg: RunConfig) -> int:
    from .audio_io import align_pair, load_audio, load_pair, read_manifest_csv, resample
    from .featviz import render_panels

    if args.manifest:
        manifest = read_manifest_csv(_require(args.manifest, "manifest"))
        entry = next((e for e in manifest.entries if e.id == args.id), None) if args.id else manifest.entries[0]
        if entry is None:
            raise FileNotFoundError(f"id {args.id!r} not in manifest")
        pair = load_pair(entry)
        s, x = pair.clean, pair.noisy
    else:
        if not (args.clean and args.noisy):
            raise ConfigError("visualize needs --manifest or both --clean and --noisy")
        s, x = align_pair(resample(load_audio(_require(args.clean)), 16000),
                          resample(load_audio(_require(args.noisy)), 16000))
    backends = _load_backends(cfg)
    render_panels(s, x, backends, args.out, permutation_csv=cfg.output.permutation_csv)
    write_sidecar(args.out, cfg, "visualize", {"backends": [b.metadata for b in backends]})
    print(f"panels -> {args.out}")
    return 0


COMMANDS = {
    "manifest": cmd_manifest,
    "distances": cmd_distances,
    "correlate": cmd_correlate,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "visualize": cmd_visualize,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--workers", type=int, help="cap on internal parallelism (output.workers)")
    common.add_argument("--seed", type=int, help="global seed (training.seed)")
    common.add_argument("--backends", help="backends.models, e.g. spectrogram-only or hubert,xlsr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sssrdist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manifest", parents=[common], help="scan a corpus into a manifest CSV")
    p.add_argument("--root")
    p.add_argument("--layout", help="data.layout: voicebank or nisqa")
    p.add_argument("--split", help="data.split: train, valid or test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("distances", parents=[common], help="per-utterance distances")
    p.add_argument("--manifest", required=True)
    p.add_argument("--layers", help="distances.layers, e.g. FE,OL")
    p.add_argument("--reduction", help="distances.reduction: mean or sum")
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate", parents=[common], help="correlation report between distances and metrics")
    p.add_argument("--distances", required=True)
    p.add_argument("--metrics", help="CSV of per-utterance metric scores (e.g. from evaluate)")
    p.add_argument("--targets", help="comma list of target columns (default: all non-distance columns)")
    p.add_argument("--scatter", action="store_true", help="also export scatter PNG/CSV pairs")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train a mask-based enhancement model")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--valid-manifest")
    p.add_argument("--loss", help="training.loss")
    p.add_argument("--epochs", type=int, help="training.epochs")
    p.add_argument("--learning-rate", type=float, help="training.learning_rate")
    p.add_argument("--batch-size", type=int, help="training.batch_size")
    p.add_argument("--out", required=True)

    p = sub.add_parser("enhance", parents=[common], help="enhance audio with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file, or training dir (best epoch is used)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input")
    group.add_argument("--manifest")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="PESQ/STOI/Composite/SI-SDR per utterance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--enhanced", help="directory of <id>.wav estimates; default evaluates the noisy input")
    p.add_argument("--metrics-list", help="evaluation.metrics")
    p.add_argument("--out", required=True)

    p = sub.add_parser("visualize", parents=[common], help="spectrogram and sorted FE panels")
    p.add_argument("--manifest")
    p.add_argument("--id")
    p.add_argument("--clean")
    p.add_argument("--noisy")
    p.add_argument("--out", required=True)
    return parser


FLAG_KEYS = {
    "workers": "output.workers", "seed": "training.seed", "backends": "backends.models",
    "layout": "data.layout", "split": "data.split", "layers": "distances.layers",
    "reduction": "distances.reduction", "loss": "training.loss", "epochs": "training.epochs",
    "learning_rate": "training.learning_rate", "batch_size": "training.batch_size",
    "metrics_list": "evaluation.metrics",
}


def resolve_config(args) -> RunConfig:
    overrides = list(args.set)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, LossConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
