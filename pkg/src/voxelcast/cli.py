"""Command-line entry points: data generation, training, evaluation, serving.

Every report-producing subcommand prints a text table and writes the same
content as JSON. Checkpoints default to $VOXELCAST_CKPT_DIR (or ./checkpoints)
so the commands chain without repeating paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .checkpoint import load_former, load_tokenizer
from .harness.ablate import ablation_run, apply_switches
from .harness.bench import fps_bench, rate_transfer_eval
from .harness.config import ConfigError, ExperimentConfig
from .harness.data import SequenceStore
from .harness.evaluate import evaluate
from .harness.train import train_former, train_tokenizer
from .world.dataset import generate_dataset, load_manifest
from .world.synth import WorldConfig

ENV_CKPT_DIR = "VOXELCAST_CKPT_DIR"


def _ckpt_dir(args) -> Path:
    return Path(getattr(args, "ckpt", None) or os.environ.get(ENV_CKPT_DIR) or "checkpoints")


def _tokenizer_path(args) -> Path:
    return Path(args.tokenizer) if args.tokenizer else _ckpt_dir(args) / "tokenizer.pt"


def _former_path(args) -> Path:
    return Path(args.former) if args.former else _ckpt_dir(args) / "former.pt"


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.from_json_file(path)


def _load_pair(args):
    tokenizer, _ = load_tokenizer(_tokenizer_path(args))
    former, _ = load_former(_former_path(args), tokenizer)
    return tokenizer, former


def _write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"wrote {path}")


def _kv_table(title: str, rows: dict) -> str:
    width = max(len(k) for k in rows)
    lines = [title] + [f"  {k:<{width}}  {v}" for k, v in rows.items()]
    return "\n".join(lines)


def _world_from_manifest(manifest_path: str | Path) -> WorldConfig:
    cfg = dict(load_manifest(manifest_path)["config"])
    cfg["dims"] = tuple(cfg["dims"])
    return WorldConfig(**cfg)


def _cmd_gen_data(args) -> int:
    cfg = WorldConfig()
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if "dims" in raw:
            raw["dims"] = tuple(raw["dims"])
        cfg = WorldConfig(**raw)
    manifest = generate_dataset(
        cfg, args.out, count=args.count, seed=args.seed, val_fraction=args.val_frac
    )
    entries = load_manifest(manifest)["files"]
    n_val = sum(1 for e in entries if e["split"] == "val")
    print(
        _kv_table(
            "dataset",
            {
                "manifest": str(manifest),
                "sequences": len(entries),
                "train": len(entries) - n_val,
                "val": n_val,
                "rate_hz": cfg.rate_hz,
                "frames each": cfg.sequence_length,
            },
        )
    )
    return 0


def _cmd_train_tokenizer(args) -> int:
    config = _load_config(args.config)
    out = _tokenizer_path(args)
    _, train_log = train_tokenizer(config, out=out)
    last = train_log.epochs[-1]
    print(
        _kv_table(
            "tokenizer training",
            {
                "epochs": len(train_log.epochs),
                "final loss": f"{train_log.final_loss:.4f}",
                "final perplexity": f"{last['perplexity']:.1f}",
                "live codes": last["live_codes"],
                "wall time": f"{train_log.wall_time_s:.1f}s",
                "checkpoint": train_log.checkpoint,
            },
        )
    )
    _write_json(out.with_suffix(".log.json"), train_log.to_dict())
    return 0


def _cmd_train_former(args) -> int:
    config = _load_config(args.config)
    tokenizer, _ = load_tokenizer(_tokenizer_path(args))
    out = _former_path(args)
    _, train_log = train_former(config, tokenizer, out=out)
    last = train_log.epochs[-1]
    print(
        _kv_table(
            "forecaster training",
            {
                "epochs": len(train_log.epochs),
                "final loss": f"{train_log.final_loss:.4f}",
                "gen first/last step": f"{last['gen_first']:.4f} / {last['gen_last']:.4f}",
                "transform loss": f"{last['transform']:.4f}",
                "wall time": f"{train_log.wall_time_s:.1f}s",
                "checkpoint": train_log.checkpoint,
            },
        )
    )
    _write_json(out.with_suffix(".log.json"), train_log.to_dict())
    return 0


_SOURCES = {"gt": "ground_truth", "pred": "predicted"}


def _cmd_eval(args) -> int:
    config = _load_config(args.config)
    tokenizer, former = _load_pair(args)
    store = SequenceStore.from_manifest(config.manifest, args.split)
    fps = fps_bench(tokenizer, former, store) if args.fps else None
    report = evaluate(tokenizer, former, store, config, source=_SOURCES[args.source], fps=fps)
    print(report.table())
    _write_json(args.json, report.to_dict())
    return 0


def _parse_switches(text: str) -> dict:
    switches: dict = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"switch {item!r} is not name=value")
        name, value = item.split("=", 1)
        low = value.strip().lower()
        switches[name.strip()] = {"true": True, "false": False}.get(low, value.strip())
    return switches


def _cmd_ablate(args) -> int:
    config = _load_config(args.config)
    switches = _parse_switches(args.switches)
    apply_switches(config, switches)  # validate names before the expensive part
    train_store = SequenceStore.from_manifest(config.manifest, "train")
    val_store = SequenceStore.from_manifest(config.manifest, args.split)
    variants = {"baseline": {}, args.name: switches}
    reports = ablation_run(config, variants, train_store, val_store)
    for name, report in reports.items():
        print(f"== {name} ==")
        print(report.table())
        print()
    _write_json(args.json, {name: r.to_dict() for name, r in reports.items()})
    return 0


def _cmd_bench_fps(args) -> int:
    config = _load_config(args.config)
    tokenizer, former = _load_pair(args)
    store = SequenceStore.from_manifest(config.manifest, args.split)
    result = fps_bench(tokenizer, former, store, n_warmup=args.warmup, n_iter=args.iters)
    print(
        _kv_table(
            "forecast throughput",
            {
                "fps": f"{result['fps']:.2f}",
                "median forecast": f"{result['median_s'] * 1e3:.1f} ms",
                "steps per forecast": result["steps"],
                "iterations": result["n_iter"],
                "peak memory": f"{result['peak_memory_mb']:.0f} MB",
            },
        )
    )
    _write_json(args.json, result)
    return 0


def _cmd_rate_eval(args) -> int:
    config = _load_config(args.config)
    tokenizer, former = _load_pair(args)
    base_world = _world_from_manifest(config.manifest)
    report = rate_transfer_eval(
        tokenizer, former, config, rate_hz=args.hz, base_world=base_world,
        n_sequences=args.sequences,
    )
    print(report.table())
    _write_json(args.json, report.to_dict())
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    tokenizer, tok_meta = load_tokenizer(_tokenizer_path(args))
    former, former_meta = load_former(_former_path(args), tokenizer)
    world = None
    if args.manifest:
        world = _world_from_manifest(args.manifest)
    app = create_app(
        tokenizer,
        former,
        world_config=world,
        checkpoint_ids={
            "tokenizer": former_meta.get("tokenizer_hash"),
            "former": former_meta.get("config_hash", "former"),
        },
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxelcast")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="emit OCCSEQ sequences plus a manifest")
    p.add_argument("--config", help="world config JSON (defaults apply)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.set_defaults(run=_cmd_gen_data)

    def add_ckpt_args(p, with_former=True):
        p.add_argument("--ckpt", help=f"checkpoint directory (or ${ENV_CKPT_DIR})")
        p.add_argument("--tokenizer", help="tokenizer checkpoint path")
        if with_former:
            p.add_argument("--former", help="forecaster checkpoint path")

    p = sub.add_parser("train-tokenizer", help="fit the scene tokenizer")
    p.add_argument("--config", help="experiment config JSON")
    add_ckpt_args(p, with_former=False)
    p.set_defaults(run=_cmd_train_tokenizer)

    p = sub.add_parser("train-former", help="fit the forecaster against a tokenizer")
    p.add_argument("--config", help="experiment config JSON")
    add_ckpt_args(p)
    p.set_defaults(run=_cmd_train_former)

    p = sub.add_parser("eval", help="score reconstruction and forecasts on a split")
    p.add_argument("--config", help="experiment config JSON")
    add_ckpt_args(p)
    p.add_argument("--split", default="val")
    p.add_argument("--source", choices=sorted(_SOURCES), default="gt")
    p.add_argument("--fps", action="store_true", help="also run the throughput benchmark")
    p.add_argument("--json", default="eval_report.json")
    p.set_defaults(run=_cmd_eval)

    p = sub.add_parser("ablate", help="train and score baseline vs one switched variant")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--switches", required=True, help="e.g. align=false,multi_scale=false")
    p.add_argument("--name", default="variant")
    p.add_argument("--split", default="val")
    p.add_argument("--json", default="ablation_report.json")
    p.set_defaults(run=_cmd_ablate)

    p = sub.add_parser("bench-fps", help="median wall-clock forecast throughput")
    p.add_argument("--config", help="experiment config JSON")
    add_ckpt_args(p)
    p.add_argument("--split", default="val")
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--json", default="fps_report.json")
    p.set_defaults(run=_cmd_bench_fps)

    p = sub.add_parser("rate-eval", help="evaluate at a different frame rate")
    p.add_argument("--config", help="experiment config JSON")
    add_ckpt_args(p)
    p.add_argument("--hz", type=float, required=True)
    p.add_argument("--sequences", type=int, default=12)
    p.add_argument("--json", default="rate_report.json")
    p.set_defaults(run=_cmd_rate_eval)

    p = sub.add_parser("serve", help="run the interactive steering service")
    add_ckpt_args(p)
    p.add_argument("--manifest", help="manifest whose world config seeds new sessions")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(run=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.run(args)


if __name__ == "__main__":
    sys.exit(main())
