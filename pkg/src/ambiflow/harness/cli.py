"""Command-line interface.

Subcommands: synth-data, gen-annotations, train, sample, eval-mmd,
eval-mpjpe, select-views, report. Every command resolves its configuration
from built-in defaults, an optional config file, ``--set key=value``
overrides, and ``--seed``; each run writes a manifest sufficient to re-run
it. Exit codes: 0 success, 2 usage/config errors, 3 data errors, 1 anything
else (one machine-parsable line on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..annotate.generate import generate_annotations
from ..flow.checkpoint import save_checkpoint
from ..training.loop import ModelBundle, load_model, train
from .config import (
    ConfigError,
    config_hash,
    feature_config,
    flow_config,
    format_config,
    loss_weights,
    plausibility_config,
    resolve_config,
    train_config,
)
from .dataset import DataError, read_dataset, to_training_samples, write_dataset
from .evaluate import eval_mmd_rows, eval_mpjpe_rows, view_frames, view_score_rows
from .report import render_figures, summarize_run, write_csv
from .synth import build_world_assets, synth_records

log = logging.getLogger(__name__)


def _parse_overrides(pairs: list[str] | None) -> dict:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        from .config import parse_value

        overrides[key.strip()] = parse_value(value)
    return overrides


def _resolve(args) -> tuple[dict, str]:
    cfg = resolve_config(getattr(args, "config", None), _parse_overrides(getattr(args, "set", None)),
                         seed=getattr(args, "seed", None))
    return cfg, config_hash(cfg)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, args, cfg: dict, chash: str,
                    inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "argv": [str(a) for a in sys.argv[1:]] if sys.argv else [],
        "package_version": __version__,
        "seed": cfg["seed"],
        "config_hash": chash,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _load_records(path, split: str | None = None):
    header, records = read_dataset(path)
    if split and split != "all":
        records = [r for r in records if r.split == split]
        if not records:
            raise DataError(f"dataset has no records in split {split!r}")
    return header, records


def _assets_for(args, header: dict):
    from ..handmodel.skeleton import ModelAssets

    path = getattr(args, "assets", None) or header.get("assets")
    if path is None:
        raise DataError("no assets file given and the dataset header names none")
    return ModelAssets.load(path), Path(path)


# -- commands ----------------------------------------------------------------


def cmd_synth_data(args) -> int:
    cfg, chash = _resolve(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    assets, samplers = build_world_assets(cfg)
    plaus = plausibility_config(cfg)
    records = synth_records(cfg, assets, samplers, plaus, chash)

    assets_path = out_dir / "assets.json"
    dataset_path = out_dir / "dataset.jsonl"
    assets.save(assets_path)
    header = {
        "config_hash": chash,
        "seed": cfg["seed"],
        "assets": str(assets_path),
        "n_frames": cfg["world.frames"],
        "n_cameras": cfg["world.cameras"],
    }
    write_dataset(dataset_path, header, records)
    (out_dir / "config.txt").write_text(format_config(cfg))
    _write_manifest(out_dir, "synth-data", args, cfg, chash, [],
                    [assets_path, dataset_path, out_dir / "config.txt"])
    n_ann = [len(r.annotations) for r in records]
    print(f"wrote {len(records)} records ({min(n_ann)}-{max(n_ann)} annotations each) "
          f"to {dataset_path}")
    return 0


def cmd_gen_annotations(args) -> int:
    cfg, chash = _resolve(args)
    header, records = _load_records(args.dataset)
    assets, assets_path = _assets_for(args, header)
    plaus = plausibility_config(cfg)
    seed = cfg["seed"]
    for idx, rec in enumerate(records):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA22, idx]))
        ann = generate_annotations(rec.psi_gt, rec.camera, assets, plaus, rng,
                                   occluders_cam=rec.occluders_cam(),
                                   frame_id=rec.frame_id, config_hash=chash, seed=seed)
        rec.annotations = ann.annotations
        rec.ann_seed = seed
        rec.ann_exhausted = ann.exhausted
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    header = {k: v for k, v in header.items() if k != "format"}
    header["config_hash"] = chash
    write_dataset(out_path, header, records)
    if out_path.parent.is_dir():
        _write_manifest(out_path.parent, "gen-annotations", args, cfg, chash,
                        [Path(args.dataset), assets_path], [out_path])
    print(f"regenerated annotations for {len(records)} records into {out_path}")
    return 0


def cmd_train(args) -> int:
    cfg, chash = _resolve(args)
    if args.steps is not None:
        cfg["train.steps"] = int(args.steps)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header, records = _load_records(args.dataset)
    assets, assets_path = _assets_for(args, header)
    samples = to_training_samples(records, cfg["seed"], split="train")
    if not samples:
        samples = to_training_samples(records, cfg["seed"], split=None)
    if not samples:
        raise DataError("dataset contains no usable training records")

    from ..training.norm import build_pose_norm

    principal = samples[0].camera.principal
    norm = build_pose_norm(assets, principal, crop=cfg["model.crop"],
                           s_center=cfg["model.s_center"], s_scale=cfg["model.s_scale"])
    tcfg = train_config(cfg)
    result = train(samples, assets, norm, flow_config(cfg, dim=assets.pose_dim),
                   feature_config(cfg, n_keypoints=assets.n_keypoints), loss_weights(cfg),
                   tcfg, checkpoint_path=out_dir / "checkpoint.json", config_hash=chash)

    curve_path = out_dir / "loss_curve.csv"
    if result.history:
        write_csv(curve_path, list(result.history[0].keys()), result.history)
    else:  # --steps 0: identity-initialized checkpoint, empty curve
        write_csv(curve_path, ["step", "nll", "detmag", "psi", "j3d", "j2d", "theta", "total"], [])
    _write_manifest(out_dir, "train", args, cfg, chash, [Path(args.dataset), assets_path],
                    [out_dir / "checkpoint.json", curve_path])
    status = "diverged (restored last good)" if result.diverged else "ok"
    print(f"trained {result.steps_done}/{tcfg.steps} steps ({status}); "
          f"checkpoint at {out_dir / 'checkpoint.json'}")
    return 0


def cmd_sample(args) -> int:
    cfg, chash = _resolve(args)
    model = load_model(args.checkpoint)
    header, records = _load_records(args.dataset)
    if args.record is not None:
        if not 0 <= args.record < len(records):
            raise DataError(f"record index {args.record} out of range (0..{len(records) - 1})")
        rec = records[args.record]
    else:
        matches = [r for r in records
                   if r.frame_id == args.frame and (args.camera is None or r.cam_id == args.camera)]
        if not matches:
            raise DataError(f"no record for frame {args.frame!r} camera {args.camera!r}")
        rec = matches[0]

    from .evaluate import conditioning_vector
    from .. import diffcore as dc

    v = conditioning_vector(rec, model)
    rng = np.random.default_rng(cfg["seed"])
    with dc.no_grad():
        psi_norm, z = model.flow.sample(v, args.n, rng)
    psi = model.norm.unnormalize(psi_norm.data)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"format": "samples.v1", "frame_id": rec.frame_id,
                         "cam_id": rec.cam_id, "n": int(args.n), "seed": cfg["seed"],
                         "normalized": False}, sort_keys=True, separators=(",", ":"))]
    for i in range(args.n):
        lines.append(json.dumps({"index": i, "psi": psi[i].tolist(), "z": z[i].tolist()},
                                sort_keys=True, separators=(",", ":")))
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {args.n} pose samples for {rec.frame_id}/{rec.cam_id} to {out_path}")
    return 0


def cmd_eval_mmd(args) -> int:
    cfg, chash = _resolve(args)
    header, records = _load_records(args.dataset, args.split)
    assets, assets_path = _assets_for(args, header)
    model = load_model(args.checkpoint) if args.checkpoint else None
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0xE7A1]))
    rows = eval_mmd_rows(records, assets, cfg, model, rng)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "mmd.csv"
    write_csv(out_path, list(rows[0].keys()), rows)
    inputs = [Path(args.dataset), assets_path] + ([Path(args.checkpoint)] if args.checkpoint else [])
    _write_manifest(out_dir, "eval-mmd", args, cfg, chash, inputs, [out_path])
    key = "mmd_model_global" if model else "mmd_self_global"
    mean = float(np.mean([r[key] for r in rows]))
    print(f"evaluated MMD on {len(rows)} records; mean {key} = {mean:.6f} "
          f"(sqrt of scale-averaged MMD^2) -> {out_path}")
    return 0


def cmd_eval_mpjpe(args) -> int:
    cfg, chash = _resolve(args)
    header, records = _load_records(args.dataset, args.split)
    assets, assets_path = _assets_for(args, header)
    model = load_model(args.checkpoint)
    rows = eval_mpjpe_rows(records, assets, cfg, model)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "mpjpe.csv"
    write_csv(out_path, list(rows[0].keys()), rows)
    _write_manifest(out_dir, "eval-mpjpe", args, cfg, chash,
                    [Path(args.dataset), assets_path, Path(args.checkpoint)], [out_path])
    mean = float(np.mean([r["mpjpe_global"] for r in rows]))
    print(f"evaluated mode MPJPE on {len(rows)} records; mean Global = {mean:.2f} mm "
          f"-> {out_path}")
    return 0


def cmd_select_views(args) -> int:
    cfg, chash = _resolve(args)
    header, records = _load_records(args.dataset, args.split)
    assets, assets_path = _assets_for(args, header)
    model = load_model(args.checkpoint) if args.checkpoint else None
    source = args.source or ("model" if model else "annotations")
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0x5E1E]))
    per_camera = view_frames(records, assets, cfg, model, source, rng)
    rows = view_score_rows(per_camera)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "view_scores.csv"
    write_csv(out_path, list(rows[0].keys()), rows)
    inputs = [Path(args.dataset), assets_path] + ([Path(args.checkpoint)] if args.checkpoint else [])
    _write_manifest(out_dir, "select-views", args, cfg, chash, inputs, [out_path])
    best, worst = rows[0], rows[-1]
    print(f"ranked {len(rows)} cameras by ambiguity ({source} samples): "
          f"best {best['cam_id']} (regret {best['regret_mm']:.2f} mm), "
          f"worst {worst['cam_id']} (regret {worst['regret_mm']:.2f} mm) -> {out_path}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize_run(run_dir)
    if not summary:
        raise DataError(f"no metric CSVs found in {run_dir}")
    out_path = out_dir / "summary.csv"
    write_csv(out_path, ["file", "column", "n", "mean", "min", "max"], summary)
    figures = render_figures(run_dir)
    if out_dir != run_dir:
        moved = []
        for fig in figures:
            target = out_dir / fig.name
            fig.replace(target)
            moved.append(target)
        figures = moved
    print(f"summary over {len(summary)} columns -> {out_path}; "
          f"figures: {', '.join(str(f) for f in figures) if figures else 'none'}")
    return 0


# -- parser ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ambiflow",
                                     description="two-hand pose distribution toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic dataset with annotations")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("gen-annotations", help="regenerate annotation sets for a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--assets")
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=cmd_gen_annotations)

    p = sub.add_parser("train", help="train the conditional flow")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--assets")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--steps", type=int, help="override train.steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw pose samples from a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--record", type=int, help="record index into the dataset")
    p.add_argument("--frame", help="frame id (alternative to --record)")
    p.add_argument("--camera", help="camera id filter for --frame")
    p.add_argument("-n", type=int, default=100, help="number of samples")
    p.add_argument("--out", required=True, help="output JSONL file")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval-mmd", help="distribution match between samples and annotations")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--assets")
    p.add_argument("--checkpoint", help="without it, annotations are tested against themselves")
    p.add_argument("--split", default="test", choices=["train", "test", "mixed", "all"])
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_eval_mmd)

    p = sub.add_parser("eval-mpjpe", help="aligned mode-pose error")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--assets")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "mixed", "all"])
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_eval_mpjpe)

    p = sub.add_parser("select-views", help="rank cameras by sample ambiguity with regret")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--assets")
    p.add_argument("--checkpoint")
    p.add_argument("--source", choices=["model", "annotations"],
                   help="sample source (default: model if a checkpoint is given)")
    p.add_argument("--split", default="all", choices=["train", "test", "mixed", "all"])
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_select_views)

    p = sub.add_parser("report", help="summarize a run directory into CSV + figures")
    _add_common(p)
    p.add_argument("--run", required=True, help="directory with metric CSVs")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: data: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # one machine-parsable line, nonzero exit
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
