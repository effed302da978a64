"""Batch command-line entry points.

Every command takes an optional JSON config (--config) plus flag overrides
(flags win), rejects unknown config keys, writes a resolved-config copy next
to its outputs, and maps each error class to a distinct nonzero exit code.
The environment variable IMSE_LAB_THREADS caps torch's thread count.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import errors
from .benchmark import SUITES, run_benchmark
from .evaluation import correlation_experiment, dice, field_smoothness, hd95
from .evaluator import SpatialErrorEvaluator
from .image_core import warp_nearest
from .io import read_mask_pgm, read_pgm, read_raw, write_pgm, write_raw, write_trace_csv
from .phantoms import default_modality_pair, generate_ground_truth_pair, generate_phantom, simulate_modality, write_pair_dir
from .registration import LOSS_KEYS, IterativeRegistration, NetworkRegistration, smoothness_loss
from .shuffle_remap import RemapSpec, apply_remap, sample_remap
from .spatial_transforms import NOISE_MODES, TransformConfig

EXIT_CODES = {
    errors.BadConfig: 2,
    errors.ShapeMismatch: 3,
    errors.NonFiniteInput: 4,
    errors.DegenerateRange: 5,
    errors.BadRange: 6,
    errors.InvalidSpec: 7,
    errors.EmptyDataset: 8,
    errors.DivergedTraining: 9,
    errors.NonFiniteLoss: 10,
    errors.BothEmpty: 11,
    errors.EmptyMask: 12,
    errors.EmptyRegion: 13,
    errors.DegenerateScores: 14,
}


def _exit_code(exc):
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 15 if isinstance(exc, errors.ImselabError) else 1


def load_image(path):
    path = Path(path)
    return read_pgm(path) if path.suffix == ".pgm" else read_raw(path)


def _resolve_config(defaults, args):
    """defaults <- JSON config file <- explicit CLI flags."""
    config = dict(defaults)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise errors.BadConfig(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _write_resolved(out_dir, command, config):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **config}
    (out_dir / "resolved_config.json").write_text(json.dumps(payload, sort_keys=True) + "\n")


def _require(config, key):
    if not config.get(key):
        raise errors.BadConfig(f"missing required option --{key.replace('_', '-')}")
    return config[key]


GEN_DATA_DEFAULTS = {"seed": 0, "count": 8, "size": 64, "classes": 5, "deformation_strength": 0.25, "out": ""}


def cmd_gen_data(args):
    cfg = _resolve_config(GEN_DATA_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "gen-data", cfg)
    mod_a, mod_b = default_modality_pair(np.random.default_rng((cfg["seed"], 0)), cfg["classes"])
    transform = TransformConfig(deformation_strength=cfg["deformation_strength"])
    for k in range(cfg["count"]):
        rng = np.random.default_rng((cfg["seed"], 2, k))
        phantom = generate_phantom(rng, cfg["size"], cfg["classes"])
        pair = generate_ground_truth_pair(phantom, (mod_a, mod_b), transform, rng)
        write_pair_dir(out / f"pair_{k:03d}", pair)
    print(f"wrote {cfg['count']} pairs under {out}")
    return 0


REMAP_DEMO_DEFAULTS = {"seed": 0, "n_min": 2, "n_max": 50, "identity": False, "input": "", "out": ""}


def cmd_remap_demo(args):
    cfg = _resolve_config(REMAP_DEMO_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "remap-demo", cfg)
    rng = np.random.default_rng(cfg["seed"])
    if cfg["input"]:
        image = load_image(cfg["input"])
    else:
        phantom = generate_phantom(rng, 64, 5)
        image = simulate_modality(phantom, default_modality_pair(rng, 5)[0], rng)
    spec = sample_remap(rng, cfg["n_min"], cfg["n_max"])
    if cfg["identity"]:
        spec = RemapSpec.identity(spec.control_points)
    remapped = apply_remap(image, spec)
    write_raw(out / "before.raw", image)
    write_raw(out / "after.raw", remapped)
    write_pgm(out / "before.pgm", image)
    write_pgm(out / "after.pgm", remapped)
    (out / "remap_spec.json").write_text(json.dumps(spec.to_dict(), sort_keys=True) + "\n")
    print(f"remap demo written to {out}")
    return 0


TRAIN_EVALUATOR_DEFAULTS = {
    "data": "",
    "steps": 2000,
    "batch_size": 8,
    "noise": "shuffle_remap",
    "n_min": 2,
    "n_max": 50,
    "learning_rate": 2e-4,
    "deformation_strength": 0.25,
    "role": "moving",
    "seed": 0,
    "out": "",
}


def cmd_train_evaluator(args):
    cfg = _resolve_config(TRAIN_EVALUATOR_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    data = Path(_require(cfg, "data"))
    if cfg["role"] not in ("moving", "target"):
        raise errors.BadConfig(f'role must be "moving" or "target", got {cfg["role"]!r}')
    _write_resolved(out, "train-evaluator", cfg)
    images = [read_raw(p) for p in sorted(data.glob(f"pair_*/{cfg['role']}.raw"))]
    est = SpatialErrorEvaluator(
        steps=cfg["steps"],
        batch_size=cfg["batch_size"],
        noise=cfg["noise"],
        n_min=cfg["n_min"],
        n_max=cfg["n_max"],
        learning_rate=cfg["learning_rate"],
        transform_config=TransformConfig(deformation_strength=cfg["deformation_strength"]),
        seed=cfg["seed"],
        modality_tag=cfg["role"],
    )
    est.fit(images)
    path = est.save(out / "evaluator.ckpt")
    print(f"trained on {len(images)} images; final loss {est.final_loss_:.4f}; saved {path}")
    return 0


REGISTER_DEFAULTS = {
    "moving": "",
    "target": "",
    "method": "iterative",
    "loss": "mae",
    "smoothness_weight": 1.0,
    "iters": 200,
    "learning_rate": 1.0,
    "evaluator": "",
    "network": "",
    "seed": 0,
    "out": "",
}


def cmd_register(args):
    cfg = _resolve_config(REGISTER_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "register", cfg)
    moving = load_image(_require(cfg, "moving"))
    target = load_image(_require(cfg, "target"))
    evaluator = SpatialErrorEvaluator.load(cfg["evaluator"]) if cfg["evaluator"] else None
    if cfg["loss"] not in LOSS_KEYS:
        raise errors.BadConfig(f"loss must be one of {LOSS_KEYS}, got {cfg['loss']!r}")
    if cfg["method"] == "iterative":
        reg = IterativeRegistration(
            loss=cfg["loss"],
            evaluator=evaluator,
            smoothness_weight=cfg["smoothness_weight"],
            iterations=cfg["iters"],
            learning_rate=cfg["learning_rate"],
            seed=cfg["seed"],
        )
        result = reg.register(moving, target)
    elif cfg["method"] == "network":
        net = NetworkRegistration.load(_require(cfg, "network"), evaluator=evaluator)
        result = net.register(moving, target)
    else:
        raise errors.BadConfig(f'method must be "iterative" or "network", got {cfg["method"]!r}')
    write_raw(out / "field.raw", result.field)
    write_raw(out / "warped.raw", result.warped)
    write_pgm(out / "warped.pgm", result.warped)
    write_trace_csv(out / "trace.csv", result.trace)
    metrics = {"smoothness": smoothness_loss(result.field)}
    if result.trace:
        metrics["final_loss"] = result.trace[-1]
        metrics["best_loss"] = min(result.trace)
    (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True) + "\n")
    print(f"registered with {cfg['method']}/{cfg['loss']}; results in {out}")
    return 0


TRANSLATE_DEFAULTS = {"evaluator": "", "reference": "", "source": "", "out": ""}


def cmd_translate(args):
    cfg = _resolve_config(TRANSLATE_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "translate", cfg)
    est = SpatialErrorEvaluator.load(_require(cfg, "evaluator"))
    reference = load_image(_require(cfg, "reference"))
    source = load_image(_require(cfg, "source"))
    error_map = est.predict(reference, source)
    translated = est.translate(reference, source)
    write_raw(out / "translated.raw", translated)
    write_pgm(out / "translated.pgm", translated)
    write_raw(out / "error_map.raw", error_map)
    print(f"translated image written to {out}")
    return 0


EVALUATE_DEFAULTS = {"result": "", "masks": "", "out": ""}


def cmd_evaluate(args):
    cfg = _resolve_config(EVALUATE_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "evaluate", cfg)
    fld = read_raw(Path(_require(cfg, "result")) / "field.raw")
    masks_dir = Path(_require(cfg, "masks"))
    names = sorted(p.name[len("moving_") : -len(".pgm")] for p in masks_dir.glob("moving_*.pgm"))
    if not names:
        raise errors.EmptyMask(f"no moving_*.pgm masks under {masks_dir}")
    report = {"structures": {}, "smoothness": field_smoothness(fld)}
    largest, largest_area = None, -1
    for name in names:
        mask_m = read_mask_pgm(masks_dir / f"moving_{name}.pgm")
        mask_t = read_mask_pgm(masks_dir / f"target_{name}.pgm")
        moved = warp_nearest(mask_m, fld)
        report["structures"][name] = {"dice_initial": dice(mask_m, mask_t), "dice_final": dice(moved, mask_t)}
        if int(mask_t.sum()) > largest_area:
            largest, largest_area = name, int(mask_t.sum())
    mask_m = read_mask_pgm(masks_dir / f"moving_{largest}.pgm")
    mask_t = read_mask_pgm(masks_dir / f"target_{largest}.pgm")
    report["hd95_largest"] = hd95(warp_nearest(mask_m, fld), mask_t)
    report["largest"] = largest
    report["dice_final_mean"] = float(np.mean([s["dice_final"] for s in report["structures"].values()]))
    (out / "evaluation.json").write_text(json.dumps(report, sort_keys=True) + "\n")
    print(f"evaluation written to {out / 'evaluation.json'}")
    return 0


CORRELATE_DEFAULTS = {"evaluator": "", "pairs": "", "transforms": 50, "seed": 0, "deformation_strength": 0.3, "out": ""}


def cmd_correlate(args):
    from .phantoms import read_pair_dir

    cfg = _resolve_config(CORRELATE_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    _write_resolved(out, "correlate", cfg)
    est = SpatialErrorEvaluator.load(_require(cfg, "evaluator"))
    pair_dirs = sorted(Path(_require(cfg, "pairs")).glob("pair_*"))
    if not pair_dirs:
        raise errors.EmptyDataset(f"no pair_* directories under {cfg['pairs']}")
    base_pairs = []
    for d in pair_dirs:
        pair = read_pair_dir(d)
        base_pairs.append((pair.moving, pair.target, pair.masks_moving[pair.largest], pair.masks_target[pair.largest]))
    report = correlation_experiment(
        est,
        base_pairs,
        cfg["transforms"],
        cfg["seed"],
        config=TransformConfig(deformation_strength=cfg["deformation_strength"]),
    )
    report.save(out / "report.json")
    csv_lines = ["alignment_score,dice"] + [f"{s!r},{d!r}" for s, d in report.points]
    (out / "scatter.csv").write_text("\n".join(csv_lines) + "\n")
    _scatter_png(out / "scatter.png", report)
    print(f"spearman {report.spearman:.3f}, pearson {report.pearson:.3f}; report in {out}")
    return 0


def _scatter_png(path, report):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    scores = [p[0] for p in report.points]
    dices = [p[1] for p in report.points]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(scores, dices, s=12, alpha=0.7)
    ax.set_xlabel("alignment score")
    ax.set_ylabel("Dice")
    ax.set_title(f"spearman={report.spearman:.3f} pearson={report.pearson:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


BENCHMARK_DEFAULTS = {"suite": "full", "seed": None, "out": ""}


def cmd_benchmark(args):
    cfg = _resolve_config(BENCHMARK_DEFAULTS, args)
    out = Path(_require(cfg, "out"))
    if cfg["suite"] not in SUITES:
        raise errors.BadConfig(f"suite must be one of {sorted(SUITES)}, got {cfg['suite']!r}")
    suite = SUITES[cfg["suite"]]
    if cfg["seed"] is not None:
        suite = replace(suite, seed=cfg["seed"])
    cfg["seed"] = suite.seed
    _write_resolved(out, "benchmark", cfg)
    results = run_benchmark(suite, out_dir=out)
    print((out / "results.md").read_text())
    best = max(results[1:], key=lambda r: r.dice)
    print(f"best row: {best.name} (Dice {best.dice:.4f})")
    return 0


COMMANDS = {
    "gen-data": (cmd_gen_data, GEN_DATA_DEFAULTS),
    "remap-demo": (cmd_remap_demo, REMAP_DEMO_DEFAULTS),
    "train-evaluator": (cmd_train_evaluator, TRAIN_EVALUATOR_DEFAULTS),
    "register": (cmd_register, REGISTER_DEFAULTS),
    "translate": (cmd_translate, TRANSLATE_DEFAULTS),
    "evaluate": (cmd_evaluate, EVALUATE_DEFAULTS),
    "correlate": (cmd_correlate, CORRELATE_DEFAULTS),
    "benchmark": (cmd_benchmark, BENCHMARK_DEFAULTS),
}

_FLAG_TYPES = {"identity": bool, "seed": int}


def build_parser():
    parser = argparse.ArgumentParser(prog="imselab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, defaults) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override it")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            kind = _FLAG_TYPES.get(key, type(default))
            if key == "smoothness_weight":
                p.add_argument("--lambda", flag, type=float, default=None, dest=key)
            elif kind is bool:
                p.add_argument(flag, action="store_true", default=None, dest=key)
            elif kind is int:
                p.add_argument(flag, type=int, default=None, dest=key)
            elif kind is float:
                p.add_argument(flag, type=float, default=None, dest=key)
            else:
                p.add_argument(flag, type=str, default=None, dest=key)
    return parser


def main(argv=None):
    threads = os.environ.get("IMSE_LAB_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))
    parser = build_parser()
    args = parser.parse_args(argv)
    command, _ = COMMANDS[args.command]
    try:
        return command(args)
    except errors.ImselabError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
