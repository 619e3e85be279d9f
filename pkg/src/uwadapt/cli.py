"""Command-line interface: dataset rendering, training, scoring, inference.

Every command reads shared paths and hyperparameters from a JSON run config
(``--config``, overridable through the UWADAPT_CONFIG environment variable)
and writes its artifacts under the config's out_dir. Exit codes are
categorized: 0 success, 2 for configuration problems (bad arguments, bad
config files, missing inputs), 3 for model problems (unreadable checkpoints,
diverged training, missing models at inference time).
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .adapt import (
    SplitResult,
    build_inter_nets,
    build_intra_nets,
    split_easy_hard,
    sweep_lambda,
    train_inter,
    train_intra,
)
from .fixtures import make_desk_data, make_mos_fixture, write_real_dataset
from .imagecore import read_png, write_png
from .losses import DEFAULT_WEIGHTS
from .metrics import MetricReport, angular_error, psnr, ssim, uciqe, uiqm
from .networks import RankBackbone
from .pipeline import (
    AblationSpec,
    enhance,
    load_checkpoint,
    load_run_config,
    load_scorer_checkpoint,
    run_ablation,
    save_checkpoint,
    save_phase_checkpoint,
    save_scorer_checkpoint,
)
from .report import (
    format_sweep_table,
    format_table,
    write_history,
    write_report,
    write_sweep,
)
from .ruiqa import (
    RankerConfig,
    ScorerConfig,
    finetune_scorer,
    make_rank_pairs,
    predict,
    train_ranker,
)
from .synthdata import (
    DatasetManifest,
    SceneSample,
    bowl_depth,
    build_dataset,
    load_real_examples,
    load_synth_examples,
    make_scene_pool,
    ramp_depth,
)


class ConfigError(Exception):
    """Bad arguments, bad config file, or missing inputs → exit code 2."""


class ModelError(Exception):
    """Unreadable checkpoint, diverged training, missing model → exit code 3."""


def _config(args):
    try:
        return load_run_config(args.config)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        raise ConfigError(e) from e


def _load_ckpt(path, loader=load_checkpoint):
    if path is None:
        raise ConfigError("a required checkpoint path is not configured")
    try:
        return loader(path)
    except (ValueError, FileNotFoundError) as e:
        raise ModelError(e) from e


def _manifest(dir_path, what: str) -> DatasetManifest:
    if dir_path is None:
        raise ConfigError(f"{what} is not set in the run config")
    path = Path(dir_path) / "manifest.jsonl"
    if not path.exists():
        raise ConfigError(f"no manifest at {path}")
    try:
        return DatasetManifest.load(path)
    except ValueError as e:
        raise ConfigError(f"manifest {path} is invalid: {e}") from e


def _pngs(dir_path) -> list:
    paths = sorted(Path(dir_path).glob("*.png"))
    if not paths:
        raise ConfigError(f"no .png files in {dir_path}")
    return paths


def _weights_meta() -> dict:
    return dataclasses.asdict(DEFAULT_WEIGHTS)


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> int:
    if args.scenes:
        rng = np.random.default_rng(args.seed)
        scenes = []
        for i, p in enumerate(_pngs(args.scenes)):
            img = read_png(p)
            h, w = img.pixels.shape[:2]
            near = float(rng.uniform(1.0, 3.0))
            far = near + float(rng.uniform(3.0, 8.0))
            make = ramp_depth if i % 2 == 0 else bowl_depth
            scenes.append(SceneSample(img, make(h, w, near, far)))
    else:
        scenes = make_scene_pool(args.seed, args.procedural, args.size, args.size)
    manifest = build_dataset(scenes, args.out, per_type=args.per_type, seed=args.seed)
    print(f"wrote {len(manifest.records)} pairs under {args.out}")
    return 0


def cmd_synth_real(args) -> int:
    manifest = write_real_dataset(args.out, args.count, args.seed, size=args.size)
    print(f"wrote {len(manifest.records)} real-domain images under {args.out}")
    return 0


# ------------------------------------------------------------------- eval

_NO_REF = {"uciqe": uciqe, "uiqm": uiqm}
_REF = {"psnr": psnr, "ssim": ssim, "angular": angular_error}


def cmd_eval(args) -> int:
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in names if m not in _NO_REF and m not in _REF]
    if unknown:
        raise ConfigError(f"unknown metrics {unknown}; known: {sorted(_NO_REF | _REF)}")
    needs_ref = [m for m in names if m in _REF]
    if needs_ref and not args.ref:
        raise ConfigError(f"metrics {needs_ref} need --ref")

    report = MetricReport()
    report.meta = {"pred": str(args.pred)}
    for p in _pngs(args.pred):
        img = read_png(p)
        vals = {m: _NO_REF[m](img) for m in names if m in _NO_REF}
        for m in needs_ref:
            ref_path = Path(args.ref) / p.name
            if not ref_path.exists():
                raise ConfigError(f"no reference image for {p.name} in {args.ref}")
            ref = read_png(ref_path)
            # reference goes first for the paired metrics
            vals[m] = _REF[m](ref, img) if m != "angular" else angular_error(img, ref)
        report.add(p.name, vals)

    out = Path(args.out)
    paths = write_report(report, out.parent if out.parent != Path("") else ".", out.name)
    print(format_table(report))
    print(f"\nwrote {paths['tsv']}, {paths['txt']}, {paths['png']}")
    return 0


# ------------------------------------------------------------------ ruiqa


def cmd_ruiqa_train_ranker(args) -> int:
    items = make_mos_fixture(args.images, seed=args.seed, size=args.size, jitter=0.04)
    pairs = make_rank_pairs(items, per_image_pairs=args.ppi, seed=args.seed + 1)
    torch.manual_seed(args.seed + 100)
    backbone = RankBackbone(width=args.width)
    try:
        _, history = train_ranker(
            backbone,
            pairs,
            RankerConfig(epochs=args.epochs, batch=8, lr=3e-4, seed=args.seed + 2),
        )
    except RuntimeError as e:
        raise ModelError(e) from e
    save_checkpoint(
        args.out,
        {"backbone": backbone},
        {"stage": "ranker", "seed": args.seed, "pairs": len(pairs)},
    )
    print(f"ranked backbone saved to {args.out} ({len(history)} epochs)")
    return 0


def cmd_ruiqa_finetune(args) -> int:
    models, _ = _load_ckpt(args.backbone)
    if "backbone" not in models:
        raise ModelError(f"{args.backbone} does not hold a scorer backbone")
    items = make_mos_fixture(args.images, seed=args.seed, size=args.size)
    try:
        scorer, history = finetune_scorer(
            models["backbone"],
            items,
            ScorerConfig(epochs=args.epochs, batch=4, seed=args.seed + 3),
        )
    except RuntimeError as e:
        raise ModelError(e) from e
    save_scorer_checkpoint(
        args.out, scorer, {"stage": "finetuned", "seed": args.seed}
    )
    print(f"scorer saved to {args.out} ({len(history)} epochs)")
    return 0


def cmd_ruiqa_score(args) -> int:
    scorer, _ = _load_ckpt(args.scorer, loader=load_scorer_checkpoint)
    lines = []
    for p in _pngs(args.images):
        lines.append(f"{p} {predict(scorer, read_png(p)):.4f}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"scored {len(lines)} images -> {args.out}")
    return 0


# --------------------------------------------------------------- training


def cmd_train_inter(args) -> int:
    cfg = _config(args)
    synth = load_synth_examples(_manifest(cfg.synth_dir, "synth_dir"), "train")
    real = load_real_examples(_manifest(cfg.real_dir, "real_dir"), "train")
    nets = build_inter_nets(cfg.width, seed=cfg.seed)
    try:
        history = train_inter(synth, real, nets, config=cfg.train_config())
    except RuntimeError as e:
        raise ModelError(e) from e
    out = Path(cfg.out_dir)
    save_phase_checkpoint(
        out / "inter.pt",
        nets,
        {"phase": "inter", "seed": cfg.seed, "weights": _weights_meta()},
    )
    write_history(history, out / "inter_history.tsv")
    print(
        f"inter phase done: {len(history)} epochs, "
        f"final total loss {history[-1]['total']:.4f}; saved {out / 'inter.pt'}"
    )
    return 0


def _load_inter_and_scorer(cfg):
    models, _ = _load_ckpt(cfg.inter_checkpoint)
    for name in ("translator", "enhancer"):
        if name not in models:
            raise ModelError(f"{cfg.inter_checkpoint} is not a phase checkpoint")
    scorer, _ = _load_ckpt(cfg.scorer_checkpoint, loader=load_scorer_checkpoint)
    return models, scorer


def cmd_split(args) -> int:
    cfg = _config(args)
    lam = args.lam if args.lam is not None else cfg.lam
    models, scorer = _load_inter_and_scorer(cfg)
    real = load_real_examples(_manifest(cfg.real_dir, "real_dir"), "train")
    try:
        split = split_easy_hard(real, scorer, models["enhancer"], lam)
    except ValueError as e:
        raise ConfigError(e) from e
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split.save_manifest(out / "split.json")
    print(
        f"lambda={lam}: {len(split.easy)} easy / {len(split.hard)} hard, "
        f"threshold {split.threshold:.4f}; saved {out / 'split.json'}"
    )
    return 0


def cmd_train_intra(args) -> int:
    cfg = _config(args)
    models, scorer = _load_inter_and_scorer(cfg)
    real = load_real_examples(_manifest(cfg.real_dir, "real_dir"), "train")
    try:
        split = split_easy_hard(real, scorer, models["enhancer"], cfg.lam)
    except ValueError as e:
        raise ConfigError(e) from e
    nets = build_intra_nets(
        models["enhancer"],
        build_inter_nets(cfg.width, seed=cfg.seed).features,
        seed=cfg.seed,
        translator_init=models["translator"],
    )
    try:
        history = train_intra(split, nets, config=cfg.train_config())
    except (ValueError, RuntimeError) as e:
        raise ModelError(e) from e
    out = Path(cfg.out_dir)
    split.save_manifest(out / "split.json")
    save_phase_checkpoint(
        out / "intra.pt",
        nets,
        {
            "phase": "intra",
            "seed": cfg.seed,
            "lambda": cfg.lam,
            "threshold": split.threshold,
            "weights": _weights_meta(),
        },
    )
    write_history(history, out / "intra_history.tsv")
    print(
        f"intra phase done: {len(history)} epochs; saved {out / 'intra.pt'} "
        f"(threshold {split.threshold:.4f})"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    try:
        lams = [float(v) for v in args.lambdas.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --lambdas value: {e}") from e
    if not lams:
        raise ConfigError("--lambdas is empty")
    models, scorer = _load_inter_and_scorer(cfg)
    m = _manifest(cfg.real_dir, "real_dir")
    real_train = load_real_examples(m, "train")
    real_eval = load_real_examples(m, "test")
    if not real_eval:
        raise ConfigError("real_dir has no test split to evaluate on")
    inter = build_inter_nets(cfg.width, seed=cfg.seed)
    inter.translator = models["translator"]
    inter.enhancer = models["enhancer"]
    rows = sweep_lambda(
        lams, real_train, real_eval, scorer, inter, config=cfg.train_config()
    )
    paths = write_sweep(rows, cfg.out_dir)
    print(format_sweep_table(rows))
    print(f"\nwrote {paths['tsv']}, {paths['txt']}, {paths['png']}")
    return 0


# -------------------------------------------------------------- inference


def cmd_enhance(args) -> int:
    cfg = _config(args)
    models, scorer = _load_inter_and_scorer(cfg)
    intra = None
    if cfg.intra_checkpoint:
        intra_models, _ = _load_ckpt(cfg.intra_checkpoint)
        if "enhancer" not in intra_models:
            raise ModelError(f"{cfg.intra_checkpoint} is not a phase checkpoint")
        intra = intra_models["enhancer"]

    threshold_from = args.threshold_from or cfg.threshold_from
    if threshold_from:
        try:
            threshold = float(SplitResult.load_manifest(threshold_from)["threshold"])
        except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read threshold from {threshold_from}: {e}") from e
    elif intra is None:
        threshold = float("-inf")  # single-model mode: everything routes inter
    else:
        raise ConfigError("an intra model is configured but no --threshold-from")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["path\troute\tscore"]
    routes = {"inter": 0, "intra": 0}
    for p in _pngs(args.images):
        try:
            result, route, score = enhance(
                read_png(p), models["enhancer"], intra, scorer, threshold
            )
        except ValueError as e:
            raise ModelError(e) from e
        write_png(result, out / p.name)
        routes[route] += 1
        lines.append(f"{p.name}\t{route}\t{score:.4f}")
    (out / "routes.tsv").write_text("\n".join(lines) + "\n")
    print(
        f"enhanced {routes['inter'] + routes['intra']} images -> {out} "
        f"({routes['inter']} inter, {routes['intra']} intra)"
    )
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    try:
        spec = AblationSpec(args.variant)
    except ValueError as e:
        raise ConfigError(e) from e
    data = make_desk_data(cfg.seed, image_size=cfg.image_size)
    scorer = None
    if not spec.is_iqa:
        if cfg.scorer_checkpoint:
            scorer, _ = _load_ckpt(cfg.scorer_checkpoint, loader=load_scorer_checkpoint)
        else:
            from .pipeline import _train_scorer_variant

            print("no scorer checkpoint configured; training the fixture scorer")
            scorer = _train_scorer_variant("RUIQA", data, seed=cfg.seed)
    try:
        report = run_ablation(
            spec, data, cfg.train_config(), scorer=scorer, width=cfg.width, lam=cfg.lam
        )
    except (ValueError, RuntimeError) as e:
        raise ModelError(e) from e
    stem = "ablation_" + args.variant.replace("+", "_").replace("-", "_")
    paths = write_report(report, cfg.out_dir, stem)
    print(format_table(report))
    print(f"\nwrote {paths['tsv']}, {paths['txt']}, {paths['png']}")
    return 0


# ------------------------------------------------------------------ wiring


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="uwadapt",
        description="Two-phase underwater enhancement: data, training, scoring, inference.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render paired synthetic underwater data")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenes", help="directory of clean scene PNGs")
    g.add_argument(
        "--procedural", type=int, metavar="N", help="generate N procedural scenes instead"
    )
    p.add_argument("--out", required=True)
    p.add_argument("--per-type", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64, help="procedural scene size")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-real", help="render the unpaired pseudo-real set")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth_real)

    p = sub.add_parser("eval", help="compute quality metrics over a directory")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", help="reference directory for paired metrics")
    p.add_argument("--metrics", default="uciqe,uiqm")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ruiqa", help="quality scorer stages")
    rsub = p.add_subparsers(dest="stage", required=True)

    r = rsub.add_parser("train-ranker", help="rank-pretrain the backbone")
    r.add_argument("--out", required=True)
    r.add_argument("--images", type=int, default=120)
    r.add_argument("--ppi", type=int, default=5, help="rank pairs per image")
    r.add_argument("--epochs", type=int, default=30)
    r.add_argument("--width", type=int, default=8)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--size", type=int, default=64)
    r.set_defaults(func=cmd_ruiqa_train_ranker)

    r = rsub.add_parser("finetune", help="regress the backbone onto scores")
    r.add_argument("--backbone", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--images", type=int, default=12)
    r.add_argument("--epochs", type=int, default=15)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--size", type=int, default=64)
    r.set_defaults(func=cmd_ruiqa_finetune)

    r = rsub.add_parser("score", help="score a directory of images")
    r.add_argument("--scorer", required=True)
    r.add_argument("--images", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_ruiqa_score)

    for name, fn, needs_lambda in (
        ("train-inter", cmd_train_inter, False),
        ("split", cmd_split, True),
        ("train-intra", cmd_train_intra, False),
    ):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} stage")
        p.add_argument("--config", help="run config JSON (or set UWADAPT_CONFIG)")
        if needs_lambda:
            p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", help="re-train the intra phase per lambda")
    p.add_argument("--config")
    p.add_argument("--lambdas", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("enhance", help="score-routed enhancement of a directory")
    p.add_argument("--config")
    p.add_argument("--in", dest="images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold-from", help="split manifest holding the threshold")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("ablate", help="train and evaluate one study variant")
    p.add_argument("--config")
    p.add_argument("--variant", required=True)
    p.set_defaults(func=cmd_ablate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ModelError as e:
        print(f"model error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
