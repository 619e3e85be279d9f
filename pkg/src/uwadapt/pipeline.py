"""Routed inference, checkpoint persistence, configuration and ablations.

The deployed enhancement path mirrors the training-time split: every image
first goes through the inter-domain enhancer and gets a quality score; high
scores keep that result, low scores are re-enhanced by the intra-domain
model. Checkpoints persist model weights bit-exactly next to a JSON sidecar
that records architecture and run metadata, so a load failure can say
precisely what does not match. The ablation runner re-trains the desk-scale
variants of the two studies (enhancement phases and scorer pretraining) and
emits uniform per-image metric reports.
"""

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import torch

from .adapt import (
    PhaseNets,
    TrainConfig,
    build_inter_nets,
    build_intra_nets,
    split_easy_hard,
    train_baseline,
    train_inter,
    train_intra,
)
from .fixtures import DeskData
from .imagecore import UnitImage, denormalize, normalize
from .metrics import MetricReport, plcc, psnr, srocc, ssim
from .networks import (
    Enhancer,
    FeatureExtractor,
    PatchCritic,
    RankBackbone,
    Translator,
    image_to_tensor,
    tensor_to_image,
)
from .ruiqa import (
    RankerConfig,
    Scorer,
    ScorerConfig,
    finetune_scorer,
    make_rank_pairs,
    predict,
    train_ranker,
)

CHECKPOINT_VERSION = 1
CONFIG_ENV_VAR = "UWADAPT_CONFIG"

ENHANCEMENT_VARIANTS = ("BL", "BL+ITE", "BL+ITE+ITA")
IQA_VARIANTS = ("UIQA", "PUIQA-analog", "RUIQA")


@dataclass(frozen=True)
class AblationSpec:
    """Names one study variant; the set of valid names is closed."""

    variant: str

    def __post_init__(self):
        allowed = ENHANCEMENT_VARIANTS + IQA_VARIANTS
        if self.variant not in allowed:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {allowed}"
            )

    @property
    def is_iqa(self) -> bool:
        return self.variant in IQA_VARIANTS


# ------------------------------------------------------------ run config


@dataclass(frozen=True)
class RunConfig:
    """Paths and knobs for CLI runs, loaded from a JSON file.

    Path fields may be None when a command does not need them; any path
    that is set must exist at load time. out_dir is created on demand and
    is exempt from the existence check.
    """

    out_dir: str
    synth_dir: str | None = None
    real_dir: str | None = None
    scorer_checkpoint: str | None = None
    inter_checkpoint: str | None = None
    intra_checkpoint: str | None = None
    threshold_from: str | None = None
    lam: float = 0.5
    metrics: tuple = ("uciqe", "uiqm")
    seed: int = 0
    width: int = 12
    image_size: int = 64
    epochs: int = 8
    decay_epochs: int = 4
    batch: int = 4

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie strictly inside (0, 1), got {self.lam}")
        for name in (
            "synth_dir",
            "real_dir",
            "scorer_checkpoint",
            "inter_checkpoint",
            "intra_checkpoint",
            "threshold_from",
        ):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ValueError(f"{name} does not exist: {p}")

    def train_config(self, **overrides) -> TrainConfig:
        base = dict(
            epochs=self.epochs,
            decay_epochs=self.decay_epochs,
            batch=self.batch,
            seed=self.seed,
        )
        base.update(overrides)
        return TrainConfig(**base)


def load_run_config(path=None) -> RunConfig:
    """Read a RunConfig from JSON; the env var overrides the given path."""
    env = os.environ.get(CONFIG_ENV_VAR)
    if env:
        path = env
    if path is None:
        raise ValueError(
            f"no config path given and {CONFIG_ENV_VAR} is not set"
        )
    doc = json.loads(Path(path).read_text())
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "metrics" in doc:
        doc["metrics"] = tuple(doc["metrics"])
    return RunConfig(**doc)


# ----------------------------------------------------------- checkpoints


def _arch_of(module) -> dict:
    if isinstance(module, Translator):
        return {"class": "Translator", "width": module.width}
    if isinstance(module, Enhancer):
        return {"class": "Enhancer", "width": module.width}
    if isinstance(module, PatchCritic):
        return {
            "class": "PatchCritic",
            "in_channels": module.in_channels,
            "width": module.width,
            "n_layers": module.n_layers,
        }
    if isinstance(module, RankBackbone):
        return {
            "class": "RankBackbone",
            "width": module.width,
            "quality_dim": module.quality_dim,
        }
    if isinstance(module, FeatureExtractor):
        return {
            "class": "FeatureExtractor",
            "width": module.width,
            "seed": module.init_seed,
        }
    raise ValueError(f"cannot describe architecture of {type(module).__name__}")


def _build_from_arch(arch: dict):
    kind = arch.get("class")
    if kind == "Translator":
        return Translator(arch["width"])
    if kind == "Enhancer":
        return Enhancer(arch["width"])
    if kind == "PatchCritic":
        return PatchCritic(arch["in_channels"], arch["width"], arch["n_layers"])
    if kind == "RankBackbone":
        return RankBackbone(arch["width"], arch["quality_dim"])
    if kind == "FeatureExtractor":
        return FeatureExtractor(arch["width"], seed=arch["seed"])
    raise ValueError(f"checkpoint names an unknown architecture {kind!r}")


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path, models: dict, meta: dict | None = None) -> None:
    """Persist named modules bit-exactly plus a JSON sidecar manifest.

    The sidecar records the checkpoint format version, each model's
    architecture, and the caller's metadata (lambda, loss weights, seed,
    ...), which load_checkpoint returns untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({name: m.state_dict() for name, m in models.items()}, path)
    sidecar = {
        "version": CHECKPOINT_VERSION,
        "models": {name: _arch_of(m) for name, m in models.items()},
        "meta": meta or {},
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[dict, dict]:
    """Rebuild the saved modules and return (models, meta).

    Every failure mode is named: a missing sidecar, a version mismatch,
    a state blob whose model names disagree with the manifest, or tensors
    that do not fit the declared architecture.
    """
    path = Path(path)
    side = _sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint blob missing: {path}")
    if not side.exists():
        raise FileNotFoundError(f"checkpoint sidecar missing: {side}")
    doc = json.loads(side.read_text())
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint format version {version} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise ValueError(f"checkpoint blob is corrupt: {e}") from e
    if set(blob) != set(doc["models"]):
        raise ValueError(
            f"sidecar names models {sorted(doc['models'])} but the blob "
            f"holds {sorted(blob)}"
        )
    models = {}
    for name, arch in doc["models"].items():
        module = _build_from_arch(arch)
        try:
            module.load_state_dict(blob[name])
        except RuntimeError as e:
            raise ValueError(
                f"model {name!r} does not match its declared architecture "
                f"{arch}: {e}"
            ) from e
        module.eval()
        models[name] = module
    return models, doc.get("meta", {})


def save_phase_checkpoint(path, nets: PhaseNets, meta: dict | None = None) -> None:
    """Checkpoint one training phase (all four trainable networks)."""
    save_checkpoint(
        path,
        {
            "translator": nets.translator,
            "enhancer": nets.enhancer,
            "critic_img": nets.critic_img,
            "critic_feat": nets.critic_feat,
        },
        meta,
    )


def save_scorer_checkpoint(path, scorer: Scorer, meta: dict | None = None) -> None:
    save_checkpoint(path, {"backbone": scorer.backbone}, meta)


def load_scorer_checkpoint(path) -> tuple[Scorer, dict]:
    models, meta = load_checkpoint(path)
    if "backbone" not in models:
        raise ValueError(f"checkpoint at {path} does not hold a scorer backbone")
    scorer = Scorer(models["backbone"])
    scorer.trained = True
    return scorer, meta


# --------------------------------------------------------------- routing


def _run_enhancer(enhancer: Enhancer, img: UnitImage) -> UnitImage:
    enhancer.eval()
    with torch.no_grad():
        y, _ = enhancer(image_to_tensor(normalize(img)))
    return denormalize(tensor_to_image(y))


def enhance(
    img: UnitImage,
    inter: Enhancer,
    intra: Enhancer | None,
    scorer: Scorer,
    threshold: float,
) -> tuple[UnitImage, str, float]:
    """Score-routed enhancement of one image.

    The inter-domain result is scored; a score at or above the threshold
    returns that result unchanged with route "inter". Below the threshold
    the image counts as hard and is re-enhanced by the intra-domain model
    (route "intra"). The returned score is always the routing score, i.e.
    the score of the inter result.
    """
    y_inter = _run_enhancer(inter, img)
    score = predict(scorer, y_inter)
    if score >= threshold:
        return y_inter, "inter", score
    if intra is None:
        raise ValueError(
            f"score {score:.3f} falls below threshold {threshold:.3f} but no "
            "intra-domain model is available"
        )
    return _run_enhancer(intra, img), "intra", score


# -------------------------------------------------------------- ablation


def _train_scorer_variant(
    variant: str, data: DeskData, seed: int, width: int = 8
) -> Scorer:
    """Build the scorer of one IQA ablation arm.

    All three arms share the fine-tuning stage; they differ only in how the
    backbone trunk is pretrained: not at all (UIQA), on a degradation-level
    classification fixture (the PUIQA stand-in), or by pairwise ranking.
    """
    torch.manual_seed(seed)
    backbone = RankBackbone(width=width)

    if variant == "RUIQA":
        pairs = make_rank_pairs(list(data.mos_rank), per_image_pairs=5, seed=seed + 1)
        train_ranker(
            backbone, pairs, RankerConfig(epochs=30, batch=8, lr=3e-4, seed=seed + 2)
        )
    elif variant == "PUIQA-analog":
        _pretrain_on_strength_classes(backbone, list(data.strength), seed=seed + 2)
    elif variant != "UIQA":
        raise ValueError(f"unknown IQA variant {variant!r}")

    scorer, _ = finetune_scorer(
        backbone,
        list(data.mos_finetune),
        ScorerConfig(epochs=15, batch=4, seed=seed + 3),
    )
    return scorer


def _pretrain_on_strength_classes(
    backbone: RankBackbone, items: list, seed: int, epochs: int = 12, n_classes: int = 4
) -> None:
    """Proxy pretraining: classify the degradation level into coarse bins.

    Trains the trunk plus a throwaway linear classifier on the tap features;
    the classifier head is dropped afterwards (fine-tuning re-initialises
    the score head anyway).
    """
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    head = torch.nn.Linear(4 * backbone.quality_dim, n_classes)
    opt = torch.optim.Adam(
        list(backbone.parameters()) + list(head.parameters()), lr=3e-4
    )
    xs = torch.cat([image_to_tensor(normalize(img)) for img, _ in items])
    labels = torch.tensor(
        [min(n_classes - 1, int(s * n_classes)) for _, s in items]
    )
    backbone.train()
    batch = 8
    for _ in range(epochs):
        order = rng.permutation(len(items))
        for start in range(0, len(order), batch):
            sel = torch.as_tensor(order[start : start + batch], dtype=torch.long)
            _, taps = backbone(xs[sel])
            qs = []
            for tap, th, fc in zip(taps, backbone.tap_heads, backbone.tap_fcs):
                qs.append(fc(th(tap).mean(dim=(2, 3))))
            logits = head(torch.cat(qs, dim=1))
            loss = torch.nn.functional.cross_entropy(logits, labels[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
    backbone.eval()


def _eval_enhancer_on_real(
    report: MetricReport, enhancer, intra, scorer, threshold, real_eval
) -> None:
    """Add one ruiqa row per held-out real image (routed when intra given)."""
    for ex in real_eval:
        img = denormalize(ex.x)
        if intra is None:
            out = _run_enhancer(enhancer, img)
        else:
            out, _, _ = enhance(img, enhancer, intra, scorer, threshold)
        report.add(ex.image_id, {"ruiqa": predict(scorer, out)})


def run_ablation(
    spec: AblationSpec,
    data: DeskData,
    config: TrainConfig,
    scorer: Scorer | None = None,
    width: int = 12,
    lam: float = 0.5,
) -> MetricReport:
    """Train and evaluate one study variant at desk scale.

    Enhancement variants report a quality score per held-out real image
    (BL+ITE also reports PSNR/SSIM per synthetic test pair); IQA variants
    report predicted vs. panel score per held-out fixture image. Identical
    seeds give identical reports.
    """
    report = MetricReport()
    report.meta = {"variant": spec.variant, "seed": config.seed}

    if spec.is_iqa:
        trained = _train_scorer_variant(spec.variant, data, seed=config.seed)
        preds, trues = [], []
        for it in data.mos_eval:
            p = predict(trained, it.image)
            preds.append(p)
            trues.append(it.mos)
            report.add(it.image_id, {"score_pred": p, "score_true": it.mos, "abs_err": abs(p - it.mos)})
        report.meta["srocc"] = srocc(preds, trues)
        report.meta["plcc"] = plcc(preds, trues)
        return report

    if scorer is None:
        raise ValueError(f"variant {spec.variant} requires a trained scorer")

    if spec.variant == "BL":
        torch.manual_seed(config.seed)
        enhancer = Enhancer(width)
        features = FeatureExtractor(width)
        train_baseline(list(data.synth_train), enhancer, features, config=config)
        _eval_enhancer_on_real(report, enhancer, None, scorer, 0.0, data.real_eval)
        return report

    nets = build_inter_nets(width, seed=config.seed)
    train_inter(list(data.synth_train), list(data.real_train), nets, config=config)

    if spec.variant == "BL+ITE":
        _eval_enhancer_on_real(report, nets.enhancer, None, scorer, 0.0, data.real_eval)
        # the inter-trained enhancer is also graded on paired synthetic data
        for i, ex in enumerate(data.synth_test):
            out = _run_enhancer(nets.enhancer, denormalize(ex.x))
            clean = denormalize(ex.y)
            report.add(
                f"synth{i:03d}",
                {"psnr": psnr(clean, out), "ssim": ssim(clean, out)},
            )
        return report

    # BL+ITE+ITA
    split = split_easy_hard(list(data.real_train), scorer, nets.enhancer, lam=lam)
    intra_nets = build_intra_nets(nets.enhancer, nets.features, seed=config.seed)
    train_intra(split, intra_nets, config=config)
    report.meta["threshold"] = split.threshold
    report.meta["lambda"] = split.lam
    _eval_enhancer_on_real(
        report, nets.enhancer, intra_nets.enhancer, scorer, split.threshold, data.real_eval
    )
    return report
