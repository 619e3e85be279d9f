"""Two-phase adversarial domain adaptation for underwater enhancement.

Phase 1 (inter-domain) trains a translator and an enhancer against two
Wasserstein critics so that translated synthetic images — and the enhancer
features they induce — become indistinguishable from real water. Batches are
tone-matched: each step draws synthetic and real images of the same color
tone, so the critics grade realism rather than tone frequency differences.

Phase 2 (intra-domain) re-runs the same machinery inside the real domain.
A quality scorer splits the real set into an easy part (whose enhanced
results become pseudo labels) and a hard part; a fresh translator maps easy
inputs toward hard-looking ones, and a warm-started enhancer learns to
enhance them against the pseudo labels.

Both phases share one training engine; they differ only in where the pools
come from and which weight set combines the loss terms.
"""

import copy
import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .imagecore import NormImage, denormalize
from .losses import (
    DEFAULT_WEIGHTS,
    LossWeights,
    content_loss,
    critic_loss,
    generator_adv_loss,
    task_loss,
    total_inter,
    total_intra,
)
from .networks import (
    Enhancer,
    FeatureExtractor,
    PatchCritic,
    Translator,
    image_to_tensor,
    tensor_to_image,
)
from .ruiqa import Scorer, predict
from .synthdata import RealExample


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule shared by both phases.

    Defaults are the full-scale schedule of record; desk() returns the
    reduced schedule used for tests and demos. The learning rate holds for
    `epochs` epochs and then decays linearly over `decay_epochs` more.
    """

    lr_gen: float = 1e-4
    lr_critic: float = 2e-4
    betas: tuple = (0.5, 0.999)
    batch: int = 4
    epochs: int = 200
    decay_epochs: int = 100
    n_critic: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lr_gen < 0 or self.lr_critic < 0:
            raise ValueError("learning rates must be non-negative")
        if not (len(self.betas) == 2 and all(0 <= b < 1 for b in self.betas)):
            raise ValueError("betas must be two values in [0, 1)")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epochs < 0 or self.decay_epochs < 0:
            raise ValueError("epochs and decay_epochs must be >= 0")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(epochs=20, decay_epochs=10)
        base.update(overrides)
        return cls(**base)

    @property
    def total_epochs(self) -> int:
        return self.epochs + self.decay_epochs


def lr_factor(epoch: int, epochs: int, decay_epochs: int) -> float:
    """Learning-rate multiplier: flat 1.0, then linear decay to 0.

    The factor is exactly 1.0 through epoch epochs-1, drops to
    decay_epochs/(decay_epochs+1) at epoch `epochs`, and reaches exactly
    0.0 at epoch epochs+decay_epochs.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < epochs:
        return 1.0
    return max(0.0, (epochs + decay_epochs - epoch) / (decay_epochs + 1))


@dataclass
class PhaseNets:
    """The trainable cast of one phase plus the frozen feature stack."""

    translator: Translator
    enhancer: Enhancer
    critic_img: PatchCritic
    critic_feat: PatchCritic
    features: FeatureExtractor

    def generator_modules(self):
        return [self.translator, self.enhancer]

    def state_dicts(self) -> dict:
        return {
            "translator": self.translator.state_dict(),
            "enhancer": self.enhancer.state_dict(),
            "critic_img": self.critic_img.state_dict(),
            "critic_feat": self.critic_feat.state_dict(),
        }


def build_inter_nets(
    width: int = 16, seed: int = 0, feature_seed: int = 1234
) -> PhaseNets:
    """Construct phase-1 networks with a reproducible initialization."""
    torch.manual_seed(seed)
    enhancer = Enhancer(width)
    return PhaseNets(
        translator=Translator(width),
        enhancer=enhancer,
        critic_img=PatchCritic(3, width),
        # The bottleneck map is already 4x downsampled, so the feature
        # critic gets one less strided layer than the image critic.
        critic_feat=PatchCritic(enhancer.feature_channels, width, n_layers=3),
        features=FeatureExtractor(width, seed=feature_seed),
    )


def build_intra_nets(
    inter_enhancer: Enhancer,
    features: FeatureExtractor,
    seed: int = 0,
    translator_init: Translator | None = None,
    critic_img_init: PatchCritic | None = None,
) -> PhaseNets:
    """Construct phase-2 networks; the enhancer warm-starts from phase 1.

    The copy is bitwise: immediately after construction the intra enhancer's
    parameters equal the inter enhancer's exactly. The frozen feature stack
    is shared. Translator and critics start fresh by default; passing
    translator_init / critic_img_init warm-starts them from copies instead.
    At short schedules a fresh translator never learns the easy-to-hard
    style map, so the phase-1 translator (which already renders water-style
    degradations) is the useful starting point.
    """
    torch.manual_seed(seed)
    width = inter_enhancer.width
    return PhaseNets(
        translator=(
            copy.deepcopy(translator_init)
            if translator_init is not None
            else Translator(width)
        ),
        enhancer=copy.deepcopy(inter_enhancer),
        critic_img=(
            copy.deepcopy(critic_img_init)
            if critic_img_init is not None
            else PatchCritic(3, width)
        ),
        critic_feat=PatchCritic(inter_enhancer.feature_channels, width, n_layers=3),
        features=features,
    )


def _stack(images: list) -> torch.Tensor:
    return torch.cat([image_to_tensor(img) for img in images])


_LOG_KEYS = ("critic_img", "critic_feat", "adv_img", "content", "task", "adv_feat", "total")


def _train_phase(
    src_pool: list,
    tgt_pool: list,
    groups: dict,
    nets: PhaseNets,
    weights: LossWeights,
    config: TrainConfig,
    total_fn,
    checkpoint_cb=None,
) -> list:
    """Shared adversarial training engine for both phases.

    src_pool holds (input, target) image pairs, tgt_pool unpaired target-
    domain images. groups maps a batching key to (src indices, tgt indices);
    each step samples one group and draws both batch halves from it. Per
    step the two critics update first (n_critic times), then translator and
    enhancer update jointly on the combined objective. Returns one log dict
    per epoch with the mean of every loss component.
    """
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    gp_gen = torch.Generator().manual_seed(config.seed + 1)

    gen_params = [p for m in nets.generator_modules() for p in m.parameters()]
    opt_gen = torch.optim.Adam(gen_params, lr=config.lr_gen, betas=config.betas)
    opt_ci = torch.optim.Adam(
        nets.critic_img.parameters(), lr=config.lr_critic, betas=config.betas
    )
    opt_cf = torch.optim.Adam(
        nets.critic_feat.parameters(), lr=config.lr_critic, betas=config.betas
    )

    keys = sorted(groups.keys(), key=str)
    group_sizes = np.array([len(groups[k][0]) for k in keys], dtype=float)
    probs = group_sizes / group_sizes.sum()
    n_src = int(group_sizes.sum())
    steps_per_epoch = max(1, math.ceil(n_src / config.batch))

    for m in (nets.translator, nets.enhancer, nets.critic_img, nets.critic_feat):
        m.train()

    history = []
    for epoch in range(config.total_epochs):
        f = lr_factor(epoch, config.epochs, config.decay_epochs)
        for g in opt_gen.param_groups:
            g["lr"] = config.lr_gen * f
        for opt in (opt_ci, opt_cf):
            for g in opt.param_groups:
                g["lr"] = config.lr_critic * f

        sums = dict.fromkeys(_LOG_KEYS, 0.0)
        for _ in range(steps_per_epoch):
            key = keys[int(rng.choice(len(keys), p=probs))]
            src_idx, tgt_idx = groups[key]
            bs = rng.integers(0, len(src_idx), size=config.batch)
            bt = rng.integers(0, len(tgt_idx), size=config.batch)
            xs = _stack([src_pool[src_idx[int(i)]][0] for i in bs])
            ys = _stack([src_pool[src_idx[int(i)]][1] for i in bs])
            xr = _stack([tgt_pool[tgt_idx[int(i)]] for i in bt])

            for _ in range(config.n_critic):
                with torch.no_grad():
                    x_t = nets.translator(xs)
                    feat_t = nets.enhancer(x_t)[1]
                    feat_r = nets.enhancer(xr)[1]
                d_img = critic_loss(
                    nets.critic_img, x_t, xr, weights.lambda_img, generator=gp_gen
                )
                if not torch.isfinite(d_img):
                    raise RuntimeError(f"critic_img loss diverged at epoch {epoch}")
                opt_ci.zero_grad()
                d_img.backward()
                opt_ci.step()

                d_feat = critic_loss(
                    nets.critic_feat, feat_t, feat_r, weights.lambda_feat, generator=gp_gen
                )
                if not torch.isfinite(d_feat):
                    raise RuntimeError(f"critic_feat loss diverged at epoch {epoch}")
                opt_cf.zero_grad()
                d_feat.backward()
                opt_cf.step()

            x_t = nets.translator(xs)
            y_t, feat_t = nets.enhancer(x_t)
            adv_img = generator_adv_loss(nets.critic_img, x_t)
            adv_feat = generator_adv_loss(nets.critic_feat, feat_t)
            cont = content_loss(nets.features(xs), nets.features(x_t), weights.tap_weights)
            task = task_loss(
                ys, y_t, nets.features, weights.task_l1, weights.task_perceptual
            )
            total = total_fn(adv_img, cont, task, adv_feat, weights)
            opt_gen.zero_grad()
            total.backward()
            opt_gen.step()

            for name, v in (
                ("critic_img", d_img),
                ("critic_feat", d_feat),
                ("adv_img", adv_img),
                ("content", cont),
                ("task", task),
                ("adv_feat", adv_feat),
                ("total", total),
            ):
                sums[name] += float(v.detach())

        log = {k: sums[k] / steps_per_epoch for k in _LOG_KEYS}
        log["epoch"] = epoch
        log["lr_factor"] = f
        history.append(log)
        if checkpoint_cb is not None:
            checkpoint_cb(epoch, nets)
    return history


def train_inter(
    synth: list,
    real: list,
    nets: PhaseNets,
    weights: LossWeights = DEFAULT_WEIGHTS,
    config: TrainConfig = TrainConfig.desk(),
    checkpoint_cb=None,
) -> list:
    """Phase-1 training on tone-matched synthetic/real batches.

    Tones present on only one side cannot be matched; they are excluded
    with a warning. At least one tone must survive on both sides.
    """
    if not synth or not real:
        raise ValueError("both the synthetic and the real pool must be non-empty")

    src_by_tone = defaultdict(list)
    for i, ex in enumerate(synth):
        src_by_tone[ex.tone].append(i)
    tgt_by_tone = defaultdict(list)
    for i, ex in enumerate(real):
        tgt_by_tone[ex.tone].append(i)

    usable = sorted(set(src_by_tone) & set(tgt_by_tone), key=lambda t: t.value)
    skipped = sorted(
        set(src_by_tone) ^ set(tgt_by_tone), key=lambda t: t.value
    )
    if skipped:
        warnings.warn(
            "tones present on one side only are excluded from tone-matched "
            f"batching: {[t.value for t in skipped]}"
        )
    if not usable:
        raise ValueError("no tone occurs in both pools; tone-matched batching is impossible")

    src_pool = [(ex.x, ex.y) for ex in synth]
    tgt_pool = [ex.x for ex in real]
    groups = {t: (src_by_tone[t], tgt_by_tone[t]) for t in usable}
    return _train_phase(
        src_pool, tgt_pool, groups, nets, weights, config, total_inter, checkpoint_cb
    )


def train_baseline(
    synth: list,
    enhancer: Enhancer,
    features: FeatureExtractor,
    weights: LossWeights = DEFAULT_WEIGHTS,
    config: TrainConfig = TrainConfig.desk(),
    checkpoint_cb=None,
) -> list:
    """Supervised enhancer training on synthetic pairs alone.

    No translator, no critics, no domain alignment: the enhancer fits the
    task loss directly. This is the no-adaptation reference point that the
    two adaptation phases are measured against. Returns per-epoch logs with
    the mean task loss.
    """
    if not synth:
        raise ValueError("synthetic pool is empty")
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    opt = torch.optim.Adam(enhancer.parameters(), lr=config.lr_gen, betas=config.betas)
    steps_per_epoch = max(1, math.ceil(len(synth) / config.batch))

    enhancer.train()
    history = []
    for epoch in range(config.total_epochs):
        f = lr_factor(epoch, config.epochs, config.decay_epochs)
        for g in opt.param_groups:
            g["lr"] = config.lr_gen * f
        total = 0.0
        for _ in range(steps_per_epoch):
            idx = rng.integers(0, len(synth), size=config.batch)
            xs = _stack([synth[int(i)].x for i in idx])
            ys = _stack([synth[int(i)].y for i in idx])
            y_hat, _ = enhancer(xs)
            loss = task_loss(ys, y_hat, features, weights.task_l1, weights.task_perceptual)
            if not torch.isfinite(loss):
                raise RuntimeError(f"task loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
        history.append(
            {"epoch": epoch, "lr_factor": f, "task": total / steps_per_epoch}
        )
        if checkpoint_cb is not None:
            checkpoint_cb(epoch, enhancer)
    return history


@dataclass(frozen=True)
class EasyExample:
    """A confidently enhanced real image; its result serves as pseudo label."""

    example: RealExample
    pseudo: NormImage
    score: float


@dataclass(frozen=True)
class HardExample:
    example: RealExample
    score: float


@dataclass(frozen=True)
class SplitResult:
    """Quality-ranked partition of a real set.

    easy holds the ceil(lam * N) best-scoring examples with their enhanced
    results; hard holds the rest. threshold is the score of the worst easy
    example, so "score >= threshold" reproduces the easy side exactly.
    """

    easy: tuple
    hard: tuple
    threshold: float
    lam: float

    def save_manifest(self, path) -> None:
        doc = {
            "lambda": self.lam,
            "threshold": self.threshold,
            "easy": [{"image_id": e.example.image_id, "score": e.score} for e in self.easy],
            "hard": [{"image_id": h.example.image_id, "score": h.score} for h in self.hard],
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load_manifest(path) -> dict:
        doc = json.loads(Path(path).read_text())
        for key in ("lambda", "threshold", "easy", "hard"):
            if key not in doc:
                raise ValueError(f"split manifest is missing {key!r}")
        return doc


def easy_count(lam: float, n: int) -> int:
    """ceil(lam * n), guarded against float drift in the product.

    round(., 9) first so that products like 0.3 * 10 = 2.9999999999999996
    count as exactly 3 before the ceiling is taken.
    """
    return math.ceil(round(lam * n, 9))


def split_easy_hard(
    real: list, scorer: Scorer, enhancer: Enhancer, lam: float
) -> SplitResult:
    """Rank enhanced real images by quality score and split at ceil(lam*N).

    Scores are computed on the phase-1 enhancer's outputs. Ranking is
    descending with a stable tie-break on input order, so equal scores
    never reshuffle between runs.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    if not real:
        raise ValueError("real pool is empty")

    enhancer.eval()
    pseudo, scores = [], []
    with torch.no_grad():
        for ex in real:
            y = enhancer(image_to_tensor(ex.x))[0]
            img = tensor_to_image(y)
            pseudo.append(img)
            scores.append(predict(scorer, denormalize(img)))
    scores = np.array(scores)

    order = np.argsort(-scores, kind="stable")
    k = easy_count(lam, len(real))
    easy = tuple(
        EasyExample(real[int(i)], pseudo[int(i)], float(scores[int(i)]))
        for i in order[:k]
    )
    hard = tuple(
        HardExample(real[int(i)], float(scores[int(i)])) for i in order[k:]
    )
    return SplitResult(easy=easy, hard=hard, threshold=easy[-1].score, lam=lam)


def train_intra(
    split: SplitResult,
    nets: PhaseNets,
    weights: LossWeights = DEFAULT_WEIGHTS,
    config: TrainConfig = TrainConfig.desk(),
    checkpoint_cb=None,
) -> list:
    """Phase-2 training: translate easy inputs toward hard-looking ones.

    Easy examples supply (input, pseudo label) pairs; hard examples are the
    unpaired target pool. Both sides must be non-empty, otherwise the
    offending lambda is named in the error.
    """
    if not split.easy:
        raise ValueError(f"lambda={split.lam} produced an empty easy side")
    if not split.hard:
        raise ValueError(f"lambda={split.lam} produced an empty hard side")

    src_pool = [(e.example.x, e.pseudo) for e in split.easy]
    tgt_pool = [h.example.x for h in split.hard]
    groups = {"all": (list(range(len(src_pool))), list(range(len(tgt_pool))))}
    return _train_phase(
        src_pool, tgt_pool, groups, nets, weights, config, total_intra, checkpoint_cb
    )


def sweep_lambda(
    lams: list,
    real_train: list,
    real_eval: list,
    scorer: Scorer,
    inter: PhaseNets,
    weights: LossWeights = DEFAULT_WEIGHTS,
    config: TrainConfig = TrainConfig.desk(),
) -> list:
    """Re-split, re-train phase 2 and evaluate for each lambda.

    Returns one row per lambda: the split sizes and the mean quality score
    of routed outputs on the held-out real set. A failure in one cell is
    recorded in that row and the sweep continues.
    """
    if not lams:
        raise ValueError("no lambda values given")
    from .pipeline import enhance  # deferred: pipeline builds on this module

    rows = []
    for lam in lams:
        try:
            split = split_easy_hard(real_train, scorer, inter.enhancer, lam)
            nets = build_intra_nets(inter.enhancer, inter.features, seed=config.seed)
            train_intra(split, nets, weights, config)
            vals = []
            for ex in real_eval:
                out, _, _ = enhance(
                    denormalize(ex.x), inter.enhancer, nets.enhancer, scorer, split.threshold
                )
                vals.append(predict(scorer, out))
            rows.append(
                {
                    "lambda": lam,
                    "easy": len(split.easy),
                    "hard": len(split.hard),
                    "threshold": split.threshold,
                    "mean_score": float(np.mean(vals)),
                    "status": "ok",
                }
            )
        except (ValueError, RuntimeError) as e:
            rows.append({"lambda": lam, "status": "error", "message": str(e)})
    return rows
