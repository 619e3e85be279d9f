"""Rank-supervised image quality scoring.

Training runs in two stages. A Siamese stage first teaches the backbone to
*order* images: pairs with distinct subjective scores are sampled and the
network is penalised whenever the better image does not out-score the worse
one by a margin. A regression stage then re-initialises the scalar head and
fits the absolute score scale with an L1 loss. The point of the detour
through ranking is data efficiency: pair order is a much denser supervision
signal than a handful of absolute scores, so the backbone arrives at the
regression stage already knowing what degradation looks like.

Scores live on the same [1, 100] scale as aggregated subjective scores from
``metrics.aggregate_mos``; ``predict`` clamps into that range.
"""

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch

from .imagecore import AUGMENT_OPS, UnitImage, augment, denormalize, normalize
from .networks import RankBackbone, image_to_tensor

MOS_MIN = 1.0
MOS_MAX = 100.0


@dataclass(frozen=True)
class ScoredImage:
    """An image with its aggregated subjective quality score."""

    image: UnitImage
    mos: float
    image_id: str

    def __post_init__(self):
        if not math.isfinite(self.mos):
            raise ValueError("mos must be finite")
        if not MOS_MIN <= self.mos <= MOS_MAX:
            raise ValueError(f"mos must lie in [{MOS_MIN}, {MOS_MAX}]")


@dataclass(frozen=True)
class RankPair:
    """An ordered pair of scored images; label says which one is better.

    label is +1 when a outranks b and -1 when b outranks a, so the label is
    always re-derivable from the two stored scores. Ties are not allowed.
    """

    a: ScoredImage
    b: ScoredImage
    label: int

    def __post_init__(self):
        if self.a.image_id == self.b.image_id:
            raise ValueError("a rank pair must use two distinct images")
        if self.a.mos == self.b.mos:
            raise ValueError("a rank pair needs strictly ordered scores")
        want = 1 if self.a.mos > self.b.mos else -1
        if self.label != want:
            raise ValueError("label contradicts the stored scores")


def make_rank_pairs(items: list, per_image_pairs: int, seed: int) -> list:
    """Sample ranked pairs from scored images.

    Each image is paired with up to per_image_pairs partners whose score
    differs from its own; equal-score draws are resampled rather than kept,
    so every emitted pair carries a usable order label. Output length is
    therefore at most len(items) * per_image_pairs.
    """
    if len(items) < 2:
        raise ValueError("need at least two scored images to build pairs")
    if per_image_pairs < 1:
        raise ValueError("per_image_pairs must be >= 1")
    scores = {it.mos for it in items}
    if len(scores) < 2:
        raise ValueError("all images share one score; no pairs are rankable")

    rng = np.random.default_rng(seed)
    pairs = []
    for i, a in enumerate(items):
        partners = [j for j in range(len(items)) if items[j].mos != a.mos]
        if not partners:
            continue  # this image ties with every partner; nothing to rank
        take = min(per_image_pairs, len(partners))
        picked = rng.choice(len(partners), size=take, replace=False)
        for p in picked:
            b = items[partners[int(p)]]
            pairs.append(RankPair(a=a, b=b, label=1 if a.mos > b.mos else -1))
    return pairs


def margin_rank_loss(score_a, score_b, label, margin: float = 1.0):
    """Hinge on the score gap: max(0, -label*(score_a - score_b) + margin).

    Accepts scalars or batched tensors; returns the mean over elements.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    gap = score_a - score_b
    if not torch.is_tensor(gap):
        gap = torch.as_tensor(gap, dtype=torch.float64)
    label = torch.as_tensor(label, dtype=gap.dtype, device=gap.device)
    return torch.clamp(-label * gap + margin, min=0.0).mean()


@dataclass(frozen=True)
class RankerConfig:
    """Siamese pretraining schedule.

    augment applies a random flip/rotation per pair (same op to both
    members) — degradation level is invariant to the dihedral group while
    scene layout is not, so augmentation starves pure memorization.
    """

    epochs: int = 20
    batch: int = 8
    lr: float = 1e-4
    margin: float = 1.0
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ValueError("epochs must be >= 0 and batch >= 1")
        if self.lr < 0 or self.margin < 0:
            raise ValueError("lr and margin must be >= 0")


@dataclass(frozen=True)
class ScorerConfig:
    """Regression fine-tuning schedule.

    The default learning rate is set for the [1, 100] target scale; Adam
    moves each parameter by about lr per step, and desk-scale budgets only
    allow a few hundred steps.
    """

    epochs: int = 20
    batch: int = 8
    lr: float = 2e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ValueError("epochs must be >= 0 and batch >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


def _pair_batch(pairs: list, ops: list | None = None) -> tuple:
    """Stack RankPairs into (xa, xb, labels); ops augments both pair sides."""
    if ops is None:
        ops = ["none"] * len(pairs)
    xa = torch.cat(
        [
            image_to_tensor(augment(normalize(p.a.image), op))
            for p, op in zip(pairs, ops)
        ]
    )
    xb = torch.cat(
        [
            image_to_tensor(augment(normalize(p.b.image), op))
            for p, op in zip(pairs, ops)
        ]
    )
    labels = torch.tensor([float(p.label) for p in pairs])
    return xa, xb, labels


def train_ranker(
    backbone: RankBackbone, pairs: list, config: RankerConfig
) -> tuple[RankBackbone, list]:
    """Siamese margin-ranking pretraining over sampled pairs.

    Both pair members pass through the *same* backbone (one forward on the
    concatenated batch), so the two branches share every parameter by
    construction. Epochs visit each pair exactly once in a seeded shuffle.
    A non-finite loss aborts training: parameters are restored to the end of
    the last finite epoch and a RuntimeError is raised.

    Returns the backbone (trained in place) and per-epoch mean losses.
    """
    if not pairs and config.epochs > 0:
        raise ValueError("no pairs to train on")
    history = []
    if config.epochs == 0:
        return backbone, history

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    opt = torch.optim.Adam(backbone.parameters(), lr=config.lr)
    last_good = copy.deepcopy(backbone.state_dict())

    backbone.train()
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        total, steps = 0.0, 0
        for start in range(0, len(order), config.batch):
            chunk = [pairs[int(i)] for i in order[start : start + config.batch]]
            ops = None
            if config.augment:
                picks = rng.integers(0, len(AUGMENT_OPS), size=len(chunk))
                ops = [AUGMENT_OPS[int(k)] for k in picks]
            xa, xb, labels = _pair_batch(chunk, ops)
            n = xa.shape[0]
            scores, _ = backbone(torch.cat([xa, xb]))
            loss = margin_rank_loss(scores[:n], scores[n:], labels, config.margin)
            if not torch.isfinite(loss):
                backbone.load_state_dict(last_good)
                raise RuntimeError(
                    f"ranking loss diverged at epoch {epoch}; "
                    "parameters restored to the last finite epoch"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            steps += 1
        history.append(total / steps)
        last_good = copy.deepcopy(backbone.state_dict())
    backbone.eval()
    return backbone, history


def pairwise_accuracy(backbone: RankBackbone, pairs: list) -> float:
    """Fraction of pairs whose predicted score order matches the label."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    backbone.eval()
    hits = 0
    with torch.no_grad():
        for p in pairs:
            xa, xb, _ = _pair_batch([p])
            scores, _ = backbone(torch.cat([xa, xb]))
            gap = float(scores[0] - scores[1])
            if gap > 0 and p.label == 1:
                hits += 1
            elif gap < 0 and p.label == -1:
                hits += 1
    return hits / len(pairs)


class Scorer:
    """Quality scorer: a RankBackbone regressed onto the [1, 100] scale."""

    def __init__(self, backbone: RankBackbone):
        self.backbone = backbone
        self.trained = False

    def state_dict(self):
        return self.backbone.state_dict()

    def load_state_dict(self, state):
        self.backbone.load_state_dict(state)
        self.trained = True


def _reset_head(backbone: RankBackbone, seed: int) -> None:
    """Re-initialise the per-tap heads and the regressor, keeping the trunk.

    The ranking stage's head learned a score whose *scale* is arbitrary;
    regression restarts the head so only the trunk's ordering knowledge
    carries over. The regressor bias starts at the middle of the [1, 100]
    target scale — Adam's per-step movement is roughly the learning rate,
    so a zero start would spend the whole budget walking the bias.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in list(backbone.tap_heads) + list(backbone.tap_fcs):
            for p in module.parameters():
                if p.dim() > 1:
                    fan_in = p[0].numel()
                    p.copy_(torch.randn(p.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                else:
                    p.zero_()
        for p in backbone.regressor.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.copy_(torch.randn(p.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
            else:
                p.fill_((MOS_MIN + MOS_MAX) / 2.0)


def finetune_scorer(
    backbone: RankBackbone, items: list, config: ScorerConfig
) -> tuple[Scorer, list]:
    """Fit absolute scores with an L1 loss, starting from a pretrained trunk.

    The scalar head is freshly re-initialised (seeded) before fitting, so
    trunks that differ only in pretraining get identical head starts and the
    comparison between them isolates what pretraining contributed. Training
    targets are raw head outputs against the subjective scores; clamping to
    [1, 100] happens only at prediction time. Divergence aborts and restores
    the last finite epoch, as in train_ranker.

    Returns a Scorer plus per-epoch mean L1.
    """
    if not items and config.epochs > 0:
        raise ValueError("no scored images to train on")
    _reset_head(backbone, config.seed)
    history = []
    scorer = Scorer(backbone)
    if config.epochs == 0:
        scorer.trained = True
        return scorer, history

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    opt = torch.optim.Adam(backbone.parameters(), lr=config.lr)
    last_good = copy.deepcopy(backbone.state_dict())

    backbone.train()
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        total, steps = 0.0, 0
        for start in range(0, len(order), config.batch):
            chunk = [items[int(i)] for i in order[start : start + config.batch]]
            x = torch.cat([image_to_tensor(normalize(it.image)) for it in chunk])
            target = torch.tensor([it.mos for it in chunk])
            scores, _ = backbone(x)
            loss = (scores - target).abs().mean()
            if not torch.isfinite(loss):
                backbone.load_state_dict(last_good)
                raise RuntimeError(
                    f"score regression diverged at epoch {epoch}; "
                    "parameters restored to the last finite epoch"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            steps += 1
        history.append(total / steps)
        last_good = copy.deepcopy(backbone.state_dict())
    backbone.eval()
    scorer.trained = True
    return scorer, history


def predict(scorer: Scorer, img: UnitImage) -> float:
    """Score one image; output is clamped to [1, 100]."""
    if not scorer.trained:
        raise RuntimeError("scorer has not been trained or loaded")
    scorer.backbone.eval()
    with torch.no_grad():
        scores, _ = scorer.backbone(image_to_tensor(normalize(img)))
    return float(min(max(float(scores[0]), MOS_MIN), MOS_MAX))


def predict_batch(scorer: Scorer, imgs: list) -> list:
    """Score several images in one forward; matches repeated predict."""
    if not scorer.trained:
        raise RuntimeError("scorer has not been trained or loaded")
    if not imgs:
        return []
    scorer.backbone.eval()
    x = torch.cat([image_to_tensor(normalize(img)) for img in imgs])
    with torch.no_grad():
        scores, _ = scorer.backbone(x)
    return [float(min(max(float(s), MOS_MIN), MOS_MAX)) for s in scores]


def score_norm_image(scorer: Scorer, img) -> float:
    """Score a [-1, 1] image (model-side convenience wrapper)."""
    return predict(scorer, denormalize(img))
