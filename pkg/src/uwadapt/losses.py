"""Adversarial, content and task objectives for both adaptation phases.

Critic values are per-sample scalars: PatchCritic instances are reduced
through their score() (mean patch map); plain callables returning a (B,)
tensor are accepted anywhere a critic is expected, which keeps the loss
layer testable against analytic stubs.

Reduction convention: every L1-style term is a per-element mean, so all
loss weights are independent of image and feature sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch

from .networks import FEATURE_TAP_WEIGHTS


@dataclass(frozen=True)
class LossWeights:
    """All scalar weights of the two training phases.

    inter_* are the phase-1 combination weights, intra_* the phase-2 ones
    (identical defaults); task_l1/task_perceptual weight the supervised
    task loss; lambda_img/lambda_feat scale the gradient penalties of the
    image- and feature-level critics.
    """

    lambda_img: float = 10.0
    lambda_feat: float = 10.0
    inter_adv_img: float = 1.0
    inter_content: float = 100.0
    inter_task: float = 10.0
    inter_adv_feat: float = 0.0005
    intra_adv_img: float = 1.0
    intra_content: float = 100.0
    intra_task: float = 10.0
    intra_adv_feat: float = 0.0005
    task_l1: float = 0.8
    task_perceptual: float = 0.2
    tap_weights: tuple = FEATURE_TAP_WEIGHTS

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "tap_weights":
                if any(w < 0 for w in v):
                    raise ValueError("tap weights must be non-negative")
            elif v < 0:
                raise ValueError(f"{f.name} must be non-negative, got {v}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["tap_weights"] = list(d["tap_weights"])
        return d

    @staticmethod
    def from_dict(d: dict) -> "LossWeights":
        known = {f.name for f in fields(LossWeights)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown loss weight keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "tap_weights" in kwargs:
            kwargs["tap_weights"] = tuple(kwargs["tap_weights"])
        return LossWeights(**kwargs)


DEFAULT_WEIGHTS = LossWeights()


def _score_fn(critic):
    return critic.score if hasattr(critic, "score") else critic


def gradient_penalty(
    critic,
    fake: torch.Tensor,
    real: torch.Tensor,
    lam: float = 10.0,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Unit-gradient-norm penalty on samples interpolated between batches.

    One epsilon ~ U(0,1) is drawn per sample (injectable via eps for
    deterministic tests): I = eps * real + (1 - eps) * fake. Returns
    lam * mean((||grad_I critic(I)||_2 - 1)^2). A critic that ignores its
    input has zero gradient and is penalized by lam.
    """
    if fake.shape != real.shape:
        raise ValueError(f"batch shapes differ: {tuple(fake.shape)} vs {tuple(real.shape)}")
    if lam < 0:
        raise ValueError("penalty factor must be non-negative")
    b = fake.shape[0]
    if eps is None:
        eps = torch.rand((b,) + (1,) * (fake.dim() - 1), dtype=fake.dtype, generator=generator)
    else:
        eps = eps.to(fake.dtype).reshape((b,) + (1,) * (fake.dim() - 1))

    if not torch.is_grad_enabled():
        raise ValueError("gradient penalty needs grad mode; do not call under no_grad")
    interp = (eps * real.detach() + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = _score_fn(critic)(interp)
    if scores.shape != (b,):
        raise ValueError(f"critic must return one score per sample, got {tuple(scores.shape)}")
    if scores.grad_fn is None:
        # The critic ignored its input; its gradient is identically zero.
        grad = torch.zeros_like(interp)
    else:
        try:
            (grad,) = torch.autograd.grad(
                scores.sum(), interp, create_graph=True, allow_unused=True
            )
        except RuntimeError as e:
            raise ValueError(f"critic is not differentiable w.r.t. its input: {e}") from e
        if grad is None:
            grad = torch.zeros_like(interp)
    norms = grad.flatten(1).norm(2, dim=1)
    return lam * ((norms - 1.0) ** 2).mean()


def critic_loss(
    critic,
    fake: torch.Tensor,
    real: torch.Tensor,
    lam: float = 10.0,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Wasserstein critic objective: E[D(fake)] - E[D(real)] + penalty."""
    fn = _score_fn(critic)
    adv = fn(fake.detach()).mean() - fn(real.detach()).mean()
    return adv + gradient_penalty(critic, fake, real, lam, eps=eps, generator=generator)


def generator_adv_loss(critic, fake: torch.Tensor) -> torch.Tensor:
    """Generator side of the minimax game: -E[D(fake)]."""
    return -_score_fn(critic)(fake).mean()


def content_loss(taps_a, taps_b, weights=FEATURE_TAP_WEIGHTS) -> torch.Tensor:
    """Weighted sum over taps of mean absolute feature differences."""
    if len(taps_a) != len(taps_b):
        raise ValueError(f"tap count mismatch: {len(taps_a)} vs {len(taps_b)}")
    if len(taps_a) != len(weights):
        raise ValueError(f"expected {len(weights)} taps, got {len(taps_a)}")
    total = None
    for w, a, b in zip(weights, taps_a, taps_b):
        term = w * (a - b).abs().mean()
        total = term if total is None else total + term
    return total


def task_loss(
    y: torch.Tensor,
    y_hat: torch.Tensor,
    feature_fn,
    a: float = 0.8,
    b: float = 0.2,
) -> torch.Tensor:
    """Supervised enhancement loss: a * L1 + b * unweighted perceptual L1.

    feature_fn maps an image batch to a list of feature taps; the
    perceptual term sums per-tap mean absolute differences with unit
    weights.
    """
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(y.shape)} vs {tuple(y_hat.shape)}")
    pixel = (y - y_hat).abs().mean()
    taps_y = feature_fn(y)
    taps_hat = feature_fn(y_hat)
    if len(taps_y) != len(taps_hat):
        raise ValueError("feature_fn returned mismatched tap lists")
    perceptual = sum(((ty - th).abs().mean() for ty, th in zip(taps_y, taps_hat)), start=torch.zeros(()))
    return a * pixel + b * perceptual


def _check_finite(name: str, value) -> float:
    v = float(value.detach()) if torch.is_tensor(value) else float(value)
    if not math.isfinite(v):
        raise ValueError(f"loss component {name!r} is not finite: {v}")
    return v


def total_inter(adv_img, content, task, adv_feat, w: LossWeights = DEFAULT_WEIGHTS):
    """Phase-1 combination: l1*adv_img + l2*content + l3*task + l4*adv_feat."""
    for name, v in (
        ("adv_img", adv_img),
        ("content", content),
        ("task", task),
        ("adv_feat", adv_feat),
    ):
        _check_finite(name, v)
    return (
        w.inter_adv_img * adv_img
        + w.inter_content * content
        + w.inter_task * task
        + w.inter_adv_feat * adv_feat
    )


def total_intra(adv_img, content, task, adv_feat, w: LossWeights = DEFAULT_WEIGHTS):
    """Phase-2 combination with the intra weight set."""
    for name, v in (
        ("adv_img", adv_img),
        ("content", content),
        ("task", task),
        ("adv_feat", adv_feat),
    ):
        _check_finite(name, v)
    return (
        w.intra_adv_img * adv_img
        + w.intra_content * content
        + w.intra_task * task
        + w.intra_adv_feat * adv_feat
    )
