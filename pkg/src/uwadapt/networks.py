"""Parametric building blocks: translator, enhancer, critics, extractors.

All modules operate on float32 tensors shaped (B, 3, H, W) with values in
[-1, 1] (image space) or on intermediate feature maps. Desk-scale widths
default to 16-32 channels so CPU training stays in the minutes range.

Shape conventions:

* Translator keeps spatial size (no downsampling anywhere).
* Enhancer is a U-shape with two stride-2 stages; H and W must be
  divisible by 4. Its encoder tap is the bottleneck feature map with
  4 * width channels at (H/4, W/4).
* PatchCritic applies n_layers 4x4 convolutions (the first two at
  stride 2, the rest at stride 1, all padding 1) and emits a 1-channel
  patch score map; no normalization layers (Wasserstein critic). With
  n_layers=4 the receptive field is 34 pixels and a 256 input yields a
  62x62 map; minimum input is 16. With n_layers=3 the receptive field is
  22 and the minimum input is 8.
* FeatureExtractor is frozen at construction from its own fixed seed and
  yields 5 taps at strictly halving resolutions with weights
  (1/32, 1/16, 1/8, 1/4, 1.0).
* RankBackbone has 4 residual stages at strides 2,4,8,16 whose outputs
  are the multi-scale taps; the head maps each tap through 1x1 conv +
  global average pooling + a fully connected layer, concatenates the four
  quality vectors and regresses one scalar score.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .imagecore import NormImage

FEATURE_TAP_WEIGHTS = (1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0)


def image_to_tensor(img: NormImage) -> torch.Tensor:
    """NormImage -> (1, 3, H, W) float32 tensor."""
    arr = np.transpose(img.pixels, (2, 0, 1)).astype(np.float32)
    return torch.from_numpy(arr).unsqueeze(0)


def tensor_to_image(t: torch.Tensor) -> NormImage:
    """(1, 3, H, W) or (3, H, W) tensor -> NormImage, clamped to [-1, 1]."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError(f"expected batch of 1, got {t.shape[0]}")
        t = t[0]
    arr = t.detach().cpu().clamp(-1.0, 1.0).numpy().astype(np.float64)
    return NormImage(np.transpose(arr, (1, 2, 0)))


def _check_input(x: torch.Tensor, min_side: int, divisor: int = 1) -> None:
    if x.dim() != 4:
        raise ValueError(f"expected (B, C, H, W) input, got {tuple(x.shape)}")
    h, w = x.shape[2], x.shape[3]
    if h < min_side or w < min_side:
        raise ValueError(f"input must be at least {min_side} pixels, got {h}x{w}")
    if h % divisor or w % divisor:
        raise ValueError(f"input sides must be divisible by {divisor}, got {h}x{w}")


class _DenseBlock(nn.Module):
    """Residual dense block: densely connected 3x3 convs + 1x1 fusion."""

    def __init__(self, channels: int, growth: int | None = None, layers: int = 3):
        super().__init__()
        growth = growth or max(channels // 2, 4)
        self.convs = nn.ModuleList()
        c = channels
        for _ in range(layers):
            self.convs.append(nn.Conv2d(c, growth, 3, padding=1))
            c += growth
        self.fuse = nn.Conv2d(c, channels, 1)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for conv in self.convs:
            feats.append(self.act(conv(torch.cat(feats, dim=1))))
        return x + self.fuse(torch.cat(feats, dim=1))


class Translator(nn.Module):
    """Style translator: conv+IN+ReLU stem, 3 dense blocks, conv+Tanh fusion.

    Keeps spatial size and bounds outputs to [-1, 1].
    """

    def __init__(self, width: int = 16):
        super().__init__()
        self.width = width
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1),
            nn.InstanceNorm2d(width, affine=True),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            _DenseBlock(width), _DenseBlock(width), _DenseBlock(width)
        )
        self.fusion = nn.Sequential(nn.Conv2d(width, 3, 3, padding=1), nn.Tanh())

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_input(x, min_side=8)
        return self.fusion(self.blocks(self.stem(x)))


class Enhancer(nn.Module):
    """U-shaped enhancer built from dense blocks, exposing its encoder tap.

    forward returns (output, bottleneck_features); the bottleneck is the
    deepest encoder feature map, used for feature-level alignment.
    """

    def __init__(self, width: int = 16):
        super().__init__()
        self.width = width
        w = width
        self.stem = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.InstanceNorm2d(w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.enc1 = _DenseBlock(w)
        self.down1 = nn.Sequential(
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.enc2 = _DenseBlock(2 * w)
        self.down2 = nn.Sequential(
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.bottleneck = _DenseBlock(4 * w)
        self.up1 = nn.Sequential(
            nn.ConvTranspose2d(4 * w, 2 * w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.fuse1 = nn.Conv2d(4 * w, 2 * w, 1)
        self.dec1 = _DenseBlock(2 * w)
        self.up2 = nn.Sequential(
            nn.ConvTranspose2d(2 * w, w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.fuse2 = nn.Conv2d(2 * w, w, 1)
        self.dec2 = _DenseBlock(w)
        self.out = nn.Sequential(nn.Conv2d(w, 3, 3, padding=1), nn.Tanh())

    @property
    def feature_channels(self) -> int:
        return 4 * self.width

    def forward(self, x: torch.Tensor):
        _check_input(x, min_side=8, divisor=4)
        e1 = self.enc1(self.stem(x))
        e2 = self.enc2(self.down1(e1))
        feat = self.bottleneck(self.down2(e2))
        d1 = self.dec1(self.fuse1(torch.cat([self.up1(feat), e2], dim=1)))
        d2 = self.dec2(self.fuse2(torch.cat([self.up2(d1), e1], dim=1)))
        return self.out(d2), feat


class PatchCritic(nn.Module):
    """Wasserstein patch critic: strided 4x4 convs, no normalization.

    Emits an unbounded (B, 1, h', w') score map. score() reduces the map
    to one scalar per sample by averaging, which is the value the
    adversarial losses consume.
    """

    def __init__(self, in_channels: int = 3, width: int = 16, n_layers: int = 4):
        super().__init__()
        if n_layers < 2:
            raise ValueError("critic needs at least 2 layers")
        self.in_channels = in_channels
        self.width = width
        self.n_layers = n_layers
        layers = []
        c = in_channels
        w = width
        for i in range(n_layers - 1):
            stride = 2 if i < 2 else 1
            layers += [nn.Conv2d(c, w, 4, stride=stride, padding=1), nn.LeakyReLU(0.2, inplace=True)]
            c = w
            w = min(w * 2, 8 * width)
        layers.append(nn.Conv2d(c, 1, 4, stride=1, padding=1))
        self.net = nn.Sequential(*layers)
        # Two stride-2 layers then k4p1s1 convs: each stride-1 layer
        # shrinks by 1, so the smallest workable input is 4 * (n_layers - 2).
        self.min_input = max(8, 4 * (n_layers - 2) + 4)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"critic expects (B, {self.in_channels}, H, W), got {tuple(x.shape)}"
            )
        if x.shape[2] < self.min_input or x.shape[3] < self.min_input:
            raise ValueError(
                f"critic input must be at least {self.min_input}, got "
                f"{x.shape[2]}x{x.shape[3]}"
            )
        return self.net(x)

    def score(self, x: torch.Tensor) -> torch.Tensor:
        """Per-sample scalar critic value: mean over the patch map."""
        return self.forward(x).mean(dim=(1, 2, 3))


class FeatureExtractor(nn.Module):
    """Frozen multi-scale feature stack with 5 taps at halving resolutions.

    Plays the role of a pretrained perceptual network: parameters are
    drawn once from a fixed seed, frozen, and never trained. Externally
    trained weights can be loaded with load_weights(path) before freezing
    semantics matter; the training loops only require frozen taps.
    """

    def __init__(self, width: int = 16, seed: int = 1234):
        super().__init__()
        self.width = width
        self.init_seed = seed
        self.tap_weights = FEATURE_TAP_WEIGHTS
        widths = [width, width, 2 * width, 2 * width, 4 * width]
        self.stages = nn.ModuleList()
        c = 3
        for k, w in enumerate(widths):
            ops = []
            if k > 0:
                ops.append(nn.AvgPool2d(2))
            ops += [nn.Conv2d(c, w, 3, padding=1), nn.ReLU(inplace=True)]
            self.stages.append(nn.Sequential(*ops))
            c = w
        gen = torch.Generator().manual_seed(seed)
        for p in self.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.data = torch.randn(p.shape, generator=gen) * (2.0 / fan_in) ** 0.5
            else:
                p.data.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def load_weights(self, path) -> None:
        state = torch.load(path, map_location="cpu", weights_only=True)
        self.load_state_dict(state)
        for p in self.parameters():
            p.requires_grad_(False)

    def train(self, mode: bool = True):
        # Permanently frozen; ignore requests to enter training mode.
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list:
        _check_input(x, min_side=8)
        taps = []
        h = x
        for stage in self.stages:
            h = stage(h)
            taps.append(h)
        return taps


class _ResBlock(nn.Module):
    # Batch norm, not instance norm: per-image normalization would erase the
    # global color and contrast statistics that quality scoring reads.
    def __init__(self, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1),
            nn.BatchNorm2d(c_out),
        )
        if stride != 1 or c_in != c_out:
            self.skip = nn.Conv2d(c_in, c_out, 1, stride=stride)
        else:
            self.skip = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.body(x) + self.skip(x))


class RankBackbone(nn.Module):
    """Residual backbone with 4 stage taps and a multi-scale score head.

    Each stage halves resolution; the head projects every tap through a
    1x1 conv, global average pooling and a fully connected layer, then
    regresses the concatenated quality vectors to a single scalar.
    forward returns (scores, taps) with scores shaped (B,).
    """

    def __init__(self, width: int = 16, quality_dim: int = 8):
        super().__init__()
        self.width = width
        self.quality_dim = quality_dim
        w = width
        self.stem = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
        )
        stage_widths = [w, 2 * w, 4 * w, 8 * w]
        self.stages = nn.ModuleList()
        c = w
        for sw in stage_widths:
            self.stages.append(_ResBlock(c, sw, stride=2))
            c = sw
        self.tap_heads = nn.ModuleList(
            [nn.Conv2d(sw, quality_dim, 1) for sw in stage_widths]
        )
        self.tap_fcs = nn.ModuleList(
            [nn.Linear(quality_dim, quality_dim) for _ in stage_widths]
        )
        self.regressor = nn.Linear(4 * quality_dim, 1)

    def forward(self, x: torch.Tensor):
        _check_input(x, min_side=16)
        h = self.stem(x)
        taps = []
        for stage in self.stages:
            h = stage(h)
            taps.append(h)
        qs = []
        for tap, head, fc in zip(taps, self.tap_heads, self.tap_fcs):
            v = head(tap).mean(dim=(2, 3))
            qs.append(fc(v))
        score = self.regressor(torch.cat(qs, dim=1)).squeeze(1)
        return score, taps
