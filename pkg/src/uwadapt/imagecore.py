"""Image containers, color-space math, range normalization and augmentation.

Conventions used throughout the package:

* ``UnitImage``  -- H x W x 3 float array in [0, 1]; the metric space.
* ``NormImage``  -- H x W x 3 float array in [-1, 1]; the network space.
* ``LabImage``   -- CIE 1976 L*a*b* under D65, computed from gamma-decoded
  sRGB. The XYZ white point is taken as the row sums of the sRGB matrix so
  that any gray pixel maps to a = b = 0 exactly.
* Resizing is bilinear with half-pixel-aligned sample centers
  (the "align_corners = False" convention), for bit-reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

MIN_SIDE = 8

AUGMENT_OPS = ("none", "rot90", "rot180", "rot270", "hflip")

# sRGB -> XYZ (linear light), IEC 61966-2-1 primaries.
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# White point = matrix @ (1,1,1): keeps the gray axis exactly at a = b = 0.
_WHITE = _RGB2XYZ.sum(axis=1)


def _check_pixels(pixels: np.ndarray, lo: float, hi: float, kind: str) -> np.ndarray:
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{kind} requires an H x W x 3 array, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"{kind} requires H, W >= {MIN_SIDE}, got {h} x {w}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{kind} contains non-finite values")
    if arr.min() < lo or arr.max() > hi:
        raise ValueError(
            f"{kind} values must lie in [{lo}, {hi}], "
            f"got [{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


@dataclass(frozen=True)
class UnitImage:
    """An RGB image with channel values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _check_pixels(self.pixels, 0.0, 1.0, "UnitImage"))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class NormImage:
    """An RGB image with channel values in [-1, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _check_pixels(self.pixels, -1.0, 1.0, "NormImage"))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LabImage:
    """CIE L*a*b* planes; L in [0, 100], a and b signed."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"LabImage requires an H x W x 3 array, got shape {arr.shape}")
        L = arr[:, :, 0]
        if L.min() < -1e-9 or L.max() > 100.0 + 1e-9:
            raise ValueError(f"L channel must lie in [0, 100], got [{L.min()}, {L.max()}]")
        object.__setattr__(self, "pixels", arr)

    @property
    def L(self) -> np.ndarray:
        return self.pixels[:, :, 0]

    @property
    def a(self) -> np.ndarray:
        return self.pixels[:, :, 1]

    @property
    def b(self) -> np.ndarray:
        return self.pixels[:, :, 2]


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    """Decode sRGB gamma to linear light."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(img: UnitImage) -> LabImage:
    """Convert an sRGB image to CIE 1976 L*a*b* under D65.

    White (1,1,1) maps to (100, 0, 0) and every gray pixel (v,v,v) maps to
    a = b = 0 exactly (see module docstring for the white-point convention).
    """
    lin = srgb_to_linear(img.pixels)
    xyz = lin @ _RGB2XYZ.T
    t = xyz / _WHITE

    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3.0 * delta**2) + 4.0 / 29.0)

    fx, fy, fz = f[:, :, 0], f[:, :, 1], f[:, :, 2]
    L = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    # Guard against L = -1e-18 style round-off at pure black.
    L = np.clip(L, 0.0, 100.0)
    return LabImage(np.stack([L, a, b], axis=2))


def normalize(img: UnitImage) -> NormImage:
    """Map [0, 1] to [-1, 1] via x -> 2x - 1."""
    return NormImage(2.0 * img.pixels - 1.0)


def denormalize(img: NormImage) -> UnitImage:
    """Map [-1, 1] back to [0, 1], clamping round-off spill at the ends."""
    return UnitImage(np.clip((img.pixels + 1.0) / 2.0, 0.0, 1.0))


def augment(img: NormImage, op: str) -> NormImage:
    """Apply a lossless pixel permutation: rot90/180/270, hflip or none.

    Rotations are counterclockwise. Every op preserves the multiset of
    pixel values exactly.
    """
    if op not in AUGMENT_OPS:
        raise ValueError(f"unknown augmentation {op!r}; expected one of {AUGMENT_OPS}")
    p = img.pixels
    if op == "none":
        out = p.copy()
    elif op == "rot90":
        out = np.rot90(p, 1, axes=(0, 1)).copy()
    elif op == "rot180":
        out = np.rot90(p, 2, axes=(0, 1)).copy()
    elif op == "rot270":
        out = np.rot90(p, 3, axes=(0, 1)).copy()
    else:  # hflip
        out = p[:, ::-1, :].copy()
    return NormImage(out)


def resize(img: UnitImage, h: int, w: int) -> UnitImage:
    """Bilinear resize with half-pixel sample centers.

    Constant images are preserved exactly (interpolation uses the
    a + t*(b - a) form), and resizing to the same shape is the identity.
    """
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"target size must be >= {MIN_SIDE}, got {h} x {w}")
    src = img.pixels
    H, W = src.shape[:2]

    ys = (np.arange(h, dtype=np.float64) + 0.5) * (H / h) - 0.5
    xs = (np.arange(w, dtype=np.float64) + 0.5) * (W / w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = ys - y0
    tx = xs - x0
    y0c = np.clip(y0, 0, H - 1)
    y1c = np.clip(y0 + 1, 0, H - 1)
    x0c = np.clip(x0, 0, W - 1)
    x1c = np.clip(x0 + 1, 0, W - 1)

    tx3 = tx[None, :, None]
    a = src[y0c][:, x0c]
    b = src[y0c][:, x1c]
    c = src[y1c][:, x0c]
    d = src[y1c][:, x1c]
    top = a + tx3 * (b - a)
    bot = c + tx3 * (d - c)
    out = top + ty[:, None, None] * (bot - top)
    return UnitImage(np.clip(out, 0.0, 1.0))


def read_png(path) -> UnitImage:
    """Load an 8-bit PNG (or any PIL-readable file) as a UnitImage."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return UnitImage(arr)


def write_png(img: UnitImage, path) -> None:
    """Write a UnitImage as an 8-bit PNG (values rounded to /255 steps)."""
    arr = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
