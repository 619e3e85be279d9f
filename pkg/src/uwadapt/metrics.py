"""Image quality metrics and rank statistics.

No-reference underwater indices (uciqe, uiqm), full-reference fidelity
(psnr, ssim, angular_error), rank correlations (srocc, plcc) and mean
opinion score aggregation. All image metrics take UnitImage inputs.

Formula conventions, recorded here because the package treats them as
frozen config:

* uciqe = 0.4680 * std(chroma) + 0.2745 * (top 1% of L minus bottom 1%)
  + 0.2576 * mean(chroma / L), computed in CIELab with L and chroma on a
  unit scale (divided by 100) and saturation as the raw chroma/L ratio.
* uiqm = 0.0282 * UICM + 0.2953 * UISM + 3.5753 * UIConM. UICM uses
  10%-trimmed means of the RG / YB opponent channels. UISM applies a
  3x3 Sobel magnitude per channel (symmetric boundary), multiplies it
  into the channel and takes a log-contrast block statistic; UIConM takes
  an entropy-style Michelson block statistic of the RGB mean. Both block
  statistics use 4x4 blocks and are averaged over the four flip
  orientations of the image so the index is exactly flip-symmetric for
  every image size.
* ssim follows the standard uniform-window definition: window 7, K1=0.01,
  K2=0.03, data range 1.0, sample-normalized covariances, border crop of
  half the window, channel results averaged.
* MOS screening discards raw scores whose absolute deviation from the
  mean reaches 2 population standard deviations (boundary inclusive),
  then maps the retained mean linearly from [1,5] to [1,100].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imagecore import UnitImage, rgb_to_lab


@dataclass(frozen=True)
class UciqeWeights:
    chroma_std: float = 0.4680
    luminance_contrast: float = 0.2745
    mean_saturation: float = 0.2576
    contrast_tail: float = 0.01


@dataclass(frozen=True)
class UiqmWeights:
    colorfulness: float = 0.0282
    sharpness: float = 0.2953
    contrast: float = 3.5753
    block_size: int = 4
    trim_frac: float = 0.1
    luma: tuple = (0.299, 0.587, 0.114)
    uicm_mu: float = -0.0268
    uicm_sigma: float = 0.1586


DEFAULT_UCIQE = UciqeWeights()
DEFAULT_UIQM = UiqmWeights()


def uciqe(img: UnitImage, w: UciqeWeights = DEFAULT_UCIQE) -> float:
    """Chroma-spread / contrast / saturation quality index (no reference)."""
    lab = rgb_to_lab(img)
    L = lab.L / 100.0
    chroma = np.sqrt(lab.a**2 + lab.b**2) / 100.0

    sigma_c = float(np.sqrt(np.mean((chroma - chroma.mean()) ** 2)))

    flat = np.sort(L.ravel())
    k = max(1, math.ceil(w.contrast_tail * flat.size))
    con_l = float(flat[-k:].mean() - flat[:k].mean())

    Lsafe = lab.L / 100.0
    sat = np.where(Lsafe > 1e-8, chroma / np.maximum(Lsafe, 1e-8), 0.0)
    mu_s = float(sat.mean())

    return w.chroma_std * sigma_c + w.luminance_contrast * con_l + w.mean_saturation * mu_s


def _trimmed_stats(values: np.ndarray, trim_frac: float):
    """Two-sided trimmed mean plus full-sample deviation about it."""
    v = np.sort(values.ravel())
    n = v.size
    t = int(math.floor(trim_frac * n))
    kept = v[t : n - t] if n - 2 * t > 0 else v
    mu = float(kept.mean())
    var = float(np.mean((v - mu) ** 2))
    return mu, var


def _flip_orbit(arr: np.ndarray):
    return (arr, arr[:, ::-1], arr[::-1, :], arr[::-1, ::-1])


def _eme_raw(arr: np.ndarray, block: int) -> float:
    """Log max/min contrast over complete top-left-anchored blocks."""
    h, w = arr.shape
    terms = []
    for i in range(0, h - block + 1, block):
        for j in range(0, w - block + 1, block):
            patch = arr[i : i + block, j : j + block]
            lo = patch.min()
            hi = patch.max()
            if lo > 1e-12 and hi > 1e-12:
                terms.append(math.log(hi / lo))
            else:
                terms.append(0.0)
    if not terms:
        return 0.0
    return 2.0 * float(np.mean(terms))


def _logamee_raw(arr: np.ndarray, block: int) -> float:
    """Entropy-style Michelson block contrast (non-negative)."""
    h, w = arr.shape
    terms = []
    for i in range(0, h - block + 1, block):
        for j in range(0, w - block + 1, block):
            patch = arr[i : i + block, j : j + block]
            lo = patch.min()
            hi = patch.max()
            denom = hi + lo
            if denom > 1e-12:
                m = (hi - lo) / denom
                terms.append(-m * math.log(m) if m > 1e-12 else 0.0)
            else:
                terms.append(0.0)
    if not terms:
        return 0.0
    return float(np.mean(terms))


def _orbit_mean(fn, arr: np.ndarray, block: int) -> float:
    # Sorted before summing so every flip of the input yields the exact
    # same float, making the block statistic flip-invariant by construction.
    vals = sorted(fn(o, block) for o in _flip_orbit(arr))
    return sum(vals) / 4.0


def _sobel_magnitude(channel: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(channel, axis=1, mode="reflect")
    gy = ndimage.sobel(channel, axis=0, mode="reflect")
    return np.sqrt(gx**2 + gy**2)


def uicm(img: UnitImage, w: UiqmWeights = DEFAULT_UIQM) -> float:
    """Colorfulness from trimmed opponent-channel statistics."""
    r, g, b = img.pixels[:, :, 0], img.pixels[:, :, 1], img.pixels[:, :, 2]
    rg = r - g
    yb = (r + g) / 2.0 - b
    mu_rg, var_rg = _trimmed_stats(rg, w.trim_frac)
    mu_yb, var_yb = _trimmed_stats(yb, w.trim_frac)
    return w.uicm_mu * math.hypot(mu_rg, mu_yb) + w.uicm_sigma * math.sqrt(var_rg + var_yb)


def uism(img: UnitImage, w: UiqmWeights = DEFAULT_UIQM) -> float:
    """Sharpness: per-channel log contrast of Sobel-weighted intensities."""
    total = 0.0
    for c, lam in enumerate(w.luma):
        channel = img.pixels[:, :, c]
        edge = _sobel_magnitude(channel) * channel
        total += lam * _orbit_mean(_eme_raw, edge, w.block_size)
    return total


def uiconm(img: UnitImage, w: UiqmWeights = DEFAULT_UIQM) -> float:
    """Contrast: entropy-style Michelson statistic of the RGB mean."""
    intensity = img.pixels.mean(axis=2)
    return _orbit_mean(_logamee_raw, intensity, w.block_size)


def uiqm(img: UnitImage, w: UiqmWeights = DEFAULT_UIQM) -> float:
    """Weighted colorfulness + sharpness + contrast quality index."""
    return w.colorfulness * uicm(img, w) + w.sharpness * uism(img, w) + w.contrast * uiconm(img, w)


def angular_error(img: UnitImage, ref: UnitImage) -> float:
    """Mean per-pixel angle in degrees between RGB vectors of two images.

    Pixels where either vector is exactly zero are skipped. Raises if the
    shapes differ or every pixel is skipped.
    """
    a = img.pixels
    b = ref.pixels
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    dot = np.einsum("ijk,ijk->ij", a, b)
    na = np.einsum("ijk,ijk->ij", a, a)
    nb = np.einsum("ijk,ijk->ij", b, b)
    mask = (na > 0) & (nb > 0)
    if not mask.any():
        raise ValueError("no pixels with nonzero vectors in both images")
    cos = dot[mask] / np.sqrt(na[mask] * nb[mask])
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(ang.mean())


def psnr(a: UnitImage, b: UnitImage) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf for equal images."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"shape mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


SSIM_WIN = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    filt = lambda a: ndimage.uniform_filter(a, size=SSIM_WIN)  # noqa: E731
    np_pix = SSIM_WIN * SSIM_WIN
    cov_norm = np_pix / (np_pix - 1.0)

    ux = filt(x)
    uy = filt(y)
    uxx = filt(x * x)
    uyy = filt(y * y)
    uxy = filt(x * y)
    vx = cov_norm * (uxx - ux * ux)
    vy = cov_norm * (uyy - uy * uy)
    vxy = cov_norm * (uxy - ux * uy)

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))

    pad = (SSIM_WIN - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(a: UnitImage, b: UnitImage) -> float:
    """Mean structural similarity over channels (uniform 7x7 window)."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"shape mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    vals = [_ssim_channel(a.pixels[:, :, c], b.pixels[:, :, c]) for c in range(3)]
    return float(np.mean(vals))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values receiving the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _check_corr_inputs(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("inputs must be 1-d sequences of equal length")
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    return x, y


def plcc(x, y) -> float:
    """Pearson linear correlation; raises on constant input."""
    x, y = _check_corr_inputs(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float((dx**2).sum()) * float((dy**2).sum()))
    if den == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float((dx * dy).sum() / den)


def srocc(x, y) -> float:
    """Spearman rank correlation using average ranks for ties."""
    x, y = _check_corr_inputs(x, y)
    return plcc(_average_ranks(x), _average_ranks(y))


@dataclass(frozen=True)
class MosRecord:
    """Aggregated subjective score for one image."""

    image_id: str
    raw_scores: tuple
    mos: float
    retained: tuple
    used_fallback: bool

    def __post_init__(self):
        if not 1.0 <= self.mos <= 100.0:
            raise ValueError(f"mos must lie in [1,100], got {self.mos}")


def aggregate_mos(raw_scores, image_id: str = "") -> MosRecord:
    """Screen per-rater scores and map their mean to the [1,100] scale.

    Scores further than two population standard deviations from the mean
    (boundary inclusive, within float tolerance) are discarded in a single
    pass; a zero-spread panel is retained whole. Should screening ever
    discard everything, the unfiltered mean is used and flagged.
    """
    raw = tuple(float(s) for s in raw_scores)
    if len(raw) < 3:
        raise ValueError("need at least 3 raters")
    arr = np.asarray(raw)
    if arr.min() < 1.0 or arr.max() > 5.0:
        raise ValueError("raw scores must lie in [1,5]")

    m = arr.mean()
    sigma = float(np.sqrt(np.mean((arr - m) ** 2)))
    if sigma < 1e-12:
        retained = raw
        used_fallback = False
    else:
        keep = np.abs(arr - m) < 2.0 * sigma - 1e-12
        if keep.any():
            retained = tuple(arr[keep])
            used_fallback = False
        else:
            retained = raw
            used_fallback = True

    m5 = float(np.mean(retained))
    mos = 1.0 + (m5 - 1.0) * 99.0 / 4.0
    return MosRecord(
        image_id=image_id,
        raw_scores=raw,
        mos=float(np.clip(mos, 1.0, 100.0)),
        retained=retained,
        used_fallback=used_fallback,
    )


@dataclass
class MetricReport:
    """Per-image metric values plus arithmetic-mean aggregates.

    Columns may be ragged (different images can carry different metrics);
    meta holds run-level context such as thresholds or seeds.
    """

    per_image: dict = field(default_factory=dict)
    image_ids: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def add(self, image_id: str, values: dict) -> None:
        if image_id in self.image_ids:
            raise ValueError(f"duplicate image id {image_id!r}")
        self.image_ids.append(image_id)
        for name, v in values.items():
            self.per_image.setdefault(name, []).append(float(v))
            self.rows.append((image_id, name, float(v)))

    def aggregate(self) -> dict:
        out = {}
        for name, vals in self.per_image.items():
            finite = [v for v in vals if math.isfinite(v)]
            out[name] = float(np.mean(finite)) if finite else math.inf
        return out
