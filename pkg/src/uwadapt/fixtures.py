"""Desk-scale data fixtures with known ground truth.

Real subjective-score studies and real underwater photo sets are replaced by
procedurally generated stand-ins whose quality ordering is known by
construction: a single strength knob drives a stack of degradations (color
cast, haze veil, blur, sensor noise), and simulated rater scores are a fixed
decreasing function of that knob plus small jitter. Anything that needs
"images plus subjective scores" or "an unpaired target-domain set" at test
scale builds it from here, so directional claims (pretraining helps,
adaptation helps) are checked against a controlled, reproducible quality
axis rather than eyeballed data.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import UnitImage, denormalize, normalize, read_png, write_png
from .metrics import aggregate_mos
from .ruiqa import ScoredImage
from .synthdata import (
    DEFAULT_PARAMS,
    DatasetManifest,
    ManifestRecord,
    RealExample,
    SynthExample,
    SynthParams,
    SceneSample,
    WaterType,
    classify_tone,
    make_scene_pool,
    procedural_scene,
    ramp_depth,
    synthesize,
)

# Water optics used for the stand-in "real" set. Deliberately *not* the
# rendering table the synthetic training pairs use: attenuation is skewed
# and the ambient column is shifted, so models fit on the default table
# face a genuine domain gap here.
REAL_WORLD_PARAMS = {
    wt: SynthParams(
        beta=(p.beta[0] * 1.25, p.beta[1] * 0.85, p.beta[2] * 1.2),
        background=(
            min(1.0, p.background[0] + 0.06),
            max(0.0, p.background[1] - 0.05),
            min(1.0, p.background[2] + 0.08),
        ),
    )
    for wt, p in DEFAULT_PARAMS.items()
}

VEIL = (0.75, 0.82, 0.80)  # haze target color, a desaturated cool gray
CAST_GAIN = (0.45, 0.05, 0.25)  # per-channel gain drop at full strength


def degrade(img: UnitImage, strength: float, rng: np.random.Generator) -> UnitImage:
    """Apply the graded degradation stack at the given strength in [0, 1].

    Color cast, then haze, then blur, then noise; each scales with strength
    so strength 0 returns the input unchanged (up to the zero-noise draw).
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must lie in [0, 1]")
    px = img.pixels.astype(np.float64).copy()

    gains = np.array([1.0 - g * strength for g in CAST_GAIN])
    px = px * gains

    veil = np.array(VEIL)
    px = (1.0 - 0.5 * strength) * px + 0.5 * strength * veil

    sigma = 1.8 * strength
    if sigma > 0:
        px = ndimage.gaussian_filter(px, sigma=(sigma, sigma, 0))

    px = px + 0.02 * strength * rng.standard_normal(px.shape)
    return UnitImage(np.clip(px, 0.0, 1.0))


def quality_for_strength(strength: float) -> float:
    """Ground-truth panel score on the 1..5 scale; decreasing in strength."""
    return 5.0 - 4.0 * strength


def make_mos_fixture(
    count: int,
    seed: int,
    size: int = 32,
    raters: int = 5,
    jitter: float = 0.08,
) -> list:
    """Scored images spanning the full degradation range.

    Strengths are spread evenly over [0, 1] (shuffled), rater scores are the
    ground-truth quality plus seeded jitter, and the aggregate passes through
    the same screening as genuine panels would.
    """
    if count < 2:
        raise ValueError("need at least two images")
    rng = np.random.default_rng(seed)
    strengths = np.linspace(0.0, 1.0, count)
    rng.shuffle(strengths)

    items = []
    for i, s in enumerate(strengths):
        scene = procedural_scene(rng, size, size)
        img = degrade(scene, float(s), rng)
        raw = np.clip(
            quality_for_strength(float(s)) + jitter * rng.standard_normal(raters),
            1.0,
            5.0,
        )
        rec = aggregate_mos(raw, image_id=f"fx{i:03d}")
        items.append(ScoredImage(image=img, mos=rec.mos, image_id=rec.image_id))
    return items


# Water types for the stand-in real set, mild to severe. The severity mix
# plus a matching degradation strength gives the set a usable easy..hard
# spectrum for split experiments.
_MILD_TYPES = (WaterType.I, WaterType.IB, WaterType.II, WaterType.III)
_HEAVY_TYPES = (WaterType.C5, WaterType.C7)


def make_real_set(count: int, seed: int, size: int = 64) -> list:
    """Unpaired target-domain images drawn from two optical modes.

    Real corpora cluster rather than sweep: most shots are captures in
    clear, shallow water, and a minority comes from one deep, turbid site
    whose dense colored veil dominates the image. Both modes share the same
    camera pipeline (a light capture-degradation pass), so what separates
    them is purely the optical state of the water — the kind of difference
    a style translator can express as a global color/contrast shift. Three
    in five images here are mild, two are heavy. The heavy mode is kept
    narrow on purpose — one consistent look is what makes the easy-to-hard
    translation learnable downstream, where a severity continuum offers no
    boundary to adapt across.
    """
    if count < 1:
        raise ValueError("need at least one image")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        heavy = i % 5 >= 3
        scene = procedural_scene(rng, size, size)
        if heavy:
            wt = _HEAVY_TYPES[int(rng.integers(0, len(_HEAVY_TYPES)))]
            near = rng.uniform(5.0, 7.0)
        else:
            wt = _MILD_TYPES[int(rng.integers(0, len(_MILD_TYPES)))]
            near = rng.uniform(0.8, 2.0)
        strength = rng.uniform(0.0, 0.08)
        depth = ramp_depth(size, size, near, near + rng.uniform(3.0, 5.0))
        wet = synthesize(SceneSample(scene, depth), wt, REAL_WORLD_PARAMS)
        img = degrade(wet, strength, rng)
        out.append(
            RealExample(
                x=normalize(img), tone=classify_tone(img), image_id=f"real{i:03d}"
            )
        )
    rng.shuffle(out)
    return out


def make_strength_fixture(count: int, seed: int, size: int = 32) -> list:
    """(image, strength) pairs with no panel scores attached.

    This is the auxiliary supervision used by proxy pretraining: the
    degradation level is known, but nothing on the subjective score scale.
    """
    if count < 2:
        raise ValueError("need at least two images")
    rng = np.random.default_rng(seed)
    strengths = np.linspace(0.0, 1.0, count)
    rng.shuffle(strengths)
    out = []
    for s in strengths:
        scene = procedural_scene(rng, size, size)
        out.append((degrade(scene, float(s), rng), float(s)))
    return out


def make_synth_set(count: int, seed: int, size: int = 64) -> list:
    """Paired synthetic examples off the default optics table (in memory)."""
    if count < 1:
        raise ValueError("need at least one image")
    rng = np.random.default_rng(seed)
    types = list(WaterType)
    pool = make_scene_pool(seed + 1, max(4, count // 2), size, size)
    out = []
    for i in range(count):
        scene = pool[int(rng.integers(0, len(pool)))]
        wt = types[int(rng.integers(0, len(types)))]
        wet = synthesize(scene, wt)
        out.append(
            SynthExample(
                x=normalize(wet),
                y=normalize(scene.radiance),
                tone=classify_tone(wet),
            )
        )
    return out


@dataclass(frozen=True)
class DeskData:
    """Everything a desk-scale experiment needs, generated from one seed."""

    synth_train: tuple
    synth_test: tuple
    real_train: tuple
    real_eval: tuple
    mos_rank: tuple
    mos_finetune: tuple
    mos_eval: tuple
    strength: tuple


def make_desk_data(
    seed: int,
    image_size: int = 64,
    n_synth: int = 24,
    n_real: int = 24,
) -> DeskData:
    """One bundle of disjointly seeded fixture sets for pipeline runs.

    Every subset, the scorer fixtures included, is rendered at image_size:
    a scorer trained at one resolution saturates on another, so mixing
    sizes inside one experiment is not supported.
    """
    return DeskData(
        synth_train=tuple(make_synth_set(n_synth, seed=seed * 100 + 1, size=image_size)),
        synth_test=tuple(make_synth_set(max(4, n_synth // 3), seed=seed * 100 + 2, size=image_size)),
        real_train=tuple(make_real_set(n_real, seed=seed * 100 + 3, size=image_size)),
        real_eval=tuple(make_real_set(max(4, n_real // 2), seed=seed * 100 + 4, size=image_size)),
        mos_rank=tuple(make_mos_fixture(120, seed=seed * 100 + 5, size=image_size, jitter=0.04)),
        mos_finetune=tuple(make_mos_fixture(12, seed=seed * 100 + 6, size=image_size)),
        mos_eval=tuple(make_mos_fixture(24, seed=seed * 100 + 7, size=image_size, jitter=0.04)),
        strength=tuple(make_strength_fixture(60, seed=seed * 100 + 8, size=image_size)),
    )


def write_real_dataset(
    out_dir, count: int, seed: int, size: int = 64, train_frac: float = 0.8
) -> DatasetManifest:
    """Persist the pseudo-real corpus as PNGs plus a manifest.

    The in-memory set from make_real_set, written to disk in the same
    manifest format the synthetic renderer uses (role "real"), so the
    training CLI can load both domains through one loader path. Tones are
    classified from the written file, not the float image — the 8-bit
    quantization must not flip a borderline tone between save and load.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 <= train_frac <= 1.0:
        raise ValueError("train_frac must lie in [0, 1]")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples = make_real_set(count, seed, size)
    n_train = int(round(train_frac * count))

    records = []
    for i, ex in enumerate(examples):
        path = out_dir / f"real_{i:04d}.png"
        write_png(denormalize(ex.x), path)
        records.append(
            ManifestRecord(
                path=str(path),
                role="real",
                split="train" if i < n_train else "test",
                tone=classify_tone(read_png(path)),
            )
        )
    manifest = DatasetManifest(records)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
