"""Tests for the underwater synthesis model, tone classes and manifests."""

import math

import numpy as np
import pytest

from uwadapt.imagecore import UnitImage, read_png
from uwadapt.synthdata import (
    COASTAL,
    DEFAULT_PARAMS,
    OPEN_OCEAN,
    STRONG_COASTAL,
    DatasetManifest,
    ManifestRecord,
    SceneSample,
    SynthParams,
    ToneClass,
    WaterType,
    bowl_depth,
    build_dataset,
    classify_tone,
    make_scene_pool,
    procedural_scene,
    ramp_depth,
    synthesize,
    tone_anchor_images,
    validate_param_table,
)


def const_scene(value, depth_value, h=8, w=8):
    img = UnitImage(np.full((h, w, 3), value, dtype=np.float64))
    return SceneSample(img, np.full((h, w), float(depth_value)))


class TestFormationModel:
    def test_zero_depth_returns_radiance_exactly(self):
        rng = np.random.default_rng(2)
        img = UnitImage(rng.random((8, 8, 3)))
        scene = SceneSample(img, np.zeros((8, 8)))
        for wt in WaterType:
            out = synthesize(scene, wt)
            assert np.array_equal(out.pixels, img.pixels)

    def test_large_depth_returns_background_exactly(self):
        scene = const_scene(0.9, 1e6)
        for wt in WaterType:
            out = synthesize(scene, wt)
            bg = np.asarray(DEFAULT_PARAMS[wt].background)
            assert np.array_equal(out.pixels, np.broadcast_to(bg, (8, 8, 3)))

    def test_closed_form_single_case(self):
        # J=(1,1,1), B=(0.1,0.4,0.6), beta=(0.7,0.2,0.1), d=2.
        table = dict(DEFAULT_PARAMS)
        table[WaterType.I] = SynthParams((0.7, 0.2, 0.1), (0.1, 0.4, 0.6))
        scene = const_scene(1.0, 2.0)
        out = synthesize(scene, WaterType.I, table)
        for c, (beta, bg) in enumerate(zip((0.7, 0.2, 0.1), (0.1, 0.4, 0.6))):
            t = math.exp(-2.0 * beta)
            expect = 1.0 * t + bg * (1.0 - t)
            assert abs(out.pixels[0, 0, c] - expect) < 1e-12

    def test_shape_mismatch_rejected(self):
        img = UnitImage(np.zeros((8, 8, 3)))
        with pytest.raises(ValueError):
            SceneSample(img, np.zeros((8, 9)))

    def test_negative_depth_rejected(self):
        img = UnitImage(np.zeros((8, 8, 3)))
        with pytest.raises(ValueError):
            SceneSample(img, np.full((8, 8), -0.5))

    def test_unregistered_type_rejected(self):
        scene = const_scene(0.5, 1.0)
        with pytest.raises(ValueError):
            synthesize(scene, WaterType.C7, {WaterType.I: DEFAULT_PARAMS[WaterType.I]})

    def test_convex_combination_bound_random(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            img = UnitImage(rng.random((8, 8, 3)))
            depth = rng.uniform(0, 20, (8, 8))
            scene = SceneSample(img, depth)
            wt = list(WaterType)[rng.integers(0, 9)]
            out = synthesize(scene, wt)
            bg = np.broadcast_to(np.asarray(DEFAULT_PARAMS[wt].background), (8, 8, 3))
            lo = np.minimum(img.pixels, bg)
            hi = np.maximum(img.pixels, bg)
            assert np.all(out.pixels >= lo)
            assert np.all(out.pixels <= hi)

    def test_monotone_in_depth_toward_background(self):
        rng = np.random.default_rng(37)
        for _ in range(100):
            img = UnitImage(rng.random((8, 8, 3)))
            d1 = rng.uniform(0, 10, (8, 8))
            d2 = d1 + rng.uniform(0.1, 10, (8, 8))
            wt = list(WaterType)[rng.integers(0, 9)]
            bg = np.broadcast_to(np.asarray(DEFAULT_PARAMS[wt].background), (8, 8, 3))
            near = synthesize(SceneSample(img, d1), wt).pixels
            far = synthesize(SceneSample(img, d2), wt).pixels
            assert np.all(np.abs(far - bg) <= np.abs(near - bg))


class TestParams:
    def test_beta_positive_enforced(self):
        with pytest.raises(ValueError):
            SynthParams((0.0, 0.1, 0.1), (0.1, 0.1, 0.1))

    def test_background_range_enforced(self):
        with pytest.raises(ValueError):
            SynthParams((0.1, 0.1, 0.1), (1.2, 0.1, 0.1))

    def test_open_ocean_red_vs_blue_rule(self):
        bad = dict(DEFAULT_PARAMS)
        bad[WaterType.I] = SynthParams((0.1, 0.2, 0.9), (0.1, 0.2, 0.4))
        with pytest.raises(ValueError):
            validate_param_table(bad)

    def test_missing_type_rejected(self):
        partial = {WaterType.I: DEFAULT_PARAMS[WaterType.I]}
        with pytest.raises(ValueError):
            validate_param_table(partial)

    def test_default_table_has_nine_types(self):
        assert len(WaterType) == 9
        assert set(DEFAULT_PARAMS) == set(WaterType)
        assert set(OPEN_OCEAN) | set(COASTAL) == set(WaterType)
        assert set(STRONG_COASTAL) <= set(COASTAL)


class TestTone:
    def test_pure_green_is_green(self):
        img = UnitImage(np.broadcast_to([0.0, 1.0, 0.0], (8, 8, 3)).copy())
        assert classify_tone(img) is ToneClass.Green

    def test_pure_blue_is_blue(self):
        img = UnitImage(np.broadcast_to([0.0, 0.0, 1.0], (8, 8, 3)).copy())
        assert classify_tone(img) is ToneClass.Blue

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        img = UnitImage(rng.random((8, 8, 3)))
        flat = img.pixels.reshape(-1, 3)
        perm = flat[rng.permutation(len(flat))].reshape(8, 8, 3)
        assert classify_tone(img) is classify_tone(UnitImage(perm))

    def test_open_ocean_anchors_blue(self):
        for wt in OPEN_OCEAN:
            for img in tone_anchor_images(wt, count=5, seed=99):
                assert classify_tone(img) is ToneClass.Blue, wt

    def test_strong_coastal_anchors_green(self):
        for wt in STRONG_COASTAL:
            for img in tone_anchor_images(wt, count=5, seed=99):
                assert classify_tone(img) is ToneClass.Green, wt

    def test_mild_coastal_anchors_bluegreen(self):
        for wt in (WaterType.C1, WaterType.C3):
            for img in tone_anchor_images(wt, count=5, seed=99):
                assert classify_tone(img) is ToneClass.BlueGreen, wt


class TestDepthAndScenes:
    def test_ramp_endpoints(self):
        d = ramp_depth(10, 6, 2.0, 8.0)
        assert d.shape == (10, 6)
        assert np.allclose(d[0], 2.0) and np.allclose(d[-1], 8.0)

    def test_bowl_center_and_corner(self):
        d = bowl_depth(9, 9, 1.0, 5.0)
        assert abs(d[4, 4] - 1.0) < 1e-9
        assert abs(d[0, 0] - 5.0) < 1e-9

    def test_procedural_scene_deterministic(self):
        a = procedural_scene(np.random.default_rng(4)).pixels
        b = procedural_scene(np.random.default_rng(4)).pixels
        assert np.array_equal(a, b)

    def test_make_scene_pool(self):
        pool = make_scene_pool(seed=1, count=6, h=16, w=16)
        assert len(pool) == 6
        for s in pool:
            assert s.depth.min() >= 1.0
        with pytest.raises(ValueError):
            make_scene_pool(seed=1, count=0)


class TestManifest:
    def test_record_role_validation(self):
        with pytest.raises(ValueError):
            ManifestRecord(path="x.png", role="weird", split="train", tone=ToneClass.Blue)
        with pytest.raises(ValueError):
            ManifestRecord(
                path="x.png", role="synthetic-pair", split="train", tone=ToneClass.Blue
            )

    def test_duplicate_paths_rejected(self):
        r = ManifestRecord(path="a.png", role="real", split="train", tone=ToneClass.Blue)
        m = DatasetManifest([r, r])
        with pytest.raises(ValueError):
            m.validate()

    def test_json_round_trip(self):
        r = ManifestRecord(
            path="a.png",
            role="synthetic-pair",
            split="test",
            tone=ToneClass.Green,
            water_type=WaterType.C5,
            clean_path="b.png",
        )
        assert ManifestRecord.from_json(r.to_json()) == r


class TestBuildDataset:
    def test_counts_and_split(self, tmp_path):
        pool = make_scene_pool(seed=2, count=10, h=16, w=16)
        m = build_dataset(pool, tmp_path / "ds", per_type=10, seed=0)
        assert len(m.records) == 90
        train = m.subset(split="train")
        test = m.subset(split="test")
        assert len(train) == 72 and len(test) == 18
        assert {r.path for r in train}.isdisjoint({r.path for r in test})

    def test_deterministic_manifest(self, tmp_path):
        pool = make_scene_pool(seed=2, count=4, h=16, w=16)
        out = tmp_path / "ds"
        build_dataset(pool, out, per_type=3, seed=7)
        first = (out / "manifest.jsonl").read_bytes()
        build_dataset(pool, out, per_type=3, seed=7)
        second = (out / "manifest.jsonl").read_bytes()
        assert first == second

    def test_tone_matches_stored_image(self, tmp_path):
        pool = make_scene_pool(seed=3, count=4, h=16, w=16)
        m = build_dataset(pool, tmp_path / "ds", per_type=2, seed=1)
        for r in m.records:
            assert classify_tone(read_png(r.path)) is r.tone

    def test_pair_files_exist(self, tmp_path):
        pool = make_scene_pool(seed=4, count=3, h=16, w=16)
        m = build_dataset(pool, tmp_path / "ds", per_type=2, seed=5)
        import os

        for r in m.records:
            assert os.path.exists(r.path)
            assert r.clean_path and os.path.exists(r.clean_path)

    def test_empty_pool_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_dataset([], tmp_path / "ds", per_type=1, seed=0)

    def test_manifest_load_round_trip(self, tmp_path):
        pool = make_scene_pool(seed=5, count=3, h=16, w=16)
        m = build_dataset(pool, tmp_path / "ds", per_type=2, seed=2)
        loaded = DatasetManifest.load(tmp_path / "ds" / "manifest.jsonl")
        assert loaded.records == m.records
