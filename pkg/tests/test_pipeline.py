"""Routing, checkpoint, config and ablation-report tests for the pipeline."""

import json

import numpy as np
import pytest
import torch

from uwadapt.adapt import TrainConfig, build_inter_nets
from uwadapt.fixtures import (
    DeskData,
    make_mos_fixture,
    make_real_set,
    make_strength_fixture,
    make_synth_set,
)
from uwadapt.imagecore import UnitImage
from uwadapt.networks import Enhancer, RankBackbone
from uwadapt.pipeline import (
    CHECKPOINT_VERSION,
    CONFIG_ENV_VAR,
    ENHANCEMENT_VARIANTS,
    IQA_VARIANTS,
    AblationSpec,
    RunConfig,
    _run_enhancer,
    enhance,
    load_checkpoint,
    load_run_config,
    load_scorer_checkpoint,
    run_ablation,
    save_checkpoint,
    save_phase_checkpoint,
    save_scorer_checkpoint,
)
from uwadapt.ruiqa import Scorer, predict


class _MeanBackbone(torch.nn.Module):
    """Stub score head: an affine function of the image mean, nothing else."""

    def forward(self, x):
        return 50.0 + 40.0 * x.mean(dim=(1, 2, 3)), None


def stub_scorer() -> Scorer:
    sc = Scorer(_MeanBackbone())
    sc.trained = True
    return sc


def rand_images(n, seed, size=16):
    rng = np.random.default_rng(seed)
    return [UnitImage(rng.uniform(0, 1, (size, size, 3))) for _ in range(n)]


def two_enhancers(seed=0, width=4):
    torch.manual_seed(seed)
    inter = Enhancer(width)
    torch.manual_seed(seed + 1)
    intra = Enhancer(width)
    return inter, intra


class TestEnhanceRouting:
    def test_fifty_image_contract(self):
        # both routes must occur, and each output must be bit-identical to
        # the matching model's direct output
        imgs = rand_images(50, 0)
        inter, intra = two_enhancers()
        scorer = stub_scorer()
        ref_scores = [predict(scorer, _run_enhancer(inter, im)) for im in imgs]
        threshold = float(np.median(ref_scores))

        n_inter = n_intra = 0
        for im, ref in zip(imgs, ref_scores):
            out, route, score = enhance(im, inter, intra, scorer, threshold)
            assert score == ref
            if ref >= threshold:
                assert route == "inter"
                assert np.array_equal(out.pixels, _run_enhancer(inter, im).pixels)
                n_inter += 1
            else:
                assert route == "intra"
                assert np.array_equal(out.pixels, _run_enhancer(intra, im).pixels)
                n_intra += 1
        assert n_inter > 0 and n_intra > 0

    def test_boundary_equality_routes_inter(self):
        imgs = rand_images(1, 1)
        inter, intra = two_enhancers(seed=2)
        scorer = stub_scorer()
        exact = predict(scorer, _run_enhancer(inter, imgs[0]))
        out, route, score = enhance(imgs[0], inter, intra, scorer, exact)
        assert route == "inter" and score == exact
        assert np.array_equal(out.pixels, _run_enhancer(inter, imgs[0]).pixels)

    def test_missing_intra_model_is_an_error_only_below_threshold(self):
        imgs = rand_images(1, 3)
        inter, _ = two_enhancers(seed=3)
        scorer = stub_scorer()
        s = predict(scorer, _run_enhancer(inter, imgs[0]))
        out, route, _ = enhance(imgs[0], inter, None, scorer, s - 1.0)
        assert route == "inter"
        with pytest.raises(ValueError, match="threshold"):
            enhance(imgs[0], inter, None, scorer, s + 1.0)


class TestCheckpoints:
    def test_phase_round_trip_bit_exact(self, tmp_path):
        nets = build_inter_nets(width=4, seed=5)
        meta = {"lambda": 0.5, "seed": 5, "weights": {"inter_content": 100.0}}
        path = tmp_path / "phase.pt"
        save_phase_checkpoint(path, nets, meta)
        models, got_meta = load_checkpoint(path)
        assert got_meta == meta
        assert set(models) == {"translator", "enhancer", "critic_img", "critic_feat"}
        for name, module in (
            ("translator", nets.translator),
            ("enhancer", nets.enhancer),
            ("critic_img", nets.critic_img),
            ("critic_feat", nets.critic_feat),
        ):
            want = module.state_dict()
            got = models[name].state_dict()
            assert want.keys() == got.keys()
            for k in want:
                assert torch.equal(want[k], got[k]), f"{name}.{k}"

    def test_scorer_round_trip_same_predictions(self, tmp_path):
        torch.manual_seed(6)
        scorer = Scorer(RankBackbone(width=4))
        scorer.trained = True
        img = rand_images(1, 6, size=32)[0]
        before = predict(scorer, img)
        path = tmp_path / "scorer.pt"
        save_scorer_checkpoint(path, scorer, {"stage": "finetuned"})
        loaded, meta = load_scorer_checkpoint(path)
        assert meta == {"stage": "finetuned"}
        assert loaded.trained
        assert predict(loaded, img) == before

    def test_missing_blob_and_sidecar(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="blob"):
            load_checkpoint(tmp_path / "nope.pt")
        nets = build_inter_nets(width=4, seed=0)
        path = tmp_path / "phase.pt"
        save_phase_checkpoint(path, nets)
        (tmp_path / "phase.pt.json").unlink()
        with pytest.raises(FileNotFoundError, match="sidecar"):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "phase.pt"
        save_phase_checkpoint(path, build_inter_nets(width=4, seed=0))
        side = tmp_path / "phase.pt.json"
        doc = json.loads(side.read_text())
        doc["version"] = CHECKPOINT_VERSION + 99
        side.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_corrupt_blob(self, tmp_path):
        path = tmp_path / "phase.pt"
        save_phase_checkpoint(path, build_inter_nets(width=4, seed=0))
        path.write_bytes(b"not a torch archive")
        with pytest.raises(ValueError, match="corrupt"):
            load_checkpoint(path)

    def test_model_name_mismatch(self, tmp_path):
        path = tmp_path / "phase.pt"
        save_phase_checkpoint(path, build_inter_nets(width=4, seed=0))
        side = tmp_path / "phase.pt.json"
        doc = json.loads(side.read_text())
        doc["models"]["renamed"] = doc["models"].pop("translator")
        side.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="sidecar names"):
            load_checkpoint(path)

    def test_architecture_mismatch(self, tmp_path):
        torch.manual_seed(7)
        path = tmp_path / "enh.pt"
        save_checkpoint(path, {"enhancer": Enhancer(width=4)})
        side = tmp_path / "enh.pt.json"
        doc = json.loads(side.read_text())
        doc["models"]["enhancer"]["width"] = 8
        side.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="architecture"):
            load_checkpoint(path)

    def test_unknown_architecture_class(self, tmp_path):
        torch.manual_seed(8)
        path = tmp_path / "enh.pt"
        save_checkpoint(path, {"enhancer": Enhancer(width=4)})
        side = tmp_path / "enh.pt.json"
        doc = json.loads(side.read_text())
        doc["models"]["enhancer"]["class"] = "Mystery"
        side.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="unknown architecture"):
            load_checkpoint(path)


class TestRunConfig:
    def test_lambda_validation(self, tmp_path):
        with pytest.raises(ValueError, match="lambda"):
            RunConfig(out_dir=str(tmp_path), lam=1.0)

    def test_set_paths_must_exist(self, tmp_path):
        with pytest.raises(ValueError, match="scorer_checkpoint"):
            RunConfig(out_dir=str(tmp_path), scorer_checkpoint=str(tmp_path / "x.pt"))

    def test_load_and_unknown_keys(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(
            json.dumps({"out_dir": str(tmp_path), "lam": 0.6, "metrics": ["uciqe"]})
        )
        cfg = load_run_config(cfg_path)
        assert cfg.lam == 0.6 and cfg.metrics == ("uciqe",)

        cfg_path.write_text(json.dumps({"out_dir": str(tmp_path), "bogus": 1}))
        with pytest.raises(ValueError, match="bogus"):
            load_run_config(cfg_path)

    def test_env_var_overrides_path(self, tmp_path, monkeypatch):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"out_dir": str(tmp_path), "seed": 1}))
        b.write_text(json.dumps({"out_dir": str(tmp_path), "seed": 2}))
        monkeypatch.setenv(CONFIG_ENV_VAR, str(b))
        assert load_run_config(a).seed == 2
        monkeypatch.delenv(CONFIG_ENV_VAR)
        assert load_run_config(a).seed == 1
        with pytest.raises(ValueError, match=CONFIG_ENV_VAR):
            load_run_config(None)

    def test_train_config_helper(self, tmp_path):
        cfg = RunConfig(out_dir=str(tmp_path), epochs=3, decay_epochs=1, seed=9)
        tc = cfg.train_config(batch=2)
        assert isinstance(tc, TrainConfig)
        assert (tc.epochs, tc.decay_epochs, tc.batch, tc.seed) == (3, 1, 2, 9)


class TestAblationSpec:
    def test_closed_set(self):
        for name in ENHANCEMENT_VARIANTS + IQA_VARIANTS:
            AblationSpec(name)
        with pytest.raises(ValueError, match="unknown variant"):
            AblationSpec("BL+ITA")

    def test_is_iqa_flag(self):
        assert AblationSpec("RUIQA").is_iqa
        assert not AblationSpec("BL+ITE").is_iqa


def tiny_desk_data(seed=0, size=32) -> DeskData:
    return DeskData(
        synth_train=tuple(make_synth_set(6, seed=seed * 100 + 1, size=size)),
        synth_test=tuple(make_synth_set(3, seed=seed * 100 + 2, size=size)),
        real_train=tuple(make_real_set(6, seed=seed * 100 + 3, size=size)),
        real_eval=tuple(make_real_set(4, seed=seed * 100 + 4, size=size)),
        mos_rank=tuple(make_mos_fixture(8, seed=seed * 100 + 5, size=size)),
        mos_finetune=tuple(make_mos_fixture(6, seed=seed * 100 + 6, size=size)),
        mos_eval=tuple(make_mos_fixture(6, seed=seed * 100 + 7, size=size)),
        strength=tuple(make_strength_fixture(8, seed=seed * 100 + 8, size=size)),
    )


TINY_CONFIG = TrainConfig(epochs=1, decay_epochs=0, batch=2, seed=0)


class TestRunAblation:
    def test_enhancement_variant_requires_scorer(self):
        data = tiny_desk_data()
        with pytest.raises(ValueError, match="scorer"):
            run_ablation(AblationSpec("BL"), data, TINY_CONFIG)

    def test_bl_report_shape(self):
        data = tiny_desk_data()
        rep = run_ablation(
            AblationSpec("BL"), data, TINY_CONFIG, scorer=stub_scorer(), width=4
        )
        assert rep.meta["variant"] == "BL" and rep.meta["seed"] == 0
        ruiqa_rows = [r for r in rep.rows if r[1] == "ruiqa"]
        assert len(ruiqa_rows) == len(data.real_eval)
        assert all(np.isfinite(r[2]) for r in ruiqa_rows)

    def test_ite_reports_paired_metrics_too(self):
        data = tiny_desk_data(seed=1)
        rep = run_ablation(
            AblationSpec("BL+ITE"), data, TINY_CONFIG, scorer=stub_scorer(), width=4
        )
        names = {r[1] for r in rep.rows}
        assert {"ruiqa", "psnr", "ssim"} <= names
        assert sum(r[1] == "psnr" for r in rep.rows) == len(data.synth_test)

    def test_ita_records_split_and_routes(self):
        data = tiny_desk_data(seed=2)
        rep = run_ablation(
            AblationSpec("BL+ITE+ITA"),
            data,
            TINY_CONFIG,
            scorer=stub_scorer(),
            width=4,
            lam=0.5,
        )
        assert rep.meta["lambda"] == 0.5
        assert np.isfinite(rep.meta["threshold"])
        ruiqa_rows = [r for r in rep.rows if r[1] == "ruiqa"]
        assert len(ruiqa_rows) == len(data.real_eval)

    @pytest.mark.parametrize("variant", IQA_VARIANTS)
    def test_iqa_variants_report_correlations(self, variant):
        data = tiny_desk_data(seed=3)
        rep = run_ablation(AblationSpec(variant), data, TINY_CONFIG, width=4)
        assert -1.0 <= rep.meta["srocc"] <= 1.0
        assert -1.0 <= rep.meta["plcc"] <= 1.0
        pred_rows = [r for r in rep.rows if r[1] == "score_pred"]
        assert len(pred_rows) == len(data.mos_eval)

    def test_same_seed_same_report(self):
        data = tiny_desk_data(seed=4)
        reps = [
            run_ablation(AblationSpec("UIQA"), data, TINY_CONFIG, width=4)
            for _ in range(2)
        ]
        assert reps[0].rows == reps[1].rows
        assert reps[0].meta == reps[1].meta
