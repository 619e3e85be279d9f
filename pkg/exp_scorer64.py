"""Time the 64px scorer and check saturation on enhanced outputs."""
import time

import numpy as np
import torch
from scipy.stats import spearmanr

from uwadapt.fixtures import make_desk_data
from uwadapt.imagecore import denormalize
from uwadapt.pipeline import _train_scorer_variant, _run_enhancer
from uwadapt.ruiqa import predict, score_norm_image
from uwadapt.networks import Enhancer

for seed in (0, 1, 2):
    data = make_desk_data(seed, image_size=64)
    t0 = time.time()
    scorer = _train_scorer_variant("RUIQA", data, seed=seed)
    t1 = time.time()

    pred = np.array([predict(scorer, s.image) for s in data.mos_eval])
    true = np.array([s.mos for s in data.mos_eval])
    srocc = spearmanr(pred, true).statistic

    raw_scores = np.array([score_norm_image(scorer, ex.x) for ex in data.real_eval])

    torch.manual_seed(seed)
    enh = Enhancer(width=12)  # untrained: worst-case out-of-distribution output
    out_scores = np.array(
        [predict(scorer, _run_enhancer(enh, denormalize(ex.x))) for ex in data.real_eval]
    )

    print(
        f"seed {seed}: scorer {t1 - t0:.1f}s srocc {srocc:.3f} "
        f"pred[{pred.min():.1f},{pred.max():.1f}] "
        f"raw[{raw_scores.min():.1f},{raw_scores.max():.1f}] "
        f"enh[{out_scores.min():.1f},{out_scores.max():.1f}] "
        f"enh@clamp {(out_scores >= 99.99).mean():.2f}"
    )
