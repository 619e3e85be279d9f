"""Grid over intra-phase budget/weights/lambda to find an ITA >= ITE recipe."""
import dataclasses
import time

import numpy as np
import torch

from uwadapt.adapt import (
    TrainConfig,
    build_inter_nets,
    build_intra_nets,
    split_easy_hard,
    train_inter,
    train_intra,
)
from uwadapt.fixtures import make_desk_data
from uwadapt.imagecore import denormalize
from uwadapt.losses import DEFAULT_WEIGHTS
from uwadapt.pipeline import _run_enhancer, _train_scorer_variant
from uwadapt.ruiqa import predict

PUSHY = dataclasses.replace(DEFAULT_WEIGHTS, intra_adv_img=5.0, intra_content=20.0)

# name -> (weights, epochs, decay_epochs, lam)
VARIANTS = {
    "v1-default-8+4": (DEFAULT_WEIGHTS, 8, 4, 0.5),
    "v2-default-16+8": (DEFAULT_WEIGHTS, 16, 8, 0.5),
    "v3-pushy-8+4": (PUSHY, 8, 4, 0.5),
    "v4-pushy-16+8": (PUSHY, 16, 8, 0.5),
    "v5-default-16+8-lam0.7": (DEFAULT_WEIGHTS, 16, 8, 0.7),
}

for seed in (0, 1, 2):
    t0 = time.time()
    data = make_desk_data(seed, image_size=64)
    scorer = _train_scorer_variant("RUIQA", data, seed=seed)
    cfg = TrainConfig(epochs=8, decay_epochs=4, seed=seed)
    nets = build_inter_nets(12, seed=seed)
    train_inter(list(data.synth_train), list(data.real_train), nets, config=cfg)

    outs_inter = [_run_enhancer(nets.enhancer, denormalize(ex.x)) for ex in data.real_eval]
    s_inter = np.array([predict(scorer, o) for o in outs_inter])
    print(f"seed {seed}: ITE mean {s_inter.mean():.3f} (setup {time.time() - t0:.0f}s)")

    for name, (weights, epochs, decay, lam) in VARIANTS.items():
        split = split_easy_hard(list(data.real_train), scorer, nets.enhancer, lam)
        intra = build_intra_nets(nets.enhancer, nets.features, seed=seed)
        train_intra(
            split, intra, weights,
            TrainConfig(epochs=epochs, decay_epochs=decay, seed=seed),
        )
        routed, deltas = [], []
        for ex, s in zip(data.real_eval, s_inter):
            if s >= split.threshold:
                routed.append(s)
            else:
                s2 = predict(scorer, _run_enhancer(intra.enhancer, denormalize(ex.x)))
                routed.append(s2)
                deltas.append(s2 - s)
        routed = np.array(routed)
        d = np.array(deltas) if deltas else np.array([0.0])
        print(
            f"  {name}: ITA mean {routed.mean():.3f} "
            f"(gap {routed.mean() - s_inter.mean():+.3f}, hard n={len(deltas)}, "
            f"hard delta mean {d.mean():+.3f} min {d.min():+.3f})"
        )
