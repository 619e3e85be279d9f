"""Second grid: warm-started intra translator (and optionally critic)."""
import time

import numpy as np

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

# name -> (warm translator, warm critic, epochs, decay, lam)
VARIANTS = {
    "v6-warmT-8+4": (True, False, 8, 4, 0.5),
    "v7-warmT-16+8": (True, False, 16, 8, 0.5),
    "v8-warmT+C-8+4": (True, True, 8, 4, 0.5),
    "v9-warmT-8+4-lam0.7": (True, False, 8, 4, 0.7),
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

    for name, (warm_t, warm_c, epochs, decay, lam) in VARIANTS.items():
        split = split_easy_hard(list(data.real_train), scorer, nets.enhancer, lam)
        intra = build_intra_nets(
            nets.enhancer,
            nets.features,
            seed=seed,
            translator_init=nets.translator if warm_t else None,
            critic_img_init=nets.critic_img if warm_c else None,
        )
        train_intra(
            split, intra, DEFAULT_WEIGHTS,
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
